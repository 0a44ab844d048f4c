#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mpmflow/rng.hpp"
#include "mpmflow/tensor.hpp"

namespace mpmflow {

//! Named view of one parameter tensor for optimizers and checkpoints.
//! `value` and `grad` point at the owning layer's storage; `grad` is kept
//! allocated and zeroed by the layer's zero_grads().
struct ParamRef {
  std::string name;
  std::vector<std::int32_t> shape;
  std::vector<float>* value;
  std::vector<float>* grad;
};

//! 3D convolution over (c, d, h, w) tensors with cubic kernel, uniform
//! stride and symmetric zero padding. Output spatial size per axis is
//! (D + 2*pad - k) / stride + 1. Weight layout (out_c, in_c, kd, kh, kw).
struct Conv3d {
  std::int32_t in_c = 0, out_c = 0, k = 3, stride = 1, pad = 1;
  bool has_bias = true;
  std::vector<float> w, b, gw, gb;

  Conv3d() = default;
  Conv3d(std::int32_t in_channels, std::int32_t out_channels,
         std::int32_t kernel, std::int32_t stride_, std::int32_t pad_,
         bool bias = true);

  std::int32_t out_dim(std::int32_t d) const {
    return (d + 2 * pad - k) / stride + 1;
  }

  //! Fan-in-scaled uniform weights, zero biases.
  void init(Pcg32& rng);
  void zero_grads();
  std::vector<ParamRef> params(const std::string& prefix);

  Tensor4 forward(const Tensor4& x) const;
  //! Accumulates gw/gb; returns the gradient w.r.t. x. `x` must be the
  //! same tensor the forward pass consumed.
  Tensor4 backward(const Tensor4& x, const Tensor4& gy);
};

//! Transposed 3D convolution (stride-s upsampling). Output spatial size
//! per axis is (D - 1) * stride - 2*pad + k. Weight layout
//! (in_c, out_c, kd, kh, kw).
struct ConvTranspose3d {
  std::int32_t in_c = 0, out_c = 0, k = 4, stride = 2, pad = 1;
  std::vector<float> w, b, gw, gb;

  ConvTranspose3d() = default;
  ConvTranspose3d(std::int32_t in_channels, std::int32_t out_channels,
                  std::int32_t kernel, std::int32_t stride_,
                  std::int32_t pad_);

  std::int32_t out_dim(std::int32_t d) const {
    return (d - 1) * stride - 2 * pad + k;
  }

  void init(Pcg32& rng);
  void zero_grads();
  std::vector<ParamRef> params(const std::string& prefix);

  Tensor4 forward(const Tensor4& x) const;
  Tensor4 backward(const Tensor4& x, const Tensor4& gy);
};

//! y = x for x > 0, slope * x otherwise.
Tensor4 leaky_relu(const Tensor4& x, float slope);
//! Gradient w.r.t. x; `x` is the forward input (the kink is resolved by
//! the input's sign, with x == 0 taking the slope branch).
Tensor4 leaky_relu_backward(const Tensor4& x, const Tensor4& gy,
                            float slope);

//! One convolutional LSTM cell: gates i, f, o and candidate g, each with a
//! kernel pair (one conv over the step input, one over the hidden state).
//! Gate biases live on the input convs; the forget bias starts at 1 so
//! early training retains state. Hidden channels equal input channels.
struct ConvLstmCell {
  std::int32_t channels = 0, k = 3;
  Conv3d wx_i, wh_i, wx_f, wh_f, wx_o, wh_o, wx_g, wh_g;

  ConvLstmCell() = default;
  ConvLstmCell(std::int32_t channels_, std::int32_t kernel);

  void init(Pcg32& rng);
  void zero_grads();
  std::vector<ParamRef> params(const std::string& prefix);

  //! Everything backward() needs from one unrolled step: the step inputs
  //! and the post-nonlinearity gate activations.
  struct StepCache {
    Tensor4 x, h_prev, c_prev;
    Tensor4 i, f, o, g;
    Tensor4 c, tanh_c;
  };

  //! Advances (h, c) in place; fills `cache` when given.
  void forward(const Tensor4& x, Tensor4& h, Tensor4& c,
               StepCache* cache = nullptr) const;

  //! Consumes d(loss)/dh and d(loss)/dc of the step output and produces
  //! the same for the step inputs (returned through gh/gc) plus the
  //! gradient w.r.t. x. Accumulates parameter gradients.
  Tensor4 backward(const StepCache& cache, Tensor4& gh, Tensor4& gc);
};

}  // namespace mpmflow
