#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mpmflow/layers.hpp"

namespace mpmflow {

//! Architecture knobs. Channel widths derive from latent_channels
//! (mid = lc/2, narrow = lc/4); the defaults give the production model.
struct SurrogateHyper {
  std::int32_t in_channels = 3;
  std::int32_t latent_channels = 64;
  std::int32_t window = 4;
  float slope = 0.1f;  // LeakyReLU
};

//! Pressure-frame predictor: a 3-layer strided conv encoder to a latent
//! grid at 1/4 spatial resolution, one ConvLSTM cell plus a conv head for
//! time stepping in latent space, and a 4-layer decoder (two transposed
//! convs, two convs) back to frame shape. Spatial dims must be multiples
//! of 4 and at least 12.
struct SurrogateModel {
  SurrogateHyper hyper;
  Conv3d enc1, enc2, enc3;
  ConvLstmCell lstm;
  Conv3d head;
  ConvTranspose3d dec1, dec2;
  Conv3d dec3, dec4;

  explicit SurrogateModel(const SurrogateHyper& hyper_ = {},
                          std::uint64_t seed = 1);

  //! (in_c, D, H, W) -> (latent_c, D/4, H/4, W/4), LeakyReLU after each
  //! conv.
  Tensor4 encode(const Tensor4& x) const;

  //! Inverse shape contract of encode. Final layer is linear so outputs
  //! cover the full value range.
  Tensor4 decode(const Tensor4& c) const;

  //! One step of latent-space time stepping: unrolls the ConvLSTM over a
  //! window of exactly `hyper.window` latents (state zeroed per call) and
  //! maps the final hidden state through the conv head. Autoregressive
  //! rollout feeds predictions back as the newest window entry.
  Tensor4 predict_next(const std::vector<Tensor4>& latents) const;

  //! All parameter tensors in a stable order (checkpoint and optimizer
  //! order).
  std::vector<ParamRef> params();
  std::int64_t param_count();
  void zero_grads();

  // Cached forward passes for training and gradient tests. Backward
  // passes accumulate parameter gradients and return input gradients.
  struct EncodeCache {
    Tensor4 x, z1, z2, z3;  // pre-activation conv outputs
  };
  Tensor4 encode_cached(const Tensor4& x, EncodeCache& cache) const;
  Tensor4 encode_backward(const EncodeCache& cache, const Tensor4& gc);

  struct DecodeCache {
    Tensor4 c, z1, z2, z3, a1, a2, a3;  // pre- and post-activation pairs
  };
  Tensor4 decode_cached(const Tensor4& c, DecodeCache& cache) const;
  Tensor4 decode_backward(const DecodeCache& cache, const Tensor4& gy);

  struct PredictCache {
    std::vector<ConvLstmCell::StepCache> steps;
    Tensor4 h_final;
  };
  Tensor4 predict_cached(const std::vector<Tensor4>& latents,
                         PredictCache& cache) const;
  //! Returns d(loss)/d(latent_t) for every window entry.
  std::vector<Tensor4> predict_backward(const PredictCache& cache,
                                        const Tensor4& gc_hat);
};

//! Checkpoint file: magic "MPMW", version, hyperparameters, then a
//! manifest of (name, shape, offset) and one little-endian f32 blob.
//! Round-trips bit-exactly; contains no timestamps.
void save_model(const std::string& path, SurrogateModel& model);
SurrogateModel load_model(const std::string& path);

}  // namespace mpmflow
