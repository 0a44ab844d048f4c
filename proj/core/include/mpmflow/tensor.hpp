#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mpmflow/error.hpp"
#include "mpmflow/grid.hpp"

namespace mpmflow {

//! Dense channel-major f32 tensor, shape (channels, d, h, w), with an
//! optional gradient buffer of identical shape (allocated on demand).
struct Tensor4 {
  std::array<std::int32_t, 4> shape{0, 0, 0, 0};
  std::vector<float> v;
  std::vector<float> g;

  Tensor4() = default;
  Tensor4(std::int32_t c, std::int32_t d, std::int32_t h, std::int32_t w) {
    resize(c, d, h, w);
  }

  void resize(std::int32_t c, std::int32_t d, std::int32_t h,
              std::int32_t w) {
    MPMFLOW_CHECK(c > 0 && d > 0 && h > 0 && w > 0,
                  "tensor dims must be positive");
    shape = {c, d, h, w};
    v.assign(numel(), 0.0f);
    g.clear();
  }

  std::size_t numel() const {
    return static_cast<std::size_t>(shape[0]) * shape[1] * shape[2] *
           shape[3];
  }
  std::size_t at(std::int32_t c, std::int32_t d, std::int32_t h,
                 std::int32_t w) const {
    return ((static_cast<std::size_t>(c) * shape[1] + d) * shape[2] + h) *
               shape[3] +
           w;
  }
  bool same_shape(const Tensor4& o) const { return shape == o.shape; }

  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), 0.0f);
  }
  void zero_grad() { std::fill(g.begin(), g.end(), 0.0f); }
};

//! View the three pressure channels of a padded tensor frame as one
//! (3, pd, ph, pw) tensor, channel order xf, xs, xi.
inline Tensor4 tensor_from(const PressureTensors& t) {
  Tensor4 x(3, t.pd, t.ph, t.pw);
  const std::size_t n = t.voxels();
  std::copy(t.xf.begin(), t.xf.end(), x.v.begin());
  std::copy(t.xs.begin(), t.xs.end(), x.v.begin() + n);
  std::copy(t.xi.begin(), t.xi.end(), x.v.begin() + 2 * n);
  return x;
}

//! Inverse of tensor_from; `t` supplies the dims and frame index.
inline void tensor_into(const Tensor4& x, PressureTensors& t) {
  MPMFLOW_CHECK(x.shape[0] == 3 && x.shape[1] == t.pd &&
                    x.shape[2] == t.ph && x.shape[3] == t.pw,
                "tensor shape does not match the pressure frame");
  const std::size_t n = t.voxels();
  std::copy(x.v.begin(), x.v.begin() + n, t.xf.begin());
  std::copy(x.v.begin() + n, x.v.begin() + 2 * n, t.xs.begin());
  std::copy(x.v.begin() + 2 * n, x.v.end(), t.xi.begin());
}

}  // namespace mpmflow
