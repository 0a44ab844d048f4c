#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "mpmflow/rng.hpp"
#include "mpmflow/tensor.hpp"

// Shared helpers for finite-difference gradient checks. The error metric
// is the worst absolute analytic/numeric mismatch scaled by the largest
// gradient magnitude seen, so tensors with uniformly tiny gradients are
// judged by the floor instead of blowing up a relative ratio.
namespace fd {

struct Stat {
  double max_abs = 0.0;
  double max_diff = 0.0;

  void add(double analytic, double numeric) {
    max_abs = std::max({max_abs, std::abs(analytic), std::abs(numeric)});
    max_diff = std::max(max_diff, std::abs(analytic - numeric));
  }
  void merge(const Stat& other) {
    max_abs = std::max(max_abs, other.max_abs);
    max_diff = std::max(max_diff, other.max_diff);
  }
  double error(double floor = 1e-3) const {
    return max_diff / std::max(max_abs, floor);
  }
};

inline mpmflow::Tensor4 random_tensor(std::int32_t c, std::int32_t d,
                                      std::int32_t h, std::int32_t w,
                                      mpmflow::Pcg32& rng) {
  mpmflow::Tensor4 t(c, d, h, w);
  for (float& v : t.v) v = rng.uniform_f(-1.0f, 1.0f);
  return t;
}

// Probe direction with entries bounded away from zero so every output
// element contributes to the scalar loss.
inline mpmflow::Tensor4 random_probe(const mpmflow::Tensor4& like,
                                     mpmflow::Pcg32& rng) {
  mpmflow::Tensor4 r(like.shape[0], like.shape[1], like.shape[2],
                     like.shape[3]);
  for (float& v : r.v) {
    const float m = rng.uniform_f(0.25f, 1.0f);
    v = rng.uniform() < 0.5 ? -m : m;
  }
  return r;
}

inline double probe_dot(const mpmflow::Tensor4& y,
                        const mpmflow::Tensor4& r) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.v.size(); ++i)
    acc += static_cast<double>(y.v[i]) * static_cast<double>(r.v[i]);
  return acc;
}

// Central difference of `loss` w.r.t. component `idx` of `storage`. The
// step actually applied in float differs from `eps`, so the divisor is
// measured rather than assumed.
template <typename LossFn>
double central_diff(std::vector<float>& storage, std::size_t idx, float eps,
                    LossFn&& loss) {
  const float saved = storage[idx];
  storage[idx] = saved + eps;
  const double step_up = static_cast<double>(storage[idx]) - saved;
  const double up = loss();
  storage[idx] = saved - eps;
  const double step_dn = saved - static_cast<double>(storage[idx]);
  const double dn = loss();
  storage[idx] = saved;
  return (up - dn) / (step_up + step_dn);
}

// Evenly spread sample of component indices across a tensor.
inline std::vector<std::size_t> sample_indices(std::size_t count,
                                               std::size_t want) {
  std::vector<std::size_t> out;
  if (count == 0) return out;
  want = std::min(want, count);
  for (std::size_t i = 0; i < want; ++i)
    out.push_back(i * count / want + count / (2 * want));
  for (std::size_t& idx : out) idx = std::min(idx, count - 1);
  return out;
}

}  // namespace fd
