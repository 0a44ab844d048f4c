#include "mpmflow/loss.hpp"

#include <cmath>

namespace mpmflow {

namespace {

double phi(double d, double delta, LossKind kind) {
  switch (kind) {
    case LossKind::Huber: {
      const double a = std::abs(d);
      return a <= delta ? 0.5 * d * d : delta * a - 0.5 * delta * delta;
    }
    case LossKind::Mse:
      return d * d;
    case LossKind::Mae:
      return std::abs(d);
  }
  return 0.0;
}

double phi_prime(double d, double delta, LossKind kind) {
  switch (kind) {
    case LossKind::Huber:
      return std::abs(d) <= delta ? d : (d > 0.0 ? delta : -delta);
    case LossKind::Mse:
      return 2.0 * d;
    case LossKind::Mae:
      return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
  }
  return 0.0;
}

double mean_penalty(const float* x, const float* xhat, std::size_t n,
                    double delta, LossKind kind) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    acc += phi(static_cast<double>(x[i]) - xhat[i], delta, kind);
  return acc / static_cast<double>(n);
}

}  // namespace

double penalty(const Tensor4& x, const Tensor4& xhat, double delta,
               LossKind kind) {
  MPMFLOW_CHECK(x.same_shape(xhat), "penalty shape mismatch");
  MPMFLOW_CHECK(delta > 0.0, "penalty threshold must be positive");
  MPMFLOW_CHECK(x.numel() > 0, "penalty of an empty tensor");
  return mean_penalty(x.v.data(), xhat.v.data(), x.numel(), delta, kind);
}

Tensor4 spatial_gradient(const Tensor4& x) {
  const std::int32_t c = x.shape[0], d = x.shape[1], h = x.shape[2],
                     w = x.shape[3];
  Tensor4 out(3 * c, d, h, w);
  for (std::int32_t ch = 0; ch < c; ++ch)
    for (std::int32_t i = 0; i < d; ++i)
      for (std::int32_t j = 0; j < h; ++j) {
        const float* row = &x.v[x.at(ch, i, j, 0)];
        float* gd = &out.v[out.at(3 * ch + 0, i, j, 0)];
        float* gh = &out.v[out.at(3 * ch + 1, i, j, 0)];
        float* gw = &out.v[out.at(3 * ch + 2, i, j, 0)];
        const float* row_d =
            i + 1 < d ? &x.v[x.at(ch, i + 1, j, 0)] : nullptr;
        const float* row_h =
            j + 1 < h ? &x.v[x.at(ch, i, j + 1, 0)] : nullptr;
        for (std::int32_t k = 0; k < w; ++k) {
          gd[k] = row_d ? row_d[k] - row[k] : 0.0f;
          gh[k] = row_h ? row_h[k] - row[k] : 0.0f;
          gw[k] = k + 1 < w ? row[k + 1] - row[k] : 0.0f;
        }
      }
  return out;
}

double pair_loss(const Tensor4& x, const Tensor4& xhat, double delta,
                 LossKind kind) {
  MPMFLOW_CHECK(x.same_shape(xhat), "loss shape mismatch");
  MPMFLOW_CHECK(delta > 0.0, "loss threshold must be positive");
  const std::int32_t c = x.shape[0];
  const std::size_t vol = x.numel() / c;
  const Tensor4 dx = spatial_gradient(x);
  const Tensor4 dxh = spatial_gradient(xhat);
  double total = 0.0;
  for (std::int32_t ch = 0; ch < c; ++ch) {
    total += mean_penalty(&x.v[x.at(ch, 0, 0, 0)],
                          &xhat.v[xhat.at(ch, 0, 0, 0)], vol, delta, kind);
    total += mean_penalty(&dx.v[dx.at(3 * ch, 0, 0, 0)],
                          &dxh.v[dxh.at(3 * ch, 0, 0, 0)], 3 * vol, delta,
                          kind);
  }
  return total;
}

double pair_loss_backward(const Tensor4& x, const Tensor4& xhat,
                          double delta, Tensor4& gxhat, LossKind kind) {
  MPMFLOW_CHECK(x.same_shape(xhat) && x.same_shape(gxhat),
                "loss backward shape mismatch");
  MPMFLOW_CHECK(delta > 0.0, "loss threshold must be positive");
  const std::int32_t c = x.shape[0], d = x.shape[1], h = x.shape[2],
                     w = x.shape[3];
  const std::size_t vol = static_cast<std::size_t>(d) * h * w;
  const Tensor4 dx = spatial_gradient(x);
  const Tensor4 dxh = spatial_gradient(xhat);

  double total = 0.0;
  const double inv_vol = 1.0 / static_cast<double>(vol);
  const double inv_gvol = 1.0 / (3.0 * static_cast<double>(vol));
  for (std::int32_t ch = 0; ch < c; ++ch) {
    const float* xv = &x.v[x.at(ch, 0, 0, 0)];
    const float* xh = &xhat.v[xhat.at(ch, 0, 0, 0)];
    float* gv = &gxhat.v[gxhat.at(ch, 0, 0, 0)];
    double acc = 0.0;
    for (std::size_t t = 0; t < vol; ++t) {
      const double diff = static_cast<double>(xv[t]) - xh[t];
      acc += phi(diff, delta, kind);
      gv[t] -= static_cast<float>(phi_prime(diff, delta, kind) * inv_vol);
    }
    total += acc * inv_vol;

    // Gradient-difference term: adjoint of the forward difference scatters
    // +q to the near voxel and -q to the far one.
    acc = 0.0;
    for (int a = 0; a < 3; ++a) {
      const float* dv = &dx.v[dx.at(3 * ch + a, 0, 0, 0)];
      const float* dvh = &dxh.v[dxh.at(3 * ch + a, 0, 0, 0)];
      const std::int32_t sd = a == 0 ? 1 : 0, sh = a == 1 ? 1 : 0,
                         sw = a == 2 ? 1 : 0;
      for (std::int32_t i = 0; i < d; ++i)
        for (std::int32_t j = 0; j < h; ++j)
          for (std::int32_t k = 0; k < w; ++k) {
            const std::size_t t =
                (static_cast<std::size_t>(i) * h + j) * w + k;
            const double diff = static_cast<double>(dv[t]) - dvh[t];
            acc += phi(diff, delta, kind);
            if (i + sd >= d || j + sh >= h || k + sw >= w) continue;
            const float q = static_cast<float>(
                phi_prime(diff, delta, kind) * inv_gvol);
            const std::size_t t_far =
                (static_cast<std::size_t>(i + sd) * h + (j + sh)) * w +
                (k + sw);
            gv[t_far] -= q;
            gv[t] += q;
          }
    }
    total += acc * inv_gvol;
  }
  return total;
}

}  // namespace mpmflow
