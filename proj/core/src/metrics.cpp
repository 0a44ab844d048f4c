#include "mpmflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mpmflow/error.hpp"
#include "mpmflow/pressure_system.hpp"

namespace mpmflow {

double psnr(const std::vector<double>& truth, const std::vector<double>& pred,
            double peak) {
  MPMFLOW_CHECK(!truth.empty(), "psnr needs at least one sample");
  MPMFLOW_CHECK(truth.size() == pred.size(),
                "psnr field lengths do not match");
  if (peak <= 0.0) {
    peak = 0.0;
    for (double t : truth) peak = std::max(peak, std::abs(t));
    MPMFLOW_CHECK(peak > 0.0, "psnr default peak is zero (all-zero truth)");
  }
  double mse = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = truth[i] - pred[i];
    mse += d * d;
  }
  mse /= static_cast<double>(truth.size());
  if (mse == 0.0) return 99.0;
  return 10.0 * std::log10(peak / mse);
}

double divergence_max(const SimGrid& g) { return max_fluid_divergence(g); }

namespace {

Vec3 cell_mean_velocity(const SimGrid& g, std::int32_t i, std::int32_t j,
                        std::int32_t k, CellLabel label) {
  Vec3 sum{};
  for (std::int32_t di = 0; di <= 1; ++di)
    for (std::int32_t dj = 0; dj <= 1; ++dj)
      for (std::int32_t dk = 0; dk <= 1; ++dk) {
        const std::size_t n = g.node_index(i + di, j + dj, k + dk);
        if (label == CellLabel::Fluid)
          sum += g.vel_f[n];
        else if (label == CellLabel::Solid)
          sum += g.vel_s[n];
        else
          sum += g.node_velocity(n);
      }
  return sum * 0.125;
}

}  // namespace

double interacting_complexity(double beta, std::int64_t gamma,
                              const SimGrid& g) {
  MPMFLOW_CHECK(gamma >= 1, "gamma must be at least 1");
  beta = std::max(beta, 0.1);

  double speed_sum = 0.0;
  for (std::int32_t i = 0; i < g.cd(); ++i)
    for (std::int32_t j = 0; j < g.ch(); ++j)
      for (std::int32_t k = 0; k < g.cw(); ++k) {
        const CellLabel label = g.labels[g.cell_index(i, j, k)];
        if (label != CellLabel::Fluid && label != CellLabel::Solid &&
            label != CellLabel::Interface)
          continue;
        speed_sum += cell_mean_velocity(g, i, j, k, label).norm();
      }

  const double arg = beta * static_cast<double>(gamma) * speed_sum /
                     static_cast<double>(g.cell_count());
  if (arg <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log10(arg);
}

bool is_quiescent(double zeta) {
  return zeta == -std::numeric_limits<double>::infinity();
}

FrameMetrics mean_metrics(const std::vector<FrameMetrics>& rows,
                          std::int64_t skip) {
  FrameMetrics m;
  std::int64_t count = 0, zeta_count = 0;
  for (const FrameMetrics& r : rows) {
    if (r.frame_index < skip) continue;
    ++count;
    m.psnr_f += r.psnr_f;
    m.psnr_s += r.psnr_s;
    m.psnr_i += r.psnr_i;
    m.div_max += r.div_max;
    if (!is_quiescent(r.zeta)) {
      m.zeta += r.zeta;
      ++zeta_count;
    }
  }
  if (count > 0) {
    m.psnr_f /= count;
    m.psnr_s /= count;
    m.psnr_i /= count;
    m.div_max /= count;
  }
  m.zeta = zeta_count > 0 ? m.zeta / zeta_count
                          : -std::numeric_limits<double>::infinity();
  m.frame_index = count;
  return m;
}

}  // namespace mpmflow
