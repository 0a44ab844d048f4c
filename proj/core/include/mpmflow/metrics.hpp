#pragma once

#include <cstdint>
#include <vector>

#include "mpmflow/grid.hpp"

namespace mpmflow {

//! Per-frame evaluation summary. psnr_* compare predicted pressure channels
//! against ground truth; div_max measures post-solve incompressibility;
//! zeta is the interacting-complexity score (or the quiescent sentinel).
struct FrameMetrics {
  std::int64_t frame_index = 0;
  double psnr_f = 0.0;
  double psnr_s = 0.0;
  double psnr_i = 0.0;
  double div_max = 0.0;
  double zeta = 0.0;
};

//! 10 * lg(peak / MSE), with the peak entering un-squared. Identical inputs
//! (MSE exactly zero) cap at 99 dB. peak <= 0 requests the default,
//! max |truth|, which must itself be positive.
double psnr(const std::vector<double>& truth, const std::vector<double>& pred,
            double peak = 0.0);

//! Max |div v_f| over cells labeled Fluid, using the same one-difference-
//! per-axis stencil and face-dropping rules as the pressure constraint
//! rows. No fluid cells -> 0.
double divergence_max(const SimGrid& g);

//! zeta = lg(beta * gamma * (sum of per-cell speeds over Fluid, Solid, and
//! Interface cells) / cell count). Per-cell speed is the norm of the
//! 8-corner mean of the cell's material velocity field; Interface cells use
//! the mass-weighted combination of both materials. beta floors at 0.1.
//! A zero velocity sum has no logarithm; the result is -infinity, the
//! quiescent sentinel.
double interacting_complexity(double beta, std::int64_t gamma,
                              const SimGrid& g);

//! True when a zeta value is the quiescent sentinel.
bool is_quiescent(double zeta);

//! Means over rows with frame_index >= skip (measurement protocol: summaries
//! skip the warmup frames, 50 by default). Quiescent zeta rows are excluded
//! from the zeta mean only; an all-quiescent selection yields the sentinel.
//! frame_index of the result is the number of rows averaged.
FrameMetrics mean_metrics(const std::vector<FrameMetrics>& rows,
                          std::int64_t skip = 50);

}  // namespace mpmflow
