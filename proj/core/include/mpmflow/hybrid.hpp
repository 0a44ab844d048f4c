#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mpmflow/engine.hpp"
#include "mpmflow/pressure_system.hpp"
#include "mpmflow/solvers.hpp"

namespace mpmflow {

//! Where the pressure guess for a predicted frame comes from. Model runs
//! the trained surrogate on the sliding window of recent frames; the other
//! three are reference predictors for baselines and plumbing tests.
enum class PredictorKind { Model, Exact, PrevFrame, Zero };

PredictorKind predictor_from_name(const std::string& name);
std::string predictor_name(PredictorKind kind);

struct HybridConfig {
  SceneConfig scene;
  std::int64_t n_physical = 4;   // frames solved conventionally
  std::int64_t m_predicted = 0;  // frames guessed by the predictor, then refined
  double refine_tol = 1e-3;      // relative residual target for every frame
  SolverKind refine_solver = SolverKind::MgPcg;
  PredictorKind predictor = PredictorKind::Model;
  std::string model_path;  // surrogate checkpoint, Model predictor only
  std::string out_dir;     // empty -> nothing written to disk
};

//! One completed frame. residual is recomputed from the assembled system
//! and the applied solution, not copied out of the solver report, so a
//! solver bug cannot vouch for itself.
struct FrameRecord {
  std::int64_t frame_index = 0;
  std::int64_t refine_iters = 0;
  double residual = 0.0;
  double div_max = 0.0;
  double zeta = 0.0;
  bool predicted = false;
};

enum class TrajectoryStatus { Complete, RefineFailed };

//! Result of a hybrid run. On RefineFailed the trajectory is truncated:
//! frames holds only the completed prefix, failed_frame names the frame
//! whose refinement hit the iteration cap and message says why.
struct Trajectory {
  TrajectoryStatus status = TrajectoryStatus::Complete;
  std::int64_t failed_frame = -1;
  std::string message;
  std::vector<FrameRecord> frames;
  ParticleSet final_particles;
};

//! Warm-started solve of the coupled pressure system with x0 scattered
//! from the guess; coordinates missing from it start at zero. A guess
//! already inside tolerance returns with zero iterations.
std::pair<PressureFields, SolveReport> refine(const PressureFields& p_hat,
                                              const BlockSystem& sys,
                                              double tol, SolverKind solver);

//! Interaction weight for the complexity score: 1 when the scene has
//! unpinned solids, otherwise the quiescent-solid floor 0.1.
double scene_beta(const SceneConfig& cfg);

//! n_physical conventionally solved frames, then m_predicted frames where
//! the predictor supplies the pressure guess and refine() corrects it to
//! refine_tol before the grid update. When out_dir is set, writes per-frame
//! normalized .pgt tensors, metrics.csv and a final particles.csv there.
Trajectory run(const HybridConfig& cfg);

//! metrics.csv with columns frame,refine_iters,residual,div_max,zeta.
//! Values round-trip exactly; the predicted flag is not stored.
void save_metrics_csv(const std::vector<FrameRecord>& frames,
                      const std::string& path);
std::vector<FrameRecord> load_metrics_csv(const std::string& path);

}  // namespace mpmflow
