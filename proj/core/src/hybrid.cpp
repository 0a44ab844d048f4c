#include "mpmflow/hybrid.hpp"

#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mpmflow/error.hpp"
#include "mpmflow/mapping.hpp"
#include "mpmflow/metrics.hpp"
#include "mpmflow/pgt_io.hpp"
#include "mpmflow/surrogate.hpp"
#include "mpmflow/tensor.hpp"

namespace mpmflow {

namespace {

constexpr const char* kMetricsHeader = "frame,refine_iters,residual,div_max,zeta";

std::string frame_file(const std::string& dir, std::int64_t frame) {
  char name[32];
  std::snprintf(name, sizeof name, "/frame_%06lld.pgt",
                static_cast<long long>(frame));
  return dir + name;
}

void append_metrics_row(std::ofstream& out, const FrameRecord& r) {
  char row[160];
  std::snprintf(row, sizeof row, "%lld,%lld,%.17g,%.17g,%.17g\n",
                static_cast<long long>(r.frame_index),
                static_cast<long long>(r.refine_iters), r.residual, r.div_max,
                r.zeta);
  out << row;
}

//! Normalized tensor snapshot of a solved frame, the form both the sliding
//! inference window and the .pgt trajectory files use.
PressureTensors snapshot_tensors(const PressureFields& fields, const SimGrid& g,
                                 std::int64_t frame_index) {
  PressureTensors t = map_fields(fields, g.d, g.h, g.w, frame_index);
  normalize_tensors(t);
  return t;
}

//! Full network path for one predicted frame: encode the window, advance
//! the latent sequence, decode, undo the normalization and gather the
//! voxels onto the active unknowns of the current system.
PressureFields predict_fields(const SurrogateModel& model,
                              const std::deque<PressureTensors>& window,
                              const BlockSystem& sys, const SimGrid& g,
                              std::int64_t frame_index) {
  std::vector<Tensor4> latents;
  latents.reserve(window.size());
  for (const PressureTensors& t : window)
    latents.push_back(model.encode(tensor_from(t)));
  Tensor4 next = model.decode(model.predict_next(latents));

  PressureTensors guess(g.d, g.h, g.w);
  guess.frame_index = frame_index;
  tensor_into(next, guess);
  denormalize_tensors(guess);

  const std::vector<double> zeros(static_cast<std::size_t>(sys.size()), 0.0);
  PressureFields layout = solution_to_fields(sys, zeros);
  return invmap(guess, layout, g.d, g.h, g.w);
}

}  // namespace

PredictorKind predictor_from_name(const std::string& name) {
  if (name == "model") return PredictorKind::Model;
  if (name == "exact") return PredictorKind::Exact;
  if (name == "prev") return PredictorKind::PrevFrame;
  if (name == "zero") return PredictorKind::Zero;
  throw InvalidInput("unknown predictor \"" + name +
                     "\" (expected model, exact, prev or zero)");
}

std::string predictor_name(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::Model:
      return "model";
    case PredictorKind::Exact:
      return "exact";
    case PredictorKind::PrevFrame:
      return "prev";
    case PredictorKind::Zero:
      return "zero";
  }
  throw InvalidInput("invalid predictor kind");
}

double scene_beta(const SceneConfig& cfg) {
  for (const ShapeConfig& s : cfg.shapes)
    if (s.material == Material::Solid && !s.fixed) return 1.0;
  return 0.1;
}

std::pair<PressureFields, SolveReport> refine(const PressureFields& p_hat,
                                              const BlockSystem& sys,
                                              double tol, SolverKind solver) {
  MPMFLOW_CHECK(tol > 0.0, "refinement tolerance must be positive");
  std::vector<double> x = fields_to_vector(sys, p_hat);
  SolveOptions opt;
  opt.tolerance = tol;
  SolveReport rep = solve_pressure(sys, x, solver, opt);
  return {solution_to_fields(sys, x), rep};
}

Trajectory run(const HybridConfig& cfg) {
  MPMFLOW_CHECK(cfg.n_physical >= 0, "n_physical must be non-negative");
  MPMFLOW_CHECK(cfg.m_predicted >= 0, "m_predicted must be non-negative");
  MPMFLOW_CHECK(cfg.refine_tol > 0.0, "refine_tol must be positive");

  std::unique_ptr<SurrogateModel> model;
  if (cfg.predictor == PredictorKind::Model) {
    MPMFLOW_CHECK(!cfg.model_path.empty(),
                  "the model predictor needs a checkpoint path");
    model = std::make_unique<SurrogateModel>(load_model(cfg.model_path));
    const std::int32_t padded = cfg.scene.dim + 4;
    if (padded % 4 != 0 || padded < 12)
      throw InvalidInput(
          "scene grid is incompatible with the surrogate: padded extent " +
          std::to_string(padded) + " must be a multiple of 4 and at least 12");
    MPMFLOW_CHECK(cfg.n_physical >= model->hyper.window,
                  "n_physical must cover the model window of " +
                      std::to_string(model->hyper.window) + " frames");
  }

  Engine engine(cfg.scene);

  const bool writing = !cfg.out_dir.empty();
  std::ofstream metrics_out;
  if (writing) {
    std::filesystem::create_directories(cfg.out_dir);
    metrics_out.open(cfg.out_dir + "/metrics.csv", std::ios::binary);
    MPMFLOW_CHECK(metrics_out.good(),
                  "cannot write " + cfg.out_dir + "/metrics.csv");
    metrics_out << kMetricsHeader << "\n";
  }

  const double beta = scene_beta(cfg.scene);
  const std::int64_t gamma =
      static_cast<std::int64_t>(engine.grid().cell_count());
  const std::size_t window_cap =
      model ? static_cast<std::size_t>(model->hyper.window) : 0;
  std::deque<PressureTensors> window;

  Trajectory traj;

  // Applies the solution, measures the finished frame and records it. The
  // grid keeps the projected velocities and labels after finish_step, so
  // the divergence and complexity read post-solve state.
  auto complete_frame = [&](const BlockSystem& sys,
                            const std::vector<double>& u,
                            const SolveReport& rep, bool predicted) {
    const std::int64_t idx = engine.frame();
    const double residual = relative_residual(sys.a, sys.rhs, u);
    engine.finish_step(sys, u);

    FrameRecord rec;
    rec.frame_index = idx;
    rec.refine_iters = rep.iterations;
    rec.residual = residual;
    rec.div_max = divergence_max(engine.grid());
    rec.zeta = interacting_complexity(beta, gamma, engine.grid());
    rec.predicted = predicted;
    traj.frames.push_back(rec);

    if (writing || window_cap > 0) {
      PressureTensors t = snapshot_tensors(engine.pressures(), engine.grid(), idx);
      if (writing) {
        save_pgt(frame_file(cfg.out_dir, idx), t);
        append_metrics_row(metrics_out, rec);
        metrics_out.flush();
      }
      if (window_cap > 0) {
        window.push_back(std::move(t));
        if (window.size() > window_cap) window.pop_front();
      }
    }
  };

  SolveOptions opt;
  opt.tolerance = cfg.refine_tol;

  for (std::int64_t t = 0; t < cfg.n_physical; ++t) {
    BlockSystem sys = engine.prepare_step();
    std::vector<double> u = fields_to_vector(sys, engine.pressures());
    SolveReport rep = solve_pressure(sys, u, cfg.refine_solver, opt);
    if (!rep.converged) {
      char res[32];
      std::snprintf(res, sizeof res, "%.3e", rep.relative_residual);
      throw NumericalError("pressure solve did not converge at frame " +
                           std::to_string(engine.frame()) +
                           " (relative residual " + std::string(res) + ")");
    }
    complete_frame(sys, u, rep, false);
  }

  for (std::int64_t t = 0; t < cfg.m_predicted; ++t) {
    BlockSystem sys = engine.prepare_step();

    PressureFields p_hat;
    switch (cfg.predictor) {
      case PredictorKind::Zero:
        break;  // empty fields scatter to x0 = 0
      case PredictorKind::PrevFrame:
        p_hat = engine.pressures();
        break;
      case PredictorKind::Exact: {
        // Reference solve well past the refinement target. If it stalls
        // early the guess is merely good instead of exact; refine() still
        // enforces the tolerance.
        std::vector<double> x = fields_to_vector(sys, engine.pressures());
        SolveOptions exact_opt;
        exact_opt.tolerance = 1e-10;
        solve_pressure(sys, x, cfg.refine_solver, exact_opt);
        p_hat = solution_to_fields(sys, x);
        break;
      }
      case PredictorKind::Model:
        p_hat = predict_fields(*model, window, sys, engine.grid(),
                               engine.frame());
        break;
    }

    auto [fields, rep] = refine(p_hat, sys, cfg.refine_tol, cfg.refine_solver);
    if (!rep.converged) {
      char res[32];
      std::snprintf(res, sizeof res, "%.3e", rep.relative_residual);
      traj.status = TrajectoryStatus::RefineFailed;
      traj.failed_frame = engine.frame();
      traj.message = "refinement hit the iteration cap at frame " +
                     std::to_string(engine.frame()) + " (relative residual " +
                     std::string(res) + ")";
      break;
    }
    std::vector<double> u = fields_to_vector(sys, fields);
    complete_frame(sys, u, rep, true);
  }

  if (writing)
    save_particles_csv(engine.particles(), cfg.out_dir + "/particles.csv");
  traj.final_particles = engine.particles();
  return traj;
}

void save_metrics_csv(const std::vector<FrameRecord>& frames,
                      const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  MPMFLOW_CHECK(out.good(), "cannot write " + path);
  out << kMetricsHeader << "\n";
  for (const FrameRecord& r : frames) append_metrics_row(out, r);
  out.flush();
  MPMFLOW_CHECK(out.good(), "write failed: " + path);
}

std::vector<FrameRecord> load_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  MPMFLOW_CHECK(in.good(), "cannot open " + path);

  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw FormatError("unexpected metrics header in " + path);

  std::vector<FrameRecord> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      std::size_t comma = line.find(',', start);
      cols.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cols.size() != 5)
      throw FormatError("expected 5 columns at " + path + ":" +
                        std::to_string(lineno));

    auto as_int = [&](const std::string& s) {
      char* end = nullptr;
      long long v = std::strtoll(s.c_str(), &end, 10);
      if (s.empty() || end != s.c_str() + s.size())
        throw FormatError("bad integer \"" + s + "\" at " + path + ":" +
                          std::to_string(lineno));
      return static_cast<std::int64_t>(v);
    };
    auto as_double = [&](const std::string& s) {
      char* end = nullptr;
      double v = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size())
        throw FormatError("bad number \"" + s + "\" at " + path + ":" +
                          std::to_string(lineno));
      return v;
    };

    FrameRecord r;
    r.frame_index = as_int(cols[0]);
    r.refine_iters = as_int(cols[1]);
    r.residual = as_double(cols[2]);
    r.div_max = as_double(cols[3]);
    r.zeta = as_double(cols[4]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace mpmflow
