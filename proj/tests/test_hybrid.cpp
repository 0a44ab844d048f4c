#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mpmflow/hybrid.hpp"
#include "mpmflow/pgt_io.hpp"
#include "mpmflow/rng.hpp"
#include "mpmflow/surrogate.hpp"

using namespace mpmflow;

namespace {

//! Water pool resting on the floor plus a solid ball dropping into it.
//! The wall contact makes the pressure rhs nonzero from frame 0 on.
SceneConfig splash_scene() {
  SceneConfig cfg;
  cfg.name = "splash";
  cfg.dim = 8;
  cfg.spacing = 1.0 / 8.0;
  cfg.dt = 0.004;
  cfg.seed = 11;

  ShapeConfig water;
  water.type = "box";
  water.material = Material::Fluid;
  water.min = {0.05, 0.0, 0.05};
  water.max = {0.95, 0.35, 0.95};

  ShapeConfig ball;
  ball.type = "sphere";
  ball.material = Material::Solid;
  ball.center = {0.5, 0.62, 0.5};
  ball.radius = 0.18;
  ball.velocity = {0.0, -0.8, 0.0};

  cfg.shapes = {water, ball};
  return cfg;
}

SceneConfig dam_scene(std::int32_t dim) {
  SceneConfig cfg;
  cfg.name = "dam";
  cfg.dim = dim;
  cfg.spacing = 1.0 / dim;
  cfg.dt = 0.004;
  cfg.seed = 5;

  ShapeConfig water;
  water.type = "box";
  water.material = Material::Fluid;
  water.min = {0.05, 0.0, 0.05};
  water.max = {0.45, 0.7, 0.95};
  cfg.shapes = {water};
  return cfg;
}

bool particles_identical(const ParticleSet& a, const ParticleSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t p = 0; p < a.size(); ++p) {
    if (a.pos[p].x != b.pos[p].x || a.pos[p].y != b.pos[p].y ||
        a.pos[p].z != b.pos[p].z)
      return false;
    if (a.vel[p].x != b.vel[p].x || a.vel[p].y != b.vel[p].y ||
        a.vel[p].z != b.vel[p].z)
      return false;
  }
  return true;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::int64_t total_iters(const Trajectory& t) {
  std::int64_t n = 0;
  for (const FrameRecord& r : t.frames) n += r.refine_iters;
  return n;
}

}  // namespace

TEST_CASE("predictor names round-trip") {
  for (PredictorKind k : {PredictorKind::Model, PredictorKind::Exact,
                          PredictorKind::PrevFrame, PredictorKind::Zero})
    CHECK(predictor_from_name(predictor_name(k)) == k);
  CHECK_THROWS_AS(predictor_from_name("oracle"), InvalidInput);
  CHECK_THROWS_AS(predictor_from_name(""), InvalidInput);
}

TEST_CASE("scene beta follows solid mobility") {
  SceneConfig fluid_only = dam_scene(8);
  CHECK(scene_beta(fluid_only) == 0.1);

  SceneConfig pinned = splash_scene();
  pinned.shapes[1].fixed = true;
  CHECK(scene_beta(pinned) == 0.1);

  CHECK(scene_beta(splash_scene()) == 1.0);
}

TEST_CASE("config validation rejects bad hybrid setups") {
  HybridConfig cfg;
  cfg.scene = splash_scene();
  cfg.predictor = PredictorKind::Zero;

  cfg.n_physical = -1;
  CHECK_THROWS_AS(run(cfg), InvalidInput);
  cfg.n_physical = 1;
  cfg.m_predicted = -2;
  CHECK_THROWS_AS(run(cfg), InvalidInput);
  cfg.m_predicted = 0;
  cfg.refine_tol = 0.0;
  CHECK_THROWS_AS(run(cfg), InvalidInput);

  cfg.refine_tol = 1e-3;
  cfg.predictor = PredictorKind::Model;
  cfg.model_path = "";
  CHECK_THROWS_AS(run(cfg), InvalidInput);
  cfg.model_path = "no_such_model.mpmw";
  CHECK_THROWS_AS(run(cfg), InvalidInput);

  // Degenerate but legal: nothing to simulate.
  HybridConfig empty;
  empty.scene = splash_scene();
  empty.predictor = PredictorKind::Zero;
  empty.n_physical = 0;
  empty.m_predicted = 0;
  Trajectory t = run(empty);
  CHECK(t.status == TrajectoryStatus::Complete);
  CHECK(t.frames.empty());
  CHECK(t.final_particles.size() > 0);
}

TEST_CASE("hybrid with no predicted frames matches the physical stepper") {
  SceneConfig scene = splash_scene();

  HybridConfig cfg;
  cfg.scene = scene;
  cfg.n_physical = 6;
  cfg.m_predicted = 0;
  cfg.refine_tol = 1e-3;
  cfg.refine_solver = SolverKind::MgPcg;
  cfg.predictor = PredictorKind::Zero;
  Trajectory traj = run(cfg);

  Engine reference(scene);
  SolveOptions opt;
  opt.tolerance = cfg.refine_tol;
  for (int t = 0; t < 6; ++t) reference.step_physical(SolverKind::MgPcg, opt);

  REQUIRE(traj.status == TrajectoryStatus::Complete);
  REQUIRE(traj.frames.size() == 6);
  CHECK(particles_identical(traj.final_particles, reference.particles()));
  for (const FrameRecord& r : traj.frames) {
    CHECK(!r.predicted);
    CHECK(r.residual <= cfg.refine_tol);
  }
}

TEST_CASE("previous-frame predictor reproduces the warm-started stepper") {
  // step_physical warm-starts from the previous pressure state, so a
  // 3 physical + 3 predicted run with the PrevFrame stub must land on
  // bit-identical particles to 6 physical frames at the same tolerance.
  SceneConfig scene = splash_scene();

  HybridConfig cfg;
  cfg.scene = scene;
  cfg.n_physical = 3;
  cfg.m_predicted = 3;
  cfg.refine_tol = 1e-3;
  cfg.refine_solver = SolverKind::MgPcg;
  cfg.predictor = PredictorKind::PrevFrame;
  Trajectory traj = run(cfg);

  Engine reference(scene);
  SolveOptions opt;
  opt.tolerance = cfg.refine_tol;
  for (int t = 0; t < 6; ++t) reference.step_physical(SolverKind::MgPcg, opt);

  REQUIRE(traj.status == TrajectoryStatus::Complete);
  REQUIRE(traj.frames.size() == 6);
  CHECK(particles_identical(traj.final_particles, reference.particles()));
  CHECK(traj.frames[2].predicted == false);
  CHECK(traj.frames[3].predicted == true);
}

TEST_CASE("exact predictor refines in zero iterations") {
  for (SolverKind solver : {SolverKind::MgPcg, SolverKind::GaussSeidel}) {
    HybridConfig cfg;
    cfg.scene = splash_scene();
    cfg.n_physical = 1;
    cfg.m_predicted = 3;
    cfg.refine_tol = 1e-3;
    cfg.refine_solver = solver;
    cfg.predictor = PredictorKind::Exact;

    Trajectory traj = run(cfg);
    REQUIRE(traj.status == TrajectoryStatus::Complete);
    REQUIRE(traj.frames.size() == 4);
    for (const FrameRecord& r : traj.frames) {
      if (!r.predicted) continue;
      CHECK(r.refine_iters == 0);
      CHECK(r.residual <= cfg.refine_tol);
    }
  }
}

TEST_CASE("refine from a zero guess is the cold solve") {
  Engine engine(splash_scene());
  SolveOptions warmup;
  warmup.tolerance = 1e-6;
  for (int t = 0; t < 3; ++t) engine.step_physical(SolverKind::MgPcg, warmup);
  BlockSystem sys = engine.prepare_step();

  auto [fields, rep] = refine(PressureFields{}, sys, 1e-3, SolverKind::MgPcg);

  std::vector<double> x(static_cast<std::size_t>(sys.size()), 0.0);
  SolveOptions opt;
  opt.tolerance = 1e-3;
  SolveReport manual = solve_pressure(sys, x, SolverKind::MgPcg, opt);

  CHECK(rep.iterations == manual.iterations);
  CHECK(rep.relative_residual == manual.relative_residual);
  REQUIRE(fields.total_size() == static_cast<std::size_t>(sys.size()));
  PressureFields manual_fields = solution_to_fields(sys, x);
  for (std::size_t i = 0; i < fields.p_fluid.size(); ++i)
    CHECK(fields.p_fluid.values[i] == manual_fields.p_fluid.values[i]);

  CHECK_THROWS_AS(refine(PressureFields{}, sys, 0.0, SolverKind::MgPcg),
                  InvalidInput);
}

TEST_CASE("refine warm-started near the solution beats the cold solve") {
  // 20 systems from seeded splash variants; the exact solution with 1%
  // multiplicative noise must not need more iterations than a zero start
  // (one violation tolerated).
  int violations = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Pcg32 rng(100 + static_cast<std::uint64_t>(trial));
    SceneConfig scene = splash_scene();
    scene.seed = 200 + static_cast<std::uint64_t>(trial);
    scene.shapes[1].center = {rng.uniform(0.3, 0.7), rng.uniform(0.55, 0.7),
                              rng.uniform(0.3, 0.7)};
    scene.shapes[1].radius = rng.uniform(0.12, 0.2);

    Engine engine(scene);
    SolveOptions warmup;
    warmup.tolerance = 1e-6;
    for (int t = 0; t < 2; ++t) engine.step_physical(SolverKind::MgPcg, warmup);
    BlockSystem sys = engine.prepare_step();

    std::vector<double> x(static_cast<std::size_t>(sys.size()), 0.0);
    SolveOptions tight;
    tight.tolerance = 1e-11;
    SolveReport exact_rep = solve_pressure(sys, x, SolverKind::MgPcg, tight);
    REQUIRE(exact_rep.converged);
    PressureFields guess = solution_to_fields(sys, x);

    auto perturb = [&rng](PressureFields::Field& f) {
      for (double& v : f.values) v *= 1.0 + 0.01 * rng.uniform(-1.0, 1.0);
    };
    perturb(guess.p_fluid);
    perturb(guess.p_solid);
    perturb(guess.y_slip);
    perturb(guess.h_interface);

    auto [warm_fields, warm] = refine(guess, sys, 1e-3, SolverKind::MgPcg);
    auto [cold_fields, cold] =
        refine(PressureFields{}, sys, 1e-3, SolverKind::MgPcg);
    REQUIRE(warm.converged);
    REQUIRE(cold.converged);
    if (warm.iterations > cold.iterations) ++violations;
  }
  CHECK(violations <= 1);
}

TEST_CASE("previous-frame predictor needs fewer refinement iterations than cold starts") {
  // Gauss-Seidel refinement: its iteration count tracks the residual
  // decades left to cover, so a good warm start pays off the most there.
  HybridConfig warm_cfg;
  warm_cfg.scene = dam_scene(16);
  warm_cfg.n_physical = 0;
  warm_cfg.m_predicted = 50;
  warm_cfg.refine_tol = 1e-3;
  warm_cfg.refine_solver = SolverKind::GaussSeidel;
  warm_cfg.predictor = PredictorKind::PrevFrame;

  HybridConfig cold_cfg = warm_cfg;
  cold_cfg.predictor = PredictorKind::Zero;

  Trajectory warm = run(warm_cfg);
  Trajectory cold = run(cold_cfg);
  REQUIRE(warm.status == TrajectoryStatus::Complete);
  REQUIRE(cold.status == TrajectoryStatus::Complete);
  REQUIRE(warm.frames.size() == 50);
  REQUIRE(cold.frames.size() == 50);

  const std::int64_t warm_total = total_iters(warm);
  const std::int64_t cold_total = total_iters(cold);
  CHECK(warm_total < cold_total);  // means over equal counts: compare sums
  CHECK(static_cast<double>(warm_total) <= 0.7 * static_cast<double>(cold_total));

  // Warm starts must not trade iterations for physics quality: the
  // post-refinement divergence stays within a factor of the cold run.
  double warm_div = 0.0, cold_div = 0.0;
  for (const FrameRecord& r : warm.frames) {
    CHECK(r.residual <= warm_cfg.refine_tol);
    CHECK(std::isfinite(r.zeta));
    warm_div = std::max(warm_div, r.div_max);
  }
  for (const FrameRecord& r : cold.frames) cold_div = std::max(cold_div, r.div_max);
  CHECK(warm_div <= 10.0 * cold_div);
}

TEST_CASE("refinement hitting the iteration cap truncates the trajectory") {
  HybridConfig cfg;
  cfg.scene = splash_scene();
  cfg.n_physical = 0;
  cfg.m_predicted = 2;
  cfg.refine_tol = 1e-300;  // unreachable, forces the cap
  cfg.refine_solver = SolverKind::GaussSeidel;
  cfg.predictor = PredictorKind::Zero;
  cfg.out_dir = "hybrid_truncated";

  Trajectory traj = run(cfg);
  CHECK(traj.status == TrajectoryStatus::RefineFailed);
  CHECK(traj.failed_frame == 0);
  CHECK(traj.frames.empty());
  CHECK(traj.message.find("frame 0") != std::string::npos);
  CHECK(traj.final_particles.size() > 0);

  // Partial outputs still land on disk: header-only metrics and particles.
  CHECK(slurp("hybrid_truncated/metrics.csv") ==
        "frame,refine_iters,residual,div_max,zeta\n");
  CHECK(std::filesystem::exists("hybrid_truncated/particles.csv"));
  std::filesystem::remove_all("hybrid_truncated");

  // The physical phase has no truncation path: it throws instead.
  cfg.out_dir.clear();
  cfg.n_physical = 1;
  cfg.m_predicted = 0;
  CHECK_THROWS_AS(run(cfg), NumericalError);
}

TEST_CASE("trajectory outputs are complete and rerun bit-identical") {
  HybridConfig cfg;
  cfg.scene = splash_scene();
  cfg.n_physical = 2;
  cfg.m_predicted = 2;
  cfg.refine_tol = 1e-3;
  cfg.refine_solver = SolverKind::MgPcg;
  cfg.predictor = PredictorKind::Exact;
  cfg.out_dir = "hybrid_run_a";

  Trajectory a = run(cfg);
  REQUIRE(a.status == TrajectoryStatus::Complete);
  REQUIRE(a.frames.size() == 4);
  for (int f = 0; f < 4; ++f) {
    CHECK(a.frames[static_cast<std::size_t>(f)].frame_index == f);
    CHECK(a.frames[static_cast<std::size_t>(f)].predicted == (f >= 2));
  }

  for (int f = 0; f < 4; ++f) {
    char name[64];
    std::snprintf(name, sizeof name, "hybrid_run_a/frame_%06d.pgt", f);
    REQUIRE(std::filesystem::exists(name));
  }
  PressureTensors last = load_pgt("hybrid_run_a/frame_000003.pgt");
  CHECK(last.frame_index == 3);
  CHECK(last.pd == splash_scene().dim + 4);

  std::vector<FrameRecord> rows = load_metrics_csv("hybrid_run_a/metrics.csv");
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].frame_index == a.frames[i].frame_index);
    CHECK(rows[i].refine_iters == a.frames[i].refine_iters);
    CHECK(rows[i].residual == a.frames[i].residual);
    CHECK(rows[i].div_max == a.frames[i].div_max);
    CHECK(rows[i].zeta == a.frames[i].zeta);
  }

  std::string particles = slurp("hybrid_run_a/particles.csv");
  CHECK(particles.rfind("id,material,x,y,z,vx,vy,vz", 0) == 0);

  cfg.out_dir = "hybrid_run_b";
  Trajectory b = run(cfg);
  CHECK(particles_identical(a.final_particles, b.final_particles));
  CHECK(slurp("hybrid_run_a/metrics.csv") == slurp("hybrid_run_b/metrics.csv"));
  CHECK(slurp("hybrid_run_a/frame_000003.pgt") ==
        slurp("hybrid_run_b/frame_000003.pgt"));
  std::filesystem::remove_all("hybrid_run_a");
  std::filesystem::remove_all("hybrid_run_b");
}

TEST_CASE("model predictor drives the full tensor path") {
  SurrogateHyper hyper;
  hyper.latent_channels = 8;
  hyper.window = 2;
  SurrogateModel tiny(hyper, 21);
  save_model("hybrid_tiny.mpmw", tiny);

  HybridConfig cfg;
  cfg.scene = splash_scene();  // dim 8 -> padded 12, the smallest legal extent
  cfg.n_physical = 3;
  cfg.m_predicted = 2;
  cfg.refine_tol = 1e-3;
  cfg.refine_solver = SolverKind::MgPcg;
  cfg.predictor = PredictorKind::Model;
  cfg.model_path = "hybrid_tiny.mpmw";

  Trajectory traj = run(cfg);
  REQUIRE(traj.status == TrajectoryStatus::Complete);
  REQUIRE(traj.frames.size() == 5);
  for (const FrameRecord& r : traj.frames) CHECK(r.residual <= cfg.refine_tol);
  // An untrained guess must cost refinement work, not correctness.
  CHECK(traj.frames[3].refine_iters > 0);

  cfg.n_physical = 1;  // shorter than the window
  CHECK_THROWS_AS(run(cfg), InvalidInput);

  cfg.n_physical = 3;
  cfg.scene.dim = 10;  // padded 14 is not a multiple of 4
  cfg.scene.spacing = 1.0 / 10.0;
  CHECK_THROWS_AS(run(cfg), InvalidInput);

  std::remove("hybrid_tiny.mpmw");
}

TEST_CASE("metrics csv round-trips and rejects malformed input") {
  std::vector<FrameRecord> rows(3);
  rows[0].frame_index = 0;
  rows[0].refine_iters = 12;
  rows[0].residual = 3.25e-4;
  rows[0].div_max = 0.0078125;
  rows[0].zeta = -0.5;
  rows[1].frame_index = 1;
  rows[1].refine_iters = 0;
  rows[1].residual = 1.0 / 3.0;
  rows[1].div_max = 1e-17;
  rows[1].zeta = -std::numeric_limits<double>::infinity();
  rows[2].frame_index = 2;
  rows[2].refine_iters = 7;
  rows[2].residual = 9.99e-4;
  rows[2].div_max = 2.125;
  rows[2].zeta = 2.15;

  save_metrics_csv(rows, "metrics_roundtrip.csv");
  std::vector<FrameRecord> back = load_metrics_csv("metrics_roundtrip.csv");
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].frame_index == rows[i].frame_index);
    CHECK(back[i].refine_iters == rows[i].refine_iters);
    CHECK(back[i].residual == rows[i].residual);
    CHECK(back[i].div_max == rows[i].div_max);
    CHECK(back[i].zeta == rows[i].zeta);
  }
  CHECK(std::isinf(back[1].zeta));
  std::remove("metrics_roundtrip.csv");

  CHECK_THROWS_AS(load_metrics_csv("no_such_metrics.csv"), InvalidInput);

  auto write_file = [](const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
  };
  write_file("metrics_bad.csv", "frame,iters,residual,div_max,zeta\n");
  CHECK_THROWS_AS(load_metrics_csv("metrics_bad.csv"), FormatError);
  write_file("metrics_bad.csv",
             "frame,refine_iters,residual,div_max,zeta\n1,2,3.0,4.0\n");
  CHECK_THROWS_AS(load_metrics_csv("metrics_bad.csv"), FormatError);
  write_file("metrics_bad.csv",
             "frame,refine_iters,residual,div_max,zeta\n1,2,3.0,oops,5.0\n");
  CHECK_THROWS_AS(load_metrics_csv("metrics_bad.csv"), FormatError);
  write_file("metrics_bad.csv",
             "frame,refine_iters,residual,div_max,zeta\n1.5,2,3.0,4.0,5.0\n");
  CHECK_THROWS_AS(load_metrics_csv("metrics_bad.csv"), FormatError);
  std::remove("metrics_bad.csv");
}
