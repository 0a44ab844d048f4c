#pragma once

#include <string>
#include <vector>

#include "mpmflow/grid.hpp"
#include "mpmflow/pressure_system.hpp"
#include "mpmflow/solvers.hpp"

namespace mpmflow {

struct ShapeConfig {
  std::string type;  // "box" or "sphere"
  Material material = Material::Fluid;
  Vec3 min{}, max{};  // box corners, world units
  Vec3 center{};      // sphere
  double radius = 0.0;
  Vec3 velocity{};
  double density = 0.0;  // 0 -> scene default for the material
  bool fixed = false;    // solid shapes only: pinned in place
};

struct SceneConfig {
  std::string name = "scene";
  std::int32_t dim = 16;  // grid nodes per axis, cubic domain
  double spacing = 1.0 / 16.0;
  double dt = 0.004;
  std::int32_t frames = 100;
  Vec3 gravity{0.0, -9.81, 0.0};
  double fluid_density = 1000.0;
  double solid_density = 1200.0;
  double solid_stiffness = 1e6;
  std::int32_t particles_per_cell = 8;
  std::uint64_t seed = 1;
  std::vector<ShapeConfig> shapes;

  double band_lo() const { return 0.5 * spacing; }
  double band_hi() const { return (dim - 1.5) * spacing; }
};

SceneConfig scene_from_json(const std::string& text);
SceneConfig load_scene(const std::string& path);
std::string scene_to_json(const SceneConfig& cfg);

//! Deterministic stratified seeding of all shapes in the scene. Particles
//! outside the valid band next to the walls are dropped.
ParticleSet seed_particles(const SceneConfig& cfg);

//! Snapshot export for external visualization:
//! id, material, x, y, z, vx, vy, vz per line.
void save_particles_csv(const ParticleSet& parts, const std::string& path);

//! APIC particle-to-grid transfer with quadratic B-spline weights. Rebuilds
//! per-material node masses/velocities and cell occupancy counts from
//! scratch; serial particle order, so results are deterministic.
void p2g(const ParticleSet& parts, SimGrid& g);

//! Cell labels from the occupancy counts: mixed cells and fluid cells next
//! to solid-occupied ones become Interface, wall-layer fluid becomes
//! SlipBoundary, fluid next to empty space becomes FreeSurface. Priority on
//! conflict: Interface > SlipBoundary > FreeSurface.
void classify_cells(SimGrid& g);

//! APIC grid-to-particle gather (velocity and affine matrix), then
//! advection x += dt * v. Pass dt = 0 for the gather alone.
void g2p(const SimGrid& g, ParticleSet& parts, double dt);

//! Hybrid MPM stepper: particles carry state, per-material grid fields are
//! rebuilt every step, and a monolithic pressure projection couples the two
//! materials. prepare_step/finish_step split the step around the solve so
//! callers can choose how the pressure guess is produced.
class Engine {
 public:
  explicit Engine(const SceneConfig& cfg);

  //! Transfers particles to the grid, applies gravity and wall conditions,
  //! classifies cells and assembles the pressure system.
  BlockSystem prepare_step();

  //! Applies the pressure solution to the grid, transfers back to the
  //! particles and advects them. `u` is the monolithic solution vector.
  void finish_step(const BlockSystem& sys, const std::vector<double>& u);

  //! prepare + warm-started solve + finish.
  SolveReport step_physical(SolverKind kind, const SolveOptions& opt = {});

  const SceneConfig& config() const { return cfg_; }
  const SimGrid& grid() const { return grid_; }
  const ParticleSet& particles() const { return parts_; }
  ParticleSet& particles() { return parts_; }
  const PressureFields& pressures() const { return pressure_state_; }
  std::int64_t frame() const { return frame_; }
  std::int64_t cfl_clamp_count() const { return cfl_clamps_; }

 private:
  void enforce_wall_velocities();
  void project_rigid_bodies();
  void advect_particles(double dt);

  SceneConfig cfg_;
  SimGrid grid_;
  ParticleSet parts_;
  PressureFields pressure_state_;
  std::vector<bool> body_fixed_;
  std::int64_t frame_ = 0;
  std::int64_t cfl_clamps_ = 0;
};

}  // namespace mpmflow
