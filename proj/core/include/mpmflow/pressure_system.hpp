#pragma once

#include <string>

#include "mpmflow/grid.hpp"
#include "mpmflow/sparse.hpp"

namespace mpmflow {

struct PressureParams {
  double solid_stiffness = 1e6;  // bulk stiffness of the weakly compressible solid
};

//! One velocity DOF per (node, axis) pair. A face exists when both cells it
//! separates lie inside the cell lattice, the material carries mass at the
//! node, and the node is off the domain wall planes. Wall-plane DOFs are
//! eliminated as static: the normal ones because the wall does not move,
//! the tangential ones because their control area straddles the wall and
//! their tail-of-the-kernel masses would otherwise dominate the projection
//! weights.
struct FaceSet {
  std::vector<std::size_t> node;
  std::vector<std::int8_t> axis;
  std::vector<double> mass;

  std::size_t size() const { return node.size(); }
};

//! Monolithic pressure system over four unknown blocks, ordered
//! [solid pressure | fluid pressure | slip multiplier | interface
//! multiplier]. Fluid pressure rows cover Fluid and Interface cells; slip
//! rows are the divergence constraints of wall-layer fluid cells;
//! interface rows match normal velocities of the two materials.
//! A = dt * (Js Ms^-1 Js^T + Jf Mf^-1 Jf^T) + compliance, built from the
//! constraint rows J so it is symmetric by construction.
struct BlockSystem {
  std::vector<Coord3> cells_solid, cells_fluid, cells_slip, cells_iface;

  std::int64_t n_solid() const { return static_cast<std::int64_t>(cells_solid.size()); }
  std::int64_t n_fluid() const { return static_cast<std::int64_t>(cells_fluid.size()); }
  std::int64_t n_slip() const { return static_cast<std::int64_t>(cells_slip.size()); }
  std::int64_t n_iface() const { return static_cast<std::int64_t>(cells_iface.size()); }
  std::int64_t off_solid() const { return 0; }
  std::int64_t off_fluid() const { return n_solid(); }
  std::int64_t off_slip() const { return n_solid() + n_fluid(); }
  std::int64_t off_iface() const { return n_solid() + n_fluid() + n_slip(); }
  std::int64_t size() const { return off_iface() + n_iface(); }

  CsrMatrix a;
  std::vector<double> rhs;

  // Constraint rows over per-material face DOFs, kept for the velocity
  // writeback and rhs assembly.
  CsrMatrix j_solid, j_fluid;
  FaceSet faces_solid, faces_fluid;

  double dt = 0.0, dx = 0.0;
  std::int32_t cd = 0, ch = 0, cw = 0;  // cell lattice dims

  const char* row_block(std::int64_t row) const;
  Coord3 row_coord(std::int64_t row) const;
  std::string row_name(std::int64_t row) const;
};

//! Assemble matrix and rhs from the current grid state. `prev` supplies the
//! solid pressure state entering the compliance term (matched by cell
//! coordinate; cells without history start at zero).
BlockSystem assemble_pressure_system(const SimGrid& g, double dt,
                                     const PressureParams& params,
                                     const PressureFields* prev = nullptr);

//! v^k <- v^k - dt * M^-1 J_k^T u for both materials.
void apply_pressure(const BlockSystem& sys, const std::vector<double>& u,
                    SimGrid& g);

PressureFields solution_to_fields(const BlockSystem& sys,
                                  const std::vector<double>& u);

//! Scatter field values onto the system's unknown layout (for warm starts
//! and predictor guesses). Coordinates absent from `f` become zero.
std::vector<double> fields_to_vector(const BlockSystem& sys,
                                     const PressureFields& f);

//! Discrete divergence of the fluid velocity per cell with the same
//! face-dropping rules as the constraint rows, so the solved residual and
//! this metric agree. Returned dense over the cell lattice.
std::vector<double> fluid_divergence(const SimGrid& g);

//! max |div| over Fluid-labeled cells, in 1/time units. Multiply by dt for
//! the per-step volume error in grid units.
double max_fluid_divergence(const SimGrid& g);

//! Outward (solid to fluid) unit normal at an interface cell, from the
//! central difference of the solid occupancy indicator. Falls back to +x
//! when the difference vanishes.
Vec3 interface_normal(const SimGrid& g, const Coord3& c);

}  // namespace mpmflow
