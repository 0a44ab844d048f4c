#pragma once

#include <cstdint>
#include <vector>

#include "mpmflow/error.hpp"
#include "mpmflow/geom.hpp"

namespace mpmflow {

enum class CellLabel : std::uint8_t {
  Empty = 0,
  Fluid,
  Solid,
  Interface,
  SlipBoundary,
  FreeSurface,
};

enum class Material : std::uint8_t { Fluid = 0, Solid = 1 };

//! Collocated MPM grid: dims = node counts per axis, nodes at i*spacing.
//! Cells live between nodes ((d-1)(h-1)(w-1) of them); labels and pressures
//! are cell-centered, masses and velocities are per-material node fields.
struct SimGrid {
  std::int32_t d = 0, h = 0, w = 0;  // node counts (depth, height, width)
  double spacing = 1.0;

  // Node fields, size d*h*w.
  std::vector<double> mass_f, mass_s;
  std::vector<Vec3> vel_f, vel_s;

  // Cell fields, size (d-1)*(h-1)*(w-1).
  std::vector<CellLabel> labels;
  std::vector<std::int32_t> occ_f, occ_s;  // particle counts per cell

  SimGrid() = default;
  SimGrid(std::int32_t d_, std::int32_t h_, std::int32_t w_, double spacing_)
      : d(d_), h(h_), w(w_), spacing(spacing_) {
    MPMFLOW_CHECK(d >= 4 && h >= 4 && w >= 4, "grid dims must be >= 4");
    MPMFLOW_CHECK(spacing > 0.0, "grid spacing must be positive");
    mass_f.assign(node_count(), 0.0);
    mass_s.assign(node_count(), 0.0);
    vel_f.assign(node_count(), Vec3{});
    vel_s.assign(node_count(), Vec3{});
    labels.assign(cell_count(), CellLabel::Empty);
    occ_f.assign(cell_count(), 0);
    occ_s.assign(cell_count(), 0);
  }

  std::size_t node_count() const {
    return static_cast<std::size_t>(d) * h * w;
  }
  std::int32_t cd() const { return d - 1; }
  std::int32_t ch() const { return h - 1; }
  std::int32_t cw() const { return w - 1; }
  std::size_t cell_count() const {
    return static_cast<std::size_t>(cd()) * ch() * cw();
  }

  std::size_t node_index(std::int32_t i, std::int32_t j, std::int32_t k) const {
    return (static_cast<std::size_t>(i) * h + j) * w + k;
  }
  std::size_t cell_index(std::int32_t i, std::int32_t j, std::int32_t k) const {
    return (static_cast<std::size_t>(i) * ch() + j) * cw() + k;
  }
  std::size_t cell_index(const Coord3& c) const {
    return cell_index(c.i, c.j, c.k);
  }
  bool cell_inside(std::int32_t i, std::int32_t j, std::int32_t k) const {
    return i >= 0 && i < cd() && j >= 0 && j < ch() && k >= 0 && k < cw();
  }

  // Combined mass/velocity view (mass-weighted over materials).
  double node_mass(std::size_t n) const { return mass_f[n] + mass_s[n]; }
  Vec3 node_velocity(std::size_t n) const {
    double m = node_mass(n);
    if (m <= 0.0) return {};
    return (vel_f[n] * mass_f[n] + vel_s[n] * mass_s[n]) * (1.0 / m);
  }

  void clear_transfer_state() {
    std::fill(mass_f.begin(), mass_f.end(), 0.0);
    std::fill(mass_s.begin(), mass_s.end(), 0.0);
    std::fill(vel_f.begin(), vel_f.end(), Vec3{});
    std::fill(vel_s.begin(), vel_s.end(), Vec3{});
    std::fill(labels.begin(), labels.end(), CellLabel::Empty);
    std::fill(occ_f.begin(), occ_f.end(), 0);
    std::fill(occ_s.begin(), occ_s.end(), 0);
  }
};

//! Structure-of-arrays particle storage.
struct ParticleSet {
  std::vector<Vec3> pos;
  std::vector<Vec3> vel;
  std::vector<Mat3> affine;  // APIC C matrix
  std::vector<double> mass;
  std::vector<Material> material;
  std::vector<std::int32_t> body;  // solid body id, -1 for fluid

  std::size_t size() const { return pos.size(); }

  void push(const Vec3& x, const Vec3& v, double m, Material mat,
            std::int32_t body_id = -1) {
    pos.push_back(x);
    vel.push_back(v);
    affine.push_back(Mat3::zero());
    mass.push_back(m);
    material.push_back(mat);
    body.push_back(body_id);
  }
};

//! Sparse cell-coordinate pressure samples, one slot per active unknown.
//! Solver-side storage, f64. Coordinates within each field are unique;
//! p_fluid and y_slip must additionally not overlap (they share a tensor).
struct PressureFields {
  struct Field {
    std::vector<double> values;
    std::vector<Coord3> coords;

    std::size_t size() const { return values.size(); }
    void push(const Coord3& c, double v) {
      coords.push_back(c);
      values.push_back(v);
    }
  };

  Field p_fluid;
  Field p_solid;
  Field y_slip;
  Field h_interface;

  std::size_t total_size() const {
    return p_fluid.size() + p_solid.size() + y_slip.size() +
           h_interface.size();
  }
};

//! Dense padded per-channel tensors for the network side, f32.
//! Shape is (d+4, h+4, w+4) for grid dims (d, h, w): two padding cells per
//! side. Channel layout: xf = fluid+slip pressure, xs = solid pressure,
//! xi = interface pressure.
struct PressureTensors {
  std::int32_t pd = 0, ph = 0, pw = 0;  // padded dims
  std::int64_t frame_index = 0;
  std::vector<float> xf, xs, xi;

  PressureTensors() = default;
  PressureTensors(std::int32_t d, std::int32_t h, std::int32_t w)
      : pd(d + 4), ph(h + 4), pw(w + 4) {
    std::size_t n = voxels();
    xf.assign(n, 0.0f);
    xs.assign(n, 0.0f);
    xi.assign(n, 0.0f);
  }

  std::size_t voxels() const {
    return static_cast<std::size_t>(pd) * ph * pw;
  }
  std::size_t at(std::int32_t i, std::int32_t j, std::int32_t k) const {
    return (static_cast<std::size_t>(i) * ph + j) * pw + k;
  }
};

}  // namespace mpmflow
