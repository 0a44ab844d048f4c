#include "mpmflow/pressure_system.hpp"

#include <cmath>
#include <unordered_map>

#include "mpmflow/error.hpp"

namespace mpmflow {

namespace {

bool carries_fluid_pressure(CellLabel l) {
  return l == CellLabel::Fluid || l == CellLabel::Interface;
}

FaceSet collect_faces(const SimGrid& g, const std::vector<double>& mass) {
  FaceSet fs;
  for (std::int32_t i = 0; i < g.d; ++i)
    for (std::int32_t j = 0; j < g.h; ++j)
      for (std::int32_t k = 0; k < g.w; ++k) {
        // Nodes on a domain wall plane are static (the DOF's control area
        // straddles the wall), so every face anchored there is eliminated.
        if (i == 0 || i == g.d - 1 || j == 0 || j == g.h - 1 || k == 0 ||
            k == g.w - 1)
          continue;
        std::size_t n = g.node_index(i, j, k);
        if (mass[n] <= 0.0) continue;
        for (int a = 0; a < 3; ++a) {
          // Face between cells (i,j,k)-e_a and (i,j,k); both must exist.
          if (i >= g.cd() || j >= g.ch() || k >= g.cw()) continue;
          if (i - (a == 0) < 0 || j - (a == 1) < 0 || k - (a == 2) < 0)
            continue;
          fs.node.push_back(n);
          fs.axis.push_back(static_cast<std::int8_t>(a));
          fs.mass.push_back(mass[n]);
        }
      }
  return fs;
}

// node*3+axis -> face id
std::vector<std::int64_t> face_lookup(const SimGrid& g, const FaceSet& fs) {
  std::vector<std::int64_t> lut(g.node_count() * 3, -1);
  for (std::size_t f = 0; f < fs.size(); ++f)
    lut[fs.node[f] * 3 + fs.axis[f]] = static_cast<std::int64_t>(f);
  return lut;
}

}  // namespace

const char* BlockSystem::row_block(std::int64_t row) const {
  if (row < off_fluid()) return "solid pressure";
  if (row < off_slip()) return "fluid pressure";
  if (row < off_iface()) return "slip multiplier";
  return "interface multiplier";
}

Coord3 BlockSystem::row_coord(std::int64_t row) const {
  if (row < off_fluid()) return cells_solid[row];
  if (row < off_slip()) return cells_fluid[row - off_fluid()];
  if (row < off_iface()) return cells_slip[row - off_slip()];
  return cells_iface[row - off_iface()];
}

std::string BlockSystem::row_name(std::int64_t row) const {
  Coord3 c = row_coord(row);
  return std::string(row_block(row)) + " at cell (" + std::to_string(c.i) +
         ", " + std::to_string(c.j) + ", " + std::to_string(c.k) + ")";
}

Vec3 interface_normal(const SimGrid& g, const Coord3& c) {
  auto occ = [&](std::int32_t i, std::int32_t j, std::int32_t k) {
    return g.cell_inside(i, j, k) && g.occ_s[g.cell_index(i, j, k)] > 0
               ? 1.0
               : 0.0;
  };
  Vec3 n{occ(c.i - 1, c.j, c.k) - occ(c.i + 1, c.j, c.k),
         occ(c.i, c.j - 1, c.k) - occ(c.i, c.j + 1, c.k),
         occ(c.i, c.j, c.k - 1) - occ(c.i, c.j, c.k + 1)};
  double len = n.norm();
  if (len == 0.0) return {1.0, 0.0, 0.0};
  return n * (1.0 / len);
}

BlockSystem assemble_pressure_system(const SimGrid& g, double dt,
                                     const PressureParams& params,
                                     const PressureFields* prev) {
  MPMFLOW_CHECK(dt > 0.0, "time step must be positive");
  MPMFLOW_CHECK(params.solid_stiffness > 0.0,
                "solid stiffness must be positive");

  BlockSystem s;
  s.dt = dt;
  s.dx = g.spacing;
  s.cd = g.cd();
  s.ch = g.ch();
  s.cw = g.cw();

  const double inv_dx = 1.0 / g.spacing;
  const std::size_t nc = g.cell_count();

  s.faces_solid = collect_faces(g, g.mass_s);
  s.faces_fluid = collect_faces(g, g.mass_f);
  auto lut_s = face_lookup(g, s.faces_solid);
  auto lut_f = face_lookup(g, s.faces_fluid);

  // True when cell (i,j,k) touches at least one face of the set; cells
  // whose faces were all eliminated get no unknown (their row would be
  // identically zero).
  auto has_incident = [&](const std::vector<std::int64_t>& lut,
                          std::int32_t i, std::int32_t j, std::int32_t k) {
    for (int a = 0; a < 3; ++a) {
      std::size_t lo = g.node_index(i, j, k);
      std::size_t hi =
          g.node_index(i + (a == 0), j + (a == 1), k + (a == 2));
      if (lut[lo * 3 + a] >= 0 || lut[hi * 3 + a] >= 0) return true;
    }
    return false;
  };

  // The interface row only samples faces along axes with a nonzero normal
  // component, so its guard is stricter than has_incident.
  auto iface_row_nonzero = [&](std::int32_t i, std::int32_t j,
                               std::int32_t k) {
    const Vec3 nrm = interface_normal(g, {i, j, k});
    for (int a = 0; a < 3; ++a) {
      if (nrm[a] == 0.0) continue;
      std::size_t lo = g.node_index(i, j, k);
      std::size_t hi =
          g.node_index(i + (a == 0), j + (a == 1), k + (a == 2));
      for (std::size_t n : {lo, hi})
        if (lut_f[n * 3 + a] >= 0 || lut_s[n * 3 + a] >= 0) return true;
    }
    return false;
  };

  std::vector<std::int64_t> solid_id(nc, -1), fluid_id(nc, -1),
      slip_id(nc, -1), iface_id(nc, -1);
  for (std::int32_t i = 0; i < s.cd; ++i)
    for (std::int32_t j = 0; j < s.ch; ++j)
      for (std::int32_t k = 0; k < s.cw; ++k) {
        std::size_t ci = g.cell_index(i, j, k);
        CellLabel label = g.labels[ci];
        if (g.occ_s[ci] > 0) {
          solid_id[ci] = s.n_solid();
          s.cells_solid.push_back({i, j, k});
        }
        if (carries_fluid_pressure(label) && has_incident(lut_f, i, j, k)) {
          fluid_id[ci] = s.n_fluid();
          s.cells_fluid.push_back({i, j, k});
        }
        if (label == CellLabel::SlipBoundary && has_incident(lut_f, i, j, k)) {
          slip_id[ci] = s.n_slip();
          s.cells_slip.push_back({i, j, k});
        }
        if (label == CellLabel::Interface && iface_row_nonzero(i, j, k)) {
          iface_id[ci] = s.n_iface();
          s.cells_iface.push_back({i, j, k});
        }
      }

  const std::int64_t nu = s.size();

  // Constraint rows. A divergence row for cell c reads +v(face at node c)
  // - v(face at node c+e_a) per axis, which is -div(c) * dx scaled by
  // 1/dx; an interface row averages the two faces per axis against the
  // outward normal.
  std::vector<Triplet> trip_s, trip_f;

  auto add_div_entries = [&](const FaceSet& fs, std::vector<Triplet>& trip,
                             auto&& row_of) {
    for (std::size_t f = 0; f < fs.size(); ++f) {
      std::size_t n = fs.node[f];
      int a = fs.axis[f];
      std::int32_t i = static_cast<std::int32_t>(n / (g.h * g.w));
      std::int32_t j = static_cast<std::int32_t>((n / g.w) % g.h);
      std::int32_t k = static_cast<std::int32_t>(n % g.w);
      std::size_t upper = g.cell_index(i, j, k);
      std::size_t lower =
          g.cell_index(i - (a == 0), j - (a == 1), k - (a == 2));
      std::int64_t ru = row_of(upper), rl = row_of(lower);
      if (ru >= 0)
        trip.push_back({ru, static_cast<std::int64_t>(f), inv_dx});
      if (rl >= 0)
        trip.push_back({rl, static_cast<std::int64_t>(f), -inv_dx});
    }
  };

  add_div_entries(s.faces_solid, trip_s, [&](std::size_t ci) {
    return solid_id[ci] < 0 ? -1 : s.off_solid() + solid_id[ci];
  });
  add_div_entries(s.faces_fluid, trip_f, [&](std::size_t ci) {
    if (fluid_id[ci] >= 0) return s.off_fluid() + fluid_id[ci];
    if (slip_id[ci] >= 0) return s.off_slip() + slip_id[ci];
    return std::int64_t{-1};
  });

  for (std::int64_t ih = 0; ih < s.n_iface(); ++ih) {
    const Coord3 c = s.cells_iface[ih];
    const Vec3 nrm = interface_normal(g, c);
    const std::int64_t row = s.off_iface() + ih;
    for (int a = 0; a < 3; ++a) {
      if (nrm[a] == 0.0) continue;
      const double coef = nrm[a] * 0.5 * inv_dx;
      std::size_t lo_node = g.node_index(c.i, c.j, c.k);
      std::size_t hi_node =
          g.node_index(c.i + (a == 0), c.j + (a == 1), c.k + (a == 2));
      for (std::size_t n : {lo_node, hi_node}) {
        std::int64_t ff = lut_f[n * 3 + a];
        if (ff >= 0) trip_f.push_back({row, ff, coef});
        std::int64_t fs = lut_s[n * 3 + a];
        if (fs >= 0) trip_s.push_back({row, fs, -coef});
      }
    }
  }

  s.j_solid = CsrMatrix::from_triplets(
      nu, static_cast<std::int64_t>(s.faces_solid.size()), trip_s);
  s.j_fluid = CsrMatrix::from_triplets(
      nu, static_cast<std::int64_t>(s.faces_fluid.size()), trip_f);

  // A = dt * (Ks Ks^T + Kf Kf^T) + compliance, K = J with columns scaled
  // by 1/sqrt(m). The symmetric scaling keeps the product bit-symmetric.
  auto scaled = [](const CsrMatrix& j, const FaceSet& fs) {
    std::vector<double> inv_sqrt(fs.size());
    for (std::size_t f = 0; f < fs.size(); ++f)
      inv_sqrt[f] = 1.0 / std::sqrt(fs.mass[f]);
    std::vector<Triplet> t;
    t.reserve(j.nonzeros());
    for (std::int64_t r = 0; r < j.rows(); ++r) {
      auto cols = j.row_cols(r);
      auto vals = j.row_vals(r);
      for (std::size_t k = 0; k < cols.size(); ++k)
        t.push_back({r, cols[k], vals[k] * inv_sqrt[cols[k]]});
    }
    return CsrMatrix::from_triplets(j.rows(), j.cols(), std::move(t));
  };

  CsrMatrix ks = scaled(s.j_solid, s.faces_solid);
  CsrMatrix kf = scaled(s.j_fluid, s.faces_fluid);
  CsrMatrix as = CsrMatrix::multiply(ks, ks.transpose());
  CsrMatrix af = CsrMatrix::multiply(kf, kf.transpose());

  const double compliance =
      g.spacing * g.spacing * g.spacing / params.solid_stiffness;

  std::vector<Triplet> trip_a;
  trip_a.reserve(as.nonzeros() + af.nonzeros() + s.n_solid());
  for (const CsrMatrix* m : {&as, &af})
    for (std::int64_t r = 0; r < m->rows(); ++r) {
      auto cols = m->row_cols(r);
      auto vals = m->row_vals(r);
      for (std::size_t k = 0; k < cols.size(); ++k)
        trip_a.push_back({r, cols[k], dt * vals[k]});
    }
  for (std::int64_t r = 0; r < s.n_solid(); ++r)
    trip_a.push_back({r, r, compliance});
  s.a = CsrMatrix::from_triplets(nu, nu, std::move(trip_a));

  // rhs = J v^t plus the solid pressure memory through the compliance.
  std::vector<double> vs(s.faces_solid.size()), vf(s.faces_fluid.size());
  for (std::size_t f = 0; f < s.faces_solid.size(); ++f)
    vs[f] = g.vel_s[s.faces_solid.node[f]][s.faces_solid.axis[f]];
  for (std::size_t f = 0; f < s.faces_fluid.size(); ++f)
    vf[f] = g.vel_f[s.faces_fluid.node[f]][s.faces_fluid.axis[f]];

  std::vector<double> r1 = s.j_solid.apply(vs);
  std::vector<double> r2 = s.j_fluid.apply(vf);
  s.rhs.resize(nu);
  for (std::int64_t r = 0; r < nu; ++r) s.rhs[r] = r1[r] + r2[r];

  if (prev && !prev->p_solid.coords.empty()) {
    std::unordered_map<Coord3, double, Coord3Hash> old_p;
    old_p.reserve(prev->p_solid.size());
    for (std::size_t n = 0; n < prev->p_solid.size(); ++n)
      old_p.emplace(prev->p_solid.coords[n], prev->p_solid.values[n]);
    for (std::int64_t r = 0; r < s.n_solid(); ++r) {
      auto it = old_p.find(s.cells_solid[r]);
      if (it != old_p.end()) s.rhs[r] += compliance * it->second;
    }
  }

  return s;
}

void apply_pressure(const BlockSystem& sys, const std::vector<double>& u,
                    SimGrid& g) {
  MPMFLOW_CHECK(static_cast<std::int64_t>(u.size()) == sys.size(),
                "solution size does not match system");
  struct Side {
    const CsrMatrix* j;
    const FaceSet* faces;
    std::vector<Vec3>* vel;
  };
  Side sides[2] = {{&sys.j_solid, &sys.faces_solid, &g.vel_s},
                   {&sys.j_fluid, &sys.faces_fluid, &g.vel_f}};
  for (const Side& side : sides) {
    std::vector<double> force(side.faces->size(), 0.0);
    for (std::int64_t r = 0; r < side.j->rows(); ++r) {
      auto cols = side.j->row_cols(r);
      auto vals = side.j->row_vals(r);
      for (std::size_t k = 0; k < cols.size(); ++k)
        force[cols[k]] += vals[k] * u[r];
    }
    for (std::size_t f = 0; f < side.faces->size(); ++f)
      (*side.vel)[side.faces->node[f]][side.faces->axis[f]] -=
          sys.dt / side.faces->mass[f] * force[f];
  }
}

PressureFields solution_to_fields(const BlockSystem& sys,
                                  const std::vector<double>& u) {
  MPMFLOW_CHECK(static_cast<std::int64_t>(u.size()) == sys.size(),
                "solution size does not match system");
  PressureFields f;
  for (std::int64_t r = 0; r < sys.n_solid(); ++r)
    f.p_solid.push(sys.cells_solid[r], u[sys.off_solid() + r]);
  for (std::int64_t r = 0; r < sys.n_fluid(); ++r)
    f.p_fluid.push(sys.cells_fluid[r], u[sys.off_fluid() + r]);
  for (std::int64_t r = 0; r < sys.n_slip(); ++r)
    f.y_slip.push(sys.cells_slip[r], u[sys.off_slip() + r]);
  for (std::int64_t r = 0; r < sys.n_iface(); ++r)
    f.h_interface.push(sys.cells_iface[r], u[sys.off_iface() + r]);
  return f;
}

std::vector<double> fields_to_vector(const BlockSystem& sys,
                                     const PressureFields& f) {
  std::vector<double> u(sys.size(), 0.0);
  auto fill = [&](const PressureFields::Field& field,
                  const std::vector<Coord3>& cells, std::int64_t offset) {
    std::unordered_map<Coord3, double, Coord3Hash> lookup;
    lookup.reserve(field.size());
    for (std::size_t n = 0; n < field.size(); ++n)
      lookup.emplace(field.coords[n], field.values[n]);
    for (std::size_t r = 0; r < cells.size(); ++r) {
      auto it = lookup.find(cells[r]);
      if (it != lookup.end()) u[offset + static_cast<std::int64_t>(r)] = it->second;
    }
  };
  fill(f.p_solid, sys.cells_solid, sys.off_solid());
  fill(f.p_fluid, sys.cells_fluid, sys.off_fluid());
  fill(f.y_slip, sys.cells_slip, sys.off_slip());
  fill(f.h_interface, sys.cells_iface, sys.off_iface());
  return u;
}

std::vector<double> fluid_divergence(const SimGrid& g) {
  std::vector<double> div(g.cell_count(), 0.0);
  const double inv_dx = 1.0 / g.spacing;
  auto face_v = [&](std::int32_t i, std::int32_t j, std::int32_t k, int a) {
    if (i == 0 || i == g.d - 1 || j == 0 || j == g.h - 1 || k == 0 ||
        k == g.w - 1)
      return 0.0;
    if (i >= g.cd() || j >= g.ch() || k >= g.cw()) return 0.0;
    if (i - (a == 0) < 0 || j - (a == 1) < 0 || k - (a == 2) < 0) return 0.0;
    std::size_t n = g.node_index(i, j, k);
    if (g.mass_f[n] <= 0.0) return 0.0;
    return g.vel_f[n][a];
  };
  for (std::int32_t i = 0; i < g.cd(); ++i)
    for (std::int32_t j = 0; j < g.ch(); ++j)
      for (std::int32_t k = 0; k < g.cw(); ++k) {
        double d = 0.0;
        d += (face_v(i + 1, j, k, 0) - face_v(i, j, k, 0)) * inv_dx;
        d += (face_v(i, j + 1, k, 1) - face_v(i, j, k, 1)) * inv_dx;
        d += (face_v(i, j, k + 1, 2) - face_v(i, j, k, 2)) * inv_dx;
        div[g.cell_index(i, j, k)] = d;
      }
  return div;
}

double max_fluid_divergence(const SimGrid& g) {
  std::vector<double> div = fluid_divergence(g);
  double worst = 0.0;
  for (std::size_t c = 0; c < div.size(); ++c)
    if (g.labels[c] == CellLabel::Fluid)
      worst = std::max(worst, std::abs(div[c]));
  return worst;
}

}  // namespace mpmflow
