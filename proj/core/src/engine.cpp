#include "mpmflow/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mpmflow/error.hpp"

namespace mpmflow {

namespace {

using nlohmann::json;

Vec3 vec3_from_json(const json& j, const std::string& what) {
  MPMFLOW_CHECK(j.is_array() && j.size() == 3,
                what + " must be a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec3_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& what) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) known = true;
    MPMFLOW_CHECK(known, "unknown key \"" + item.key() + "\" in " + what);
  }
}

ShapeConfig shape_from_json(const json& j) {
  check_keys(j,
             {"type", "material", "min", "max", "center", "radius", "velocity",
              "density", "fixed"},
             "shape");
  ShapeConfig s;
  s.type = j.at("type").get<std::string>();
  MPMFLOW_CHECK(s.type == "box" || s.type == "sphere",
                "shape type must be \"box\" or \"sphere\"");
  std::string mat = j.value("material", std::string("fluid"));
  MPMFLOW_CHECK(mat == "fluid" || mat == "solid",
                "shape material must be \"fluid\" or \"solid\"");
  s.material = mat == "fluid" ? Material::Fluid : Material::Solid;
  if (s.type == "box") {
    s.min = vec3_from_json(j.at("min"), "shape min");
    s.max = vec3_from_json(j.at("max"), "shape max");
    MPMFLOW_CHECK(s.min.x < s.max.x && s.min.y < s.max.y && s.min.z < s.max.z,
                  "shape min must be componentwise below max");
  } else {
    s.center = vec3_from_json(j.at("center"), "shape center");
    s.radius = j.at("radius").get<double>();
    MPMFLOW_CHECK(s.radius > 0.0, "shape radius must be positive");
  }
  if (j.contains("velocity"))
    s.velocity = vec3_from_json(j.at("velocity"), "shape velocity");
  s.density = j.value("density", 0.0);
  MPMFLOW_CHECK(s.density >= 0.0, "shape density must be nonnegative");
  s.fixed = j.value("fixed", false);
  MPMFLOW_CHECK(!s.fixed || s.material == Material::Solid,
                "only solid shapes can be fixed");
  return s;
}

void validate_scene(const SceneConfig& cfg) {
  MPMFLOW_CHECK(cfg.dim >= 4, "dim must be at least 4");
  MPMFLOW_CHECK(cfg.spacing > 0.0, "spacing must be positive");
  MPMFLOW_CHECK(cfg.dt > 0.0, "dt must be positive");
  MPMFLOW_CHECK(cfg.frames >= 0, "frames must be nonnegative");
  MPMFLOW_CHECK(cfg.fluid_density > 0.0 && cfg.solid_density > 0.0,
                "densities must be positive");
  MPMFLOW_CHECK(cfg.solid_stiffness > 0.0, "solid_stiffness must be positive");
  MPMFLOW_CHECK(cfg.particles_per_cell >= 1,
                "particles_per_cell must be at least 1");
  auto side = static_cast<std::int32_t>(
      std::lround(std::cbrt(static_cast<double>(cfg.particles_per_cell))));
  MPMFLOW_CHECK(side * side * side == cfg.particles_per_cell,
                "particles_per_cell must be a perfect cube");
}

// Quadratic B-spline weights over the 3-node stencil starting at the base
// node, for fx = x/dx - base in [0.5, 1.5).
void bspline_weights(double fx, double w[3]) {
  w[0] = 0.5 * (1.5 - fx) * (1.5 - fx);
  w[1] = 0.75 - (fx - 1.0) * (fx - 1.0);
  w[2] = 0.5 * (fx - 0.5) * (fx - 0.5);
}

bool inside_shape(const ShapeConfig& s, const Vec3& x) {
  if (s.type == "box")
    return x.x > s.min.x && x.x < s.max.x && x.y > s.min.y && x.y < s.max.y &&
           x.z > s.min.z && x.z < s.max.z;
  Vec3 d = x - s.center;
  return d.dot(d) < s.radius * s.radius;
}

double det3(const Mat3& m) {
  return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
         m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
         m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

// Cramer solve of m x = b; returns false when m is numerically singular
// (e.g. the inertia tensor of a single particle or a collinear body).
bool solve3(const Mat3& m, const Vec3& b, Vec3& x) {
  double scale = 0.0;
  for (double v : m.m) scale = std::max(scale, std::abs(v));
  double d = det3(m);
  if (scale == 0.0 || std::abs(d) <= 1e-12 * scale * scale * scale)
    return false;
  Mat3 mx = m, my = m, mz = m;
  for (int r = 0; r < 3; ++r) {
    mx(r, 0) = b[r];
    my(r, 1) = b[r];
    mz(r, 2) = b[r];
  }
  x = Vec3{det3(mx) / d, det3(my) / d, det3(mz) / d};
  return true;
}

}  // namespace

SceneConfig scene_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw InvalidInput(std::string("scene config is not valid JSON: ") +
                       e.what());
  }
  try {
    MPMFLOW_CHECK(j.is_object(), "scene config must be a JSON object");
    check_keys(j,
               {"name", "dim", "spacing", "dt", "frames", "gravity",
                "fluid_density", "solid_density", "solid_stiffness",
                "particles_per_cell", "seed", "shapes"},
               "scene config");
    SceneConfig cfg;
    cfg.name = j.value("name", cfg.name);
    cfg.dim = j.value("dim", cfg.dim);
    cfg.spacing = j.value("spacing", cfg.spacing);
    cfg.dt = j.value("dt", cfg.dt);
    cfg.frames = j.value("frames", cfg.frames);
    if (j.contains("gravity"))
      cfg.gravity = vec3_from_json(j.at("gravity"), "gravity");
    cfg.fluid_density = j.value("fluid_density", cfg.fluid_density);
    cfg.solid_density = j.value("solid_density", cfg.solid_density);
    cfg.solid_stiffness = j.value("solid_stiffness", cfg.solid_stiffness);
    cfg.particles_per_cell =
        j.value("particles_per_cell", cfg.particles_per_cell);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("shapes")) {
      MPMFLOW_CHECK(j.at("shapes").is_array(), "shapes must be an array");
      for (const auto& sj : j.at("shapes"))
        cfg.shapes.push_back(shape_from_json(sj));
    }
    validate_scene(cfg);
    return cfg;
  } catch (const InvalidInput&) {
    throw;
  } catch (const std::exception& e) {
    throw InvalidInput(std::string("scene config: ") + e.what());
  }
}

SceneConfig load_scene(const std::string& path) {
  std::ifstream in(path);
  MPMFLOW_CHECK(in.good(), "cannot open scene config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return scene_from_json(buf.str());
}

std::string scene_to_json(const SceneConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["dim"] = cfg.dim;
  j["spacing"] = cfg.spacing;
  j["dt"] = cfg.dt;
  j["frames"] = cfg.frames;
  j["gravity"] = vec3_to_json(cfg.gravity);
  j["fluid_density"] = cfg.fluid_density;
  j["solid_density"] = cfg.solid_density;
  j["solid_stiffness"] = cfg.solid_stiffness;
  j["particles_per_cell"] = cfg.particles_per_cell;
  j["seed"] = cfg.seed;
  j["shapes"] = json::array();
  for (const ShapeConfig& s : cfg.shapes) {
    json sj;
    sj["type"] = s.type;
    sj["material"] = s.material == Material::Fluid ? "fluid" : "solid";
    if (s.type == "box") {
      sj["min"] = vec3_to_json(s.min);
      sj["max"] = vec3_to_json(s.max);
    } else {
      sj["center"] = vec3_to_json(s.center);
      sj["radius"] = s.radius;
    }
    sj["velocity"] = vec3_to_json(s.velocity);
    if (s.density > 0.0) sj["density"] = s.density;
    if (s.fixed) sj["fixed"] = true;
    j["shapes"].push_back(sj);
  }
  return j.dump(2) + "\n";
}

ParticleSet seed_particles(const SceneConfig& cfg) {
  validate_scene(cfg);
  ParticleSet out;
  const double dx = cfg.spacing;
  const double lo = cfg.band_lo();
  const double hi = cfg.band_hi();
  const std::int32_t cells = cfg.dim - 1;
  const auto side = static_cast<std::int32_t>(
      std::lround(std::cbrt(static_cast<double>(cfg.particles_per_cell))));
  const double sub = dx / side;

  std::int32_t next_body = 0;
  for (std::size_t si = 0; si < cfg.shapes.size(); ++si) {
    const ShapeConfig& s = cfg.shapes[si];
    const double density =
        s.density > 0.0 ? s.density
                        : (s.material == Material::Fluid ? cfg.fluid_density
                                                         : cfg.solid_density);
    const double pmass = density * dx * dx * dx / cfg.particles_per_cell;
    const std::int32_t body_id =
        s.material == Material::Solid ? next_body++ : -1;

    Vec3 bmin = s.type == "box" ? s.min : s.center - Vec3{1, 1, 1} * s.radius;
    Vec3 bmax = s.type == "box" ? s.max : s.center + Vec3{1, 1, 1} * s.radius;
    std::int32_t c0[3], c1[3];
    for (int a = 0; a < 3; ++a) {
      c0[a] = std::max<std::int32_t>(
          0, static_cast<std::int32_t>(std::floor(bmin[a] / dx)));
      c1[a] = std::min<std::int32_t>(
          cells - 1, static_cast<std::int32_t>(std::floor(bmax[a] / dx)));
    }

    // Regular sub-lattice, side^3 sites per cell. Away from boundaries the
    // resulting node masses are exactly uniform, which the pressure
    // projection needs to hold a resting column at rest.
    for (std::int32_t ci = c0[0]; ci <= c1[0]; ++ci)
      for (std::int32_t cj = c0[1]; cj <= c1[1]; ++cj)
        for (std::int32_t ck = c0[2]; ck <= c1[2]; ++ck)
          for (std::int32_t a = 0; a < side; ++a)
            for (std::int32_t b = 0; b < side; ++b)
              for (std::int32_t c = 0; c < side; ++c) {
                Vec3 x{ci * dx + (a + 0.5) * sub, cj * dx + (b + 0.5) * sub,
                       ck * dx + (c + 0.5) * sub};
                bool in_band = x.x > lo && x.x < hi && x.y > lo && x.y < hi &&
                               x.z > lo && x.z < hi;
                if (in_band && inside_shape(s, x))
                  out.push(x, s.velocity, pmass, s.material, body_id);
              }
  }
  return out;
}

void save_particles_csv(const ParticleSet& parts, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  MPMFLOW_CHECK(f != nullptr, "cannot open " + path + " for writing");
  std::fputs("id,material,x,y,z,vx,vy,vz\n", f);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Vec3& x = parts.pos[p];
    const Vec3& v = parts.vel[p];
    std::fprintf(f, "%zu,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", p,
                 parts.material[p] == Material::Fluid ? "fluid" : "solid", x.x,
                 x.y, x.z, v.x, v.y, v.z);
  }
  std::fclose(f);
}

void p2g(const ParticleSet& parts, SimGrid& g) {
  g.clear_transfer_state();
  const double dx = g.spacing;
  const double inv_dx = 1.0 / dx;

  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Vec3 x = parts.pos[p];
    std::int32_t base[3];
    double w[3][3];
    for (int a = 0; a < 3; ++a) {
      base[a] = static_cast<std::int32_t>(std::floor(x[a] * inv_dx - 0.5));
      bspline_weights(x[a] * inv_dx - base[a], w[a]);
    }
    if (base[0] < 0 || base[0] + 2 >= g.d || base[1] < 0 ||
        base[1] + 2 >= g.h || base[2] < 0 || base[2] + 2 >= g.w)
      throw InvalidInput("particle " + std::to_string(p) +
                         " outside grid support");

    const bool fluid = parts.material[p] == Material::Fluid;
    std::vector<double>& mass = fluid ? g.mass_f : g.mass_s;
    std::vector<Vec3>& mom = fluid ? g.vel_f : g.vel_s;
    const double m = parts.mass[p];
    const Vec3 v = parts.vel[p];
    const Mat3& C = parts.affine[p];

    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        for (int c = 0; c < 3; ++c) {
          const double wn = w[0][a] * w[1][b] * w[2][c];
          const std::size_t n =
              g.node_index(base[0] + a, base[1] + b, base[2] + c);
          const Vec3 npos{(base[0] + a) * dx, (base[1] + b) * dx,
                          (base[2] + c) * dx};
          mass[n] += wn * m;
          mom[n] += (wn * m) * (v + C * (npos - x));
        }

    const std::int32_t ci = static_cast<std::int32_t>(std::floor(x.x * inv_dx));
    const std::int32_t cj = static_cast<std::int32_t>(std::floor(x.y * inv_dx));
    const std::int32_t ck = static_cast<std::int32_t>(std::floor(x.z * inv_dx));
    const std::size_t cell = g.cell_index(ci, cj, ck);
    (fluid ? g.occ_f : g.occ_s)[cell]++;
  }

  for (std::size_t n = 0; n < g.node_count(); ++n) {
    if (g.mass_f[n] > 0.0) g.vel_f[n] *= 1.0 / g.mass_f[n];
    if (g.mass_s[n] > 0.0) g.vel_s[n] *= 1.0 / g.mass_s[n];
  }
}

void classify_cells(SimGrid& g) {
  static constexpr std::int32_t kFaces[6][3] = {{1, 0, 0},  {-1, 0, 0},
                                                {0, 1, 0},  {0, -1, 0},
                                                {0, 0, 1},  {0, 0, -1}};
  for (std::int32_t i = 0; i < g.cd(); ++i)
    for (std::int32_t j = 0; j < g.ch(); ++j)
      for (std::int32_t k = 0; k < g.cw(); ++k) {
        const std::size_t c = g.cell_index(i, j, k);
        const bool f = g.occ_f[c] > 0;
        const bool s = g.occ_s[c] > 0;
        g.labels[c] = s && f   ? CellLabel::Interface
                      : s      ? CellLabel::Solid
                      : f      ? CellLabel::Fluid
                               : CellLabel::Empty;
      }

  // Refine fluid cells from the occupancy masks alone so the result does
  // not depend on traversal order. Priority: interface over slip over
  // free surface.
  for (std::int32_t i = 0; i < g.cd(); ++i)
    for (std::int32_t j = 0; j < g.ch(); ++j)
      for (std::int32_t k = 0; k < g.cw(); ++k) {
        const std::size_t c = g.cell_index(i, j, k);
        if (g.labels[c] != CellLabel::Fluid) continue;
        bool near_solid = false, near_empty = false;
        for (const auto& o : kFaces) {
          const std::int32_t ni = i + o[0], nj = j + o[1], nk = k + o[2];
          if (!g.cell_inside(ni, nj, nk)) continue;
          const std::size_t nc = g.cell_index(ni, nj, nk);
          if (g.occ_s[nc] > 0) near_solid = true;
          if (g.occ_s[nc] == 0 && g.occ_f[nc] == 0) near_empty = true;
        }
        const bool wall = i == 0 || i == g.cd() - 1 || j == 0 ||
                          j == g.ch() - 1 || k == 0 || k == g.cw() - 1;
        if (near_solid)
          g.labels[c] = CellLabel::Interface;
        else if (wall)
          g.labels[c] = CellLabel::SlipBoundary;
        else if (near_empty)
          g.labels[c] = CellLabel::FreeSurface;
      }
}

void g2p(const SimGrid& g, ParticleSet& parts, double dt) {
  const double dx = g.spacing;
  const double inv_dx = 1.0 / dx;
  const double c_scale = 4.0 * inv_dx * inv_dx;

  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Vec3 x = parts.pos[p];
    std::int32_t base[3];
    double w[3][3];
    for (int a = 0; a < 3; ++a) {
      base[a] = static_cast<std::int32_t>(std::floor(x[a] * inv_dx - 0.5));
      bspline_weights(x[a] * inv_dx - base[a], w[a]);
    }
    if (base[0] < 0 || base[0] + 2 >= g.d || base[1] < 0 ||
        base[1] + 2 >= g.h || base[2] < 0 || base[2] + 2 >= g.w)
      throw InvalidInput("particle " + std::to_string(p) +
                         " outside grid support");
    const std::vector<Vec3>& vel =
        parts.material[p] == Material::Fluid ? g.vel_f : g.vel_s;

    Vec3 v{};
    Mat3 C{};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        for (int c = 0; c < 3; ++c) {
          const double wn = w[0][a] * w[1][b] * w[2][c];
          const std::size_t n =
              g.node_index(base[0] + a, base[1] + b, base[2] + c);
          const Vec3 npos{(base[0] + a) * dx, (base[1] + b) * dx,
                          (base[2] + c) * dx};
          v += wn * vel[n];
          C += Mat3::outer((wn * c_scale) * vel[n], npos - x);
        }
    parts.vel[p] = v;
    parts.affine[p] = C;
    parts.pos[p] += dt * v;
  }
}

Engine::Engine(const SceneConfig& cfg)
    : cfg_(cfg), grid_(cfg.dim, cfg.dim, cfg.dim, cfg.spacing) {
  validate_scene(cfg_);
  parts_ = seed_particles(cfg_);
  for (const ShapeConfig& s : cfg_.shapes)
    if (s.material == Material::Solid) body_fixed_.push_back(s.fixed);
}

void Engine::enforce_wall_velocities() {
  // Wall-plane nodes are static, matching the eliminated face DOFs there.
  for (std::int32_t i = 0; i < grid_.d; ++i)
    for (std::int32_t j = 0; j < grid_.h; ++j)
      for (std::int32_t k = 0; k < grid_.w; ++k) {
        if (i != 0 && i != grid_.d - 1 && j != 0 && j != grid_.h - 1 &&
            k != 0 && k != grid_.w - 1)
          continue;
        const std::size_t n = grid_.node_index(i, j, k);
        grid_.vel_f[n] = Vec3{};
        grid_.vel_s[n] = Vec3{};
      }
}

BlockSystem Engine::prepare_step() {
  double dt = cfg_.dt;
  double max_speed = 0.0;
  for (const Vec3& v : parts_.vel) max_speed = std::max(max_speed, v.norm());
  if (dt * max_speed > grid_.spacing) {
    dt = grid_.spacing / max_speed;
    ++cfl_clamps_;
    std::fprintf(stderr,
                 "mpmflow: CFL clamp at frame %lld: dt %.3g -> %.3g\n",
                 static_cast<long long>(frame_), cfg_.dt, dt);
  }

  p2g(parts_, grid_);

  const Vec3 dv = cfg_.gravity * dt;
  for (std::size_t n = 0; n < grid_.node_count(); ++n) {
    if (grid_.mass_f[n] > 0.0) grid_.vel_f[n] += dv;
    if (grid_.mass_s[n] > 0.0) grid_.vel_s[n] += dv;
  }
  enforce_wall_velocities();
  classify_cells(grid_);

  PressureParams params;
  params.solid_stiffness = cfg_.solid_stiffness;
  return assemble_pressure_system(grid_, dt, params, &pressure_state_);
}

void Engine::finish_step(const BlockSystem& sys, const std::vector<double>& u) {
  apply_pressure(sys, u, grid_);
  enforce_wall_velocities();
  pressure_state_ = solution_to_fields(sys, u);
  g2p(grid_, parts_, 0.0);  // gather only; advection after the projection
  project_rigid_bodies();
  advect_particles(sys.dt);
  ++frame_;
}

SolveReport Engine::step_physical(SolverKind kind, const SolveOptions& opt) {
  BlockSystem sys = prepare_step();
  std::vector<double> u = fields_to_vector(sys, pressure_state_);
  SolveReport rep = solve_pressure(sys, u, kind, opt);
  if (!rep.converged) {
    char res[32];
    std::snprintf(res, sizeof res, "%.3e", rep.relative_residual);
    throw NumericalError("pressure solve did not converge at frame " +
                         std::to_string(frame_) + " (relative residual " +
                         res + ")");
  }
  finish_step(sys, u);
  return rep;
}

void Engine::project_rigid_bodies() {
  const std::size_t nb = body_fixed_.size();
  if (nb == 0) return;

  std::vector<double> mass(nb, 0.0);
  std::vector<Vec3> mx(nb), mv(nb);
  for (std::size_t p = 0; p < parts_.size(); ++p) {
    if (parts_.body[p] < 0) continue;
    const std::size_t b = static_cast<std::size_t>(parts_.body[p]);
    mass[b] += parts_.mass[p];
    mx[b] += parts_.mass[p] * parts_.pos[p];
    mv[b] += parts_.mass[p] * parts_.vel[p];
  }

  std::vector<Vec3> com(nb), vel(nb), ang(nb);
  std::vector<Mat3> inertia(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    if (mass[b] <= 0.0) continue;
    com[b] = mx[b] * (1.0 / mass[b]);
    vel[b] = mv[b] * (1.0 / mass[b]);
  }
  for (std::size_t p = 0; p < parts_.size(); ++p) {
    if (parts_.body[p] < 0) continue;
    const std::size_t b = static_cast<std::size_t>(parts_.body[p]);
    const double m = parts_.mass[p];
    const Vec3 r = parts_.pos[p] - com[b];
    ang[b] += m * r.cross(parts_.vel[p] - vel[b]);
    inertia[b] += (Mat3::identity() * r.dot(r) + Mat3::outer(r, r) * -1.0) * m;
  }

  std::vector<Vec3> omega(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    Vec3 o;
    if (mass[b] > 0.0 && solve3(inertia[b], ang[b], o)) omega[b] = o;
  }

  for (std::size_t p = 0; p < parts_.size(); ++p) {
    if (parts_.body[p] < 0) continue;
    const std::size_t b = static_cast<std::size_t>(parts_.body[p]);
    if (body_fixed_[b]) {
      parts_.vel[p] = Vec3{};
      parts_.affine[p] = Mat3::zero();
      continue;
    }
    parts_.vel[p] = vel[b] + omega[b].cross(parts_.pos[p] - com[b]);
    parts_.affine[p] = Mat3::skew(omega[b]);
  }
}

void Engine::advect_particles(double dt) {
  const double lo = cfg_.band_lo();
  // Keep positions strictly below the band so the B-spline stencil of the
  // next transfer stays inside the node lattice.
  const double hi = std::nextafter(cfg_.band_hi(), 0.0);
  for (std::size_t p = 0; p < parts_.size(); ++p) {
    Vec3& x = parts_.pos[p];
    Vec3& v = parts_.vel[p];
    x += dt * v;
    for (int a = 0; a < 3; ++a) {
      if (x[a] < lo) {
        x[a] = lo;
        if (v[a] < 0.0) v[a] = 0.0;
      } else if (x[a] > hi) {
        x[a] = hi;
        if (v[a] > 0.0) v[a] = 0.0;
      }
    }
  }
}

}  // namespace mpmflow
