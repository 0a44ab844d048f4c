#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <cstring>
#include <unordered_set>

#include "doctest.h"
#include "mpmflow/mapping.hpp"
#include "mpmflow/pgt_io.hpp"
#include "mpmflow/rng.hpp"

using namespace mpmflow;

TEST_CASE("normalize hits decade landmarks exactly") {
  CHECK(normalize_value(0.0) == 0.0);
  CHECK(normalize_value(9.0) == 1.0);
  CHECK(normalize_value(99.0) == 2.0);
  CHECK(normalize_value(-9.0) == -1.0);
  CHECK(normalize_value(-99.0) == -2.0);
  CHECK(denormalize_value(1.0) == 9.0);
  CHECK(denormalize_value(-2.0) == -99.0);
}

TEST_CASE("normalize is odd and monotonic") {
  Pcg32 rng(7, 1);
  double prev_x = -1e9, prev_y = normalize_value(prev_x);
  for (int n = 0; n < 1000; ++n) {
    double x = rng.uniform(-1e6, 1e6);
    CHECK(normalize_value(-x) == doctest::Approx(-normalize_value(x))
                                     .epsilon(1e-14));
    double step = rng.uniform(0.0, 1e5);
    double y0 = normalize_value(x), y1 = normalize_value(x + step);
    CHECK(y1 >= y0);
  }
  (void)prev_y;
}

TEST_CASE("denormalize inverts normalize to relative 1e-12") {
  Pcg32 rng(42, 9);
  for (int n = 0; n < 10000; ++n) {
    double x = rng.uniform(-1e6, 1e6);
    double back = denormalize_value(normalize_value(x));
    CHECK(std::abs(back - x) <= 1e-12 * std::max(1.0, std::abs(x)));
  }
}

namespace {

PressureFields random_fields(Pcg32& rng, int d, int h, int w) {
  PressureFields f;
  std::unordered_set<Coord3, Coord3Hash> used_xf, used_xs, used_xi;
  auto fresh_coord = [&](std::unordered_set<Coord3, Coord3Hash>& used) {
    for (;;) {
      Coord3 c{static_cast<std::int32_t>(rng.bounded(d - 1)),
               static_cast<std::int32_t>(rng.bounded(h - 1)),
               static_cast<std::int32_t>(rng.bounded(w - 1))};
      if (used.insert(c).second) return c;
    }
  };
  auto value = [&] {
    return static_cast<double>(static_cast<float>(rng.uniform(-50, 50)));
  };
  // Fluid and slip share the xf channel, so their coords must be unique.
  for (int n = 0; n < 40; ++n) f.p_fluid.push(fresh_coord(used_xf), value());
  for (int n = 0; n < 20; ++n) f.y_slip.push(fresh_coord(used_xf), value());
  for (int n = 0; n < 30; ++n) f.p_solid.push(fresh_coord(used_xs), value());
  for (int n = 0; n < 10; ++n)
    f.h_interface.push(fresh_coord(used_xi), value());
  return f;
}

}  // namespace

TEST_CASE("map then invmap returns the original field values") {
  Pcg32 rng(3, 3);
  const int d = 16, h = 16, w = 16;
  PressureFields f = random_fields(rng, d, h, w);
  PressureTensors t = map_fields(f, d, h, w, 12);
  CHECK(t.pd == 20);
  CHECK(t.ph == 20);
  CHECK(t.pw == 20);
  CHECK(t.frame_index == 12);

  PressureFields back = invmap(t, f, d, h, w);
  for (auto sel : {&PressureFields::p_fluid, &PressureFields::p_solid,
                   &PressureFields::y_slip, &PressureFields::h_interface}) {
    const auto& a = f.*sel;
    const auto& b = back.*sel;
    REQUIRE(a.size() == b.size());
    for (std::size_t n = 0; n < a.size(); ++n) {
      CHECK(b.coords[n] == a.coords[n]);
      CHECK(b.values[n] == a.values[n]);  // f32-representable, so exact
    }
  }
}

TEST_CASE("padding border stays zero") {
  Pcg32 rng(5, 5);
  const int d = 16, h = 16, w = 16;
  PressureTensors t = map_fields(random_fields(rng, d, h, w), d, h, w);
  auto border_zero = [&](const std::vector<float>& ch) {
    for (int i = 0; i < t.pd; ++i)
      for (int j = 0; j < t.ph; ++j)
        for (int k = 0; k < t.pw; ++k) {
          bool interior = i >= 2 && i < t.pd - 3 && j >= 2 && j < t.ph - 3 &&
                          k >= 2 && k < t.pw - 3;
          // Cell lattice has d-1 cells, so interior voxels span [2, 2+d-2].
          if (!interior) CHECK(ch[t.at(i, j, k)] == 0.0f);
        }
  };
  border_zero(t.xf);
  border_zero(t.xs);
  border_zero(t.xi);
}

TEST_CASE("fluid and slip sharing a cell is rejected") {
  PressureFields f;
  f.p_fluid.push({3, 4, 5}, 1.0);
  f.y_slip.push({3, 4, 5}, 2.0);
  CHECK_THROWS_AS(map_fields(f, 16, 16, 16), InvalidInput);
}

TEST_CASE("coordinates outside the cell lattice are rejected") {
  PressureFields f;
  f.p_fluid.push({15, 0, 0}, 1.0);  // cells run 0..14 on a 16-node axis
  CHECK_THROWS_AS(map_fields(f, 16, 16, 16), InvalidInput);
  PressureFields g;
  g.p_solid.push({0, -1, 0}, 1.0);
  CHECK_THROWS_AS(map_fields(g, 16, 16, 16), InvalidInput);
}

TEST_CASE("pgt files round-trip bit-exactly") {
  Pcg32 rng(11, 2);
  const int d = 16, h = 12, w = 20;
  PressureTensors t = map_fields(random_fields(rng, d, h, w), d, h, w, 7);
  normalize_tensors(t);

  const char* path = "roundtrip.pgt";
  save_pgt(path, t);
  PressureTensors r = load_pgt(path);
  std::remove(path);

  CHECK(r.pd == t.pd);
  CHECK(r.ph == t.ph);
  CHECK(r.pw == t.pw);
  CHECK(r.frame_index == 7);
  CHECK(std::memcmp(r.xf.data(), t.xf.data(), t.xf.size() * 4) == 0);
  CHECK(std::memcmp(r.xs.data(), t.xs.data(), t.xs.size() * 4) == 0);
  CHECK(std::memcmp(r.xi.data(), t.xi.data(), t.xi.size() * 4) == 0);
}

TEST_CASE("pgt loader rejects bad magic") {
  const char* path = "badmagic.pgt";
  std::FILE* f = std::fopen(path, "wb");
  REQUIRE(f);
  std::fwrite("NOPE", 1, 4, f);
  std::fclose(f);
  CHECK_THROWS_AS(load_pgt(path), FormatError);
  std::remove(path);
}
