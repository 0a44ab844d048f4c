#include "mpmflow/mapping.hpp"

#include <cmath>
#include <unordered_set>

namespace mpmflow {

double normalize_value(double x) {
  return x >= 0.0 ? std::log10(x + 1.0) : -std::log10(-x + 1.0);
}

double denormalize_value(double x) {
  return x >= 0.0 ? std::pow(10.0, x) - 1.0 : -(std::pow(10.0, -x) - 1.0);
}

void normalize_tensors(PressureTensors& t) {
  for (auto* ch : {&t.xf, &t.xs, &t.xi})
    for (float& v : *ch) v = static_cast<float>(normalize_value(v));
}

void denormalize_tensors(PressureTensors& t) {
  for (auto* ch : {&t.xf, &t.xs, &t.xi})
    for (float& v : *ch) v = static_cast<float>(denormalize_value(v));
}

namespace {

// Cell coords live on the (d-1)(h-1)(w-1) lattice for node dims (d,h,w).
void check_coord(const Coord3& c, std::int32_t d, std::int32_t h,
                 std::int32_t w) {
  if (c.i < 0 || c.i >= d - 1 || c.j < 0 || c.j >= h - 1 || c.k < 0 ||
      c.k >= w - 1)
    throw InvalidInput("pressure coordinate outside cell lattice");
}

void scatter(const PressureFields::Field& f, std::vector<float>& dst,
             const PressureTensors& t, std::int32_t d, std::int32_t h,
             std::int32_t w, std::unordered_set<std::size_t>* taken) {
  for (std::size_t n = 0; n < f.size(); ++n) {
    const Coord3& c = f.coords[n];
    check_coord(c, d, h, w);
    std::size_t v = t.at(c.i + 2, c.j + 2, c.k + 2);
    if (taken && !taken->insert(v).second)
      throw InvalidInput("fluid and slip pressures collide at one cell");
    dst[v] = static_cast<float>(f.values[n]);
  }
}

void gather(PressureFields::Field& f, const std::vector<float>& src,
            const PressureTensors& t, std::int32_t d, std::int32_t h,
            std::int32_t w) {
  for (std::size_t n = 0; n < f.size(); ++n) {
    const Coord3& c = f.coords[n];
    check_coord(c, d, h, w);
    f.values[n] = src[t.at(c.i + 2, c.j + 2, c.k + 2)];
  }
}

}  // namespace

PressureTensors map_fields(const PressureFields& fields, std::int32_t d,
                           std::int32_t h, std::int32_t w,
                           std::int64_t frame_index) {
  PressureTensors t(d, h, w);
  t.frame_index = frame_index;
  std::unordered_set<std::size_t> taken;
  scatter(fields.p_fluid, t.xf, t, d, h, w, &taken);
  scatter(fields.y_slip, t.xf, t, d, h, w, &taken);
  scatter(fields.p_solid, t.xs, t, d, h, w, nullptr);
  scatter(fields.h_interface, t.xi, t, d, h, w, nullptr);
  return t;
}

PressureFields invmap(const PressureTensors& tensors,
                      const PressureFields& layout, std::int32_t d,
                      std::int32_t h, std::int32_t w) {
  if (tensors.pd != d + 4 || tensors.ph != h + 4 || tensors.pw != w + 4)
    throw InvalidInput("tensor dims do not match grid dims");
  PressureFields out = layout;
  gather(out.p_fluid, tensors.xf, tensors, d, h, w);
  gather(out.y_slip, tensors.xf, tensors, d, h, w);
  gather(out.p_solid, tensors.xs, tensors, d, h, w);
  gather(out.h_interface, tensors.xi, tensors, d, h, w);
  return out;
}

}  // namespace mpmflow
