#pragma once

#include "mpmflow/grid.hpp"

namespace mpmflow {

//! Signed log compression used on every value crossing the solver/network
//! boundary. Exact at decade landmarks: normalize(9) == 1,
//! normalize(-99) == -2.
double normalize_value(double x);
double denormalize_value(double x);

void normalize_tensors(PressureTensors& t);
void denormalize_tensors(PressureTensors& t);

//! Scatter sparse pressure fields into dense padded tensors.
//! Grid dims (d, h, w) are node counts; cell coordinates map to padded
//! voxel (c + 2) per axis. Fluid and slip values share the first channel
//! and must not collide. Values are not normalized here.
PressureTensors map_fields(const PressureFields& fields, std::int32_t d,
                           std::int32_t h, std::int32_t w,
                           std::int64_t frame_index = 0);

//! Gather tensor values back onto the coordinate layout of `layout`.
//! Returns fields with the same coords and freshly read values.
PressureFields invmap(const PressureTensors& tensors,
                      const PressureFields& layout, std::int32_t d,
                      std::int32_t h, std::int32_t w);

}  // namespace mpmflow
