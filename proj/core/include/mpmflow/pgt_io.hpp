#pragma once

#include <string>

#include "mpmflow/grid.hpp"

namespace mpmflow {

//! .pgt pressure-grid-tensor file, little-endian:
//!   magic "PGT1" | u32 pd ph pw | u32 frame_index | u32 channels (3)
//!   | pd*ph*pw f32 per channel, order xf, xs, xi, i-major.
//! Round-trips bit-exactly.
void save_pgt(const std::string& path, const PressureTensors& t);
PressureTensors load_pgt(const std::string& path);

}  // namespace mpmflow
