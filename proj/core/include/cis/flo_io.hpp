#pragma once

#include <string>

#include "cis/image.hpp"

namespace cis {

// Middlebury .flo: float magic 202021.25, int32 width, int32 height, then
// row-major interleaved (u, v) float32 pairs, all little-endian.
void flo_write(const std::string& path, const FlowField& flow);
FlowField flo_read(const std::string& path);

}  // namespace cis
