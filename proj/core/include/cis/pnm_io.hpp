#pragma once

#include <string>

#include "cis/image.hpp"

namespace cis {

// Binary PPM (P6) frames and PGM (P5) masks, maxval 255. Masks use 255 for
// foreground; soft masks are scaled to 0..255.
void ppm_write(const std::string& path, const Frame& frame);
Frame ppm_read(const std::string& path);

void pgm_write_mask(const std::string& path, const Mask& mask);
Mask pgm_read_mask(const std::string& path);

void pgm_write_soft(const std::string& path, const SoftMask& soft);
SoftMask pgm_read_soft(const std::string& path);

}  // namespace cis
