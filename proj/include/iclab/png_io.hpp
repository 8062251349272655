#pragma once

#include <string>

#include "iclab/image.hpp"

namespace iclab {

// Reads any libpng-supported file as 8-bit grayscale, normalized to [0, 1].
// Throws LoadError naming the path on missing or corrupt files.
Image read_png_gray(const std::string& path);

void write_png_gray(const std::string& path, const Image& img);

}  // namespace iclab
