#pragma once

#include <string>

#include "degforge/image.hpp"

namespace degforge {

// 8-bit RGB PNG. Quantization round-trip error is at most 1/255 per channel.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

}  // namespace degforge
