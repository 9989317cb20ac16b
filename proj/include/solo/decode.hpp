#pragma once

#include <filesystem>

#include "solo/image.hpp"

namespace solo {

/// Decode a PPM (P6/P5), PNG, or JPEG file into 8-bit RGB. The container is
/// sniffed from magic bytes. Grayscale expands to RGB; alpha channels are
/// composited over black; 16-bit PNG depth is reduced to 8.
RawImage decode_image(const std::filesystem::path& file);

/// Image dimensions from the file header only (no full pixel decode).
ImageDims probe_image_dims(const std::filesystem::path& file);

/// Write a binary P6 PPM; used by tests and the corpus tooling.
void write_ppm(const std::filesystem::path& file, const RawImage& img);

}  // namespace solo
