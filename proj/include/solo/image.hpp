#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "solo/errors.hpp"

namespace solo {

/// Image dimensions in pixels. `width` is the manifest's first axis (W),
/// `height` the second (H); pixel buffers hold `height` rows of `width` pixels.
struct ImageDims {
  std::int64_t width = 0;
  std::int64_t height = 0;

  bool operator==(const ImageDims&) const = default;
};

struct PreprocessConfig {
  std::int64_t patch_size = 32;
  std::int64_t max_resolution = 1024;

  void validate() const;
};

/// Decoded 8-bit RGB image, row-major, no alpha.
struct RawImage {
  ImageDims dims;
  std::vector<std::uint8_t> pixels;  // dims.height * dims.width * 3 bytes

  void validate() const;
  std::uint8_t* pixel(std::int64_t x, std::int64_t y) {
    return pixels.data() + (y * dims.width + x) * 3;
  }
  const std::uint8_t* pixel(std::int64_t x, std::int64_t y) const {
    return pixels.data() + (y * dims.width + x) * 3;
  }
};

/// An image cut into a rows x cols grid of patch_size^2 * 3 pixel blocks,
/// enumerated row-major (left-to-right, top-to-bottom). cols = width / P,
/// rows = height / P.
struct PatchGrid {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::int64_t patch_size = 0;
  std::vector<std::uint8_t> data;  // rows * cols patches, each P*P*3 bytes

  std::int64_t patch_count() const { return rows * cols; }
  std::int64_t patch_bytes() const { return patch_size * patch_size * 3; }
  std::span<const std::uint8_t> patch(std::int64_t index) const {
    return {data.data() + index * patch_bytes(), static_cast<std::size_t>(patch_bytes())};
  }
  std::span<std::uint8_t> patch(std::int64_t index) {
    return {data.data() + index * patch_bytes(), static_cast<std::size_t>(patch_bytes())};
  }
};

/// Output dimensions of the aspect-ratio-preserving resize. Both outputs are
/// multiples of the patch size. The rounding quirks are intentional and kept
/// verbatim: dimensions already aligned still bump to the next multiple, and
/// the short side may exceed max_resolution by one patch when the long side
/// is capped.
ImageDims resize_output_dims(ImageDims dims, const PreprocessConfig& cfg);

/// Bilinear resize to resize_output_dims(img.dims, cfg). All interpolation is
/// exact integer arithmetic with edge-clamped taps, so results are
/// deterministic across platforms and mirror-symmetric.
RawImage resize_image(const RawImage& img, const PreprocessConfig& cfg);

/// Cut an already-aligned image into patches. Throws AlignmentError when the
/// dimensions are not multiples of cfg.patch_size.
PatchGrid extract_patches(const RawImage& img, const PreprocessConfig& cfg);

/// Inverse of extract_patches; bit-exact round trip.
RawImage reassemble(const PatchGrid& grid);

}  // namespace solo
