#include "solo/image.hpp"

#include <algorithm>
#include <cstring>
#include <string>

namespace solo {

namespace {

// Keeps every intermediate product comfortably inside int64.
constexpr std::int64_t kMaxInputSide = std::int64_t{1} << 24;

struct Tap {
  std::int64_t lo = 0;     // clamped left/top source index
  std::int64_t hi = 0;     // clamped right/bottom source index
  std::int64_t w_hi = 0;   // weight of hi, in units of 1/den
};

// Source sampling position for output index i is (2i+1)*src/(2*dst) - 1/2,
// kept as the exact rational ((2i+1)*src - dst) / (2*dst).
std::vector<Tap> make_taps(std::int64_t src, std::int64_t dst) {
  const std::int64_t den = 2 * dst;
  std::vector<Tap> taps(static_cast<std::size_t>(dst));
  for (std::int64_t i = 0; i < dst; ++i) {
    const std::int64_t num = (2 * i + 1) * src - dst;
    std::int64_t base = num >= 0 ? num / den : -((-num + den - 1) / den);
    const std::int64_t frac = num - base * den;  // in [0, den)
    Tap& t = taps[static_cast<std::size_t>(i)];
    t.lo = std::clamp<std::int64_t>(base, 0, src - 1);
    t.hi = std::clamp<std::int64_t>(base + 1, 0, src - 1);
    t.w_hi = frac;
    taps[static_cast<std::size_t>(i)] = t;
  }
  return taps;
}

}  // namespace

void PreprocessConfig::validate() const {
  if (patch_size < 1) {
    throw InvalidInputError("patch_size must be positive, got " + std::to_string(patch_size));
  }
  if (max_resolution < 1 || max_resolution % patch_size != 0) {
    throw InvalidInputError("max_resolution must be a positive multiple of patch_size, got " +
                            std::to_string(max_resolution));
  }
}

void RawImage::validate() const {
  if (dims.width < 1 || dims.height < 1) {
    throw InvalidInputError("image dimensions must be positive, got " +
                            std::to_string(dims.width) + "x" + std::to_string(dims.height));
  }
  const auto expected = static_cast<std::size_t>(dims.width * dims.height * 3);
  if (pixels.size() != expected) {
    throw InvalidInputError("pixel buffer holds " + std::to_string(pixels.size()) +
                            " bytes, expected " + std::to_string(expected));
  }
}

ImageDims resize_output_dims(ImageDims dims, const PreprocessConfig& cfg) {
  cfg.validate();
  if (dims.width < 1 || dims.height < 1) {
    throw InvalidInputError("image dimensions must be positive, got " +
                            std::to_string(dims.width) + "x" + std::to_string(dims.height));
  }
  if (dims.width > kMaxInputSide || dims.height > kMaxInputSide) {
    throw InvalidInputError("image side exceeds supported maximum of " +
                            std::to_string(kMaxInputSide));
  }
  const std::int64_t p = cfg.patch_size;
  const bool height_is_short = dims.height <= dims.width;
  const std::int64_t long_side = height_is_short ? dims.width : dims.height;
  const std::int64_t short_side = height_is_short ? dims.height : dims.width;

  // Note the deliberate +1 before rounding: already-aligned sides still bump
  // to the next multiple of the patch size.
  const std::int64_t new_long = std::min((long_side / p + 1) * p, cfg.max_resolution);
  const std::int64_t scaled_short = new_long * short_side / long_side;
  const std::int64_t new_short = (scaled_short / p + 1) * p;

  return height_is_short ? ImageDims{new_long, new_short} : ImageDims{new_short, new_long};
}

RawImage resize_image(const RawImage& img, const PreprocessConfig& cfg) {
  img.validate();
  const ImageDims out_dims = resize_output_dims(img.dims, cfg);

  const auto x_taps = make_taps(img.dims.width, out_dims.width);
  const auto y_taps = make_taps(img.dims.height, out_dims.height);
  const std::int64_t den_x = 2 * out_dims.width;
  const std::int64_t den_y = 2 * out_dims.height;
  const std::int64_t den = den_x * den_y;
  const std::int64_t half = den / 2;

  RawImage out;
  out.dims = out_dims;
  out.pixels.resize(static_cast<std::size_t>(out_dims.width * out_dims.height * 3));

  for (std::int64_t y = 0; y < out_dims.height; ++y) {
    const Tap& ty = y_taps[static_cast<std::size_t>(y)];
    const std::int64_t wy1 = ty.w_hi;
    const std::int64_t wy0 = den_y - wy1;
    const std::uint8_t* row0 = img.pixel(0, ty.lo);
    const std::uint8_t* row1 = img.pixel(0, ty.hi);
    std::uint8_t* dst = out.pixel(0, y);
    for (std::int64_t x = 0; x < out_dims.width; ++x) {
      const Tap& tx = x_taps[static_cast<std::size_t>(x)];
      const std::int64_t wx1 = tx.w_hi;
      const std::int64_t wx0 = den_x - wx1;
      const std::uint8_t* p00 = row0 + tx.lo * 3;
      const std::uint8_t* p01 = row0 + tx.hi * 3;
      const std::uint8_t* p10 = row1 + tx.lo * 3;
      const std::uint8_t* p11 = row1 + tx.hi * 3;
      for (int ch = 0; ch < 3; ++ch) {
        const std::int64_t acc = wy0 * (wx0 * p00[ch] + wx1 * p01[ch]) +
                                 wy1 * (wx0 * p10[ch] + wx1 * p11[ch]);
        dst[x * 3 + ch] = static_cast<std::uint8_t>((acc + half) / den);
      }
    }
  }
  return out;
}

PatchGrid extract_patches(const RawImage& img, const PreprocessConfig& cfg) {
  img.validate();
  cfg.validate();
  const std::int64_t p = cfg.patch_size;
  if (img.dims.width % p != 0 || img.dims.height % p != 0) {
    throw AlignmentError("image " + std::to_string(img.dims.width) + "x" +
                         std::to_string(img.dims.height) +
                         " is not aligned to patch size " + std::to_string(p));
  }

  PatchGrid grid;
  grid.patch_size = p;
  grid.cols = img.dims.width / p;
  grid.rows = img.dims.height / p;
  grid.data.resize(static_cast<std::size_t>(grid.patch_count() * grid.patch_bytes()));

  const std::int64_t row_bytes = p * 3;
  for (std::int64_t r = 0; r < grid.rows; ++r) {
    for (std::int64_t c = 0; c < grid.cols; ++c) {
      auto patch = grid.patch(r * grid.cols + c);
      for (std::int64_t py = 0; py < p; ++py) {
        const std::uint8_t* src = img.pixel(c * p, r * p + py);
        std::memcpy(patch.data() + py * row_bytes, src, static_cast<std::size_t>(row_bytes));
      }
    }
  }
  return grid;
}

RawImage reassemble(const PatchGrid& grid) {
  if (grid.rows < 1 || grid.cols < 1 || grid.patch_size < 1) {
    throw InvalidInputError("cannot reassemble an empty patch grid");
  }
  const std::int64_t p = grid.patch_size;
  RawImage img;
  img.dims = {grid.cols * p, grid.rows * p};
  img.pixels.resize(static_cast<std::size_t>(img.dims.width * img.dims.height * 3));

  const std::int64_t row_bytes = p * 3;
  for (std::int64_t r = 0; r < grid.rows; ++r) {
    for (std::int64_t c = 0; c < grid.cols; ++c) {
      auto patch = grid.patch(r * grid.cols + c);
      for (std::int64_t py = 0; py < p; ++py) {
        std::uint8_t* dst = img.pixel(c * p, r * p + py);
        std::memcpy(dst, patch.data() + py * row_bytes, static_cast<std::size_t>(row_bytes));
      }
    }
  }
  return img;
}

}  // namespace solo
