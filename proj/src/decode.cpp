#include "solo/decode.hpp"

#include <jpeglib.h>
#include <png.h>

#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

namespace solo {

namespace {

enum class Container { Ppm, Pgm, Png, Jpeg };

Container sniff(const std::filesystem::path& file, std::ifstream& in) {
  unsigned char magic[8] = {};
  in.read(reinterpret_cast<char*>(magic), sizeof(magic));
  if (in.gcount() < 2) throw IngestionError("cannot read image header of " + file.string());
  in.seekg(0);
  if (magic[0] == 'P' && magic[1] == '6') return Container::Ppm;
  if (magic[0] == 'P' && magic[1] == '5') return Container::Pgm;
  if (magic[0] == 0x89 && magic[1] == 'P') return Container::Png;
  if (magic[0] == 0xFF && magic[1] == 0xD8) return Container::Jpeg;
  throw IngestionError("unsupported image format in " + file.string() +
                       " (PPM, PGM, PNG and JPEG are supported)");
}

int pnm_next_int(std::istream& in, const std::filesystem::path& file) {
  // Skips whitespace and '#' comment lines between header fields.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw IngestionError("malformed PNM header in " + file.string());
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    if (value > (1 << 26)) throw IngestionError("PNM header value out of range in " + file.string());
    c = in.get();
  }
  return value;
}

struct PnmHeader {
  ImageDims dims;
  int maxval = 0;
  bool gray = false;
};

PnmHeader read_pnm_header(std::istream& in, const std::filesystem::path& file) {
  char p = 0, kind = 0;
  in.get(p);
  in.get(kind);
  PnmHeader h;
  h.gray = kind == '5';
  h.dims.width = pnm_next_int(in, file);
  h.dims.height = pnm_next_int(in, file);
  h.maxval = pnm_next_int(in, file);
  if (h.maxval < 1 || h.maxval > 255) {
    throw IngestionError("only 8-bit PNM is supported, maxval=" + std::to_string(h.maxval) +
                         " in " + file.string());
  }
  return h;
}

RawImage decode_pnm(std::ifstream& in, const std::filesystem::path& file) {
  const PnmHeader h = read_pnm_header(in, file);
  // Header ends with exactly one whitespace byte, already consumed by
  // pnm_next_int's terminating get().
  const std::size_t channels = h.gray ? 1 : 3;
  const std::size_t count =
      static_cast<std::size_t>(h.dims.width) * static_cast<std::size_t>(h.dims.height) * channels;
  std::vector<std::uint8_t> raw(count);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count) {
    throw IngestionError("PNM pixel data truncated in " + file.string());
  }
  RawImage img;
  img.dims = h.dims;
  img.pixels.resize(static_cast<std::size_t>(h.dims.width) * h.dims.height * 3);
  if (h.gray) {
    for (std::size_t i = 0; i < raw.size(); ++i) {
      img.pixels[i * 3] = img.pixels[i * 3 + 1] = img.pixels[i * 3 + 2] = raw[i];
    }
  } else {
    img.pixels = std::move(raw);
  }
  if (h.maxval != 255) {
    for (auto& v : img.pixels) {
      v = static_cast<std::uint8_t>((v * 255 + h.maxval / 2) / h.maxval);
    }
  }
  return img;
}

RawImage decode_png(const std::filesystem::path& file) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, file.string().c_str())) {
    throw IngestionError("PNG read failed for " + file.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgba.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IngestionError("PNG decode failed for " + file.string() + ": " + image.message);
  }
  RawImage img;
  img.dims = {static_cast<std::int64_t>(image.width), static_cast<std::int64_t>(image.height)};
  img.pixels.resize(static_cast<std::size_t>(img.dims.width) * img.dims.height * 3);
  // Composite over black: out = rgb * alpha / 255.
  for (std::size_t i = 0; i < img.pixels.size() / 3; ++i) {
    const std::uint8_t a = rgba[i * 4 + 3];
    for (int ch = 0; ch < 3; ++ch) {
      img.pixels[i * 3 + ch] =
          static_cast<std::uint8_t>((rgba[i * 4 + ch] * a + 127) / 255);
    }
  }
  return img;
}

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX] = {};
};

void jpeg_error_trampoline(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

RawImage decode_jpeg(const std::filesystem::path& file) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(file.string().c_str(), "rb"),
                                                     &std::fclose);
  if (!fp) throw IngestionError("cannot open " + file.string());

  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_trampoline;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IngestionError("JPEG decode failed for " + file.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, fp.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);

  RawImage img;
  img.dims = {static_cast<std::int64_t>(cinfo.output_width),
              static_cast<std::int64_t>(cinfo.output_height)};
  img.pixels.resize(static_cast<std::size_t>(img.dims.width) * img.dims.height * 3);
  const std::size_t stride = static_cast<std::size_t>(img.dims.width) * 3;
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.pixels.data() + cinfo.output_scanline * stride;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

ImageDims probe_jpeg_dims(const std::filesystem::path& file) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(file.string().c_str(), "rb"),
                                                     &std::fclose);
  if (!fp) throw IngestionError("cannot open " + file.string());
  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_trampoline;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IngestionError("JPEG header read failed for " + file.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, fp.get());
  jpeg_read_header(&cinfo, TRUE);
  const ImageDims dims{static_cast<std::int64_t>(cinfo.image_width),
                       static_cast<std::int64_t>(cinfo.image_height)};
  jpeg_destroy_decompress(&cinfo);
  return dims;
}

}  // namespace

RawImage decode_image(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + file.string());
  const Container c = sniff(file, in);
  RawImage img;
  switch (c) {
    case Container::Ppm:
    case Container::Pgm:
      img = decode_pnm(in, file);
      break;
    case Container::Png:
      img = decode_png(file);
      break;
    case Container::Jpeg:
      img = decode_jpeg(file);
      break;
  }
  img.validate();
  return img;
}

ImageDims probe_image_dims(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + file.string());
  switch (sniff(file, in)) {
    case Container::Ppm:
    case Container::Pgm:
      return read_pnm_header(in, file).dims;
    case Container::Png: {
      png_image image;
      std::memset(&image, 0, sizeof(image));
      image.version = PNG_IMAGE_VERSION;
      if (!png_image_begin_read_from_file(&image, file.string().c_str())) {
        throw IngestionError("PNG header read failed for " + file.string() + ": " + image.message);
      }
      const ImageDims dims{static_cast<std::int64_t>(image.width),
                           static_cast<std::int64_t>(image.height)};
      png_image_free(&image);
      return dims;
    }
    case Container::Jpeg:
      return probe_jpeg_dims(file);
  }
  throw IngestionError("unreachable");
}

void write_ppm(const std::filesystem::path& file, const RawImage& img) {
  img.validate();
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  out << "P6\n" << img.dims.width << " " << img.dims.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw Error("write failed for " + file.string());
}

}  // namespace solo
