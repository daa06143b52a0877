#include "hypad/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

namespace hypad {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Tensor read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw FormatError("cannot open image " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError(path.string() + ": not a PNG file");
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": corrupt PNG");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_png(png, info, PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_STRIP_ALPHA | PNG_TRANSFORM_PACKING, nullptr);

  const std::size_t w = png_get_image_width(png, info);
  const std::size_t h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const std::size_t channels = png_get_channels(png, info);
  png_bytepp rows = png_get_rows(png, info);

  Tensor img({h, w, channels}, DType::F32);
  const double maxv = depth == 16 ? 65535.0 : 255.0;
  for (std::size_t y = 0; y < h; ++y) {
    const png_bytep row = rows[y];
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t i = x * channels + c;
        const double v = depth == 16 ? static_cast<double>((row[2 * i] << 8) | row[2 * i + 1]) : row[i];
        img.at(y, x, c) = v / maxv;
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const Tensor& image, const std::filesystem::path& path, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("write_png: bit depth must be 8 or 16");
  if (image.ndim() != 2 && image.ndim() != 3) throw std::invalid_argument("write_png: expected [H][W] or [H][W][C]");
  const std::size_t h = image.dim(0), w = image.dim(1);
  const std::size_t channels = image.ndim() == 3 ? image.dim(2) : 1;
  if (channels != 1 && channels != 3) throw std::invalid_argument("write_png: 1 or 3 channels supported");

  const std::size_t bytes_per = bit_depth / 8;
  const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<png_byte> buffer(h * w * channels * bytes_per);
  for (std::size_t i = 0; i < h * w * channels; ++i) {
    const auto v = static_cast<unsigned>(std::lround(std::clamp(image.data()[i], 0.0, 1.0) * maxv));
    if (bit_depth == 16) {
      buffer[2 * i] = static_cast<png_byte>(v >> 8);
      buffer[2 * i + 1] = static_cast<png_byte>(v & 0xff);
    } else {
      buffer[i] = static_cast<png_byte>(v);
    }
  }
  std::vector<png_bytep> rows(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = buffer.data() + y * w * channels * bytes_per;

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    FilePtr fp(std::fopen(tmp.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot write " + tmp.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
      png_destroy_write_struct(&png, &info);
      throw std::runtime_error("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw std::runtime_error("failed writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_rows(png, info, rows.data());
    png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  std::filesystem::rename(tmp, path);
}

void write_mask_png(const Tensor& mask, const std::filesystem::path& path) {
  Tensor m({mask.dim(0), mask.dim(1)}, DType::U8);
  for (std::size_t i = 0; i < m.numel(); ++i) m.data()[i] = mask.data()[i] > 0.0 ? 1.0 : 0.0;
  write_png(m, path, 8);
}

Tensor read_mask(const std::filesystem::path& path) {
  Tensor raw = path.extension() == ".png" ? read_png(path) : read_tensor(path);
  if (raw.ndim() == 3 && raw.dim(2) != 1) throw FormatError(path.string() + ": mask must have one channel");
  if (raw.ndim() != 2 && raw.ndim() != 3) throw FormatError(path.string() + ": mask must be [H][W]");
  Tensor m({raw.dim(0), raw.dim(1)}, DType::U8);
  for (std::size_t i = 0; i < m.numel(); ++i) m.data()[i] = raw.data()[i] >= 0.5 ? 1.0 : 0.0;
  return m;
}

}  // namespace hypad
