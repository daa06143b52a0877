#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hypad {

enum class DType : std::uint8_t { F32 = 1, F64 = 2, U8 = 3 };

std::size_t dtype_size(DType dtype);
std::string dtype_name(DType dtype);

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major n-dimensional array. Values are held in binary64; `dtype` is
/// the storage type used on disk. Every f32 and u8 value is exactly
/// representable in binary64, so a read/write cycle reproduces the payload.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, DType dtype = DType::F32);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data, DType dtype = DType::F32);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const { return data_.size(); }
  DType dtype() const { return dtype_; }
  void set_dtype(DType dtype) { dtype_ = dtype; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  // 2-D and 3-D accessors for [H][W] and [H][W][C] layouts.
  double& at(std::size_t y, std::size_t x) { return data_[y * shape_[1] + x]; }
  double at(std::size_t y, std::size_t x) const { return data_[y * shape_[1] + x]; }
  double& at(std::size_t y, std::size_t x, std::size_t c) { return data_[(y * shape_[1] + x) * shape_[2] + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * shape_[1] + x) * shape_[2] + c];
  }

  /// Channel vector at (y, x) of an [H][W][C] tensor.
  std::span<const double> pixel(std::size_t y, std::size_t x) const {
    return std::span<const double>(data_).subspan((y * shape_[1] + x) * shape_[2], shape_[2]);
  }

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  DType dtype_ = DType::F32;
  std::vector<double> data_;
};

std::size_t shape_numel(std::span<const std::size_t> shape);

// FTNS binary layout, all integers little-endian:
//   "FTNS" | u32 version | u8 dtype | u8 ndim | u64 dims[ndim] | payload
inline constexpr std::uint32_t kFtnsVersion = 1;

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

Tensor read_tensor(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_tensor(const Tensor& tensor, const std::filesystem::path& path);

/// Atomic whole-file write shared by every writer in the project.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace hypad
