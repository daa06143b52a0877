#include "hypad/tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace hypad {

namespace {

static_assert(std::endian::native == std::endian::little, "FTNS encoding assumes a little-endian host");

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <class T>
T get(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (bytes.size() - pos < sizeof(T)) throw FormatError("FTNS: truncated header");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U8: return 1;
  }
  throw FormatError("unsupported dtype code " + std::to_string(static_cast<int>(dtype)));
}

std::string dtype_name(DType dtype) {
  switch (dtype) {
    case DType::F32: return "f32";
    case DType::F64: return "f64";
    case DType::U8: return "u8";
  }
  return "?";
}

std::size_t shape_numel(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d != 0 && n > std::numeric_limits<std::size_t>::max() / d) throw FormatError("tensor shape overflows");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, DType dtype)
    : shape_(std::move(shape)), dtype_(dtype), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data, DType dtype)
    : shape_(std::move(shape)), dtype_(dtype), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) throw std::invalid_argument("tensor data does not match its shape");
}

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
  if (tensor.ndim() > 255) throw FormatError("FTNS: too many dimensions");
  std::vector<std::uint8_t> out;
  out.reserve(10 + 8 * tensor.ndim() + tensor.numel() * dtype_size(tensor.dtype()));
  out.insert(out.end(), {'F', 'T', 'N', 'S'});
  put<std::uint32_t>(out, kFtnsVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(tensor.dtype()));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(tensor.ndim()));
  for (std::size_t d : tensor.shape()) put<std::uint64_t>(out, d);
  switch (tensor.dtype()) {
    case DType::F32:
      for (double v : tensor.data()) put<float>(out, static_cast<float>(v));
      break;
    case DType::F64:
      for (double v : tensor.data()) put<double>(out, v);
      break;
    case DType::U8:
      for (double v : tensor.data()) {
        if (!(v >= 0.0 && v <= 255.0)) throw FormatError("FTNS: value out of u8 range");
        put<std::uint8_t>(out, static_cast<std::uint8_t>(v));
      }
      break;
  }
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "FTNS", 4) != 0) throw FormatError("FTNS: bad magic");
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kFtnsVersion) throw FormatError("FTNS: unsupported version " + std::to_string(version));
  const auto code = get<std::uint8_t>(bytes, pos);
  if (code < 1 || code > 3) throw FormatError("FTNS: unsupported dtype code " + std::to_string(code));
  const auto dtype = static_cast<DType>(code);
  const auto ndim = get<std::uint8_t>(bytes, pos);
  std::vector<std::size_t> shape(ndim);
  for (auto& d : shape) {
    const auto v = get<std::uint64_t>(bytes, pos);
    if (v > std::numeric_limits<std::size_t>::max()) throw FormatError("FTNS: dimension too large");
    d = static_cast<std::size_t>(v);
  }

  // Validate the payload length before allocating anything shape-sized.
  const std::size_t remaining = bytes.size() - pos;
  const std::size_t elem = dtype_size(dtype);
  std::size_t numel = 0;
  try {
    numel = shape_numel(shape);
  } catch (const FormatError&) {
    throw FormatError("FTNS: truncated payload (shape overflows)");
  }
  if (numel > remaining / elem || numel * elem != remaining) {
    throw FormatError("FTNS: truncated payload (expected " + std::to_string(numel) + " elements of " +
                      std::to_string(elem) + " bytes, have " + std::to_string(remaining) + " bytes)");
  }

  std::vector<double> data(numel);
  for (std::size_t i = 0; i < numel; ++i) {
    switch (dtype) {
      case DType::F32: data[i] = get<float>(bytes, pos); break;
      case DType::F64: data[i] = get<double>(bytes, pos); break;
      case DType::U8: data[i] = get<std::uint8_t>(bytes, pos); break;
    }
  }
  return Tensor(std::move(shape), std::move(data), dtype);
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open tensor file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_tensor(const Tensor& tensor, const std::filesystem::path& path) {
  write_file_atomic(path, encode_tensor(tensor));
}

}  // namespace hypad
