#pragma once

#include <filesystem>

#include "hypad/tensor.hpp"

namespace hypad {

/// Reads an 8- or 16-bit PNG into an [H][W][C] tensor with values in [0,1].
/// Palette images are expanded, alpha is dropped; C is 1 or 3.
Tensor read_png(const std::filesystem::path& path);

/// Writes an [H][W][C] (C in {1,3}) or [H][W] tensor with values in [0,1].
void write_png(const Tensor& image, const std::filesystem::path& path, int bit_depth = 8);

/// Binary mask as 8-bit {0,255}.
void write_mask_png(const Tensor& mask, const std::filesystem::path& path);

/// Loads a mask from PNG or FTNS into an [H][W] {0,1} tensor.
Tensor read_mask(const std::filesystem::path& path);

}  // namespace hypad
