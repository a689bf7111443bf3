#pragma once

#include <string>

#include "voxlift/core/tensor.hpp"

namespace voxlift::render {

// Binary P6, 8-bit. Values are clamped to [0,1] before quantization.
void write_ppm(const std::string& path, const core::Tensor& image);  // [H,W,3]

// Grayscale values [H,W] written as P6 after per-image [0,1] normalization.
void write_heatmap_ppm(const std::string& path, const core::Tensor& values);

}  // namespace voxlift::render
