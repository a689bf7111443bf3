#include "voxlift/render/ppm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace voxlift::render {

namespace {

std::uint8_t quantize(double v) {
  v = std::min(std::max(v, 0.0), 1.0);
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

void write_p6(const std::string& path, int w, int h,
              const std::vector<std::uint8_t>& rgb) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(path + ": cannot open for writing");
  os << "P6\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(rgb.data()),
           static_cast<std::streamsize>(rgb.size()));
  if (!os) throw std::runtime_error(path + ": write failed");
}

}  // namespace

void write_ppm(const std::string& path, const core::Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3)
    throw std::invalid_argument("write_ppm expects [H,W,3]");
  const int h = static_cast<int>(image.dim(0));
  const int w = static_cast<int>(image.dim(1));
  std::vector<std::uint8_t> rgb(static_cast<size_t>(h) * w * 3);
  for (std::int64_t i = 0; i < image.numel(); ++i)
    rgb[static_cast<size_t>(i)] = quantize(image.at(i));
  write_p6(path, w, h, rgb);
}

void write_heatmap_ppm(const std::string& path, const core::Tensor& values) {
  if (values.rank() != 2)
    throw std::invalid_argument("write_heatmap_ppm expects [H,W]");
  const int h = static_cast<int>(values.dim(0));
  const int w = static_cast<int>(values.dim(1));
  double lo = values.at(0), hi = values.at(0);
  for (std::int64_t i = 0; i < values.numel(); ++i) {
    lo = std::min(lo, values.at(i));
    hi = std::max(hi, values.at(i));
  }
  const double span = hi - lo > 1e-12 ? hi - lo : 1.0;
  std::vector<std::uint8_t> rgb(static_cast<size_t>(h) * w * 3);
  for (std::int64_t i = 0; i < values.numel(); ++i) {
    const double u = (values.at(i) - lo) / span;
    // dark blue -> warm white ramp
    rgb[static_cast<size_t>(i) * 3 + 0] = quantize(u * 1.2 - 0.1);
    rgb[static_cast<size_t>(i) * 3 + 1] = quantize(u * u);
    rgb[static_cast<size_t>(i) * 3 + 2] = quantize(0.25 + 0.75 * u * u * u);
  }
  write_p6(path, w, h, rgb);
}

}  // namespace voxlift::render
