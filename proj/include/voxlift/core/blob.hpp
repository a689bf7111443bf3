#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "voxlift/core/tensor.hpp"

// Tensor blob format: magic "VLTB", u8 version=1, u8 dtype (0=f32, 1=f64),
// u8 rank, one zero pad byte (header is 8 bytes), rank x u64 little-endian
// dims, then raw little-endian values.
//
// Checkpoint container: magic "VLCK", u32 entry count, then per entry a u16
// name length, the UTF-8 name, and a tensor blob.

namespace voxlift::core {

void write_blob(std::ostream& os, const Tensor& tensor, const std::string& label);
Tensor read_blob(std::istream& is, const std::string& label);

void save_blob(const std::string& path, const Tensor& tensor);
Tensor load_blob(const std::string& path);

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_checkpoint(const std::string& path, const NamedTensors& entries);
NamedTensors load_checkpoint(const std::string& path);

}  // namespace voxlift::core
