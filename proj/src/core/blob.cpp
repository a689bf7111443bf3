#include "voxlift/core/blob.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace voxlift::core {

namespace {

constexpr char kBlobMagic[4] = {'V', 'L', 'T', 'B'};
constexpr char kCheckpointMagic[4] = {'V', 'L', 'C', 'K'};
constexpr std::uint8_t kBlobVersion = 1;
constexpr int kMaxRank = 8;

[[noreturn]] void fail(const std::string& label, const std::string& why) {
  throw std::runtime_error(label + ": " + why);
}

void read_exact(std::istream& is, void* dst, std::size_t bytes,
                const std::string& label) {
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(is.gcount()) != bytes)
    fail(label, "truncated (wanted " + std::to_string(bytes) + " bytes)");
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

void write_blob(std::ostream& os, const Tensor& tensor, const std::string& label) {
  if (!tensor.defined()) fail(label, "cannot serialize an undefined tensor");
  const int rank = tensor.rank();
  if (rank > kMaxRank) fail(label, "rank exceeds blob limit");
  os.write(kBlobMagic, 4);
  write_pod(os, kBlobVersion);
  write_pod(os, static_cast<std::uint8_t>(tensor.dtype()));
  write_pod(os, static_cast<std::uint8_t>(rank));
  write_pod(os, static_cast<std::uint8_t>(0));  // pad to 8 bytes
  for (int i = 0; i < rank; ++i) {
    const std::uint64_t d = static_cast<std::uint64_t>(tensor.dim(i));
    write_pod(os, d);
  }
  if (tensor.dtype() == DType::kF32)
    os.write(reinterpret_cast<const char*>(tensor.f32()),
             static_cast<std::streamsize>(tensor.numel() * sizeof(float)));
  else
    os.write(reinterpret_cast<const char*>(tensor.f64()),
             static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
  if (!os) fail(label, "write failed");
}

Tensor read_blob(std::istream& is, const std::string& label) {
  char magic[4];
  read_exact(is, magic, 4, label);
  if (std::memcmp(magic, kBlobMagic, 4) != 0) fail(label, "bad magic, not a VLTB blob");
  std::uint8_t version = 0, dtype_raw = 0, rank = 0, pad = 0;
  read_exact(is, &version, 1, label);
  read_exact(is, &dtype_raw, 1, label);
  read_exact(is, &rank, 1, label);
  read_exact(is, &pad, 1, label);
  if (version != kBlobVersion)
    fail(label, "unsupported blob version " + std::to_string(version));
  if (dtype_raw > 1) fail(label, "unknown dtype tag " + std::to_string(dtype_raw));
  if (rank > kMaxRank) fail(label, "rank " + std::to_string(rank) + " out of range");

  Shape shape(rank);
  std::int64_t count = 1;
  for (int i = 0; i < rank; ++i) {
    std::uint64_t d = 0;
    read_exact(is, &d, 8, label);
    if (d == 0 || d > (1ull << 32)) fail(label, "corrupt dimension");
    shape[static_cast<size_t>(i)] = static_cast<std::int64_t>(d);
    count *= shape[static_cast<size_t>(i)];
    if (count > (1ll << 33)) fail(label, "blob implausibly large");
  }
  const DType dtype = static_cast<DType>(dtype_raw);
  Tensor t = Tensor::zeros(shape, dtype, false);
  if (dtype == DType::kF32)
    read_exact(is, t.f32(), static_cast<std::size_t>(count) * sizeof(float), label);
  else
    read_exact(is, t.f64(), static_cast<std::size_t>(count) * sizeof(double), label);
  return t;
}

void save_blob(const std::string& path, const Tensor& tensor) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(path, "cannot open for writing");
  write_blob(os, tensor, path);
}

Tensor load_blob(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(path, "cannot open for reading");
  return read_blob(is, path);
}

void save_checkpoint(const std::string& path, const NamedTensors& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(path, "cannot open for writing");
  os.write(kCheckpointMagic, 4);
  write_pod(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, tensor] : entries) {
    if (name.size() > 0xffff) fail(path, "entry name too long: " + name);
    write_pod(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_blob(os, tensor, path + ":" + name);
  }
  if (!os) fail(path, "write failed");
}

NamedTensors load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(path, "cannot open for reading");
  char magic[4];
  read_exact(is, magic, 4, path);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    fail(path, "bad magic, not a VLCK checkpoint");
  std::uint32_t count = 0;
  read_exact(is, &count, 4, path);
  if (count > 100000) fail(path, "corrupt entry count");
  NamedTensors entries;
  entries.reserve(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    std::uint16_t name_len = 0;
    read_exact(is, &name_len, 2, path);
    std::string name(name_len, '\0');
    read_exact(is, name.data(), name_len, path);
    entries.emplace_back(name, read_blob(is, path + ":" + name));
  }
  return entries;
}

}  // namespace voxlift::core
