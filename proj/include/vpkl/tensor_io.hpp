#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "vpkl/tensor.hpp"

namespace vpkl {

// On-disk tensor format shared by features, pixel grids and checkpoints:
// magic "VPKF", format version u32, rank u32, extents u32[rank], then the
// payload as little-endian f64 in row-major order.
inline constexpr uint32_t kTensorFormatVersion = 1;

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

// FNV-1a over raw bytes; used for content hashes in manifests and checkpoints.
uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 1469598103934665603ull);
uint64_t tensor_hash(const Tensor& t);
uint64_t file_hash(const std::string& path);

}  // namespace vpkl
