#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mtl/matrix.hpp"

namespace mtl {

// A tensor read from a safetensors file, widened to double. Rank-1 tensors
// become 1 x n matrices; rank-2 tensors keep their [rows, cols] layout.
struct NamedTensor {
  std::vector<std::int64_t> shape;
  Matrix data;
};

// Supports F64, F32, F16 and BF16 payloads of rank 1 or 2.
std::map<std::string, NamedTensor> read_safetensors(const std::filesystem::path& file);

// Writes F32 tensors; used to produce fixtures and exported weights.
void write_safetensors(const std::filesystem::path& file,
                       const std::map<std::string, NamedTensor>& tensors);

}  // namespace mtl
