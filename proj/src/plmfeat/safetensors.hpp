#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace b4g::plmfeat {

struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;  // row-major
};

using TensorMap = std::map<std::string, Tensor>;

// Reads F64/F32/F16/BF16 tensors, widening to double.
TensorMap read_safetensors(const std::filesystem::path& path);

enum class StoreType { f32, f64 };
void write_safetensors(const std::filesystem::path& path, const TensorMap& tensors,
                       StoreType type = StoreType::f64);

}  // namespace b4g::plmfeat
