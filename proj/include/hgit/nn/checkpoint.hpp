#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <vector>

#include "hgit/nn/tensor.hpp"

namespace hgit::nn {

/// Binary layout: "HGITCKPT", u32 version, u64 header length, JSON header,
/// u32 tensor count, then per tensor: u32 name length, name, 4 x i32 dims,
/// raw little-endian float32 values. Floats are copied bit for bit.
struct Checkpoint {
  nlohmann::json header;
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                     const std::vector<const Param*>& params);

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint tensors into params in order; shapes must agree.
void assign_parameters(const std::vector<Param*>& params, const Checkpoint& ckpt, std::size_t offset = 0,
                       std::size_t count = static_cast<std::size_t>(-1));

}  // namespace hgit::nn
