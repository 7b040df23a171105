#pragma once

#include <torch/torch.h>

#include <json.hpp>
#include <map>
#include <string>

namespace automac {

// Self-describing tensor container shared by checkpoints and weight files:
//   magic (4 bytes) | version u32 | header length u64 | JSON header | blob
// The header carries arbitrary metadata plus a tensor index (name, dtype,
// shape, offset into the blob). Tensors are stored contiguous, little-endian.
struct TensorArchive {
  nlohmann::json meta;
  std::map<std::string, torch::Tensor> tensors;
};

inline constexpr std::uint32_t kArchiveVersion = 1;

void save_tensor_archive(const std::string& path, const std::string& magic,
                         const nlohmann::json& meta,
                         const std::map<std::string, torch::Tensor>& tensors);

// Throws DataError on a missing/corrupt file and ContractError when the magic
// does not match (the file is some other artifact kind).
TensorArchive load_tensor_archive(const std::string& path, const std::string& magic);

}  // namespace automac
