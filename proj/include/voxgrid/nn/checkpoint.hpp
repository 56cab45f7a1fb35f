#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "voxgrid/nn/optim.hpp"

namespace voxgrid::nn {

// Binary layout, little-endian:
//   "VXCK" | u32 version=1 | u32 meta length | meta (UTF-8 JSON)
//   | u64 n | n x f32 params
//   | u64 adam step | f64 lr | f64 beta1 | f64 beta2 | f64 eps
//   | n x f32 first moment | n x f32 second moment
struct Checkpoint {
  std::string meta_json;
  std::vector<float> params;
  AdamState adam;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError with the byte offset of the first bad field.
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace voxgrid::nn
