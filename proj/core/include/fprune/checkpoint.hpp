#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "fprune/model.hpp"

namespace fprune {

inline constexpr char kCheckpointMagic[8] = {'F', 'P', 'R', 'U', 'N', 'E', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout (all integers and reals little-endian):
//   magic[8] | u32 version
//   u32 len | metadata record
//   u32 layer_count | { u32 len | layer record } * layer_count
//   u32 param_count | { u32 name_len | name | u32 rank | u64 dims[rank]
//                       | u64 count | f64 values[count] } * param_count
std::string encode_checkpoint(const ModelGraph& model);
ModelGraph decode_checkpoint(std::string_view bytes);

// Human-readable mirror of the layer table and parameter shapes.
std::string checkpoint_sidecar_json(const ModelGraph& model);

// Writes `path` and `path` + ".json".
void save_checkpoint(const ModelGraph& model, const std::filesystem::path& path);
ModelGraph load_checkpoint(const std::filesystem::path& path);

}  // namespace fprune
