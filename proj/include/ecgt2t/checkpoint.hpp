#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ecgt2t/nn.hpp"

namespace ecgt2t::nn {

// Parameter checkpoint: magic "ECGW1\0", u32 header length, JSON header
// ({"meta": ..., "tensors": [{name, shape, offset, count}...]}) and raw
// little-endian f32 blobs. Offsets count bytes from the end of the header.
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, TensorPtr<float>>>& tensors);

struct CheckpointData {
    nlohmann::json meta;
    std::map<std::string, std::pair<std::vector<int>, std::vector<float>>> tensors;
};

CheckpointData load_checkpoint(const std::filesystem::path& path);

}  // namespace ecgt2t::nn
