#pragma once

#include <cstdint>
#include <string>

#include "sarc/model.hpp"
#include "sarc/optimizer.hpp"

namespace sarc {

// Checkpoint container: a text manifest (model configuration, vocabulary
// hash, optimizer step counter, and a name/shape/offset table covering every
// stored tensor) followed by a "---BLOB---" separator line and one contiguous
// little-endian 32-bit-float blob. Optimizer moments live in the same table
// under "adam.m.<param>" / "adam.v.<param>" names. Loaders verify every shape
// against the manifest before accepting the data.

struct LoadedCheckpoint {
    ModelParams<float> params;
    AdamState<float> adam;
    std::uint64_t vocab_hash = 0;
};

void save_checkpoint(const std::string& path, const ModelParams<float>& params, const AdamState<float>& adam,
                     std::uint64_t vocab_hash);

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace sarc
