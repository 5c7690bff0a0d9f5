#pragma once

#include <string>
#include <utility>
#include <vector>

#include "druformer/nn.hpp"

namespace druformer {

// On-disk format: u64 little-endian header length, the JSON header, then the
// payload of concatenated little-endian float64 values. The header carries
// per-tensor (name, shape, byte offset into the payload) plus run metadata.
struct Checkpoint {
    std::string meta_json;  // stage, config, config_hash, epoch, step, rng, metrics...
    std::vector<std::pair<std::string, Tensor>> tensors;
};

void write_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::string& path);

// Copies payload tensors into the matching registry entries; throws if a
// registry tensor is missing from the checkpoint or shapes differ. Extra
// checkpoint tensors (optimizer state) are ignored here.
void load_into_registry(const Checkpoint& ck, ParamRegistry& reg);

}  // namespace druformer
