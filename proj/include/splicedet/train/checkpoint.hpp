#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "splicedet/core/tensor.hpp"
#include "splicedet/nn/layers.hpp"

namespace splicedet::train {

/// Flat key -> tensor archive.
/// Layout: magic "SDCKPT01", u64 little-endian header length, a JSON header
/// {"endianness","dtype","tensors":[{name,shape,offset,numel}...],"meta":...},
/// then raw float32 little-endian payload. Offsets are byte offsets into the
/// payload. Writing is deterministic, so save -> load -> save is byte-stable.
struct Checkpoint {
    std::vector<std::pair<std::string, core::Tensor>> tensors;  // insertion order
    std::string meta_json = "{}";

    const core::Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Collects registry parameters (weights, BN stats) plus any extra tensors.
Checkpoint snapshot(const nn::ParamRegistry& reg,
                    const std::vector<std::pair<std::string, core::Tensor>>& extra = {},
                    const std::string& meta_json = "{}");

/// Restores registry parameters by name; missing or shape-mismatched entries
/// raise DataError.
void restore(nn::ParamRegistry& reg, const Checkpoint& ckpt);

}  // namespace splicedet::train
