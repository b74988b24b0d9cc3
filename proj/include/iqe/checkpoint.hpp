#pragma once
// Binary checkpoint: magic "IQEC", u32 version, u32 parameter count, then per
// parameter a length-prefixed name, u8 rank, u32 dims, and raw f32 data.
// Little-endian throughout.

#include <map>
#include <string>
#include <vector>

#include "iqe/nn.hpp"

namespace iqe {

struct CheckpointTensor {
    Shape shape;
    std::vector<float> data;
};

using CheckpointMap = std::map<std::string, CheckpointTensor>;

void save_checkpoint(const std::string& path, const ParamList<float>& params);
CheckpointMap load_checkpoint(const std::string& path);

// Strict by-name restore: every model parameter must be present with the
// right shape, and the file must not carry extras.
void apply_checkpoint(const CheckpointMap& ckpt, ParamList<float>& params);

}  // namespace iqe
