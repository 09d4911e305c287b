#pragma once

#include <string>
#include <utility>
#include <vector>

#include "memto/data.hpp"
#include "memto/model.hpp"

namespace memto {

inline constexpr int kCheckpointVersion = 1;

// Parsed checkpoint container: config echo, training-phase marker,
// normalization statistics and every named tensor (parameters plus
// "memory.items"). See docs/checkpoint_format.md for the byte-level layout.
struct CheckpointData {
    int version = kCheckpointVersion;
    ModelConfig config;
    std::string phase; // "phase1" | "phase2"
    NormalizationStats stats;
    std::vector<std::pair<std::string, Mat>> tensors;

    const Mat& tensor(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Memto& model,
                     const NormalizationStats& stats, const std::string& phase);

CheckpointData read_checkpoint(const std::string& path);

// Rebuilds a model from a parsed checkpoint; every parameter the
// configuration implies must be present with matching shape.
Memto load_model(const CheckpointData& data);

} // namespace memto
