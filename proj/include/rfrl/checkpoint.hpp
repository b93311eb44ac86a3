#pragma once

#include <map>
#include <optional>
#include <string>

#include "rfrl/config.hpp"

namespace rfrl {

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Everything needed to resume or evaluate a run.
struct Checkpoint {
    ExperimentConfig config;
    RfrlModel<float> model;
    std::optional<AdamState<float>> adam;
    std::optional<PlateauState> plateau;
    std::map<std::string, double> meta;  // e.g. "epoch"
};

// "RFRLCKPT", u16 version, u32-prefixed config text, u32 tensor count, then
// (u32-prefixed name, RFT1 tensor) pairs. Parameters are stored as f32 under
// their model names, optimizer state under "opt.", scalars as f64.
void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);

/// Writes to a temporary file first so an interrupted save never clobbers
/// the previous checkpoint.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace rfrl
