#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "isd/train.hpp"

namespace isd {

/// Binary, little-endian, versioned: "ISDCKPT1", u32 version, the training
/// config as key = value text, input width, student encoder, predictor and
/// teacher (spec then f64 weights and biases), SGD state and velocities,
/// epoch and step counters, both generator states, and the anchor bank.
std::vector<std::uint8_t> encode_checkpoint(const TrainState& state);
TrainState decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
/// Raises CheckpointError for anything unreadable or inconsistent.
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace isd
