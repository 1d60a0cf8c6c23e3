// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint file layout (little-endian):
//   8 bytes   magic "SSLTTCKP"
//   uint32    format version
//   uint64    metadata length, then UTF-8 JSON (config, stage, step,
//             per-parameter optimizer step counts)
//   uint32    tensor count, then per tensor: uint32 name length, name,
//             uint32 rows, uint32 cols, rows*cols float32 values
//   uint64    FNV-1a hash of everything before it
// Tensors are the parameters under their own names plus "adam.m/<name>" and
// "adam.v/<name>".

#pragma once

#include "sslt/trainer.hpp"

#include <cstdint>
#include <filesystem>

namespace sslt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes to a temporary file next to `path` and renames it into place.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);

/// Throws std::runtime_error naming the problem for unreadable, corrupt or
/// incompatible files.
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace sslt
