// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON run configuration. Missing fields keep their defaults; unknown fields
// and type mismatches are errors that name the offending field.

#pragma once

#include "sslt/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace sslt {

struct DataConfig {
    std::string labeled;
    std::string unlabeled;
    std::string validation;
    std::vector<std::string> test;
    int max_frames = kMaxFrames;
};

struct LoggingConfig {
    std::string metrics_path;
    int log_interval = 1;
    int validation_interval = 100;
    int checkpoint_interval = 0;
};

struct RunConfig {
    TrainerConfig trainer;
    DataConfig data;
    LoggingConfig logging;
    std::filesystem::path base_dir;  // directory of the config file

    /// Resolves a manifest or output path relative to base_dir.
    std::filesystem::path resolve(const std::string& path) const;
};

/// Thrown for malformed or inconsistent configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

nlohmann::ordered_json to_json(const TrainerConfig& cfg);
TrainerConfig trainer_config_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

/// Parses and validates a config file. Every non-empty data path must exist.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace sslt
