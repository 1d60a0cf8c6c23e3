// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Greedy decoding of whole test sets and word error rate reports.

#pragma once

#include "sslt/frontend.hpp"
#include "sslt/model.hpp"
#include "sslt/trainer.hpp"
#include "sslt/wer.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace sslt {

struct Hypothesis {
    std::string id;
    std::string text;
};

/// Decodes every utterance in order. `streaming` selects the chunk mask.
std::vector<Hypothesis> decode_utterances(const Model<float>& model, const TrainerConfig& cfg,
                                          const std::vector<Utterance>& utterances, bool streaming);

struct SetReport {
    std::string name;
    int utterances = 0;
    WerCounts counts;
};

struct EvalReport {
    std::vector<SetReport> sets;

    WerCounts total() const;
    /// Mean of the per-set rates weighted by reference word count.
    double overall() const { return total().rate(); }

    nlohmann::ordered_json to_json() const;
};

/// Scores one labeled set; throws if any utterance lacks a transcript.
SetReport evaluate_set(const Model<float>& model, const TrainerConfig& cfg, const std::string& name,
                       const std::vector<Utterance>& utterances, bool streaming);

}  // namespace sslt
