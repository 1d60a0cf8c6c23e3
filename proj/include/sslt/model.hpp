// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0
//
// The full network: encoder, contrastive target projection, prediction and
// joint networks, plus the per-utterance forward/backward that both training
// stages are built on.

#pragma once

#include "sslt/contrastive.hpp"
#include "sslt/encoder.hpp"
#include "sslt/masking.hpp"
#include "sslt/transducer.hpp"

#include <cstdint>
#include <vector>

namespace sslt {

struct ModelConfig {
    EncoderConfig encoder;
    ContrastiveConfig contrastive;
    PredictionConfig prediction;
    JointConfig joint;

    void validate() const;
};

template <typename S>
class Model {
public:
    explicit Model(const ModelConfig& cfg);

    void init(std::uint64_t seed);

    /// Every trainable tensor, in a fixed order with unique names.
    ParamList<S> params();
    std::vector<const Param<S>*> params() const;
    void zero_grad();

    /// Greedy transcription of one utterance under `mask`.
    std::vector<int> transcribe(const Mat<S>& features, const AttentionMask& mask, int max_symbols_per_frame) const;

    const ModelConfig& config() const { return cfg_; }

    Encoder<S> encoder;
    TargetProjection<S> target;
    PredictionNetwork<S> prediction;
    JointNetwork<S> joint;

private:
    ModelConfig cfg_;
};

/// Span mask and distractor indices for one utterance's contrastive branch.
struct ContrastiveTask {
    SpanMask mask;
    std::vector<std::vector<int>> distractors;
};

/// What to compute for one utterance. A branch is evaluated when its input is
/// present; its gradient is only propagated when its weight is non-zero.
struct UtteranceObjective {
    const ContrastiveTask* contrastive = nullptr;
    double contrastive_weight = 0.0;
    const std::vector<int>* labels = nullptr;
    const AttentionMask* attention = nullptr;  // transducer branch mask
    double transducer_weight = 0.0;
};

struct LossBreakdown {
    double contrastive = 0.0;
    double transducer = 0.0;
    int masked_frames = 0;
};

/// Forward pass over one utterance; accumulates weighted gradients into the
/// model parameters when `compute_gradients` is set. The contrastive branch
/// always runs with full-context attention on the span-masked latents; the
/// transducer branch sees the unmasked latents under `objective.attention`.
template <typename S>
LossBreakdown forward_backward(Model<S>& model, const Mat<S>& features, const UtteranceObjective& objective,
                               bool compute_gradients = true);

/// Transducer loss of one labeled utterance, no gradients.
template <typename S>
double transducer_loss_only(const Model<S>& model, const Mat<S>& features, const std::vector<int>& labels,
                            const AttentionMask& mask);

}  // namespace sslt
