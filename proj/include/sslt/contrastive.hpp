// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Contrastive pretraining objective: a linear layer maps unmasked latent
// frames to targets q, and each masked context frame c_t must pick out q_t
// among K distractor targets drawn from the same utterance.

#pragma once

#include "sslt/layers.hpp"
#include "sslt/masking.hpp"
#include "sslt/tensor.hpp"

#include <random>
#include <vector>

namespace sslt {

struct ContrastiveConfig {
    int num_negatives = 100;
    double temperature = 1.0;
    int target_dim = 64;  // must equal the encoder d_model
    bool negatives_from_masked_only = false;

    void validate() const;
};

inline constexpr double kCosineEpsilon = 1e-8;

/// Per-frame linear projection of the pre-mask latent sequence.
template <typename S>
class TargetProjection {
public:
    TargetProjection() = default;
    TargetProjection(int latent_dim, int target_dim) : proj("contrastive.target_proj", latent_dim, target_dim) {}

    Mat<S> forward(const Mat<S>& latent) const { return proj.forward(latent); }
    Mat<S> backward(const Mat<S>& latent, const Mat<S>& grad_targets) { return proj.backward(latent, grad_targets); }

    void init(std::mt19937_64& rng) { proj.init(rng); }
    void collect(ParamList<S>& out) { proj.collect(out); }

    Linear<S> proj;
};

/// K indices drawn uniformly with replacement from [0, length) \ {t}.
std::vector<int> sample_distractors(int t, int length, int num_negatives, std::mt19937_64& rng);

/// K indices drawn uniformly with replacement from `pool` \ {t}. Falls back to
/// all other frames when the pool holds nothing but t.
std::vector<int> sample_distractors_from_pool(int t, int length, const std::vector<int>& pool, int num_negatives,
                                              std::mt19937_64& rng);

/// One distractor list per masked index, in mask order.
std::vector<std::vector<int>> sample_all_distractors(const SpanMask& mask, const ContrastiveConfig& cfg,
                                                     std::mt19937_64& rng);

/// a.b / (max(|a|, eps) * max(|b|, eps)); throws on an exactly zero vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

template <typename S>
struct ContrastiveResult {
    double loss = 0.0;
    std::vector<double> per_position;  // in mask order
    Mat<S> grad_context;               // dL/dc, same shape as c
    Mat<S> grad_targets;               // dL/dq, same shape as q
};

/// L = -sum_{t in M} log softmax_j(sim(c_t, Q_t[j]) / temperature)[0] where
/// Q_t = {q_t} followed by the distractor targets of t.
template <typename S>
ContrastiveResult<S> contrastive_loss(const Mat<S>& context, const Mat<S>& targets, const SpanMask& mask,
                                      const std::vector<std::vector<int>>& distractors, double temperature = 1.0);

}  // namespace sslt
