// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Span masking of latent frames for contrastive pretraining, and the
// chunk-wise self-attention masks used for streaming.

#pragma once

#include "sslt/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace sslt {

/// Sorted, duplicate-free set of masked latent frame indices.
struct SpanMask {
    std::vector<int> indices;
    int length = 0;

    bool empty() const { return indices.empty(); }
    bool contains(int t) const;
};

/// Boolean [frames x frames] visibility matrix; visible(t, tau) means frame t
/// may attend to frame tau.
class AttentionMask {
public:
    AttentionMask() = default;
    explicit AttentionMask(int frames, bool visible = true);

    int frames() const { return frames_; }
    bool visible(int t, int tau) const { return bits_[static_cast<std::size_t>(t) * frames_ + tau] != 0; }
    void set(int t, int tau, bool v) { bits_[static_cast<std::size_t>(t) * frames_ + tau] = v ? 1 : 0; }

    /// Throws if some row has no visible position.
    void validate() const;

    /// Rows of 0/1 characters separated by newlines.
    std::string to_string() const;

    bool operator==(const AttentionMask&) const = default;

private:
    int frames_ = 0;
    std::vector<std::uint8_t> bits_;
};

struct SpanMaskConfig {
    double start_probability = 0.065;
    int span = 10;
};

/// Each index becomes a span start independently with probability p; a start
/// at i masks [i, min(i + span, length)). If nothing was drawn a single span
/// at a uniformly random start is forced.
SpanMask sample_span_mask(int length, const SpanMaskConfig& cfg, std::mt19937_64& rng);

/// Builds the merged mask from explicit start indices.
SpanMask span_mask_from_starts(int length, const std::vector<int>& starts, int span);

/// Rows of `latent` listed in `mask` are replaced by `mask_vector`.
template <typename S>
Mat<S> apply_feature_mask(const Mat<S>& latent, const SpanMask& mask, const RowVec<S>& mask_vector);

/// Splits the gradient of apply_feature_mask's output: masked rows are summed
/// into `grad_mask_vector` and zeroed in the returned latent gradient.
template <typename S>
Mat<S> apply_feature_mask_backward(const Mat<S>& grad_out, const SpanMask& mask, RowVec<S>& grad_mask_vector);

/// visible(t, tau) iff chunk(tau) lies in [chunk(t) - left_chunks, chunk(t)].
AttentionMask chunk_attention_mask(int frames, int chunk_size, int left_chunks);

/// Every frame sees every other frame.
AttentionMask full_attention_mask(int frames);

}  // namespace sslt
