// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#include "sslt/masking.hpp"

#include <algorithm>
#include <stdexcept>

namespace sslt {

bool SpanMask::contains(int t) const {
    return std::binary_search(indices.begin(), indices.end(), t);
}

AttentionMask::AttentionMask(int frames, bool visible)
    : frames_(frames), bits_(static_cast<std::size_t>(frames) * frames, visible ? 1 : 0) {}

void AttentionMask::validate() const {
    for (int t = 0; t < frames_; ++t) {
        bool any = false;
        for (int tau = 0; tau < frames_ && !any; ++tau) any = visible(t, tau);
        if (!any) throw std::invalid_argument("attention mask row " + std::to_string(t) + " has no visible position");
    }
}

std::string AttentionMask::to_string() const {
    std::string out;
    out.reserve(static_cast<std::size_t>(frames_) * (frames_ + 1));
    for (int t = 0; t < frames_; ++t) {
        for (int tau = 0; tau < frames_; ++tau) out.push_back(visible(t, tau) ? '1' : '0');
        out.push_back('\n');
    }
    return out;
}

SpanMask span_mask_from_starts(int length, const std::vector<int>& starts, int span) {
    std::vector<std::uint8_t> hit(static_cast<std::size_t>(length), 0);
    for (int s : starts) {
        if (s < 0 || s >= length) throw std::out_of_range("span start outside sequence");
        for (int i = s; i < std::min(s + span, length); ++i) hit[static_cast<std::size_t>(i)] = 1;
    }
    SpanMask mask;
    mask.length = length;
    for (int i = 0; i < length; ++i) {
        if (hit[static_cast<std::size_t>(i)]) mask.indices.push_back(i);
    }
    return mask;
}

SpanMask sample_span_mask(int length, const SpanMaskConfig& cfg, std::mt19937_64& rng) {
    if (length <= 0) throw std::invalid_argument("sample_span_mask: sequence length must be positive");
    if (!(cfg.start_probability > 0.0 && cfg.start_probability < 1.0)) {
        throw std::invalid_argument("sample_span_mask: start probability must lie in (0, 1)");
    }
    if (cfg.span < 1) throw std::invalid_argument("sample_span_mask: span must be >= 1");

    std::bernoulli_distribution is_start(cfg.start_probability);
    std::vector<int> starts;
    for (int i = 0; i < length; ++i) {
        if (is_start(rng)) starts.push_back(i);
    }
    if (starts.empty()) {
        std::uniform_int_distribution<int> pick(0, length - 1);
        starts.push_back(pick(rng));
    }
    return span_mask_from_starts(length, starts, cfg.span);
}

template <typename S>
Mat<S> apply_feature_mask(const Mat<S>& latent, const SpanMask& mask, const RowVec<S>& mask_vector) {
    if (mask_vector.size() != latent.cols()) throw std::invalid_argument("mask vector width mismatch");
    Mat<S> out = latent;
    for (int t : mask.indices) {
        if (t < 0 || t >= latent.rows()) throw std::out_of_range("masked index outside latent sequence");
        out.row(t) = mask_vector;
    }
    return out;
}

template <typename S>
Mat<S> apply_feature_mask_backward(const Mat<S>& grad_out, const SpanMask& mask, RowVec<S>& grad_mask_vector) {
    Mat<S> grad = grad_out;
    for (int t : mask.indices) {
        grad_mask_vector += grad_out.row(t);
        grad.row(t).setZero();
    }
    return grad;
}

AttentionMask chunk_attention_mask(int frames, int chunk_size, int left_chunks) {
    if (frames <= 0) throw std::invalid_argument("chunk_attention_mask: frame count must be positive");
    if (chunk_size < 1) throw std::invalid_argument("chunk_attention_mask: chunk size must be >= 1");
    if (left_chunks < 0) throw std::invalid_argument("chunk_attention_mask: left chunk count must be >= 0");
    AttentionMask mask(frames, false);
    for (int t = 0; t < frames; ++t) {
        const int chunk = t / chunk_size;
        const int first = std::max(0, (chunk - left_chunks) * chunk_size);
        const int last = std::min(frames, (chunk + 1) * chunk_size);
        for (int tau = first; tau < last; ++tau) mask.set(t, tau, true);
    }
    return mask;
}

AttentionMask full_attention_mask(int frames) {
    if (frames <= 0) throw std::invalid_argument("full_attention_mask: frame count must be positive");
    return AttentionMask(frames, true);
}

template Mat<float> apply_feature_mask(const Mat<float>&, const SpanMask&, const RowVec<float>&);
template Mat<double> apply_feature_mask(const Mat<double>&, const SpanMask&, const RowVec<double>&);
template Mat<float> apply_feature_mask_backward(const Mat<float>&, const SpanMask&, RowVec<float>&);
template Mat<double> apply_feature_mask_backward(const Mat<double>&, const SpanMask&, RowVec<double>&);

}  // namespace sslt
