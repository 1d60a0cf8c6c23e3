// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acoustic encoder: two convolutional blocks that downsample time by 8,
// followed by a pre-norm Transformer whose self-attention adds a learned
// relative-position embedding to every key.

#pragma once

#include "sslt/layers.hpp"
#include "sslt/masking.hpp"
#include "sslt/tensor.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <random>
#include <vector>

namespace sslt {

struct EncoderConfig {
    int feature_dim = 80;
    std::array<int, 2> conv_channels{64, 128};
    std::array<int, 2> pool_strides{2, 4};
    int num_layers = 2;
    int d_model = 64;
    int ffn_dim = 128;
    int num_heads = 4;
    int max_relative_distance = 64;

    void validate() const;
    int head_dim() const { return d_model / num_heads; }
};

/// Latent length after both pooling stages: floor(floor(T/s0)/s1).
int downsample_length(int frames, const EncoderConfig& cfg);

/// Minimum number of input frames for which at least one latent frame survives.
int min_input_frames(const EncoderConfig& cfg);

/// Inclusive range of latent frames whose value can depend on input frame
/// `feature_frame` (3x3 convolutions spread one frame per layer before each
/// pooling stage). Ranges are clamped at 0 but not at the sequence end.
std::pair<int, int> latent_frames_influenced(int feature_frame, const EncoderConfig& cfg);

/// Lookup-table row for the offset tau - t, clamped to +-max_distance.
inline int relative_position_index(int t, int tau, int max_distance) {
    const int offset = std::clamp(tau - t, -max_distance, max_distance);
    return offset + max_distance;
}

template <typename S>
struct AttentionResult {
    Mat<S> output;                // [T x d_model], heads concatenated
    std::vector<Mat<S>> weights;  // per head, [T x T]; exact zeros where masked
};

template <typename S>
struct AttentionGrads {
    Mat<S> queries;
    Mat<S> keys;
    Mat<S> values;
    Mat<S> table;
};

/// Multi-head attention with weights softmax_tau(q_t . (k_tau + p(tau - t)))
/// restricted to visible positions. `table` holds one d_head-wide embedding
/// per clamped offset and is shared by all heads.
template <typename S>
AttentionResult<S> relative_attention(const Mat<S>& queries, const Mat<S>& keys, const Mat<S>& values,
                                      const Mat<S>& table, int num_heads, int max_distance,
                                      const AttentionMask& mask);

template <typename S>
AttentionGrads<S> relative_attention_backward(const Mat<S>& queries, const Mat<S>& keys, const Mat<S>& values,
                                              const Mat<S>& table, int num_heads, int max_distance,
                                              const AttentionResult<S>& forward, const Mat<S>& grad_output);

template <typename S>
class RelativeSelfAttention {
public:
    struct Cache {
        Mat<S> input;
        Mat<S> q, k, v;
        AttentionResult<S> attention;
    };

    RelativeSelfAttention() = default;
    RelativeSelfAttention(const std::string& name, const EncoderConfig& cfg);

    Mat<S> forward(const Mat<S>& x, const AttentionMask& mask, Cache& cache) const;
    Mat<S> backward(const Mat<S>& grad_out, const AttentionMask& mask, const Cache& cache);

    void init(std::mt19937_64& rng);
    void collect(ParamList<S>& out);

    Linear<S> query, key, value, output;
    Param<S> relative_table;  // [(2D+1) x d_head]

private:
    int num_heads_ = 1;
    int max_distance_ = 0;
};

/// x + Attn(LN(x)), then + FFN(LN(.)).
template <typename S>
class TransformerBlock {
public:
    struct Cache {
        typename LayerNorm<S>::Cache ln_attn;
        typename RelativeSelfAttention<S>::Cache attn;
        Mat<S> mid;
        typename LayerNorm<S>::Cache ln_ffn;
        Mat<S> ffn_in;
        Mat<S> ffn_hidden_pre;
        Mat<S> ffn_hidden;
    };

    TransformerBlock() = default;
    TransformerBlock(const std::string& name, const EncoderConfig& cfg);

    Mat<S> forward(const Mat<S>& x, const AttentionMask& mask, Cache& cache) const;
    Mat<S> backward(const Mat<S>& grad_out, const AttentionMask& mask, const Cache& cache);

    void init(std::mt19937_64& rng);
    void collect(ParamList<S>& out);

    LayerNorm<S> ln_attn;
    RelativeSelfAttention<S> attention;
    LayerNorm<S> ln_ffn;
    Linear<S> ffn_in;
    Linear<S> ffn_out;
};

/// Conv3x3 -> LN -> ReLU -> Conv3x3 -> LN -> ReLU -> time max-pool.
/// LayerNorm normalizes over channels at each time-frequency cell.
template <typename S>
class ConvBlock {
public:
    struct Cache {
        int time = 0;
        Mat<S> cols_a;
        typename LayerNorm<S>::Cache ln_a;
        Mat<S> norm_a;
        Mat<S> cols_b;
        typename LayerNorm<S>::Cache ln_b;
        Mat<S> norm_b;
        std::vector<std::int32_t> argmax;
    };

    ConvBlock() = default;
    ConvBlock(const std::string& name, int in_channels, int out_channels, int pool_stride, int freq);

    /// `x` is [time*freq x in_channels]; output is [(time/stride)*freq x out_channels].
    Mat<S> forward(const Mat<S>& x, int time, Cache& cache) const;
    Mat<S> backward(const Mat<S>& grad_out, const Cache& cache);

    void init(std::mt19937_64& rng);
    void collect(ParamList<S>& out);

    int pool_stride() const { return pool_stride_; }

private:
    int freq_ = 0;
    int pool_stride_ = 1;
    Conv3x3<S> conv_a_;
    LayerNorm<S> ln_a_;
    Conv3x3<S> conv_b_;
    LayerNorm<S> ln_b_;
};

/// Features [T x 80] -> latent z [T' x d_model].
template <typename S>
class ConvFeatureEncoder {
public:
    struct Cache {
        std::array<typename ConvBlock<S>::Cache, 2> blocks;
        Mat<S> flat;
    };

    ConvFeatureEncoder() = default;
    explicit ConvFeatureEncoder(const EncoderConfig& cfg);

    Mat<S> forward(const Mat<S>& features, Cache& cache) const;
    void backward(const Mat<S>& grad_latent, const Cache& cache);

    void init(std::mt19937_64& rng);
    void collect(ParamList<S>& out);

    Linear<S> projection;

private:
    EncoderConfig cfg_;
    std::array<ConvBlock<S>, 2> blocks_;
};

/// Stack of Transformer blocks followed by a final LayerNorm.
template <typename S>
class ContextNetwork {
public:
    struct Cache {
        std::vector<typename TransformerBlock<S>::Cache> blocks;
        Mat<S> last;
        typename LayerNorm<S>::Cache final_ln;
    };

    ContextNetwork() = default;
    explicit ContextNetwork(const EncoderConfig& cfg);

    Mat<S> forward(const Mat<S>& latent, const AttentionMask& mask, Cache& cache) const;
    Mat<S> backward(const Mat<S>& grad_out, const AttentionMask& mask, const Cache& cache);

    void init(std::mt19937_64& rng);
    void collect(ParamList<S>& out);

    std::vector<TransformerBlock<S>> blocks;
    LayerNorm<S> final_norm;
};

template <typename S>
class Encoder {
public:
    Encoder() = default;
    explicit Encoder(const EncoderConfig& cfg);

    /// conv_encode -> optional span-mask replacement -> Transformer stack.
    Mat<S> encode(const Mat<S>& features, const AttentionMask& mask,
                  const std::optional<SpanMask>& feature_mask = std::nullopt) const;

    Mat<S> conv_encode(const Mat<S>& features) const;

    void init(std::mt19937_64& rng);
    void collect(ParamList<S>& out);

    const EncoderConfig& config() const { return cfg_; }

    ConvFeatureEncoder<S> conv;
    ContextNetwork<S> context;
    Param<S> mask_embedding;  // [1 x d_model], replaces span-masked latent frames

private:
    EncoderConfig cfg_;
};

}  // namespace sslt
