// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#include "sslt/encoder.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace sslt {

void EncoderConfig::validate() const {
    if (feature_dim < 1) throw std::invalid_argument("encoder: feature_dim must be positive");
    for (int c : conv_channels) {
        if (c < 1) throw std::invalid_argument("encoder: conv channels must be positive");
    }
    for (int s : pool_strides) {
        if (s < 1) throw std::invalid_argument("encoder: pool strides must be positive");
    }
    if (num_layers < 0) throw std::invalid_argument("encoder: num_layers must be >= 0");
    if (d_model < 1 || ffn_dim < 1 || num_heads < 1) throw std::invalid_argument("encoder: dimensions must be positive");
    if (d_model % num_heads != 0) throw std::invalid_argument("encoder: d_model must be divisible by num_heads");
    if (max_relative_distance < 0) throw std::invalid_argument("encoder: max_relative_distance must be >= 0");
}

int downsample_length(int frames, const EncoderConfig& cfg) {
    return (frames / cfg.pool_strides[0]) / cfg.pool_strides[1];
}

int min_input_frames(const EncoderConfig& cfg) {
    return cfg.pool_strides[0] * cfg.pool_strides[1];
}

namespace {

int floor_div(int a, int b) {
    int q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

}  // namespace

std::pair<int, int> latent_frames_influenced(int feature_frame, const EncoderConfig& cfg) {
    int lo = feature_frame;
    int hi = feature_frame;
    for (int stride : cfg.pool_strides) {
        // two 3x3 convolutions, then pooling
        lo = std::max(0, floor_div(lo - 2, stride));
        hi = floor_div(hi + 2, stride);
    }
    return {lo, hi};
}

// ---------------------------------------------------------------------------
// relative attention
// ---------------------------------------------------------------------------

template <typename S>
AttentionResult<S> relative_attention(const Mat<S>& queries, const Mat<S>& keys, const Mat<S>& values,
                                      const Mat<S>& table, int num_heads, int max_distance,
                                      const AttentionMask& mask) {
    const Eigen::Index T = queries.rows();
    const Eigen::Index d = queries.cols();
    if (keys.rows() != T || values.rows() != T || keys.cols() != d || values.cols() != d) {
        throw std::invalid_argument("relative_attention: q/k/v shape mismatch");
    }
    if (num_heads < 1 || d % num_heads != 0) throw std::invalid_argument("relative_attention: bad head count");
    const Eigen::Index dh = d / num_heads;
    if (table.rows() != 2 * max_distance + 1 || table.cols() != dh) {
        throw std::invalid_argument("relative_attention: relative table must be [(2D+1) x d_head]");
    }
    if (mask.frames() != T) throw std::invalid_argument("relative_attention: mask size does not match sequence");
    mask.validate();

    AttentionResult<S> result;
    result.output.resize(T, d);
    result.weights.resize(static_cast<std::size_t>(num_heads));
    for (int h = 0; h < num_heads; ++h) {
        const auto qh = queries.middleCols(h * dh, dh);
        const auto kh = keys.middleCols(h * dh, dh);
        const auto vh = values.middleCols(h * dh, dh);
        const Mat<S> content = qh * kh.transpose();
        const Mat<S> position = qh * table.transpose();

        Mat<S>& w = result.weights[static_cast<std::size_t>(h)];
        w.setZero(T, T);
        for (Eigen::Index t = 0; t < T; ++t) {
            S best = -std::numeric_limits<S>::infinity();
            for (Eigen::Index tau = 0; tau < T; ++tau) {
                if (!mask.visible(static_cast<int>(t), static_cast<int>(tau))) continue;
                const S s = content(t, tau) +
                            position(t, relative_position_index(static_cast<int>(t), static_cast<int>(tau), max_distance));
                w(t, tau) = s;
                best = std::max(best, s);
            }
            S total = 0;
            for (Eigen::Index tau = 0; tau < T; ++tau) {
                if (!mask.visible(static_cast<int>(t), static_cast<int>(tau))) continue;
                w(t, tau) = std::exp(w(t, tau) - best);
                total += w(t, tau);
            }
            w.row(t) /= total;
        }
        result.output.middleCols(h * dh, dh).noalias() = w * vh;
    }
    return result;
}

template <typename S>
AttentionGrads<S> relative_attention_backward(const Mat<S>& queries, const Mat<S>& keys, const Mat<S>& values,
                                              const Mat<S>& table, int num_heads, int max_distance,
                                              const AttentionResult<S>& forward, const Mat<S>& grad_output) {
    const Eigen::Index T = queries.rows();
    const Eigen::Index d = queries.cols();
    const Eigen::Index dh = d / num_heads;
    AttentionGrads<S> g;
    g.queries.setZero(T, d);
    g.keys.setZero(T, d);
    g.values.setZero(T, d);
    g.table.setZero(table.rows(), table.cols());
    for (int h = 0; h < num_heads; ++h) {
        const auto qh = queries.middleCols(h * dh, dh);
        const auto kh = keys.middleCols(h * dh, dh);
        const auto vh = values.middleCols(h * dh, dh);
        const auto go = grad_output.middleCols(h * dh, dh);
        const Mat<S>& w = forward.weights[static_cast<std::size_t>(h)];

        g.values.middleCols(h * dh, dh).noalias() = w.transpose() * go;
        const Mat<S> grad_w = go * vh.transpose();
        // softmax backward; masked entries have w == 0 and stay 0
        const Eigen::Matrix<S, Eigen::Dynamic, 1> row_dot = (grad_w.array() * w.array()).rowwise().sum();
        const Mat<S> grad_s = w.array() * (grad_w.array().colwise() - row_dot.array());

        Mat<S> grad_pos = Mat<S>::Zero(T, table.rows());
        for (Eigen::Index t = 0; t < T; ++t) {
            for (Eigen::Index tau = 0; tau < T; ++tau) {
                if (grad_s(t, tau) == S(0)) continue;
                grad_pos(t, relative_position_index(static_cast<int>(t), static_cast<int>(tau), max_distance)) +=
                    grad_s(t, tau);
            }
        }
        g.queries.middleCols(h * dh, dh).noalias() = grad_s * kh + grad_pos * table;
        g.keys.middleCols(h * dh, dh).noalias() = grad_s.transpose() * qh;
        g.table.noalias() += grad_pos.transpose() * qh;
    }
    return g;
}

// ---------------------------------------------------------------------------
// RelativeSelfAttention
// ---------------------------------------------------------------------------

template <typename S>
RelativeSelfAttention<S>::RelativeSelfAttention(const std::string& name, const EncoderConfig& cfg)
    : query(name + ".query", cfg.d_model, cfg.d_model),
      key(name + ".key", cfg.d_model, cfg.d_model),
      value(name + ".value", cfg.d_model, cfg.d_model),
      output(name + ".output", cfg.d_model, cfg.d_model),
      relative_table(name + ".relative_table", 2 * cfg.max_relative_distance + 1, cfg.head_dim()),
      num_heads_(cfg.num_heads),
      max_distance_(cfg.max_relative_distance) {}

template <typename S>
Mat<S> RelativeSelfAttention<S>::forward(const Mat<S>& x, const AttentionMask& mask, Cache& cache) const {
    cache.input = x;
    cache.q = query.forward(x);
    cache.k = key.forward(x);
    cache.v = value.forward(x);
    cache.attention =
        relative_attention(cache.q, cache.k, cache.v, relative_table.value, num_heads_, max_distance_, mask);
    return output.forward(cache.attention.output);
}

template <typename S>
Mat<S> RelativeSelfAttention<S>::backward(const Mat<S>& grad_out, const AttentionMask& /*mask*/,
                                          const Cache& cache) {
    const Mat<S> grad_heads = output.backward(cache.attention.output, grad_out);
    const AttentionGrads<S> g = relative_attention_backward(cache.q, cache.k, cache.v, relative_table.value,
                                                            num_heads_, max_distance_, cache.attention, grad_heads);
    relative_table.grad_accum() += g.table;
    Mat<S> dx = query.backward(cache.input, g.queries);
    dx += key.backward(cache.input, g.keys);
    dx += value.backward(cache.input, g.values);
    return dx;
}

template <typename S>
void RelativeSelfAttention<S>::init(std::mt19937_64& rng) {
    query.init(rng);
    key.init(rng);
    value.init(rng);
    init_fan_in_uniform(relative_table, relative_table.value.cols(), rng);
    output.weight.value.setZero();
    output.bias.value.setZero();
}

template <typename S>
void RelativeSelfAttention<S>::collect(ParamList<S>& out) {
    query.collect(out);
    key.collect(out);
    value.collect(out);
    out.push_back(&relative_table);
    output.collect(out);
}

// ---------------------------------------------------------------------------
// TransformerBlock
// ---------------------------------------------------------------------------

template <typename S>
TransformerBlock<S>::TransformerBlock(const std::string& name, const EncoderConfig& cfg)
    : ln_attn(name + ".ln_attn", cfg.d_model),
      attention(name + ".attn", cfg),
      ln_ffn(name + ".ln_ffn", cfg.d_model),
      ffn_in(name + ".ffn_in", cfg.d_model, cfg.ffn_dim),
      ffn_out(name + ".ffn_out", cfg.ffn_dim, cfg.d_model) {}

template <typename S>
Mat<S> TransformerBlock<S>::forward(const Mat<S>& x, const AttentionMask& mask, Cache& cache) const {
    const Mat<S> attn_in = ln_attn.forward(x, cache.ln_attn);
    cache.mid = x + attention.forward(attn_in, mask, cache.attn);
    cache.ffn_in = ln_ffn.forward(cache.mid, cache.ln_ffn);
    cache.ffn_hidden_pre = ffn_in.forward(cache.ffn_in);
    cache.ffn_hidden = relu(cache.ffn_hidden_pre);
    return cache.mid + ffn_out.forward(cache.ffn_hidden);
}

template <typename S>
Mat<S> TransformerBlock<S>::backward(const Mat<S>& grad_out, const AttentionMask& mask, const Cache& cache) {
    const Mat<S> g_hidden = ffn_out.backward(cache.ffn_hidden, grad_out);
    const Mat<S> g_pre = relu_backward(cache.ffn_hidden_pre, g_hidden);
    const Mat<S> g_ffn_in = ffn_in.backward(cache.ffn_in, g_pre);
    const Mat<S> g_mid = grad_out + ln_ffn.backward(g_ffn_in, cache.ln_ffn);
    const Mat<S> g_attn_in = attention.backward(g_mid, mask, cache.attn);
    return g_mid + ln_attn.backward(g_attn_in, cache.ln_attn);
}

template <typename S>
void TransformerBlock<S>::init(std::mt19937_64& rng) {
    attention.init(rng);
    ffn_in.init(rng);
    ffn_out.weight.value.setZero();
    ffn_out.bias.value.setZero();
}

template <typename S>
void TransformerBlock<S>::collect(ParamList<S>& out) {
    ln_attn.collect(out);
    attention.collect(out);
    ln_ffn.collect(out);
    ffn_in.collect(out);
    ffn_out.collect(out);
}

// ---------------------------------------------------------------------------
// Convolutional feature encoder
// ---------------------------------------------------------------------------

template <typename S>
ConvBlock<S>::ConvBlock(const std::string& name, int in_channels, int out_channels, int pool_stride, int freq)
    : freq_(freq),
      pool_stride_(pool_stride),
      conv_a_(name + ".conv_a", in_channels, out_channels),
      ln_a_(name + ".ln_a", out_channels),
      conv_b_(name + ".conv_b", out_channels, out_channels),
      ln_b_(name + ".ln_b", out_channels) {}

template <typename S>
Mat<S> ConvBlock<S>::forward(const Mat<S>& x, int time, Cache& cache) const {
    cache.time = time;
    const Mat<S> pre_a = conv_a_.forward(x, time, freq_, cache.cols_a);
    cache.norm_a = ln_a_.forward(pre_a, cache.ln_a);
    const Mat<S> act_a = relu(cache.norm_a);
    const Mat<S> pre_b = conv_b_.forward(act_a, time, freq_, cache.cols_b);
    cache.norm_b = ln_b_.forward(pre_b, cache.ln_b);
    return TimeMaxPool<S>::forward(relu(cache.norm_b), time, freq_, pool_stride_, cache.argmax);
}

template <typename S>
Mat<S> ConvBlock<S>::backward(const Mat<S>& grad_out, const Cache& cache) {
    const Eigen::Index rows = static_cast<Eigen::Index>(cache.time) * freq_;
    const Mat<S> g_act_b = TimeMaxPool<S>::backward(grad_out, cache.argmax, rows);
    const Mat<S> g_pre_b = ln_b_.backward(relu_backward(cache.norm_b, g_act_b), cache.ln_b);
    const Mat<S> g_act_a = conv_b_.backward(cache.cols_b, g_pre_b, cache.time, freq_);
    const Mat<S> g_pre_a = ln_a_.backward(relu_backward(cache.norm_a, g_act_a), cache.ln_a);
    return conv_a_.backward(cache.cols_a, g_pre_a, cache.time, freq_);
}

template <typename S>
void ConvBlock<S>::init(std::mt19937_64& rng) {
    conv_a_.init(rng);
    conv_b_.init(rng);
}

template <typename S>
void ConvBlock<S>::collect(ParamList<S>& out) {
    conv_a_.collect(out);
    ln_a_.collect(out);
    conv_b_.collect(out);
    ln_b_.collect(out);
}

template <typename S>
ConvFeatureEncoder<S>::ConvFeatureEncoder(const EncoderConfig& cfg)
    : projection("encoder.proj", cfg.feature_dim * cfg.conv_channels[1], cfg.d_model),
      cfg_(cfg),
      blocks_{ConvBlock<S>("encoder.conv0", 1, cfg.conv_channels[0], cfg.pool_strides[0], cfg.feature_dim),
              ConvBlock<S>("encoder.conv1", cfg.conv_channels[0], cfg.conv_channels[1], cfg.pool_strides[1],
                           cfg.feature_dim)} {}

template <typename S>
Mat<S> ConvFeatureEncoder<S>::forward(const Mat<S>& features, Cache& cache) const {
    const int T = static_cast<int>(features.rows());
    if (features.cols() != cfg_.feature_dim) {
        throw std::invalid_argument("conv_encode: expected " + std::to_string(cfg_.feature_dim) +
                                    "-dimensional features, got " + std::to_string(features.cols()));
    }
    if (T < min_input_frames(cfg_)) {
        throw std::invalid_argument("conv_encode: need at least " + std::to_string(min_input_frames(cfg_)) +
                                    " frames, got " + std::to_string(T));
    }
    const Mat<S> x0 = Eigen::Map<const Mat<S>>(features.data(), features.size(), 1);
    const Mat<S> x1 = blocks_[0].forward(x0, T, cache.blocks[0]);
    const int t1 = T / cfg_.pool_strides[0];
    const Mat<S> x2 = blocks_[1].forward(x1, t1, cache.blocks[1]);
    const int t2 = t1 / cfg_.pool_strides[1];
    cache.flat = Eigen::Map<const Mat<S>>(x2.data(), t2, x2.size() / t2);
    return projection.forward(cache.flat);
}

template <typename S>
void ConvFeatureEncoder<S>::backward(const Mat<S>& grad_latent, const Cache& cache) {
    const Mat<S> g_flat = projection.backward(cache.flat, grad_latent);
    const Mat<S> g_x2 = Eigen::Map<const Mat<S>>(g_flat.data(), g_flat.size() / cfg_.conv_channels[1],
                                                 cfg_.conv_channels[1]);
    const Mat<S> g_x1 = blocks_[1].backward(g_x2, cache.blocks[1]);
    blocks_[0].backward(g_x1, cache.blocks[0]);
}

template <typename S>
void ConvFeatureEncoder<S>::init(std::mt19937_64& rng) {
    blocks_[0].init(rng);
    blocks_[1].init(rng);
    projection.init(rng);
}

template <typename S>
void ConvFeatureEncoder<S>::collect(ParamList<S>& out) {
    blocks_[0].collect(out);
    blocks_[1].collect(out);
    projection.collect(out);
}

// ---------------------------------------------------------------------------
// Context network and encoder
// ---------------------------------------------------------------------------

template <typename S>
ContextNetwork<S>::ContextNetwork(const EncoderConfig& cfg) : final_norm("encoder.final_ln", cfg.d_model) {
    blocks.reserve(static_cast<std::size_t>(cfg.num_layers));
    for (int l = 0; l < cfg.num_layers; ++l) blocks.emplace_back("encoder.block" + std::to_string(l), cfg);
}

template <typename S>
Mat<S> ContextNetwork<S>::forward(const Mat<S>& latent, const AttentionMask& mask, Cache& cache) const {
    cache.blocks.resize(blocks.size());
    Mat<S> x = latent;
    for (std::size_t l = 0; l < blocks.size(); ++l) x = blocks[l].forward(x, mask, cache.blocks[l]);
    return final_norm.forward(x, cache.final_ln);
}

template <typename S>
Mat<S> ContextNetwork<S>::backward(const Mat<S>& grad_out, const AttentionMask& mask, const Cache& cache) {
    Mat<S> g = final_norm.backward(grad_out, cache.final_ln);
    for (std::size_t l = blocks.size(); l-- > 0;) g = blocks[l].backward(g, mask, cache.blocks[l]);
    return g;
}

template <typename S>
void ContextNetwork<S>::init(std::mt19937_64& rng) {
    for (auto& b : blocks) b.init(rng);
}

template <typename S>
void ContextNetwork<S>::collect(ParamList<S>& out) {
    for (auto& b : blocks) b.collect(out);
    final_norm.collect(out);
}

template <typename S>
Encoder<S>::Encoder(const EncoderConfig& cfg)
    : conv(cfg), context(cfg), mask_embedding("encoder.mask_embedding", 1, cfg.d_model), cfg_(cfg) {
    cfg.validate();
}

template <typename S>
Mat<S> Encoder<S>::conv_encode(const Mat<S>& features) const {
    typename ConvFeatureEncoder<S>::Cache cache;
    return conv.forward(features, cache);
}

template <typename S>
Mat<S> Encoder<S>::encode(const Mat<S>& features, const AttentionMask& mask,
                          const std::optional<SpanMask>& feature_mask) const {
    Mat<S> latent = conv_encode(features);
    if (feature_mask) latent = apply_feature_mask<S>(latent, *feature_mask, mask_embedding.value.row(0));
    typename ContextNetwork<S>::Cache cache;
    return context.forward(latent, mask, cache);
}

template <typename S>
void Encoder<S>::init(std::mt19937_64& rng) {
    conv.init(rng);
    context.init(rng);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (Eigen::Index i = 0; i < mask_embedding.value.size(); ++i) {
        mask_embedding.value.data()[i] = static_cast<S>(dist(rng));
    }
}

template <typename S>
void Encoder<S>::collect(ParamList<S>& out) {
    conv.collect(out);
    out.push_back(&mask_embedding);
    context.collect(out);
}

#define SSLT_INSTANTIATE(S)                                                                                        \
    template AttentionResult<S> relative_attention(const Mat<S>&, const Mat<S>&, const Mat<S>&, const Mat<S>&, int, \
                                                   int, const AttentionMask&);                                    \
    template AttentionGrads<S> relative_attention_backward(const Mat<S>&, const Mat<S>&, const Mat<S>&,           \
                                                           const Mat<S>&, int, int, const AttentionResult<S>&,    \
                                                           const Mat<S>&);                                        \
    template class RelativeSelfAttention<S>;                                                                       \
    template class TransformerBlock<S>;                                                                            \
    template class ConvBlock<S>;                                                                                   \
    template class ConvFeatureEncoder<S>;                                                                          \
    template class ContextNetwork<S>;                                                                              \
    template class Encoder<S>;

SSLT_INSTANTIATE(float)
SSLT_INSTANTIATE(double)

#undef SSLT_INSTANTIATE

}  // namespace sslt
