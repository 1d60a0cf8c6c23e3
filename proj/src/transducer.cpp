// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#include "sslt/transducer.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sslt {

void PredictionConfig::validate() const {
    if (vocab_size < 2) throw std::invalid_argument("prediction: vocabulary needs blank plus at least one label");
    if (num_blocks < 1) throw std::invalid_argument("prediction: num_blocks must be >= 1");
    if (lstm_cell < 1 || proj_dim < 1 || embed_dim < 1) throw std::invalid_argument("prediction: dimensions must be positive");
}

void JointConfig::validate() const {
    if (joint_dim < 1) throw std::invalid_argument("joint: joint_dim must be positive");
}

namespace {

void check_labels(std::span<const int> labels, int vocab) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y == kBlank) throw std::invalid_argument("label sequence contains blank at position " + std::to_string(i));
        if (y < 0 || y >= vocab) throw std::out_of_range("label " + std::to_string(y) + " outside vocabulary");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// PredictionNetwork
// ---------------------------------------------------------------------------

template <typename S>
PredictionNetwork<S>::PredictionNetwork(const PredictionConfig& cfg)
    : embedding("prediction.embedding", cfg.vocab_size, cfg.embed_dim), cfg_(cfg) {
    cfg.validate();
    int in_dim = cfg.embed_dim;
    for (int b = 0; b < cfg.num_blocks; ++b) {
        const std::string name = "prediction.block" + std::to_string(b);
        blocks_.push_back(Block{Lstm<S>(name + ".lstm", in_dim, cfg.lstm_cell),
                                Linear<S>(name + ".proj", cfg.lstm_cell, cfg.proj_dim),
                                LayerNorm<S>(name + ".norm", cfg.proj_dim)});
        in_dim = cfg.proj_dim;
    }
}

template <typename S>
Mat<S> PredictionNetwork<S>::forward(std::span<const int> prefix, Cache& cache) const {
    check_labels(prefix, cfg_.vocab_size);
    cache.tokens.assign(prefix.begin(), prefix.end());
    Mat<S> x = Mat<S>::Zero(static_cast<Eigen::Index>(prefix.size()) + 1, cfg_.embed_dim);
    for (std::size_t u = 0; u < prefix.size(); ++u) x.row(static_cast<Eigen::Index>(u) + 1) = embedding.value.row(prefix[u]);
    cache.blocks.resize(blocks_.size());
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        BlockCache& bc = cache.blocks[b];
        bc.lstm_out = blocks_[b].lstm.forward(x, bc.lstm);
        x = blocks_[b].norm.forward(blocks_[b].proj.forward(bc.lstm_out), bc.norm);
    }
    return x;
}

template <typename S>
Mat<S> PredictionNetwork<S>::forward(std::span<const int> prefix) const {
    Cache cache;
    return forward(prefix, cache);
}

template <typename S>
void PredictionNetwork<S>::backward(const Mat<S>& grad_out, const Cache& cache) {
    Mat<S> g = grad_out;
    for (std::size_t b = blocks_.size(); b-- > 0;) {
        const BlockCache& bc = cache.blocks[b];
        g = blocks_[b].norm.backward(g, bc.norm);
        g = blocks_[b].proj.backward(bc.lstm_out, g);
        g = blocks_[b].lstm.backward(g, bc.lstm);
    }
    Mat<S>& ge = embedding.grad_accum();
    for (std::size_t u = 0; u < cache.tokens.size(); ++u) ge.row(cache.tokens[u]) += g.row(static_cast<Eigen::Index>(u) + 1);
}

template <typename S>
typename PredictionNetwork<S>::State PredictionNetwork<S>::initial_state() const {
    State s;
    for (const auto& b : blocks_) s.lstm.push_back(b.lstm.initial_state());
    return s;
}

template <typename S>
RowVec<S> PredictionNetwork<S>::step(int token, State& state) const {
    RowVec<S> x = RowVec<S>::Zero(cfg_.embed_dim);
    if (token >= 0) {
        if (token == kBlank || token >= cfg_.vocab_size) throw std::invalid_argument("prediction step: invalid token");
        x = embedding.value.row(token);
    }
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const RowVec<S> h = blocks_[b].lstm.step(x, state.lstm[b]);
        typename LayerNorm<S>::Cache scratch;
        x = blocks_[b].norm.forward(blocks_[b].proj.forward(h), scratch);
    }
    return x;
}

template <typename S>
void PredictionNetwork<S>::init(std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Eigen::Index i = 0; i < embedding.value.size(); ++i) embedding.value.data()[i] = static_cast<S>(dist(rng));
    embedding.value.row(kBlank).setZero();
    for (auto& b : blocks_) {
        b.lstm.init(rng);
        b.proj.init(rng);
    }
}

template <typename S>
void PredictionNetwork<S>::collect(ParamList<S>& out) {
    out.push_back(&embedding);
    for (auto& b : blocks_) {
        b.lstm.collect(out);
        b.proj.collect(out);
        b.norm.collect(out);
    }
}

// ---------------------------------------------------------------------------
// JointNetwork
// ---------------------------------------------------------------------------

template <typename S>
JointNetwork<S>::JointNetwork(int encoder_dim, int prediction_dim, int vocab_size, const JointConfig& cfg)
    : encoder_proj("joint.encoder_proj", encoder_dim, cfg.joint_dim),
      prediction_proj("joint.prediction_proj", prediction_dim, cfg.joint_dim, /*bias=*/false),
      output("joint.output", cfg.joint_dim, vocab_size) {
    cfg.validate();
}

template <typename S>
LatticeLogits<S> JointNetwork<S>::forward(const Mat<S>& context, const Mat<S>& prediction, Cache& cache) const {
    const int T = static_cast<int>(context.rows());
    const int U1 = static_cast<int>(prediction.rows());
    const Mat<S> a = encoder_proj.forward(context);
    const Mat<S> b = prediction_proj.forward(prediction);
    cache.context = context;
    cache.prediction = prediction;
    cache.hidden.resize(static_cast<Eigen::Index>(T) * U1, a.cols());
    for (int t = 0; t < T; ++t) {
        for (int u = 0; u < U1; ++u) {
            cache.hidden.row(static_cast<Eigen::Index>(t) * U1 + u) = (a.row(t) + b.row(u)).array().tanh();
        }
    }
    LatticeLogits<S> out;
    out.frames = T;
    out.labels = U1 - 1;
    out.vocab = output.out_dim();
    out.values = output.forward(cache.hidden);
    cache.probs.resize(out.values.rows(), out.values.cols());
    for (Eigen::Index r = 0; r < out.values.rows(); ++r) {
        const S lse = static_cast<S>(log_sum_exp(out.values.row(r)));
        out.values.row(r).array() -= lse;
        cache.probs.row(r) = out.values.row(r).array().exp();
    }
    return out;
}

template <typename S>
LatticeLogits<S> JointNetwork<S>::forward(const Mat<S>& context, const Mat<S>& prediction) const {
    Cache cache;
    return forward(context, prediction, cache);
}

template <typename S>
typename JointNetwork<S>::Grads JointNetwork<S>::backward(const Mat<S>& grad_log_probs, const Cache& cache) {
    const Eigen::Index T = cache.context.rows();
    const Eigen::Index U1 = cache.prediction.rows();
    const Eigen::Matrix<S, Eigen::Dynamic, 1> row_sum = grad_log_probs.rowwise().sum();
    const Mat<S> grad_z = grad_log_probs - (cache.probs.array().colwise() * row_sum.array()).matrix();
    const Mat<S> grad_hidden = output.backward(cache.hidden, grad_z);
    const Mat<S> grad_pre = grad_hidden.array() * (S(1) - cache.hidden.array().square());

    Mat<S> grad_a = Mat<S>::Zero(T, grad_pre.cols());
    Mat<S> grad_b = Mat<S>::Zero(U1, grad_pre.cols());
    for (Eigen::Index t = 0; t < T; ++t) {
        for (Eigen::Index u = 0; u < U1; ++u) {
            const auto r = grad_pre.row(t * U1 + u);
            grad_a.row(t) += r;
            grad_b.row(u) += r;
        }
    }
    Grads g;
    g.context = encoder_proj.backward(cache.context, grad_a);
    g.prediction = prediction_proj.backward(cache.prediction, grad_b);
    return g;
}

template <typename S>
RowVec<S> JointNetwork<S>::log_probs(const RowVec<S>& context_row, const RowVec<S>& prediction_row) const {
    const Mat<S> a = encoder_proj.forward(context_row);
    const Mat<S> b = prediction_proj.forward(prediction_row);
    const Mat<S> hidden = (a + b).array().tanh();
    RowVec<S> z = output.forward(hidden).row(0);
    z.array() -= static_cast<S>(log_sum_exp(z));
    return z;
}

template <typename S>
void JointNetwork<S>::init(std::mt19937_64& rng) {
    encoder_proj.init(rng);
    prediction_proj.init(rng);
    output.init(rng);
}

template <typename S>
void JointNetwork<S>::collect(ParamList<S>& out) {
    encoder_proj.collect(out);
    prediction_proj.collect(out);
    output.collect(out);
}

// ---------------------------------------------------------------------------
// Lattice loss
// ---------------------------------------------------------------------------

namespace {

template <typename S>
void check_lattice(const LatticeLogits<S>& logits, std::span<const int> labels) {
    if (logits.labels != static_cast<int>(labels.size())) {
        throw std::invalid_argument("transducer: lattice has U=" + std::to_string(logits.labels) + " but " +
                                    std::to_string(labels.size()) + " labels were given");
    }
    if (logits.frames < 1) throw std::invalid_argument("transducer: no encoder frames, no alignment exists");
    if (logits.values.rows() != static_cast<Eigen::Index>(logits.frames) * (logits.labels + 1) ||
        logits.values.cols() != logits.vocab) {
        throw std::invalid_argument("transducer: logits tensor shape does not match T', U, V");
    }
    check_labels(labels, logits.vocab);
}

}  // namespace

template <typename S>
LatticeScores transducer_forward_backward(const LatticeLogits<S>& logits, std::span<const int> labels) {
    check_lattice(logits, labels);
    const int T = logits.frames;
    const int U = logits.labels;
    auto lp = [&](int t, int u, int k) { return static_cast<double>(logits.at(t, u, k)); };

    LatticeScores s;
    s.alpha = Mat<double>::Constant(T, U + 1, -INFINITY);
    s.beta = Mat<double>::Constant(T, U + 1, -INFINITY);
    for (int t = 0; t < T; ++t) {
        for (int u = 0; u <= U; ++u) {
            if (t == 0 && u == 0) {
                s.alpha(0, 0) = 0.0;
                continue;
            }
            double a = -INFINITY;
            if (t > 0) a = s.alpha(t - 1, u) + lp(t - 1, u, kBlank);
            if (u > 0) a = log_add_exp(a, s.alpha(t, u - 1) + lp(t, u - 1, labels[u - 1]));
            s.alpha(t, u) = a;
        }
    }
    for (int t = T - 1; t >= 0; --t) {
        for (int u = U; u >= 0; --u) {
            if (t == T - 1 && u == U) {
                s.beta(t, u) = lp(t, u, kBlank);
                continue;
            }
            double b = -INFINITY;
            if (t + 1 < T) b = s.beta(t + 1, u) + lp(t, u, kBlank);
            if (u < U) b = log_add_exp(b, s.beta(t, u + 1) + lp(t, u, labels[u]));
            s.beta(t, u) = b;
        }
    }
    s.log_likelihood = s.alpha(T - 1, U) + lp(T - 1, U, kBlank);
    return s;
}

template <typename S>
TransducerResult<S> transducer_loss(const LatticeLogits<S>& logits, std::span<const int> labels) {
    const LatticeScores s = transducer_forward_backward(logits, labels);
    const int T = logits.frames;
    const int U = logits.labels;
    const double total = s.log_likelihood;

    TransducerResult<S> r;
    r.loss = -total;
    r.grad = Mat<S>::Zero(logits.values.rows(), logits.values.cols());
    for (int t = 0; t < T; ++t) {
        for (int u = 0; u <= U; ++u) {
            const Eigen::Index row = logits.row(t, u);
            const double a = s.alpha(t, u);
            const double next_blank = (t + 1 < T) ? s.beta(t + 1, u) : (u == U ? 0.0 : -INFINITY);
            r.grad(row, kBlank) = static_cast<S>(
                -std::exp(a + static_cast<double>(logits.values(row, kBlank)) + next_blank - total));
            if (u < U) {
                const int y = labels[u];
                r.grad(row, y) = static_cast<S>(
                    -std::exp(a + static_cast<double>(logits.values(row, y)) + s.beta(t, u + 1) - total));
            }
        }
    }
    return r;
}

template <typename S>
double transducer_loss_bruteforce(const LatticeLogits<S>& logits, std::span<const int> labels) {
    check_lattice(logits, labels);
    const int T = logits.frames;
    const int U = logits.labels;
    if (T + U > kBruteforceMaxLength) {
        throw std::invalid_argument("transducer_loss_bruteforce: T'+U=" + std::to_string(T + U) + " exceeds " +
                                    std::to_string(kBruteforceMaxLength));
    }
    // Each alignment is a word of T' blanks and U labels ending in blank;
    // bit i of `code` set means symbol i (of the first T'+U-1) is a label.
    const int free_len = T + U - 1;
    double total = 0.0;
    for (std::uint32_t code = 0; code < (1u << free_len); ++code) {
        if (std::popcount(code) != U) continue;
        int t = 0, u = 0;
        double prob = 1.0;
        for (int i = 0; i < free_len; ++i) {
            if (code & (1u << i)) {
                prob *= std::exp(static_cast<double>(logits.at(t, u, labels[u])));
                ++u;
            } else {
                prob *= std::exp(static_cast<double>(logits.at(t, u, kBlank)));
                ++t;
            }
        }
        prob *= std::exp(static_cast<double>(logits.at(t, u, kBlank)));
        total += prob;
    }
    return -std::log(total);
}

template <typename S>
std::vector<int> greedy_decode(const Mat<S>& context, const PredictionNetwork<S>& prediction,
                               const JointNetwork<S>& joint, int max_symbols_per_frame) {
    std::vector<int> out;
    auto state = prediction.initial_state();
    RowVec<S> h = prediction.step(-1, state);
    for (Eigen::Index t = 0; t < context.rows(); ++t) {
        const RowVec<S> c = context.row(t);
        for (int emitted = 0; emitted < max_symbols_per_frame; ++emitted) {
            const RowVec<S> lp = joint.log_probs(c, h);
            Eigen::Index best = 0;
            lp.maxCoeff(&best);
            if (best == kBlank) break;
            out.push_back(static_cast<int>(best));
            h = prediction.step(static_cast<int>(best), state);
        }
    }
    return out;
}

#define SSLT_INSTANTIATE(S)                                                                                   \
    template class PredictionNetwork<S>;                                                                      \
    template class JointNetwork<S>;                                                                           \
    template LatticeScores transducer_forward_backward(const LatticeLogits<S>&, std::span<const int>);        \
    template TransducerResult<S> transducer_loss(const LatticeLogits<S>&, std::span<const int>);              \
    template double transducer_loss_bruteforce(const LatticeLogits<S>&, std::span<const int>);                \
    template std::vector<int> greedy_decode(const Mat<S>&, const PredictionNetwork<S>&, const JointNetwork<S>&, \
                                            int);

SSLT_INSTANTIATE(float)
SSLT_INSTANTIATE(double)

#undef SSLT_INSTANTIATE

}  // namespace sslt
