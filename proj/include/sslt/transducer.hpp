// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Transducer head: LSTM prediction network, additive tanh joint network,
// the exact alignment-lattice loss and greedy decoding.
//
// Lattice convention: node (t, u) has consumed u labels and sits at encoder
// frame t. Blank moves (t, u) -> (t + 1, u); label y_{u+1} moves
// (t, u) -> (t, u + 1). Every alignment ends with the blank leaving
// (T' - 1, U).

#pragma once

#include "sslt/layers.hpp"
#include "sslt/tensor.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace sslt {

inline constexpr int kBlank = 0;

struct PredictionConfig {
    int vocab_size = 29;
    int num_blocks = 2;
    int lstm_cell = 64;
    int proj_dim = 64;
    int embed_dim = 64;

    void validate() const;
};

struct JointConfig {
    int joint_dim = 640;

    void validate() const;
};

/// Log-posteriors over the lattice, one row per node in (t, u) order.
template <typename S>
struct LatticeLogits {
    int frames = 0;  // T'
    int labels = 0;  // U
    int vocab = 0;   // V, blank included
    Mat<S> values;   // [(T' * (U + 1)) x V]

    Eigen::Index row(int t, int u) const { return static_cast<Eigen::Index>(t) * (labels + 1) + u; }
    S at(int t, int u, int k) const { return values(row(t, u), k); }
};

template <typename S>
class PredictionNetwork {
public:
    struct BlockCache {
        typename Lstm<S>::Cache lstm;
        Mat<S> lstm_out;
        typename LayerNorm<S>::Cache norm;
    };
    struct Cache {
        std::vector<int> tokens;
        std::vector<BlockCache> blocks;
    };
    struct State {
        std::vector<typename Lstm<S>::State> lstm;
    };

    PredictionNetwork() = default;
    explicit PredictionNetwork(const PredictionConfig& cfg);

    /// Row 0 is the start state (zero embedding); row u conditions on y_1..y_u.
    Mat<S> forward(std::span<const int> prefix, Cache& cache) const;
    Mat<S> forward(std::span<const int> prefix) const;
    void backward(const Mat<S>& grad_out, const Cache& cache);

    State initial_state() const;
    /// Feeds one token (or the start symbol when token < 0) and returns h.
    RowVec<S> step(int token, State& state) const;

    void init(std::mt19937_64& rng);
    void collect(ParamList<S>& out);

    const PredictionConfig& config() const { return cfg_; }

    Param<S> embedding;  // [V x embed_dim]; row 0 (blank) is never read

private:
    struct Block {
        Lstm<S> lstm;
        Linear<S> proj;
        LayerNorm<S> norm;
    };

    PredictionConfig cfg_;
    std::vector<Block> blocks_;
};

/// z_{t,u} = W_out tanh(W_enc c_t + W_pred h_u + b) + b_out, then log-softmax.
template <typename S>
class JointNetwork {
public:
    struct Cache {
        Mat<S> context;
        Mat<S> prediction;
        Mat<S> hidden;  // tanh activations, lattice row order
        Mat<S> probs;   // softmax of the output
    };
    struct Grads {
        Mat<S> context;
        Mat<S> prediction;
    };

    JointNetwork() = default;
    JointNetwork(int encoder_dim, int prediction_dim, int vocab_size, const JointConfig& cfg);

    LatticeLogits<S> forward(const Mat<S>& context, const Mat<S>& prediction, Cache& cache) const;
    LatticeLogits<S> forward(const Mat<S>& context, const Mat<S>& prediction) const;
    /// `grad_log_probs` is dL/d(log-posteriors), shaped like LatticeLogits::values.
    Grads backward(const Mat<S>& grad_log_probs, const Cache& cache);

    /// Log-posteriors for a single (c_t, h_u) pair.
    RowVec<S> log_probs(const RowVec<S>& context_row, const RowVec<S>& prediction_row) const;

    void init(std::mt19937_64& rng);
    void collect(ParamList<S>& out);

    Linear<S> encoder_proj;
    Linear<S> prediction_proj;
    Linear<S> output;
};

struct LatticeScores {
    Mat<double> alpha;  // [T' x (U + 1)]
    Mat<double> beta;   // [T' x (U + 1)]
    double log_likelihood = 0.0;
};

/// Log-space forward and backward recursions over the lattice.
template <typename S>
LatticeScores transducer_forward_backward(const LatticeLogits<S>& logits, std::span<const int> labels);

template <typename S>
struct TransducerResult {
    double loss = 0.0;
    Mat<S> grad;  // dL/d(log-posteriors), same shape as LatticeLogits::values
};

/// L = -ln P(y|x) summed over all alignments, with its exact gradient in
/// occupancy form.
template <typename S>
TransducerResult<S> transducer_loss(const LatticeLogits<S>& logits, std::span<const int> labels);

/// Enumerates every alignment explicitly; only for T' + U <= 12.
template <typename S>
double transducer_loss_bruteforce(const LatticeLogits<S>& logits, std::span<const int> labels);

inline constexpr int kBruteforceMaxLength = 12;

/// Argmax decoding; emits at most `max_symbols_per_frame` labels per frame.
template <typename S>
std::vector<int> greedy_decode(const Mat<S>& context, const PredictionNetwork<S>& prediction,
                               const JointNetwork<S>& joint, int max_symbols_per_frame = 10);

}  // namespace sslt
