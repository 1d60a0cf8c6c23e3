// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable building blocks. Every layer exposes forward(), which fills
// a cache, and backward(), which consumes that cache, accumulates parameter
// gradients and returns the gradient with respect to the layer input.

#pragma once

#include "sslt/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace sslt {

template <typename S>
class Linear {
public:
    Linear() = default;
    Linear(const std::string& name, int in_dim, int out_dim, bool bias = true);

    Mat<S> forward(const Mat<S>& x) const;
    /// Returns dL/dx; `x` is the input that was passed to forward().
    Mat<S> backward(const Mat<S>& x, const Mat<S>& grad_out);

    void init(std::mt19937_64& rng);
    void collect(ParamList<S>& out);

    int in_dim() const { return in_dim_; }
    int out_dim() const { return out_dim_; }
    bool has_bias() const { return has_bias_; }

    Param<S> weight;  // [out x in]
    Param<S> bias;    // [1 x out]

private:
    int in_dim_ = 0;
    int out_dim_ = 0;
    bool has_bias_ = true;
};

/// Row-wise layer normalization with learned gain and shift.
template <typename S>
class LayerNorm {
public:
    struct Cache {
        Mat<S> normalized;
        Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std;
    };

    LayerNorm() = default;
    LayerNorm(const std::string& name, int dim, double eps = 1e-5);

    Mat<S> forward(const Mat<S>& x, Cache& cache) const;
    Mat<S> backward(const Mat<S>& grad_out, const Cache& cache);

    void collect(ParamList<S>& out);

    Param<S> gain;   // [1 x dim]
    Param<S> shift;  // [1 x dim]

private:
    double eps_ = 1e-5;
};

template <typename S>
Mat<S> relu(const Mat<S>& x) {
    return x.cwiseMax(S(0));
}

/// dL/dx for y = relu(x) given x.
template <typename S>
Mat<S> relu_backward(const Mat<S>& x, const Mat<S>& grad_out) {
    return (x.array() > S(0)).select(grad_out, S(0));
}

/// 2-D convolution with a 3x3 kernel, stride 1 and zero padding 1 on a
/// feature map laid out as [time*freq x channels].
template <typename S>
class Conv3x3 {
public:
    Conv3x3() = default;
    Conv3x3(const std::string& name, int in_channels, int out_channels);

    /// `cols` receives the im2col matrix needed by backward().
    Mat<S> forward(const Mat<S>& x, int time, int freq, Mat<S>& cols) const;
    Mat<S> backward(const Mat<S>& cols, const Mat<S>& grad_out, int time, int freq);

    void init(std::mt19937_64& rng) { proj_.init(rng); }
    void collect(ParamList<S>& out) { proj_.collect(out); }

    int in_channels() const { return in_channels_; }
    int out_channels() const { return out_channels_; }

private:
    int in_channels_ = 0;
    int out_channels_ = 0;
    Linear<S> proj_;  // weight [out x 9*in]
};

/// Max pooling along time with kernel == stride; trailing frames that do not
/// fill a window are dropped.
template <typename S>
struct TimeMaxPool {
    static Mat<S> forward(const Mat<S>& x, int time, int freq, int stride, std::vector<std::int32_t>& argmax);
    static Mat<S> backward(const Mat<S>& grad_out, const std::vector<std::int32_t>& argmax, Eigen::Index in_rows);
};

/// Single-layer unidirectional LSTM over a [steps x in] sequence starting from
/// a zero state.
template <typename S>
class Lstm {
public:
    struct Cache {
        Mat<S> input;
        Mat<S> gates;   // post-activation i, f, g, o per step: [steps x 4H]
        Mat<S> cell;    // [steps x H]
        Mat<S> hidden;  // [steps x H]
    };
    struct State {
        RowVec<S> h;
        RowVec<S> c;
    };

    Lstm() = default;
    Lstm(const std::string& name, int in_dim, int hidden_dim);

    Mat<S> forward(const Mat<S>& x, Cache& cache) const;
    Mat<S> backward(const Mat<S>& grad_hidden, const Cache& cache);

    State initial_state() const;
    /// One recurrence step; used by incremental decoding.
    RowVec<S> step(const RowVec<S>& x, State& state) const;

    void init(std::mt19937_64& rng);
    void collect(ParamList<S>& out);

    int hidden_dim() const { return hidden_dim_; }

    Param<S> w_input;   // [4H x in]
    Param<S> w_hidden;  // [4H x H]
    Param<S> bias;      // [1 x 4H]

private:
    int in_dim_ = 0;
    int hidden_dim_ = 0;
};

}  // namespace sslt
