// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#include "sslt/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace sslt {

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

template <typename S>
Linear<S>::Linear(const std::string& name, int in_dim, int out_dim, bool bias)
    : weight(name + ".weight", out_dim, in_dim),
      bias(name + ".bias", 1, bias ? out_dim : 0),
      in_dim_(in_dim),
      out_dim_(out_dim),
      has_bias_(bias) {}

template <typename S>
Mat<S> Linear<S>::forward(const Mat<S>& x) const {
    if (x.cols() != in_dim_) {
        throw std::invalid_argument(weight.name + ": expected " + std::to_string(in_dim_) + " input columns, got " +
                                    std::to_string(x.cols()));
    }
    Mat<S> y = x * weight.value.transpose();
    if (has_bias_) y.rowwise() += bias.value.row(0);
    return y;
}

template <typename S>
Mat<S> Linear<S>::backward(const Mat<S>& x, const Mat<S>& grad_out) {
    weight.grad_accum().noalias() += grad_out.transpose() * x;
    if (has_bias_) bias.grad_accum().row(0) += grad_out.colwise().sum();
    return grad_out * weight.value;
}

template <typename S>
void Linear<S>::init(std::mt19937_64& rng) {
    init_fan_in_uniform(weight, in_dim_, rng);
    if (has_bias_) init_fan_in_uniform(bias, in_dim_, rng);
}

template <typename S>
void Linear<S>::collect(ParamList<S>& out) {
    out.push_back(&weight);
    if (has_bias_) out.push_back(&bias);
}

// ---------------------------------------------------------------------------
// LayerNorm
// ---------------------------------------------------------------------------

template <typename S>
LayerNorm<S>::LayerNorm(const std::string& name, int dim, double eps)
    : gain(name + ".gain", 1, dim), shift(name + ".shift", 1, dim), eps_(eps) {
    gain.value.setOnes();
}

template <typename S>
Mat<S> LayerNorm<S>::forward(const Mat<S>& x, Cache& cache) const {
    const Eigen::Index n = x.cols();
    cache.normalized.resize(x.rows(), n);
    cache.inv_std.resize(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const S mean = x.row(r).mean();
        const auto centered = (x.row(r).array() - mean).eval();
        const S var = centered.square().mean();
        const S inv = S(1) / std::sqrt(var + S(eps_));
        cache.inv_std(r) = inv;
        cache.normalized.row(r) = centered * inv;
    }
    Mat<S> y = cache.normalized.array().rowwise() * gain.value.row(0).array();
    y.rowwise() += shift.value.row(0);
    return y;
}

template <typename S>
Mat<S> LayerNorm<S>::backward(const Mat<S>& grad_out, const Cache& cache) {
    gain.grad_accum().row(0) += (grad_out.array() * cache.normalized.array()).colwise().sum().matrix();
    shift.grad_accum().row(0) += grad_out.colwise().sum();

    const S n = static_cast<S>(grad_out.cols());
    const Mat<S> g = grad_out.array().rowwise() * gain.value.row(0).array();
    Mat<S> dx(grad_out.rows(), grad_out.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
        const S mean_g = g.row(r).mean();
        const S mean_gx = g.row(r).dot(cache.normalized.row(r)) / n;
        dx.row(r) = cache.inv_std(r) *
                    (g.row(r).array() - mean_g - cache.normalized.row(r).array() * mean_gx).matrix();
    }
    return dx;
}

template <typename S>
void LayerNorm<S>::collect(ParamList<S>& out) {
    out.push_back(&gain);
    out.push_back(&shift);
}

// ---------------------------------------------------------------------------
// Conv3x3
// ---------------------------------------------------------------------------

template <typename S>
Conv3x3<S>::Conv3x3(const std::string& name, int in_channels, int out_channels)
    : in_channels_(in_channels), out_channels_(out_channels), proj_(name, 9 * in_channels, out_channels) {}

template <typename S>
Mat<S> Conv3x3<S>::forward(const Mat<S>& x, int time, int freq, Mat<S>& cols) const {
    if (x.rows() != static_cast<Eigen::Index>(time) * freq || x.cols() != in_channels_) {
        throw std::invalid_argument("conv3x3: feature map shape mismatch");
    }
    const int c_in = in_channels_;
    cols.setZero(x.rows(), 9 * c_in);
    for (int t = 0; t < time; ++t) {
        for (int f = 0; f < freq; ++f) {
            const Eigen::Index row = static_cast<Eigen::Index>(t) * freq + f;
            for (int dt = 0; dt < 3; ++dt) {
                const int ts = t + dt - 1;
                if (ts < 0 || ts >= time) continue;
                for (int df = 0; df < 3; ++df) {
                    const int fs = f + df - 1;
                    if (fs < 0 || fs >= freq) continue;
                    cols.block(row, (dt * 3 + df) * c_in, 1, c_in) =
                        x.row(static_cast<Eigen::Index>(ts) * freq + fs);
                }
            }
        }
    }
    return proj_.forward(cols);
}

template <typename S>
Mat<S> Conv3x3<S>::backward(const Mat<S>& cols, const Mat<S>& grad_out, int time, int freq) {
    const Mat<S> grad_cols = proj_.backward(cols, grad_out);
    const int c_in = in_channels_;
    Mat<S> dx = Mat<S>::Zero(static_cast<Eigen::Index>(time) * freq, c_in);
    for (int t = 0; t < time; ++t) {
        for (int f = 0; f < freq; ++f) {
            const Eigen::Index row = static_cast<Eigen::Index>(t) * freq + f;
            for (int dt = 0; dt < 3; ++dt) {
                const int ts = t + dt - 1;
                if (ts < 0 || ts >= time) continue;
                for (int df = 0; df < 3; ++df) {
                    const int fs = f + df - 1;
                    if (fs < 0 || fs >= freq) continue;
                    dx.row(static_cast<Eigen::Index>(ts) * freq + fs) +=
                        grad_cols.block(row, (dt * 3 + df) * c_in, 1, c_in);
                }
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// TimeMaxPool
// ---------------------------------------------------------------------------

template <typename S>
Mat<S> TimeMaxPool<S>::forward(const Mat<S>& x, int time, int freq, int stride,
                               std::vector<std::int32_t>& argmax) {
    const int out_time = time / stride;
    const Eigen::Index channels = x.cols();
    Mat<S> y(static_cast<Eigen::Index>(out_time) * freq, channels);
    argmax.assign(static_cast<std::size_t>(y.size()), 0);
    for (int t = 0; t < out_time; ++t) {
        for (int f = 0; f < freq; ++f) {
            const Eigen::Index out_row = static_cast<Eigen::Index>(t) * freq + f;
            for (Eigen::Index c = 0; c < channels; ++c) {
                Eigen::Index best_row = static_cast<Eigen::Index>(t) * stride * freq + f;
                S best = x(best_row, c);
                for (int j = 1; j < stride; ++j) {
                    const Eigen::Index r = static_cast<Eigen::Index>(t * stride + j) * freq + f;
                    if (x(r, c) > best) {
                        best = x(r, c);
                        best_row = r;
                    }
                }
                y(out_row, c) = best;
                argmax[static_cast<std::size_t>(out_row * channels + c)] = static_cast<std::int32_t>(best_row);
            }
        }
    }
    return y;
}

template <typename S>
Mat<S> TimeMaxPool<S>::backward(const Mat<S>& grad_out, const std::vector<std::int32_t>& argmax,
                                Eigen::Index in_rows) {
    const Eigen::Index channels = grad_out.cols();
    Mat<S> dx = Mat<S>::Zero(in_rows, channels);
    for (Eigen::Index r = 0; r < grad_out.rows(); ++r) {
        for (Eigen::Index c = 0; c < channels; ++c) {
            dx(argmax[static_cast<std::size_t>(r * channels + c)], c) += grad_out(r, c);
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Lstm
// ---------------------------------------------------------------------------

namespace {

template <typename S>
S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

}  // namespace

template <typename S>
Lstm<S>::Lstm(const std::string& name, int in_dim, int hidden_dim)
    : w_input(name + ".w_input", 4 * hidden_dim, in_dim),
      w_hidden(name + ".w_hidden", 4 * hidden_dim, hidden_dim),
      bias(name + ".bias", 1, 4 * hidden_dim),
      in_dim_(in_dim),
      hidden_dim_(hidden_dim) {}

template <typename S>
typename Lstm<S>::State Lstm<S>::initial_state() const {
    return State{RowVec<S>::Zero(hidden_dim_), RowVec<S>::Zero(hidden_dim_)};
}

template <typename S>
RowVec<S> Lstm<S>::step(const RowVec<S>& x, State& state) const {
    const int H = hidden_dim_;
    RowVec<S> pre = x * w_input.value.transpose() + state.h * w_hidden.value.transpose() + bias.value.row(0);
    for (int j = 0; j < H; ++j) {
        const S i = sigmoid(pre(j));
        const S f = sigmoid(pre(H + j));
        const S g = std::tanh(pre(2 * H + j));
        const S o = sigmoid(pre(3 * H + j));
        state.c(j) = f * state.c(j) + i * g;
        state.h(j) = o * std::tanh(state.c(j));
    }
    return state.h;
}

template <typename S>
Mat<S> Lstm<S>::forward(const Mat<S>& x, Cache& cache) const {
    const int H = hidden_dim_;
    const Eigen::Index steps = x.rows();
    cache.input = x;
    const Mat<S> pre_in = x * w_input.value.transpose();
    cache.gates.resize(steps, 4 * H);
    cache.cell.resize(steps, H);
    cache.hidden.resize(steps, H);
    RowVec<S> h = RowVec<S>::Zero(H);
    RowVec<S> c = RowVec<S>::Zero(H);
    for (Eigen::Index t = 0; t < steps; ++t) {
        const RowVec<S> pre = pre_in.row(t) + h * w_hidden.value.transpose() + bias.value.row(0);
        for (int j = 0; j < H; ++j) {
            const S i = sigmoid(pre(j));
            const S f = sigmoid(pre(H + j));
            const S g = std::tanh(pre(2 * H + j));
            const S o = sigmoid(pre(3 * H + j));
            cache.gates(t, j) = i;
            cache.gates(t, H + j) = f;
            cache.gates(t, 2 * H + j) = g;
            cache.gates(t, 3 * H + j) = o;
            c(j) = f * c(j) + i * g;
            h(j) = o * std::tanh(c(j));
        }
        cache.cell.row(t) = c;
        cache.hidden.row(t) = h;
    }
    return cache.hidden;
}

template <typename S>
Mat<S> Lstm<S>::backward(const Mat<S>& grad_hidden, const Cache& cache) {
    const int H = hidden_dim_;
    const Eigen::Index steps = grad_hidden.rows();
    Mat<S> grad_pre(steps, 4 * H);
    RowVec<S> dh_next = RowVec<S>::Zero(H);
    RowVec<S> dc_next = RowVec<S>::Zero(H);
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
        const RowVec<S> dh = grad_hidden.row(t) + dh_next;
        for (int j = 0; j < H; ++j) {
            const S i = cache.gates(t, j);
            const S f = cache.gates(t, H + j);
            const S g = cache.gates(t, 2 * H + j);
            const S o = cache.gates(t, 3 * H + j);
            const S c = cache.cell(t, j);
            const S c_prev = t > 0 ? cache.cell(t - 1, j) : S(0);
            const S tc = std::tanh(c);
            const S dc = dh(j) * o * (S(1) - tc * tc) + dc_next(j);
            grad_pre(t, j) = dc * g * i * (S(1) - i);
            grad_pre(t, H + j) = dc * c_prev * f * (S(1) - f);
            grad_pre(t, 2 * H + j) = dc * i * (S(1) - g * g);
            grad_pre(t, 3 * H + j) = dh(j) * tc * o * (S(1) - o);
            dc_next(j) = dc * f;
        }
        dh_next = grad_pre.row(t) * w_hidden.value;
    }
    w_input.grad_accum().noalias() += grad_pre.transpose() * cache.input;
    if (steps > 1) {
        w_hidden.grad_accum().noalias() +=
            grad_pre.bottomRows(steps - 1).transpose() * cache.hidden.topRows(steps - 1);
    } else {
        w_hidden.grad_accum();
    }
    bias.grad_accum().row(0) += grad_pre.colwise().sum();
    return grad_pre * w_input.value;
}

template <typename S>
void Lstm<S>::init(std::mt19937_64& rng) {
    init_fan_in_uniform(w_input, hidden_dim_, rng);
    init_fan_in_uniform(w_hidden, hidden_dim_, rng);
    init_fan_in_uniform(bias, hidden_dim_, rng);
}

template <typename S>
void Lstm<S>::collect(ParamList<S>& out) {
    out.push_back(&w_input);
    out.push_back(&w_hidden);
    out.push_back(&bias);
}

template class Linear<float>;
template class Linear<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template class Conv3x3<float>;
template class Conv3x3<double>;
template struct TimeMaxPool<float>;
template struct TimeMaxPool<double>;
template class Lstm<float>;
template class Lstm<double>;

}  // namespace sslt
