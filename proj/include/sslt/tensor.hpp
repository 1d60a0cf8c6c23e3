// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense matrix aliases and the trainable-parameter record shared by every
// module. All activations are row-major with one row per time step.

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sslt {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

/// A named trainable tensor with its gradient accumulator.
///
/// `touched` records whether any backward pass wrote into `grad` since the
/// last zero_grad(). The optimizer skips untouched parameters entirely, so a
/// loss that does not depend on a parameter leaves both the parameter and
/// its optimizer moments unchanged.
template <typename S>
struct Param {
    std::string name;
    Mat<S> value;
    Mat<S> grad;
    bool touched = false;

    Param() = default;
    Param(std::string n, Eigen::Index rows, Eigen::Index cols)
        : name(std::move(n)), value(Mat<S>::Zero(rows, cols)), grad(Mat<S>::Zero(rows, cols)) {}

    void zero_grad() {
        grad.setZero(value.rows(), value.cols());
        touched = false;
    }

    Mat<S>& grad_accum() {
        touched = true;
        return grad;
    }
};

template <typename S>
using ParamList = std::vector<Param<S>*>;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
template <typename S>
void init_fan_in_uniform(Param<S>& p, Eigen::Index fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<S>(dist(rng));
}

/// Pairwise (cascade) summation; result does not depend on how callers
/// partition work, only on the element order.
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 8) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

/// log(sum(exp(xs))) for a dense row, stable for large magnitudes.
template <typename Derived>
double log_sum_exp(const Eigen::MatrixBase<Derived>& xs) {
    const double m = static_cast<double>(xs.maxCoeff());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (Eigen::Index i = 0; i < xs.size(); ++i) s += std::exp(static_cast<double>(xs.derived()(i)) - m);
    return m + std::log(s);
}

inline double log_add_exp(double a, double b) {
    if (a == -INFINITY) return b;
    if (b == -INFINITY) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace sslt
