// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#include "sslt/encoder.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace sslt;
using testing::random_matrix;

namespace {

/// Straightforward per-element evaluation of the relative attention.
Mat<double> naive_attention(const Mat<double>& q, const Mat<double>& k, const Mat<double>& v, const Mat<double>& p,
                            int heads, int max_distance, const AttentionMask& mask) {
    const int T = static_cast<int>(q.rows());
    const int dh = static_cast<int>(q.cols()) / heads;
    Mat<double> out = Mat<double>::Zero(T, q.cols());
    for (int h = 0; h < heads; ++h) {
        for (int t = 0; t < T; ++t) {
            std::vector<double> s(T, -INFINITY);
            double top = -INFINITY;
            for (int tau = 0; tau < T; ++tau) {
                if (!mask.visible(t, tau)) continue;
                const int off = std::clamp(tau - t, -max_distance, max_distance) + max_distance;
                double acc = 0.0;
                for (int i = 0; i < dh; ++i) acc += q(t, h * dh + i) * (k(tau, h * dh + i) + p(off, i));
                s[tau] = acc;
                top = std::max(top, acc);
            }
            double z = 0.0;
            for (int tau = 0; tau < T; ++tau) z += std::isfinite(s[tau]) ? std::exp(s[tau] - top) : 0.0;
            for (int tau = 0; tau < T; ++tau) {
                if (!std::isfinite(s[tau])) continue;
                const double w = std::exp(s[tau] - top) / z;
                for (int i = 0; i < dh; ++i) out(t, h * dh + i) += w * v(tau, h * dh + i);
            }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("downsampling lengths and input checks") {
    EncoderConfig cfg;
    CHECK(downsample_length(100, cfg) == 12);
    CHECK(downsample_length(7, cfg) == 0);
    CHECK(min_input_frames(cfg) == 8);
    CHECK(relative_position_index(0, 100, 64) == 128);
    CHECK(relative_position_index(100, 0, 64) == 0);
    CHECK(relative_position_index(5, 5, 64) == 64);

    ModelConfig tiny = testing::tiny_model_config();
    Encoder<double> enc(tiny.encoder);
    std::mt19937_64 rng(1);
    enc.init(rng);
    CHECK(enc.conv_encode(random_matrix<double>(23, 6, rng)).rows() == 2);
    CHECK_THROWS_WITH(enc.conv_encode(random_matrix<double>(7, 6, rng)), doctest::Contains("at least 8"));
    CHECK_THROWS(enc.conv_encode(random_matrix<double>(16, 5, rng)));
    CHECK_THROWS(enc.encode(random_matrix<double>(16, 6, rng), full_attention_mask(3)));

    EncoderConfig bad;
    bad.num_heads = 3;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("relative attention matches the element-wise definition") {
    std::mt19937_64 rng(7);
    const int T = 9, d = 8, heads = 2, D = 3;
    const Mat<double> q = random_matrix<double>(T, d, rng);
    const Mat<double> k = random_matrix<double>(T, d, rng);
    const Mat<double> v = random_matrix<double>(T, d, rng);
    const Mat<double> p = random_matrix<double>(2 * D + 1, d / heads, rng);
    for (const AttentionMask& mask : {full_attention_mask(T), chunk_attention_mask(T, 2, 1)}) {
        const auto r = relative_attention(q, k, v, p, heads, D, mask);
        CHECK(r.output.isApprox(naive_attention(q, k, v, p, heads, D, mask), 1e-12));
        for (const auto& w : r.weights) {
            for (int t = 0; t < T; ++t) {
                CHECK(w.row(t).sum() == doctest::Approx(1.0).epsilon(1e-12));
                for (int tau = 0; tau < T; ++tau) {
                    if (!mask.visible(t, tau)) CHECK(w(t, tau) == 0.0);
                }
            }
        }
    }
}

TEST_CASE("relative attention gradients") {
    std::mt19937_64 rng(8);
    const int T = 6, d = 4, heads = 2, D = 2;
    Mat<double> q = random_matrix<double>(T, d, rng);
    Mat<double> k = random_matrix<double>(T, d, rng);
    Mat<double> v = random_matrix<double>(T, d, rng);
    Mat<double> p = random_matrix<double>(2 * D + 1, d / heads, rng);
    const Mat<double> probe = random_matrix<double>(T, d, rng);
    const AttentionMask mask = chunk_attention_mask(T, 2, 1);
    auto loss = [&] { return (relative_attention(q, k, v, p, heads, D, mask).output.array() * probe.array()).sum(); };
    const auto fwd = relative_attention(q, k, v, p, heads, D, mask);
    const auto g = relative_attention_backward(q, k, v, p, heads, D, fwd, probe);
    for (auto [x, gx] : {std::pair{&q, &g.queries}, {&k, &g.keys}, {&v, &g.values}, {&p, &g.table}}) {
        for (Eigen::Index i = 0; i < x->size(); ++i) {
            const double num = testing::central_difference(x->data()[i], loss);
            CHECK(testing::relative_error(gx->data()[i], num) < 1e-4);
        }
    }
}

TEST_CASE("freshly initialised Transformer blocks are the identity") {
    EncoderConfig cfg = testing::tiny_model_config().encoder;
    TransformerBlock<double> block("b", cfg);
    std::mt19937_64 rng(4);
    block.init(rng);
    const Mat<double> x = random_matrix<double>(5, cfg.d_model, rng);
    typename TransformerBlock<double>::Cache cache;
    CHECK(block.forward(x, full_attention_mask(5), cache) == x);
}

TEST_CASE("feature frames only influence their predicted latent range") {
    const EncoderConfig cfg = testing::tiny_model_config().encoder;
    Model<double> holder(testing::tiny_model_config());
    testing::randomize_all(holder, 21);
    std::mt19937_64 rng(9);
    const Mat<double> x = random_matrix<double>(64, cfg.feature_dim, rng);
    const Mat<double> base = holder.encoder.conv_encode(x);
    for (int f = 0; f < 64; ++f) {
        Mat<double> y = x;
        y.row(f).array() += 3.0;
        const Mat<double> diff = (holder.encoder.conv_encode(y) - base).cwiseAbs();
        const auto [lo, hi] = latent_frames_influenced(f, cfg);
        for (Eigen::Index t = 0; t < diff.rows(); ++t) {
            if (t < lo || t > hi) CHECK(diff.row(t).maxCoeff() == 0.0);
        }
    }
}
