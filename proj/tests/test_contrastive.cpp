// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#include "sslt/contrastive.hpp"
#include "sslt/model.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <map>

using namespace sslt;
using testing::random_matrix;

TEST_CASE("similarity ties give log(K+1) per masked frame") {
    const int T = 12, K = 100;
    Mat<double> c = Mat<double>::Constant(T, 5, 0.3);
    Mat<double> q = Mat<double>::Constant(T, 5, -1.7);
    const SpanMask mask = span_mask_from_starts(T, {2, 7}, 3);
    std::mt19937_64 rng(1);
    ContrastiveConfig cfg;
    cfg.num_negatives = K;
    const auto distractors = sample_all_distractors(mask, cfg, rng);
    const auto r = contrastive_loss(c, q, mask, distractors);
    for (double l : r.per_position) CHECK(l == std::log(static_cast<double>(K + 1)));
    CHECK(r.loss == doctest::Approx(mask.indices.size() * std::log(101.0)).epsilon(1e-14));
}

TEST_CASE("loss matches an explicit softmax over cosine similarities") {
    std::mt19937_64 rng(2);
    const int T = 10;
    const Mat<double> c = random_matrix<double>(T, 4, rng);
    const Mat<double> q = random_matrix<double>(T, 4, rng);
    const SpanMask mask = span_mask_from_starts(T, {1, 6}, 2);
    ContrastiveConfig cfg;
    cfg.num_negatives = 7;
    const auto distractors = sample_all_distractors(mask, cfg, rng);
    for (double temperature : {1.0, 0.1}) {
        double expected = 0.0;
        for (std::size_t m = 0; m < mask.indices.size(); ++m) {
            const int t = mask.indices[m];
            auto sim = [&](int j) { return c.row(t).dot(q.row(j)) / (c.row(t).norm() * q.row(j).norm()); };
            double z = std::exp(sim(t) / temperature);
            for (int d : distractors[m]) z += std::exp(sim(d) / temperature);
            expected += -std::log(std::exp(sim(t) / temperature) / z);
        }
        CHECK(contrastive_loss(c, q, mask, distractors, temperature).loss == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("contrastive gradients with respect to c and q") {
    std::mt19937_64 rng(3);
    const int T = 8;
    Mat<double> c = random_matrix<double>(T, 5, rng);
    Mat<double> q = random_matrix<double>(T, 5, rng);
    const SpanMask mask = span_mask_from_starts(T, {0, 5}, 2);
    ContrastiveConfig cfg;
    cfg.num_negatives = 6;
    const auto distractors = sample_all_distractors(mask, cfg, rng);
    const auto r = contrastive_loss(c, q, mask, distractors, 0.5);
    auto loss = [&] { return contrastive_loss(c, q, mask, distractors, 0.5).loss; };
    for (Eigen::Index i = 0; i < c.size(); ++i) {
        CHECK(testing::relative_error(r.grad_context.data()[i], testing::central_difference(c.data()[i], loss)) <
              1e-4);
    }
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        CHECK(testing::relative_error(r.grad_targets.data()[i], testing::central_difference(q.data()[i], loss)) <
              1e-4);
    }
}

TEST_CASE("distractors are uniform over the other frames") {
    std::mt19937_64 rng(4);
    const int T = 9, t = 4, draws = 90000;
    std::vector<int> counts(T, 0);
    for (int d : sample_distractors(t, T, draws, rng)) counts[static_cast<std::size_t>(d)]++;
    CHECK(counts[t] == 0);
    double chi2 = 0.0;
    const double expected = static_cast<double>(draws) / (T - 1);
    for (int j = 0; j < T; ++j) {
        if (j != t) chi2 += (counts[j] - expected) * (counts[j] - expected) / expected;
    }
    // 8 categories, 7 degrees of freedom: the 0.999 quantile is 24.3
    CHECK(chi2 < 24.3);
    CHECK_THROWS(sample_distractors(0, 1, 3, rng));
    CHECK_THROWS(sample_distractors(5, 5, 3, rng));
}

TEST_CASE("masked-only distractor pool") {
    std::mt19937_64 rng(5);
    const std::vector<int> pool{2, 3, 4};
    for (int d : sample_distractors_from_pool(3, 10, pool, 200, rng)) CHECK((d == 2 || d == 4));
    for (int d : sample_distractors_from_pool(3, 10, {3}, 50, rng)) {
        CHECK(d != 3);
        CHECK(d < 10);
    }
}

TEST_CASE("cosine similarity edge cases") {
    const std::vector<double> a{1.0, 0.0}, b{0.0, 2.0}, zero{0.0, 0.0}, tiny{1e-12, 0.0};
    CHECK(cosine_similarity(a, b) == 0.0);
    CHECK(cosine_similarity(a, a) == 1.0);
    CHECK_THROWS_AS(cosine_similarity(a, zero), std::domain_error);
    CHECK(std::isfinite(cosine_similarity(tiny, a)));
    CHECK(cosine_similarity(tiny, a) < 1e-3);

    Mat<double> c = Mat<double>::Ones(3, 2);
    Mat<double> q = Mat<double>::Ones(3, 2);
    q.row(1).setZero();
    CHECK_THROWS_AS(contrastive_loss(c, q, span_mask_from_starts(3, {0}, 1), {{1}}), std::domain_error);
}

TEST_CASE("target dimension must match the encoder width") {
    ModelConfig cfg = testing::tiny_model_config();
    cfg.contrastive.target_dim = 5;
    CHECK_THROWS_WITH(cfg.validate(), doctest::Contains("target_dim"));
}
