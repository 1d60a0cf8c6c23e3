// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#include "sslt/masking.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace sslt;

TEST_CASE("chunk mask: two chunks of four, one chunk of left context") {
    const AttentionMask m = chunk_attention_mask(8, 4, 1);
    for (int tau = 0; tau < 8; ++tau) CHECK(m.visible(5, tau));
    for (int tau = 0; tau < 8; ++tau) CHECK(m.visible(2, tau) == (tau < 4));
    CHECK(m.to_string() ==
          "11110000\n11110000\n11110000\n11110000\n11111111\n11111111\n11111111\n11111111\n");
}

TEST_CASE("chunk mask invariants") {
    for (int frames : {1, 5, 13, 32}) {
        for (int chunk : {1, 2, 3, 4, 7}) {
            for (int left : {0, 1, 2, 18}) {
                const AttentionMask m = chunk_attention_mask(frames, chunk, left);
                CHECK_NOTHROW(m.validate());
                for (int t = 0; t < frames; ++t) {
                    CHECK(m.visible(t, t));
                    for (int tau = 0; tau < frames; ++tau) {
                        const int ct = t / chunk;
                        const int cu = tau / chunk;
                        CHECK(m.visible(t, tau) == (cu >= ct - left && cu <= ct));
                        if (m.visible(t, tau)) CHECK(tau < (ct + 1) * chunk);
                    }
                }
            }
        }
    }
    CHECK(chunk_attention_mask(6, 6, 0) == full_attention_mask(6));
    CHECK(chunk_attention_mask(6, 10, 0) == full_attention_mask(6));
    CHECK_THROWS(chunk_attention_mask(0, 4, 1));
    CHECK_THROWS(chunk_attention_mask(8, 0, 1));
    CHECK_THROWS(chunk_attention_mask(8, 4, -1));
    CHECK_THROWS(AttentionMask(3, false).validate());
}

TEST_CASE("span masks from explicit starts merge overlaps and clip at the end") {
    const SpanMask m = span_mask_from_starts(12, {0, 2, 9}, 3);
    CHECK(m.indices == std::vector<int>{0, 1, 2, 3, 4, 9, 10, 11});
    CHECK(m.contains(4));
    CHECK_FALSE(m.contains(5));
    CHECK_THROWS(span_mask_from_starts(12, {12}, 3));
}

TEST_CASE("sampled span masks") {
    std::mt19937_64 rng(11);
    const SpanMaskConfig cfg;
    for (int length : {1, 2, 5, 40}) {
        for (int trial = 0; trial < 50; ++trial) {
            const SpanMask m = sample_span_mask(length, cfg, rng);
            CHECK_FALSE(m.empty());
            CHECK(m.length == length);
            CHECK(std::is_sorted(m.indices.begin(), m.indices.end()));
            CHECK(std::adjacent_find(m.indices.begin(), m.indices.end()) == m.indices.end());
            CHECK(m.indices.back() < length);
        }
    }
    CHECK_THROWS(sample_span_mask(0, cfg, rng));
    CHECK_THROWS(sample_span_mask(10, SpanMaskConfig{0.0, 10}, rng));
    CHECK_THROWS(sample_span_mask(10, SpanMaskConfig{1.0, 10}, rng));
    CHECK_THROWS(sample_span_mask(10, SpanMaskConfig{0.5, 0}, rng));
}

TEST_CASE("expected masked fraction is 1 - (1 - p)^span") {
    std::mt19937_64 rng(5);
    const int length = 200000;
    const SpanMask m = sample_span_mask(length, SpanMaskConfig{}, rng);
    const double fraction = static_cast<double>(m.indices.size()) / length;
    // 1 - 0.935^10
    CHECK(fraction == doctest::Approx(0.48935849815457155).epsilon(0.01));
}

TEST_CASE("feature mask replaces rows and routes gradients to the mask vector") {
    std::mt19937_64 rng(2);
    const Mat<double> z = testing::random_matrix<double>(6, 3, rng);
    const RowVec<double> v = testing::random_matrix<double>(1, 3, rng).row(0);
    const SpanMask m = span_mask_from_starts(6, {1, 4}, 1);
    const Mat<double> out = apply_feature_mask<double>(z, m, v);
    for (int t = 0; t < 6; ++t) {
        if (m.contains(t)) CHECK(out.row(t) == v);
        else CHECK(out.row(t) == z.row(t));
    }
    const Mat<double> g = testing::random_matrix<double>(6, 3, rng);
    RowVec<double> gv = RowVec<double>::Zero(3);
    const Mat<double> gz = apply_feature_mask_backward<double>(g, m, gv);
    CHECK(gv.isApprox(g.row(1) + g.row(4)));
    CHECK(gz.row(1).isZero(0));
    CHECK(gz.row(0) == g.row(0));
    CHECK_THROWS(apply_feature_mask<double>(z, m, RowVec<double>::Zero(2)));
}
