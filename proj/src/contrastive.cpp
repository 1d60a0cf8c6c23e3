// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#include "sslt/contrastive.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sslt {

void ContrastiveConfig::validate() const {
    if (num_negatives < 1) throw std::invalid_argument("contrastive: num_negatives must be >= 1");
    if (!(temperature > 0.0)) throw std::invalid_argument("contrastive: temperature must be positive");
    if (target_dim < 1) throw std::invalid_argument("contrastive: target_dim must be positive");
}

std::vector<int> sample_distractors(int t, int length, int num_negatives, std::mt19937_64& rng) {
    if (length < 2) throw std::invalid_argument("sample_distractors: need at least two frames");
    if (t < 0 || t >= length) throw std::out_of_range("sample_distractors: anchor index outside sequence");
    std::uniform_int_distribution<int> pick(0, length - 2);
    std::vector<int> out(static_cast<std::size_t>(num_negatives));
    for (int& d : out) {
        const int j = pick(rng);
        d = j >= t ? j + 1 : j;
    }
    return out;
}

std::vector<int> sample_distractors_from_pool(int t, int length, const std::vector<int>& pool, int num_negatives,
                                              std::mt19937_64& rng) {
    std::vector<int> candidates;
    candidates.reserve(pool.size());
    for (int p : pool) {
        if (p != t) candidates.push_back(p);
    }
    if (candidates.empty()) return sample_distractors(t, length, num_negatives, rng);
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    std::vector<int> out(static_cast<std::size_t>(num_negatives));
    for (int& d : out) d = candidates[pick(rng)];
    return out;
}

std::vector<std::vector<int>> sample_all_distractors(const SpanMask& mask, const ContrastiveConfig& cfg,
                                                     std::mt19937_64& rng) {
    std::vector<std::vector<int>> out;
    out.reserve(mask.indices.size());
    for (int t : mask.indices) {
        if (cfg.negatives_from_masked_only) {
            out.push_back(sample_distractors_from_pool(t, mask.length, mask.indices, cfg.num_negatives, rng));
        } else {
            out.push_back(sample_distractors(t, mask.length, cfg.num_negatives, rng));
        }
    }
    return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: dimension mismatch");
    double dot = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) throw std::domain_error("cosine_similarity: zero-norm vector");
    return dot / (std::max(std::sqrt(aa), kCosineEpsilon) * std::max(std::sqrt(bb), kCosineEpsilon));
}

namespace {

struct CosineParts {
    double sim;
    Eigen::VectorXd grad_a;
    Eigen::VectorXd grad_b;
};

CosineParts cosine_with_grad(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double norm_a = a.norm();
    const double norm_b = b.norm();
    if (norm_a == 0.0 || norm_b == 0.0) throw std::domain_error("contrastive_loss: zero-norm vector in cosine");
    const double na = std::max(norm_a, kCosineEpsilon);
    const double nb = std::max(norm_b, kCosineEpsilon);
    CosineParts out;
    out.sim = a.dot(b) / (na * nb);
    out.grad_a = b / (na * nb);
    if (norm_a > kCosineEpsilon) out.grad_a -= out.sim * a / (na * na);
    out.grad_b = a / (na * nb);
    if (norm_b > kCosineEpsilon) out.grad_b -= out.sim * b / (nb * nb);
    return out;
}

}  // namespace

template <typename S>
ContrastiveResult<S> contrastive_loss(const Mat<S>& context, const Mat<S>& targets, const SpanMask& mask,
                                      const std::vector<std::vector<int>>& distractors, double temperature) {
    if (context.rows() != targets.rows()) throw std::invalid_argument("contrastive_loss: c and q are not time-aligned");
    if (context.cols() != targets.cols()) throw std::invalid_argument("contrastive_loss: c and q widths differ");
    if (mask.empty()) throw std::invalid_argument("contrastive_loss: empty mask");
    if (distractors.size() != mask.indices.size()) {
        throw std::invalid_argument("contrastive_loss: need one distractor list per masked frame");
    }
    if (!(temperature > 0.0)) throw std::invalid_argument("contrastive_loss: temperature must be positive");

    const Eigen::Index T = context.rows();
    const Mat<double> c = context.template cast<double>();
    const Mat<double> q = targets.template cast<double>();
    Mat<double> grad_c = Mat<double>::Zero(T, c.cols());
    Mat<double> grad_q = Mat<double>::Zero(T, q.cols());

    ContrastiveResult<S> result;
    result.per_position.reserve(mask.indices.size());
    for (std::size_t m = 0; m < mask.indices.size(); ++m) {
        const int t = mask.indices[m];
        if (t < 0 || t >= T) throw std::out_of_range("contrastive_loss: masked index outside sequence");
        std::vector<int> cands;
        cands.reserve(distractors[m].size() + 1);
        cands.push_back(t);
        for (int d : distractors[m]) {
            if (d < 0 || d >= T) throw std::out_of_range("contrastive_loss: distractor index outside sequence");
            cands.push_back(d);
        }

        const Eigen::VectorXd a = c.row(t).transpose();
        std::vector<CosineParts> parts;
        parts.reserve(cands.size());
        Eigen::VectorXd logits(static_cast<Eigen::Index>(cands.size()));
        for (std::size_t j = 0; j < cands.size(); ++j) {
            parts.push_back(cosine_with_grad(a, q.row(cands[j]).transpose()));
            logits(static_cast<Eigen::Index>(j)) = parts.back().sim / temperature;
        }
        // (max - l0) + log sum exp(l - max): exactly log(K+1) under ties
        const double top = logits.maxCoeff();
        double tail = 0.0;
        for (Eigen::Index j = 0; j < logits.size(); ++j) tail += std::exp(logits(j) - top);
        const double lse = top + std::log(tail);
        result.per_position.push_back((top - logits(0)) + std::log(tail));

        for (std::size_t j = 0; j < cands.size(); ++j) {
            const double p = std::exp(logits(static_cast<Eigen::Index>(j)) - lse);
            const double g = (p - (j == 0 ? 1.0 : 0.0)) / temperature;
            grad_c.row(t) += g * parts[j].grad_a.transpose();
            grad_q.row(cands[j]) += g * parts[j].grad_b.transpose();
        }
    }
    result.loss = pairwise_sum(result.per_position);
    result.grad_context = grad_c.cast<S>();
    result.grad_targets = grad_q.cast<S>();
    return result;
}

template ContrastiveResult<float> contrastive_loss(const Mat<float>&, const Mat<float>&, const SpanMask&,
                                                   const std::vector<std::vector<int>>&, double);
template ContrastiveResult<double> contrastive_loss(const Mat<double>&, const Mat<double>&, const SpanMask&,
                                                    const std::vector<std::vector<int>>&, double);

}  // namespace sslt
