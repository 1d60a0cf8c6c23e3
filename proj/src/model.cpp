// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#include "sslt/model.hpp"

#include <optional>
#include <random>
#include <stdexcept>

namespace sslt {

void ModelConfig::validate() const {
    encoder.validate();
    contrastive.validate();
    prediction.validate();
    joint.validate();
    if (contrastive.target_dim != encoder.d_model) {
        throw std::invalid_argument("model: contrastive target_dim (" + std::to_string(contrastive.target_dim) +
                                    ") must equal encoder d_model (" + std::to_string(encoder.d_model) + ")");
    }
}

template <typename S>
Model<S>::Model(const ModelConfig& cfg)
    : encoder((cfg.validate(), cfg.encoder)),
      target(cfg.encoder.d_model, cfg.contrastive.target_dim),
      prediction(cfg.prediction),
      joint(cfg.encoder.d_model, cfg.prediction.proj_dim, cfg.prediction.vocab_size, cfg.joint),
      cfg_(cfg) {}

template <typename S>
void Model<S>::init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    encoder.init(rng);
    target.init(rng);
    prediction.init(rng);
    joint.init(rng);
}

template <typename S>
ParamList<S> Model<S>::params() {
    ParamList<S> out;
    encoder.collect(out);
    target.collect(out);
    prediction.collect(out);
    joint.collect(out);
    return out;
}

template <typename S>
std::vector<const Param<S>*> Model<S>::params() const {
    // collect() only records addresses; nothing is modified through them here
    const ParamList<S> list = const_cast<Model&>(*this).params();
    return {list.begin(), list.end()};
}

template <typename S>
void Model<S>::zero_grad() {
    for (Param<S>* p : params()) p->zero_grad();
}

template <typename S>
std::vector<int> Model<S>::transcribe(const Mat<S>& features, const AttentionMask& mask,
                                      int max_symbols_per_frame) const {
    return greedy_decode(encoder.encode(features, mask), prediction, joint, max_symbols_per_frame);
}

template <typename S>
LossBreakdown forward_backward(Model<S>& model, const Mat<S>& features, const UtteranceObjective& objective,
                               bool compute_gradients) {
    typename ConvFeatureEncoder<S>::Cache conv_cache;
    const Mat<S> latent = model.encoder.conv.forward(features, conv_cache);
    const int frames = static_cast<int>(latent.rows());

    LossBreakdown out;
    std::optional<Mat<S>> grad_latent;
    auto add_grad = [&grad_latent](Mat<S> g) {
        if (grad_latent) *grad_latent += g;
        else grad_latent = std::move(g);
    };

    if (objective.labels) {
        if (!objective.attention) throw std::invalid_argument("forward_backward: transducer branch needs a mask");
        if (objective.attention->frames() != frames) {
            throw std::invalid_argument("forward_backward: attention mask covers " +
                                        std::to_string(objective.attention->frames()) + " frames, latent has " +
                                        std::to_string(frames));
        }
        typename ContextNetwork<S>::Cache ctx_cache;
        const Mat<S> context = model.encoder.context.forward(latent, *objective.attention, ctx_cache);
        typename PredictionNetwork<S>::Cache pred_cache;
        const Mat<S> pred = model.prediction.forward(*objective.labels, pred_cache);
        typename JointNetwork<S>::Cache joint_cache;
        const LatticeLogits<S> logits = model.joint.forward(context, pred, joint_cache);
        const TransducerResult<S> r = transducer_loss(logits, *objective.labels);
        out.transducer = r.loss;
        if (compute_gradients && objective.transducer_weight != 0.0) {
            const Mat<S> g = r.grad * static_cast<S>(objective.transducer_weight);
            const auto jg = model.joint.backward(g, joint_cache);
            model.prediction.backward(jg.prediction, pred_cache);
            add_grad(model.encoder.context.backward(jg.context, *objective.attention, ctx_cache));
        }
    }

    if (objective.contrastive) {
        const ContrastiveTask& task = *objective.contrastive;
        if (task.mask.length != frames) throw std::invalid_argument("forward_backward: span mask length mismatch");
        const AttentionMask full = full_attention_mask(frames);
        const Mat<S> masked = apply_feature_mask<S>(latent, task.mask, model.encoder.mask_embedding.value.row(0));
        typename ContextNetwork<S>::Cache ctx_cache;
        const Mat<S> context = model.encoder.context.forward(masked, full, ctx_cache);
        const Mat<S> targets = model.target.forward(latent);
        const ContrastiveResult<S> r = contrastive_loss(context, targets, task.mask, task.distractors,
                                                        model.config().contrastive.temperature);
        out.contrastive = r.loss;
        out.masked_frames = static_cast<int>(task.mask.indices.size());
        if (compute_gradients && objective.contrastive_weight != 0.0) {
            const S w = static_cast<S>(objective.contrastive_weight);
            const Mat<S> g_masked = model.encoder.context.backward(r.grad_context * w, full, ctx_cache);
            RowVec<S> g_vector = RowVec<S>::Zero(latent.cols());
            Mat<S> g = apply_feature_mask_backward<S>(g_masked, task.mask, g_vector);
            model.encoder.mask_embedding.grad_accum().row(0) += g_vector;
            g += model.target.backward(latent, r.grad_targets * w);
            add_grad(std::move(g));
        }
    }

    if (grad_latent) model.encoder.conv.backward(*grad_latent, conv_cache);
    return out;
}

template <typename S>
double transducer_loss_only(const Model<S>& model, const Mat<S>& features, const std::vector<int>& labels,
                            const AttentionMask& mask) {
    const Mat<S> context = model.encoder.encode(features, mask);
    const LatticeLogits<S> logits = model.joint.forward(context, model.prediction.forward(labels));
    return transducer_loss(logits, labels).loss;
}

template class Model<float>;
template class Model<double>;
template LossBreakdown forward_backward(Model<float>&, const Mat<float>&, const UtteranceObjective&, bool);
template LossBreakdown forward_backward(Model<double>&, const Mat<double>&, const UtteranceObjective&, bool);
template double transducer_loss_only(const Model<float>&, const Mat<float>&, const std::vector<int>&,
                                     const AttentionMask&);
template double transducer_loss_only(const Model<double>&, const Mat<double>&, const std::vector<int>&,
                                     const AttentionMask&);

}  // namespace sslt
