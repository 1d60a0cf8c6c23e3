// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#include "sslt/trainer.hpp"

#include "sslt/checkpoint.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

namespace sslt {

void ScheduleConfig::validate() const {
    if (!(k > 0.0)) throw std::invalid_argument("schedule: k must be positive");
    if (warmup < 1) throw std::invalid_argument("schedule: warmup must be >= 1");
    if (total_steps < 0) throw std::invalid_argument("schedule: total_steps must be >= 0");
    if (d_model < 1) throw std::invalid_argument("schedule: d_model must be positive");
}

double lr_at_step(std::int64_t n, const ScheduleConfig& cfg) {
    if (n < 1) throw std::invalid_argument("lr_at_step: step must be >= 1, got " + std::to_string(n));
    const double step = static_cast<double>(n);
    const double w = static_cast<double>(cfg.warmup);
    return cfg.k / std::sqrt(static_cast<double>(cfg.d_model)) * std::min(1.0 / std::sqrt(step), step * std::pow(w, -1.5));
}

void LossWeights::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("loss weights: alpha must lie in [0, 1]");
}

void OptimizerConfig::validate() const {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw std::invalid_argument("optimizer: betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw std::invalid_argument("optimizer: epsilon must be positive");
}

void StreamingConfig::validate() const {
    if (chunk_size < 1) throw std::invalid_argument("streaming: chunk_size must be >= 1");
    if (left_chunks < 0) throw std::invalid_argument("streaming: left_chunks must be >= 0");
}

std::string to_string(Stage stage) {
    return stage == Stage::kPretrain ? "pretrain" : "finetune";
}

Stage parse_stage(const std::string& name) {
    if (name == "pretrain") return Stage::kPretrain;
    if (name == "finetune") return Stage::kFinetune;
    throw std::invalid_argument("unknown stage '" + name + "'");
}

void TrainerConfig::validate() const {
    model.validate();
    if (!(masking.start_probability > 0.0 && masking.start_probability < 1.0)) {
        throw std::invalid_argument("masking: start_probability must lie in (0, 1)");
    }
    if (masking.span < 1) throw std::invalid_argument("masking: span must be >= 1");
    pretrain_schedule.validate();
    finetune_schedule.validate();
    weights.validate();
    optimizer.validate();
    streaming.validate();
    if (labeled_frame_cap < 1 || unlabeled_frame_cap < 1 || finetune_frame_cap < 1) {
        throw std::invalid_argument("batch caps must be positive");
    }
    if (max_symbols_per_frame < 1) throw std::invalid_argument("max_symbols_per_frame must be >= 1");
}

AttentionMask attention_mask_for(int frames, const StreamingConfig& cfg, bool streaming) {
    return streaming ? chunk_attention_mask(frames, cfg.chunk_size, cfg.left_chunks) : full_attention_mask(frames);
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

EpochSampler::EpochSampler(std::size_t count, std::uint64_t seed, std::uint64_t stream)
    : count_(count), seed_(seed), stream_(stream) {}

std::size_t EpochSampler::at(std::int64_t k) const {
    if (count_ == 0) throw std::logic_error("EpochSampler: empty stream");
    if (k < 0) throw std::out_of_range("EpochSampler: negative draw index");
    const auto n = static_cast<std::int64_t>(count_);
    const std::int64_t epoch = k / n;
    if (epoch != cached_epoch_) {
        cached_perm_.resize(count_);
        std::iota(cached_perm_.begin(), cached_perm_.end(), std::size_t{0});
        std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                          static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(epoch),
                          static_cast<std::uint32_t>(epoch >> 32)};
        std::mt19937_64 rng(seq);
        std::shuffle(cached_perm_.begin(), cached_perm_.end(), rng);
        cached_epoch_ = epoch;
    }
    return cached_perm_[static_cast<std::size_t>(k % n)];
}

AlternatingSampler::AlternatingSampler(std::size_t labeled_batches, std::size_t unlabeled_batches,
                                       std::uint64_t seed)
    : labeled_(labeled_batches, seed, 0), unlabeled_(unlabeled_batches, seed, 1) {
    if (labeled_batches == 0) throw std::invalid_argument("pretraining needs at least one labeled batch");
    if (unlabeled_batches == 0) throw std::invalid_argument("pretraining needs at least one unlabeled batch");
}

AlternatingSampler::Draw AlternatingSampler::at(std::int64_t k) const {
    if (k % 2 == 0) return {BatchOrigin::kLabeled, labeled_.at(k / 2)};
    return {BatchOrigin::kUnlabeled, unlabeled_.at(k / 2)};
}

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

TrainState::TrainState(const TrainerConfig& cfg, Stage s) : config(cfg), stage(s), model((cfg.validate(), cfg.model)) {
    reset_optimizer();
}

void TrainState::reset_optimizer() {
    optimizer = OptimizerState{};
    for (Param<float>* p : model.params()) {
        optimizer.m.push_back(Mat<float>::Zero(p->value.rows(), p->value.cols()));
        optimizer.v.push_back(Mat<float>::Zero(p->value.rows(), p->value.cols()));
        optimizer.steps.push_back(0);
    }
}

TrainState make_initial_state(const TrainerConfig& cfg, Stage stage) {
    TrainState state(cfg, stage);
    state.model.init(cfg.seed);
    return state;
}

TrainState start_finetuning(const TrainState& pretrained, const TrainerConfig& cfg) {
    TrainState state(cfg, Stage::kFinetune);
    const auto from = pretrained.model.params();
    const ParamList<float> to = state.model.params();
    if (from.size() != to.size()) throw std::invalid_argument("start_finetuning: parameter sets differ in size");
    for (std::size_t i = 0; i < to.size(); ++i) {
        if (from[i]->name != to[i]->name || from[i]->value.rows() != to[i]->value.rows() ||
            from[i]->value.cols() != to[i]->value.cols()) {
            throw std::invalid_argument("start_finetuning: parameter '" + to[i]->name +
                                        "' does not match the pretrained model");
        }
        to[i]->value = from[i]->value;
    }
    return state;
}

// ---------------------------------------------------------------------------
// Steps
// ---------------------------------------------------------------------------

namespace {

std::mt19937_64 utterance_rng(std::uint64_t seed, Stage stage, std::int64_t step, int index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stage == Stage::kPretrain ? 1 : 2), static_cast<std::uint32_t>(step),
                      static_cast<std::uint32_t>(step >> 32), static_cast<std::uint32_t>(index)};
    return std::mt19937_64(seq);
}

std::string batch_label(const Batch& batch) {
    std::string out;
    for (const auto& id : batch.ids) out += (out.empty() ? "" : ",") + id;
    return "[" + out + "]";
}

}  // namespace

StepMetrics compute_batch_gradients(TrainState& state, const Batch& batch, Objective objective, bool streaming) {
    const TrainerConfig& cfg = state.config;
    const bool labeled = batch.origin == BatchOrigin::kLabeled;
    if (!labeled && objective == Objective::kTransducer) {
        throw std::invalid_argument("transducer objective needs a labeled batch, got " + batch_label(batch));
    }
    double w_transducer = 0.0;
    double w_contrastive = 0.0;
    switch (objective) {
        case Objective::kMultitask:
            w_transducer = labeled ? cfg.weights.alpha : 0.0;
            w_contrastive = labeled ? 1.0 - cfg.weights.alpha : 1.0;
            break;
        case Objective::kTransducer:
            w_transducer = 1.0;
            break;
        case Objective::kContrastive:
            w_contrastive = 1.0;
            break;
    }
    const bool run_transducer = labeled && objective != Objective::kContrastive;
    const bool run_contrastive = objective != Objective::kTransducer;

    StepMetrics metrics;
    metrics.step = state.step + 1;
    metrics.stage = state.stage;
    metrics.origin = batch.origin;
    metrics.utterances = batch.size();

    state.model.zero_grad();
    std::vector<double> contrastive_losses;
    std::vector<double> transducer_losses;
    for (int i = 0; i < batch.size(); ++i) {
        const Mat<float> features = batch.features(i);
        const int frames = downsample_length(static_cast<int>(features.rows()), cfg.model.encoder);
        std::mt19937_64 rng = utterance_rng(cfg.seed, state.stage, metrics.step, i);

        ContrastiveTask task;
        if (run_contrastive) {
            if (frames < 2) {
                throw std::invalid_argument("utterance " + batch.ids[static_cast<std::size_t>(i)] +
                                            " is too short for contrastive training");
            }
            task.mask = sample_span_mask(frames, cfg.masking, rng);
            task.distractors = sample_all_distractors(task.mask, cfg.model.contrastive, rng);
        }
        std::vector<int> labels;
        if (run_transducer) labels = batch.labels(i);
        const AttentionMask attention = attention_mask_for(frames, cfg.streaming, streaming);

        UtteranceObjective obj;
        if (run_contrastive) {
            obj.contrastive = &task;
            obj.contrastive_weight = w_contrastive;
        }
        if (run_transducer) {
            obj.labels = &labels;
            obj.attention = &attention;
            obj.transducer_weight = w_transducer;
        }
        const LossBreakdown parts = forward_backward(state.model, features, obj);
        if (run_contrastive) contrastive_losses.push_back(parts.contrastive);
        if (run_transducer) transducer_losses.push_back(parts.transducer);
        metrics.masked_frames += parts.masked_frames;
    }
    metrics.contrastive = pairwise_sum(contrastive_losses);
    metrics.transducer = pairwise_sum(transducer_losses);
    metrics.loss = w_transducer * metrics.transducer + w_contrastive * metrics.contrastive;
    if (!std::isfinite(metrics.loss)) {
        throw std::runtime_error("non-finite loss at step " + std::to_string(metrics.step) + " in batch " +
                                 batch_label(batch));
    }

    std::vector<double> squares;
    for (Param<float>* p : state.model.params()) {
        if (p->touched) squares.push_back(p->grad.template cast<double>().squaredNorm());
    }
    metrics.grad_norm = std::sqrt(pairwise_sum(squares));
    if (!std::isfinite(metrics.grad_norm)) {
        throw std::runtime_error("non-finite gradient at step " + std::to_string(metrics.step) + " in batch " +
                                 batch_label(batch));
    }
    return metrics;
}

void apply_update(TrainState& state, StepMetrics& metrics) {
    const OptimizerConfig& opt = state.config.optimizer;
    const double lr = lr_at_step(state.step + 1, state.config.schedule(state.stage));
    metrics.lr = lr;
    const double scale =
        (opt.clip_norm > 0.0 && metrics.grad_norm > opt.clip_norm) ? opt.clip_norm / metrics.grad_norm : 1.0;

    const ParamList<float> params = state.model.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param<float>& p = *params[i];
        if (!p.touched) continue;
        const std::int64_t t = ++state.optimizer.steps[i];
        const double correct1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
        const double correct2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
        float* value = p.value.data();
        const float* grad = p.grad.data();
        float* m = state.optimizer.m[i].data();
        float* v = state.optimizer.v[i].data();
        for (Eigen::Index j = 0; j < p.value.size(); ++j) {
            const double g = static_cast<double>(grad[j]) * scale;
            const double mj = opt.beta1 * m[j] + (1.0 - opt.beta1) * g;
            const double vj = opt.beta2 * v[j] + (1.0 - opt.beta2) * g * g;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            value[j] = static_cast<float>(value[j] - lr * (mj / correct1) / (std::sqrt(vj / correct2) + opt.epsilon));
        }
    }
    ++state.step;
}

StepMetrics pretrain_step(TrainState& state, const Batch& batch) {
    if (state.stage != Stage::kPretrain) throw std::logic_error("pretrain_step called on a fine-tuning state");
    StepMetrics metrics = compute_batch_gradients(state, batch, Objective::kMultitask, /*streaming=*/false);
    apply_update(state, metrics);
    return metrics;
}

StepMetrics finetune_step(TrainState& state, const Batch& batch) {
    if (state.stage != Stage::kFinetune) throw std::logic_error("finetune_step called on a pretraining state");
    if (batch.origin != BatchOrigin::kLabeled) {
        throw std::invalid_argument("fine-tuning needs labeled batches, got unlabeled batch " + batch_label(batch));
    }
    StepMetrics metrics = compute_batch_gradients(state, batch, Objective::kTransducer, /*streaming=*/true);
    apply_update(state, metrics);
    return metrics;
}

double validation_loss(const TrainState& state, const std::vector<Utterance>& utterances, bool streaming) {
    if (utterances.empty()) throw std::invalid_argument("validation_loss: empty validation set");
    std::vector<double> losses;
    for (const auto& utt : utterances) {
        if (!utt.transcript) throw std::invalid_argument("validation utterance " + utt.id + " has no transcript");
        const int frames = downsample_length(utt.frames(), state.config.model.encoder);
        const AttentionMask mask = attention_mask_for(frames, state.config.streaming, streaming);
        losses.push_back(transducer_loss_only(state.model, utt.features, *utt.transcript, mask));
    }
    return pairwise_sum(losses) / static_cast<double>(losses.size());
}

std::string metrics_json(const StepMetrics& m, double wall_seconds) {
    nlohmann::ordered_json j;
    j["step"] = m.step;
    j["stage"] = to_string(m.stage);
    j["origin"] = to_string(m.origin);
    j["loss"] = m.loss;
    if (m.stage == Stage::kPretrain) j["contrastive"] = m.contrastive;
    if (m.origin == BatchOrigin::kLabeled) j["transducer"] = m.transducer;
    j["lr"] = m.lr;
    j["grad_norm"] = m.grad_norm;
    j["utterances"] = m.utterances;
    j["wall_time"] = wall_seconds;
    return j.dump();
}

// ---------------------------------------------------------------------------
// Loop
// ---------------------------------------------------------------------------

namespace {

template <typename NextBatch, typename Step>
void run_loop(TrainState& state, const LoopOptions& options, bool streaming, NextBatch next, Step step) {
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&start] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };
    while (state.step < options.until_step) {
        const Batch& batch = next(state.step);
        const StepMetrics metrics = step(state, batch);
        const std::int64_t n = state.step;
        if (options.metrics && options.log_interval > 0 && n % options.log_interval == 0) {
            *options.metrics << metrics_json(metrics, elapsed()) << '\n';
        }
        if (options.validation && options.validation_interval > 0 && n % options.validation_interval == 0) {
            const double val = validation_loss(state, *options.validation, streaming);
            if (options.metrics) {
                nlohmann::ordered_json j;
                j["step"] = n;
                j["stage"] = to_string(state.stage);
                j["validation_loss"] = val;
                j["wall_time"] = elapsed();
                *options.metrics << j.dump() << '\n';
            }
        }
        if (options.metrics) options.metrics->flush();
        if (options.checkpoint_interval > 0 && n % options.checkpoint_interval == 0 &&
            !options.checkpoint_path.empty()) {
            save_checkpoint(state, options.checkpoint_path);
        }
        if (options.callback && options.callback_interval > 0 && n % options.callback_interval == 0 &&
            options.callback(state)) {
            break;
        }
    }
}

}  // namespace

void run_pretraining(TrainState& state, const std::vector<Batch>& labeled, const std::vector<Batch>& unlabeled,
                     const LoopOptions& options) {
    const AlternatingSampler sampler(labeled.size(), unlabeled.size(), state.config.seed);
    run_loop(
        state, options, /*streaming=*/false,
        [&](std::int64_t k) -> const Batch& {
            const auto draw = sampler.at(k);
            return draw.origin == BatchOrigin::kLabeled ? labeled[draw.index] : unlabeled[draw.index];
        },
        pretrain_step);
}

void run_finetuning(TrainState& state, const std::vector<Batch>& labeled, const LoopOptions& options) {
    if (labeled.empty()) throw std::invalid_argument("fine-tuning needs at least one labeled batch");
    const EpochSampler sampler(labeled.size(), state.config.seed, 2);
    run_loop(
        state, options, /*streaming=*/true, [&](std::int64_t k) -> const Batch& { return labeled[sampler.at(k)]; },
        finetune_step);
}

}  // namespace sslt
