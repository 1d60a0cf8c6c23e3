// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training: the warmup/inverse-square-root learning rate, batch samplers,
// Adam, and the pretraining and streaming fine-tuning steps.
//
// Randomness inside a step (span masks, distractors) is derived from
// (seed, step, utterance index) and batch order from (seed, stream, epoch),
// so a run restored from a checkpoint continues bit-identically without
// serializing generator state.

#pragma once

#include "sslt/frontend.hpp"
#include "sslt/masking.hpp"
#include "sslt/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace sslt {

struct ScheduleConfig {
    double k = 5.0;
    int warmup = 25000;
    std::int64_t total_steps = 420000;
    int d_model = 512;

    void validate() const;
};

/// k * d_model^-0.5 * min(n^-0.5, n * warmup^-1.5), for n >= 1.
double lr_at_step(std::int64_t n, const ScheduleConfig& cfg);

struct LossWeights {
    double alpha = 0.5;  // weight of the transducer loss on labeled batches

    void validate() const;
};

struct OptimizerConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 5.0;  // global gradient norm; <= 0 disables clipping

    void validate() const;
};

struct StreamingConfig {
    int chunk_size = 4;
    int left_chunks = 18;

    void validate() const;
};

enum class Stage { kPretrain, kFinetune };

std::string to_string(Stage stage);
Stage parse_stage(const std::string& name);

/// Everything a training step depends on.
struct TrainerConfig {
    ModelConfig model;
    SpanMaskConfig masking;
    ScheduleConfig pretrain_schedule;
    ScheduleConfig finetune_schedule{6.0, 25000, 5000, 512};
    LossWeights weights;
    OptimizerConfig optimizer;
    StreamingConfig streaming;
    std::int64_t labeled_frame_cap = 24000;
    std::int64_t unlabeled_frame_cap = 48000;
    std::int64_t finetune_frame_cap = 24000;
    int max_symbols_per_frame = 10;
    std::uint64_t seed = 1;

    void validate() const;
    const ScheduleConfig& schedule(Stage stage) const {
        return stage == Stage::kPretrain ? pretrain_schedule : finetune_schedule;
    }
};

/// Chunk mask for streaming, full mask otherwise.
AttentionMask attention_mask_for(int frames, const StreamingConfig& cfg, bool streaming);

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

/// Position-addressable epoch sampler: draw k is element k % n of the
/// permutation of epoch k / n, seeded by (seed, stream, epoch).
class EpochSampler {
public:
    EpochSampler(std::size_t count, std::uint64_t seed, std::uint64_t stream);

    std::size_t at(std::int64_t k) const;
    std::size_t size() const { return count_; }

private:
    std::size_t count_;
    std::uint64_t seed_;
    std::uint64_t stream_;
    mutable std::int64_t cached_epoch_ = -1;
    mutable std::vector<std::size_t> cached_perm_;
};

/// Labeled, unlabeled, labeled, ...; each origin cycles through its own
/// epoch sampler and restarts independently when exhausted.
class AlternatingSampler {
public:
    struct Draw {
        BatchOrigin origin;
        std::size_t index;
    };

    AlternatingSampler(std::size_t labeled_batches, std::size_t unlabeled_batches, std::uint64_t seed);

    Draw at(std::int64_t k) const;

private:
    EpochSampler labeled_;
    EpochSampler unlabeled_;
};

// ---------------------------------------------------------------------------
// State and steps
// ---------------------------------------------------------------------------

/// Adam moments, one pair per parameter in Model::params() order. `steps`
/// counts the updates each parameter actually received; bias correction
/// uses it, so parameters skipped on some steps stay consistent.
struct OptimizerState {
    std::vector<Mat<float>> m;
    std::vector<Mat<float>> v;
    std::vector<std::int64_t> steps;
};

struct TrainState {
    TrainerConfig config;
    Stage stage = Stage::kPretrain;
    Model<float> model;
    OptimizerState optimizer;
    std::int64_t step = 0;  // optimizer updates applied in this stage

    TrainState(const TrainerConfig& cfg, Stage stage);

    /// Fresh moments for the current parameter set.
    void reset_optimizer();
};

/// Initializes parameters from config.seed.
TrainState make_initial_state(const TrainerConfig& cfg, Stage stage);

/// Starts fine-tuning from a pretrained state: parameters are copied, the
/// step counter, optimizer moments and schedule restart.
TrainState start_finetuning(const TrainState& pretrained, const TrainerConfig& cfg);

enum class Objective {
    kMultitask,        // alpha * transducer + (1 - alpha) * contrastive on labeled batches
    kTransducer,       // transducer only
    kContrastive,      // contrastive only
};

struct StepMetrics {
    std::int64_t step = 0;
    Stage stage = Stage::kPretrain;
    BatchOrigin origin = BatchOrigin::kLabeled;
    double loss = 0.0;
    double contrastive = 0.0;
    double transducer = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
    int utterances = 0;
    int masked_frames = 0;
};

/// Zeroes gradients and accumulates the batch gradient of `objective` for the
/// update that would become step `state.step + 1`. Exposed so gradient-level
/// equivalences can be checked without an optimizer update.
StepMetrics compute_batch_gradients(TrainState& state, const Batch& batch, Objective objective, bool streaming);

/// Multitask step: labeled batches use the weighted sum, unlabeled batches
/// the contrastive loss alone. Full-context attention.
StepMetrics pretrain_step(TrainState& state, const Batch& batch);

/// Transducer loss under the streaming chunk mask; labeled batches only.
StepMetrics finetune_step(TrainState& state, const Batch& batch);

/// Clips, then applies one Adam update at lr_at_step(state.step + 1) to every
/// parameter that received a gradient, and advances the step counter.
void apply_update(TrainState& state, StepMetrics& metrics);

/// Mean transducer loss per utterance.
double validation_loss(const TrainState& state, const std::vector<Utterance>& utterances, bool streaming);

std::string metrics_json(const StepMetrics& metrics, double wall_seconds);

// ---------------------------------------------------------------------------
// Loop
// ---------------------------------------------------------------------------

struct LoopOptions {
    std::int64_t until_step = 0;
    int log_interval = 1;
    int validation_interval = 0;  // 0 disables
    const std::vector<Utterance>* validation = nullptr;
    int checkpoint_interval = 0;  // 0 disables periodic checkpoints
    std::filesystem::path checkpoint_path;
    std::ostream* metrics = nullptr;
    /// Called after every `callback_interval` steps; returning true stops.
    int callback_interval = 0;
    std::function<bool(const TrainState&)> callback;
};

/// Runs pretraining until `options.until_step`, drawing batches from the
/// alternating sampler.
void run_pretraining(TrainState& state, const std::vector<Batch>& labeled, const std::vector<Batch>& unlabeled,
                     const LoopOptions& options);

/// Runs fine-tuning until `options.until_step`.
void run_finetuning(TrainState& state, const std::vector<Batch>& labeled, const LoopOptions& options);

}  // namespace sslt
