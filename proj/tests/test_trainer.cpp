// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#include "sslt/checkpoint.hpp"
#include "sslt/trainer.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace sslt;

namespace {

TrainerConfig small_trainer_config() {
    TrainerConfig cfg;
    cfg.model = testing::tiny_model_config(2);
    cfg.model.encoder.feature_dim = kNumMelBanks;
    cfg.pretrain_schedule = {1.0, 10, 100, 64};
    cfg.finetune_schedule = {1.0, 10, 100, 64};
    cfg.streaming = {2, 1};
    cfg.seed = 42;
    return cfg;
}

std::vector<Utterance> random_utterances(int n, bool labeled, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Utterance> out;
    for (int i = 0; i < n; ++i) {
        Utterance u;
        u.id = (labeled ? "l" : "u") + std::to_string(i);
        u.features = testing::random_matrix<float>(40 + 8 * i, kNumMelBanks, rng);
        if (labeled) u.transcript = std::vector<int>{1 + i % 4, 2, 3};
        out.push_back(std::move(u));
    }
    return out;
}

bool same_params(const Model<float>& a, const Model<float>& b) {
    const auto pa = a.params();
    const auto pb = b.params();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (!testing::bit_equal(pa[i]->value, pb[i]->value)) return false;
    }
    return true;
}

bool is_transducer_only(const std::string& name) {
    return name.starts_with("prediction.") || name.starts_with("joint.");
}

}  // namespace

TEST_CASE("learning rate schedule") {
    const ScheduleConfig full_size{5.0, 25000, 420000, 512};
    const double peak = lr_at_step(25000, full_size);
    CHECK(std::abs(peak - 0.0013975424859373686) < 1e-15);
    CHECK(lr_at_step(12500, full_size) == doctest::Approx(peak / 2).epsilon(1e-14));
    CHECK(lr_at_step(100000, full_size) == doctest::Approx(peak / 2).epsilon(1e-14));
    CHECK(lr_at_step(24999, full_size) < peak);
    CHECK(lr_at_step(25001, full_size) < peak);
    CHECK(lr_at_step(25001, full_size) == doctest::Approx(peak).epsilon(1e-4));
    CHECK_THROWS(lr_at_step(0, full_size));
    CHECK_THROWS(ScheduleConfig{0.0, 10, 10, 8}.validate());
    CHECK_THROWS(ScheduleConfig{1.0, 0, 10, 8}.validate());
}

TEST_CASE("alternating sampler") {
    const AlternatingSampler s(3, 5, 9);
    for (int k = 0; k < 40; ++k) {
        CHECK(s.at(k).origin == (k % 2 == 0 ? BatchOrigin::kLabeled : BatchOrigin::kUnlabeled));
    }
    // the labeled stream restarts after its three batches while unlabeled continues
    std::vector<std::size_t> first{s.at(0).index, s.at(2).index, s.at(4).index};
    std::sort(first.begin(), first.end());
    CHECK(first == std::vector<std::size_t>{0, 1, 2});
    std::vector<std::size_t> second{s.at(6).index, s.at(8).index, s.at(10).index};
    std::sort(second.begin(), second.end());
    CHECK(second == std::vector<std::size_t>{0, 1, 2});
    std::vector<std::size_t> unl;
    for (int k = 1; k < 10; k += 2) unl.push_back(s.at(k).index);
    std::sort(unl.begin(), unl.end());
    CHECK(unl == std::vector<std::size_t>{0, 1, 2, 3, 4});

    const AlternatingSampler again(3, 5, 9);
    const AlternatingSampler other(3, 5, 10);
    bool differs = false;
    for (int k = 0; k < 40; ++k) {
        CHECK(again.at(k).index == s.at(k).index);
        differs = differs || other.at(k).index != s.at(k).index;
    }
    CHECK(differs);
    CHECK_THROWS_WITH(AlternatingSampler(0, 5, 1), doctest::Contains("labeled"));
    CHECK_THROWS(AlternatingSampler(2, 0, 1));
}

TEST_CASE("unlabeled batches never touch transducer-only parameters") {
    TrainState state = make_initial_state(small_trainer_config(), Stage::kPretrain);
    const TrainState before = state;
    const Batch batch = testing::make_batch(random_utterances(2, false, 1), BatchOrigin::kUnlabeled);
    const StepMetrics m = pretrain_step(state, batch);
    CHECK(m.origin == BatchOrigin::kUnlabeled);
    CHECK(m.transducer == 0.0);
    CHECK(m.loss == m.contrastive);
    CHECK(state.step == 1);

    const auto after = state.model.params();
    const auto orig = before.model.params();
    bool encoder_moved = false;
    for (std::size_t i = 0; i < after.size(); ++i) {
        if (is_transducer_only(after[i]->name)) {
            CHECK(testing::bit_equal(after[i]->value, orig[i]->value));
            CHECK(state.optimizer.m[i].isZero(0));
            CHECK(state.optimizer.v[i].isZero(0));
            CHECK(state.optimizer.steps[i] == 0);
        } else if (!testing::bit_equal(after[i]->value, orig[i]->value)) {
            encoder_moved = true;
        }
    }
    CHECK(encoder_moved);
}

TEST_CASE("fine-tuning step is the streaming transducer loss") {
    TrainState state = make_initial_state(small_trainer_config(), Stage::kFinetune);
    const auto utts = random_utterances(3, true, 2);
    const Batch batch = testing::make_batch(utts, BatchOrigin::kLabeled);
    double expected = 0.0;
    for (const auto& u : utts) {
        const int frames = downsample_length(u.frames(), state.config.model.encoder);
        expected += transducer_loss_only(state.model, u.features, *u.transcript,
                                         chunk_attention_mask(frames, 2, 1));
    }
    const StepMetrics m = finetune_step(state, batch);
    CHECK(m.loss == doctest::Approx(expected).epsilon(1e-9));
    CHECK(m.lr == lr_at_step(1, state.config.finetune_schedule));

    const Batch unl = testing::make_batch(random_utterances(1, false, 3), BatchOrigin::kUnlabeled);
    CHECK_THROWS_WITH(finetune_step(state, unl), doctest::Contains("unlabeled"));
    CHECK_THROWS(pretrain_step(state, batch));
}

TEST_CASE("first Adam update moves each touched weight by about lr against its gradient sign") {
    TrainerConfig cfg = small_trainer_config();
    cfg.optimizer.clip_norm = 0.0;
    TrainState state = make_initial_state(cfg, Stage::kFinetune);
    const Batch batch = testing::make_batch(random_utterances(2, true, 4), BatchOrigin::kLabeled);
    StepMetrics m = compute_batch_gradients(state, batch, Objective::kTransducer, true);
    const TrainState before = state;
    apply_update(state, m);
    const auto now = state.model.params();
    const auto was = before.model.params();
    for (std::size_t i = 0; i < now.size(); ++i) {
        for (Eigen::Index j = 0; j < now[i]->value.size(); ++j) {
            const double g = was[i]->grad.data()[j];
            if (std::abs(g) < 1e-4) continue;
            const double delta = static_cast<double>(now[i]->value.data()[j]) - was[i]->value.data()[j];
            CHECK(delta == doctest::Approx(-m.lr * (g > 0 ? 1.0 : -1.0)).epsilon(1e-3));
        }
    }
}

TEST_CASE("gradient clipping bounds the update direction, not its Adam-normalised size") {
    TrainerConfig cfg = small_trainer_config();
    cfg.optimizer.clip_norm = 1e-3;
    TrainState state = make_initial_state(cfg, Stage::kFinetune);
    const Batch batch = testing::make_batch(random_utterances(1, true, 5), BatchOrigin::kLabeled);
    const StepMetrics m = finetune_step(state, batch);
    CHECK(m.grad_norm > 1e-3);
    CHECK(state.optimizer.m.back().cast<double>().norm() <= 1e-3 * 0.1 * (1 + 1e-5));
}

TEST_CASE("non-finite losses are reported with the batch") {
    TrainState state = make_initial_state(small_trainer_config(), Stage::kFinetune);
    state.model.joint.output.bias.value(0, 0) = std::numeric_limits<float>::quiet_NaN();
    const Batch batch = testing::make_batch(random_utterances(1, true, 6), BatchOrigin::kLabeled);
    CHECK_THROWS_WITH(finetune_step(state, batch), doctest::Contains("[l0]"));
}

TEST_CASE("fine-tuning from a pretrained state keeps weights and restarts the rest") {
    TrainState pre = make_initial_state(small_trainer_config(), Stage::kPretrain);
    const Batch batch = testing::make_batch(random_utterances(2, true, 7), BatchOrigin::kLabeled);
    pretrain_step(pre, batch);
    pretrain_step(pre, batch);
    const TrainState ft = start_finetuning(pre, pre.config);
    CHECK(ft.stage == Stage::kFinetune);
    CHECK(ft.step == 0);
    CHECK(same_params(ft.model, pre.model));
    for (std::size_t i = 0; i < ft.optimizer.m.size(); ++i) {
        CHECK(ft.optimizer.m[i].isZero(0));
        CHECK(ft.optimizer.steps[i] == 0);
    }
    TrainerConfig wider = pre.config;
    wider.model.joint.joint_dim = 7;
    CHECK_THROWS_WITH(start_finetuning(pre, wider), doctest::Contains("joint."));
}

TEST_CASE("checkpoint round trip and error reporting") {
    const auto dir = testing::scratch_dir("checkpoint");
    TrainState state = make_initial_state(small_trainer_config(), Stage::kPretrain);
    const Batch batch = testing::make_batch(random_utterances(2, true, 8), BatchOrigin::kLabeled);
    pretrain_step(state, batch);
    save_checkpoint(state, dir / "a.ckpt");
    const TrainState back = load_checkpoint(dir / "a.ckpt");
    CHECK(back.step == state.step);
    CHECK(back.stage == state.stage);
    CHECK(same_params(back.model, state.model));
    for (std::size_t i = 0; i < state.optimizer.m.size(); ++i) {
        CHECK(testing::bit_equal(back.optimizer.m[i], state.optimizer.m[i]));
        CHECK(testing::bit_equal(back.optimizer.v[i], state.optimizer.v[i]));
        CHECK(back.optimizer.steps[i] == state.optimizer.steps[i]);
    }

    std::string bytes;
    {
        std::ifstream in(dir / "a.ckpt", std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream out(dir / name, std::ios::binary);
        out << content;
        return dir / name;
    };
    std::string versioned = bytes;
    versioned[8] = 9;
    CHECK_THROWS_WITH(load_checkpoint(write("v.ckpt", versioned)), doctest::Contains("version 9"));
    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x40;
    CHECK_THROWS_WITH(load_checkpoint(write("c.ckpt", flipped)), doctest::Contains("corrupt"));
    CHECK_THROWS(load_checkpoint(write("t.ckpt", bytes.substr(0, 30))));
    CHECK_THROWS_WITH(load_checkpoint(write("m.ckpt", "hello world, not a checkpoint")), doctest::Contains("magic"));
    CHECK_THROWS(load_checkpoint(dir / "missing.ckpt"));
}

TEST_CASE("validation loss is the mean per-utterance transducer loss") {
    TrainState state = make_initial_state(small_trainer_config(), Stage::kFinetune);
    const auto utts = random_utterances(2, true, 9);
    double sum = 0.0;
    for (const auto& u : utts) {
        const int frames = downsample_length(u.frames(), state.config.model.encoder);
        sum += transducer_loss_only(state.model, u.features, *u.transcript, full_attention_mask(frames));
    }
    CHECK(validation_loss(state, utts, false) == doctest::Approx(sum / 2).epsilon(1e-12));
    CHECK_THROWS(validation_loss(state, {}, false));
    CHECK_THROWS(validation_loss(state, random_utterances(1, false, 1), false));
}
