// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: pretrain, finetune, decode, eval, mask-dump.

#include "sslt/checkpoint.hpp"
#include "sslt/config.hpp"
#include "sslt/evaluate.hpp"
#include "sslt/frontend.hpp"
#include "sslt/masking.hpp"
#include "sslt/trainer.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace sslt;

/// `path` is used as given; config-relative paths must be resolved first.
std::vector<Utterance> load_set(const RunConfig& cfg, const std::filesystem::path& path) {
    const auto entries = load_manifest(path, cfg.trainer.model.prediction.vocab_size);
    return filter_by_length(load_utterances(entries, path.parent_path()), cfg.data.max_frames);
}

std::vector<Utterance> require_labeled(std::vector<Utterance> utts, const std::string& manifest) {
    for (const auto& u : utts) {
        if (!u.transcript) throw std::runtime_error(manifest + ": utterance " + u.id + " has no transcript");
    }
    return utts;
}

struct TrainArgs {
    std::string config;
    std::string out;
    std::string init;
    std::string resume;
    std::string metrics;
    std::int64_t steps = -1;
};

void add_train_options(CLI::App* cmd, TrainArgs& a) {
    cmd->add_option("--config", a.config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", a.out, "checkpoint written at the end and at checkpoint intervals")->required();
    cmd->add_option("--resume", a.resume, "continue from this checkpoint")->check(CLI::ExistingFile);
    cmd->add_option("--metrics", a.metrics, "metrics JSON Lines file (overrides logging.metrics_path)");
    cmd->add_option("--steps", a.steps, "stop after this many steps (default: schedule total_steps)");
}

TrainState resumed_state(const std::string& path, const RunConfig& cfg, Stage stage) {
    TrainState state = load_checkpoint(path);
    if (state.stage != stage) {
        throw std::runtime_error(path + " is a " + to_string(state.stage) + " checkpoint, cannot resume " +
                                 to_string(stage));
    }
    if (to_json(state.config) != to_json(cfg.trainer)) {
        throw std::runtime_error(path + ": checkpoint configuration differs from the given config");
    }
    return state;
}

void train(const TrainArgs& a, Stage stage) {
    const RunConfig cfg = load_run_config(a.config);
    const TrainerConfig& tc = cfg.trainer;
    if (cfg.data.labeled.empty()) throw ConfigError("config: data.labeled is required for training");

    std::optional<TrainState> state;
    if (!a.resume.empty()) {
        state.emplace(resumed_state(a.resume, cfg, stage));
    } else if (stage == Stage::kFinetune && !a.init.empty()) {
        state.emplace(start_finetuning(load_checkpoint(a.init), tc));
    } else {
        state.emplace(make_initial_state(tc, stage));
    }

    const auto labeled = require_labeled(load_set(cfg, cfg.resolve(cfg.data.labeled)), cfg.data.labeled);
    std::vector<Utterance> validation;
    if (!cfg.data.validation.empty()) {
        validation = require_labeled(load_set(cfg, cfg.resolve(cfg.data.validation)), cfg.data.validation);
    }

    LoopOptions options;
    options.until_step = a.steps >= 0 ? a.steps : tc.schedule(stage).total_steps;
    options.log_interval = cfg.logging.log_interval;
    options.validation_interval = cfg.logging.validation_interval;
    options.validation = validation.empty() ? nullptr : &validation;
    options.checkpoint_interval = cfg.logging.checkpoint_interval;
    options.checkpoint_path = a.out;

    std::ofstream metrics_file;
    const std::string metrics_path = !a.metrics.empty() ? a.metrics
                                     : cfg.logging.metrics_path.empty() ? std::string()
                                                                        : cfg.resolve(cfg.logging.metrics_path).string();
    if (!metrics_path.empty()) {
        metrics_file.open(metrics_path, a.resume.empty() ? std::ios::trunc : std::ios::app);
        if (!metrics_file) throw std::runtime_error("cannot write metrics file " + metrics_path);
        options.metrics = &metrics_file;
    }

    if (stage == Stage::kPretrain) {
        if (cfg.data.unlabeled.empty()) throw ConfigError("config: data.unlabeled is required for pretraining");
        const auto unlabeled = load_set(cfg, cfg.resolve(cfg.data.unlabeled));
        const auto lab_batches = make_batches(labeled, tc.labeled_frame_cap, tc.seed, BatchOrigin::kLabeled);
        const auto unl_batches = make_batches(unlabeled, tc.unlabeled_frame_cap, tc.seed + 1, BatchOrigin::kUnlabeled);
        run_pretraining(*state, lab_batches, unl_batches, options);
    } else {
        const auto batches = make_batches(labeled, tc.finetune_frame_cap, tc.seed, BatchOrigin::kLabeled);
        run_finetuning(*state, batches, options);
    }
    save_checkpoint(*state, a.out);
    std::cerr << to_string(stage) << ": " << state->step << " steps, checkpoint " << a.out << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multitask self-supervised pretraining and streaming fine-tuning of a Transformer-Transducer"};
    app.require_subcommand(1);

    TrainArgs pre;
    add_train_options(app.add_subcommand("pretrain", "multitask pretraining on labeled and unlabeled data"), pre);

    TrainArgs fine;
    CLI::App* finetune = app.add_subcommand("finetune", "streaming fine-tuning with the transducer loss");
    add_train_options(finetune, fine);
    finetune->add_option("--init", fine.init, "pretraining checkpoint to start from")->check(CLI::ExistingFile);

    std::string config, checkpoint, manifest;
    std::vector<std::string> tests;
    bool full_context = false;
    CLI::App* decode = app.add_subcommand("decode", "greedy decoding, one 'id<TAB>text' line per utterance");
    decode->add_option("--config", config)->required()->check(CLI::ExistingFile);
    decode->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    decode->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
    decode->add_flag("--full-context", full_context, "decode without the streaming mask");

    CLI::App* eval = app.add_subcommand("eval", "word error rate report as JSON");
    eval->add_option("--config", config)->required()->check(CLI::ExistingFile);
    eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    eval->add_option("--test", tests, "labeled manifests (default: data.test)")->check(CLI::ExistingFile);
    eval->add_flag("--full-context", full_context, "decode without the streaming mask");

    int frames = 0, chunk = 0, left_chunks = 0;
    CLI::App* mask = app.add_subcommand("mask-dump", "print a chunk-wise attention mask");
    mask->add_option("--frames", frames)->required()->check(CLI::PositiveNumber);
    mask->add_option("--chunk", chunk)->required()->check(CLI::PositiveNumber);
    mask->add_option("--left-chunks", left_chunks)->required()->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*app.get_subcommand("pretrain")) {
            train(pre, Stage::kPretrain);
        } else if (*finetune) {
            train(fine, Stage::kFinetune);
        } else if (*decode) {
            const RunConfig cfg = load_run_config(config);
            const TrainState state = load_checkpoint(checkpoint);
            const auto utts = load_set(cfg, manifest);
            for (const auto& h : decode_utterances(state.model, state.config, utts, !full_context)) {
                std::cout << h.id << '\t' << h.text << '\n';
            }
        } else if (*eval) {
            const RunConfig cfg = load_run_config(config);
            const TrainState state = load_checkpoint(checkpoint);
            std::vector<std::string> sets = tests;
            if (sets.empty()) {
                for (const auto& t : cfg.data.test) sets.push_back(cfg.resolve(t).string());
            }
            if (sets.empty()) throw ConfigError("eval: no test manifests given and data.test is empty");
            EvalReport report;
            for (const auto& s : sets) {
                const auto utts = load_set(cfg, s);
                report.sets.push_back(
                    evaluate_set(state.model, state.config, std::filesystem::path(s).stem().string(), utts,
                                 !full_context));
            }
            std::cout << report.to_json().dump(2) << '\n';
        } else if (*mask) {
            std::cout << chunk_attention_mask(frames, chunk, left_chunks).to_string();
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
