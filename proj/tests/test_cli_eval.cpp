// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#include "sslt/config.hpp"
#include "sslt/evaluate.hpp"
#include "sslt/wer.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sys/wait.h>

using namespace sslt;

namespace {

struct Run {
    int code;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(SSLT_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    std::array<char, 512> buf{};
    while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

}  // namespace

TEST_CASE("wer examples") {
    CHECK(wer("a b c", "a b c").rate() == 0.0);
    const WerCounts sub = wer("a b c", "a x c");
    CHECK(sub.substitutions == 1);
    CHECK(sub.rate() == doctest::Approx(1.0 / 3));
    const WerCounts del = wer("a b c d", "b c");
    CHECK(del.deletions == 2);
    CHECK(del.errors() == 2);
    CHECK(del.rate() == 0.5);
    const WerCounts empty = wer("a b", "");
    CHECK(empty.deletions == 2);
    CHECK(empty.rate() == 1.0);
    const WerCounts none = wer("", "x y");
    CHECK(none.insertions == 2);
    CHECK(none.rate() == 2.0);
    CHECK(wer("", "").rate() == 0.0);
}

TEST_CASE("wer tie-breaking prefers substitution, then deletion") {
    // "a b" -> "b x": either S,S or D,I; substitutions win
    const WerCounts w = wer("a b", "b x");
    CHECK(w.substitutions == 2);
    CHECK(w.deletions == 0);
    const WerCounts d = wer("a b c", "c");
    CHECK(d.deletions == 2);
    CHECK(d.substitutions == 0);
}

TEST_CASE("wer distance is symmetric with deletions and insertions swapped") {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> len(0, 6), word(0, 3);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::string> a(static_cast<std::size_t>(len(rng))), b(static_cast<std::size_t>(len(rng)));
        for (auto& w : a) w = std::string(1, static_cast<char>('a' + word(rng)));
        for (auto& w : b) w = std::string(1, static_cast<char>('a' + word(rng)));
        const WerCounts ab = wer(std::span<const std::string>(a), std::span<const std::string>(b));
        const WerCounts ba = wer(std::span<const std::string>(b), std::span<const std::string>(a));
        CHECK(ab.errors() == ba.errors());
        CHECK(ab.reference_words + ab.insertions - ab.deletions == static_cast<int>(b.size()));
    }
}

TEST_CASE("overall WER is weighted by reference words") {
    EvalReport r;
    r.sets.push_back({"x", 10, WerCounts{10, 0, 0, 100}});
    r.sets.push_back({"y", 30, WerCounts{30, 20, 10, 300}});
    CHECK(r.overall() == doctest::Approx(0.175).epsilon(1e-15));
    EvalReport swapped;
    swapped.sets = {r.sets[1], r.sets[0]};
    CHECK(swapped.overall() == r.overall());
    const auto j = r.to_json();
    CHECK(j["overall"]["reference_words"] == 400);
    CHECK(j["sets"][1]["name"] == "y");
}

TEST_CASE("evaluating a single utterance equals its own wer") {
    TrainerConfig cfg;
    cfg.model = testing::tiny_model_config();
    cfg.model.encoder.feature_dim = kNumMelBanks;
    cfg.model.prediction.vocab_size = Vocabulary::kSize;
    Model<float> model(cfg.model);
    model.init(3);
    std::mt19937_64 rng(4);
    Utterance u;
    u.id = "u";
    u.features = testing::random_matrix<float>(48, kNumMelBanks, rng);
    u.transcript = Vocabulary::encode("big cat");
    const std::vector<Utterance> set{u};
    const SetReport r = evaluate_set(model, cfg, "one", set, true);
    const auto hyp = decode_utterances(model, cfg, set, true);
    CHECK(r.counts == wer("big cat", hyp[0].text));
    CHECK(evaluate_set(model, cfg, "one", set, true).counts == r.counts);
    Utterance unlabeled = u;
    unlabeled.transcript.reset();
    CHECK_THROWS_WITH(evaluate_set(model, cfg, "bad", {unlabeled}, true), doctest::Contains("no transcript"));
}

TEST_CASE("run configuration parsing") {
    const TrainerConfig defaults;
    CHECK(defaults.pretrain_schedule.k == 5.0);
    CHECK(defaults.finetune_schedule.k == 6.0);
    CHECK(defaults.weights.alpha == 0.5);
    CHECK(defaults.masking.start_probability == 0.065);
    CHECK(defaults.model.contrastive.num_negatives == 100);

    const TrainerConfig round = trainer_config_from_json(to_json(defaults));
    CHECK(to_json(round) == to_json(defaults));

    auto error_for = [](const char* text) {
        try {
            run_config_from_json(nlohmann::json::parse(text), ".");
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(error_for(R"({"encoder": {"d_modle": 8}})").find("encoder.d_modle") != std::string::npos);
    CHECK(error_for(R"({"pretrain": {"alpha": "half"}})").find("pretrain.alpha") != std::string::npos);
    CHECK(error_for(R"({"pretrain": {"alpha": 1.5}})").find("alpha") != std::string::npos);
    CHECK(error_for(R"({"encoder": {"d_model": 32}})").find("target_dim") != std::string::npos);
    CHECK(error_for(R"({"streaming": {"chunk_size": 0}})").find("chunk_size") != std::string::npos);
    CHECK(error_for(R"({"seed": 3})").empty());

    const auto dir = testing::scratch_dir("config");
    std::ofstream(dir / "c.json") << R"({"data": {"labeled": "nothere.jsonl"}})";
    CHECK_THROWS_WITH_AS(load_run_config(dir / "c.json"), doctest::Contains("nothere.jsonl"), ConfigError);
}

TEST_CASE("shipped configurations parse and validate") {
    for (const char* name : {"toy.json", "full.json"}) {
        CAPTURE(name);
        std::ifstream in(std::filesystem::path(SSLT_SOURCE_DIR) / "configs" / name);
        REQUIRE(in);
        const RunConfig cfg = run_config_from_json(nlohmann::json::parse(in), ".");
        CHECK_NOTHROW(cfg.trainer.validate());
    }
}

TEST_CASE("command line") {
    const Run mask = run("mask-dump --frames 8 --chunk 4 --left-chunks 1");
    CHECK(mask.code == 0);
    CHECK(mask.out == "11110000\n11110000\n11110000\n11110000\n11111111\n11111111\n11111111\n11111111\n");
    CHECK(run("mask-dump --frames 8 --chunk 4 --left-chunks 1 --bogus").code == 2);
    CHECK(run("").code == 2);
    CHECK(run("frobnicate").code == 2);
    CHECK(run("mask-dump --frames 0 --chunk 4 --left-chunks 1").code == 2);

    const auto dir = testing::scratch_dir("cli");
    std::ofstream(dir / "bad.json") << R"({"encoder": {"nope": 1}})";
    std::ofstream(dir / "fake.ckpt") << "x";
    CHECK(run("eval --config " + (dir / "bad.json").string() + " --checkpoint " + (dir / "fake.ckpt").string())
              .code == 2);
    std::ofstream(dir / "ok.json") << R"({"seed": 1})";
    CHECK(run("eval --config " + (dir / "ok.json").string() + " --checkpoint " + (dir / "fake.ckpt").string() +
              " --test " + (dir / "ok.json").string())
              .code == 1);
}
