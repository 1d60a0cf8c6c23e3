// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#include "sslt/frontend.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace sslt;

namespace {

std::vector<float> sine(double hz, int sample_rate, int samples) {
    std::vector<float> out(static_cast<std::size_t>(samples));
    for (int i = 0; i < samples; ++i) {
        out[static_cast<std::size_t>(i)] = static_cast<float>(0.5 * std::sin(2.0 * std::numbers::pi * hz * i / sample_rate));
    }
    return out;
}

Utterance utterance(const std::string& id, int frames, std::optional<std::vector<int>> transcript = std::nullopt) {
    Utterance u;
    u.id = id;
    u.features = Mat<float>::Constant(frames, kNumMelBanks, 0.25f);
    u.transcript = std::move(transcript);
    return u;
}

}  // namespace

TEST_CASE("vocabulary round trip and separators") {
    const auto ids = Vocabulary::encode("it's  a cat");
    CHECK(ids == std::vector<int>{10, 21, 28, 20, 1, 2, 1, 4, 2, 21});
    CHECK(Vocabulary::decode(ids) == "it's a cat");
    CHECK_THROWS_AS(Vocabulary::encode("cat!"), std::invalid_argument);
    CHECK(Vocabulary::decode(std::vector<int>{0, 4, 0, 2}) == "ca");
}

TEST_CASE("manifest parsing") {
    std::istringstream in(
        R"({"id":"a","feature_path":"a.feat","transcript":[4,2,21],"sample_rate":"16k","num_frames":100})"
        "\n\n"
        R"({"id":"b","audio_path":"b.wav","sample_rate":"8k","num_frames":50})"
        "\n");
    const auto entries = parse_manifest(in);
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].labeled());
    CHECK_FALSE(entries[1].labeled());
    CHECK(entries[1].sample_rate == SampleRate::k8k);

    std::ostringstream out;
    write_manifest(out, entries);
    std::istringstream again(out.str());
    const auto round = parse_manifest(again);
    CHECK(round[0].transcript == entries[0].transcript);
    CHECK(round[1].audio_path == entries[1].audio_path);
    CHECK(manifest_line(round[0]) == manifest_line(entries[0]));
}

TEST_CASE("manifest errors name the line") {
    auto message_for = [](const std::string& text) {
        std::istringstream in(text);
        try {
            parse_manifest(in);
        } catch (const std::exception& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    const std::string good = R"({"id":"a","feature_path":"a","sample_rate":"16k","num_frames":3})";
    CHECK(message_for(good + "\n{\"id\":\"\"}\n").starts_with("manifest line 2"));
    CHECK(message_for(R"({"id":"a","feature_path":"a","audio_path":"b","sample_rate":"16k","num_frames":3})")
              .find("exactly one") != std::string::npos);
    CHECK(message_for(R"({"id":"a","feature_path":"a","sample_rate":"44k","num_frames":3})").find("44k") !=
          std::string::npos);
    CHECK(message_for(R"({"id":"a","feature_path":"a","transcript":[0],"sample_rate":"16k","num_frames":3})")
              .find("outside vocabulary") != std::string::npos);
    CHECK(message_for("not json").starts_with("manifest line 1"));
}

TEST_CASE("mel scale oracle values") {
    CHECK(hz_to_mel(4000.0) == doctest::Approx(2146.06452750619).epsilon(1e-12));
    CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5).epsilon(1e-12));
    const auto edges = mel_band_edges();
    REQUIRE(edges.size() == 82);
    CHECK(edges.front() == 0.0);
    CHECK(edges.back() == doctest::Approx(8000.0).epsilon(1e-12));
    // bank 60 rises from edge 60 (< 4 kHz) and ends at edge 62 (> 4 kHz); bank 59 ends below 4 kHz
    CHECK(narrowband_cutoff_bank() == 60);
    CHECK(edges[61] < 4000.0);
    CHECK(edges[62] > 4000.0);
}

TEST_CASE("log-Mel frame count and tone localisation") {
    CHECK(num_frames(16000, MelConfig::for_rate(16000)) == 98);
    CHECK(num_frames(8000, MelConfig::for_rate(8000)) == 98);
    CHECK(num_frames(399, MelConfig::for_rate(16000)) == 0);

    const Mat<float> f = log_mel(sine(1000.0, 16000, 16000), 16000);
    REQUIRE(f.rows() == 98);
    REQUIRE(f.cols() == 80);
    for (Eigen::Index t = 0; t < f.rows(); ++t) {
        Eigen::Index best = 0;
        f.row(t).maxCoeff(&best);
        CHECK((best == 27 || best == 28));
    }

    const Mat<float> silent = log_mel(std::vector<float>(1600, 0.0f), 16000);
    CHECK((silent.array() == static_cast<float>(std::log(kEnergyFloor))).all());
    CHECK_THROWS(log_mel(std::vector<float>(100, 0.0f), 16000));
    CHECK_THROWS(log_mel(std::vector<float>(1600, 0.0f), 22050));
}

TEST_CASE("8 kHz upconversion") {
    const Mat<float> narrow = log_mel(sine(1000.0, 8000, 8000), 8000);
    const Mat<float> up = upconvert_8k(narrow);
    const int cut = narrowband_cutoff_bank();
    const float floor_value = static_cast<float>(std::log(kEnergyFloor));
    CHECK((up.rightCols(kNumMelBanks - cut).array() == floor_value).all());
    CHECK(testing::bit_equal<float>(up.leftCols(cut), narrow.leftCols(cut)));
    CHECK(testing::bit_equal(upconvert_8k(up), up));
    CHECK_THROWS(upconvert_8k(Mat<float>::Zero(3, 40)));

    // the 16 kHz front end sees the same tone in the same banks
    const Mat<float> wide = log_mel(sine(1000.0, 16000, 16000), 16000);
    Eigen::Index a = 0, b = 0;
    up.row(10).maxCoeff(&a);
    wide.row(10).maxCoeff(&b);
    CHECK(a == b);
}

TEST_CASE("feature and wav files") {
    const auto dir = testing::scratch_dir("frontend_io");
    std::mt19937_64 rng(3);
    const Mat<float> f = testing::random_matrix<float>(17, 80, rng);
    write_feature_file(dir / "x.feat", f);
    CHECK(testing::bit_equal(read_feature_file(dir / "x.feat"), f));
    {
        std::ofstream bad(dir / "bad.feat", std::ios::binary);
        bad << "NOTAFEAT12345678";
    }
    CHECK_THROWS_WITH_AS(read_feature_file(dir / "bad.feat"), doctest::Contains("bad magic"), std::runtime_error);

    Waveform w;
    w.sample_rate = 8000;
    w.samples = sine(440.0, 8000, 800);
    write_wav(dir / "x.wav", w);
    const Waveform back = read_wav(dir / "x.wav");
    CHECK(back.sample_rate == 8000);
    REQUIRE(back.samples.size() == w.samples.size());
    for (std::size_t i = 0; i < w.samples.size(); ++i) CHECK(std::abs(back.samples[i] - w.samples[i]) <= 1.0f / 32768);
}

TEST_CASE("loading checks the declared frame count and upconverts 8 kHz") {
    const auto dir = testing::scratch_dir("frontend_load");
    Waveform w;
    w.sample_rate = 8000;
    w.samples = sine(700.0, 8000, 8000);
    write_wav(dir / "n.wav", w);
    ManifestEntry e;
    e.id = "n";
    e.audio_path = "n.wav";
    e.sample_rate = SampleRate::k8k;
    e.num_frames = 98;
    const auto utts = load_utterances(std::vector<ManifestEntry>{e}, dir);
    REQUIRE(utts.size() == 1);
    CHECK(utts[0].frames() == 98);
    CHECK((utts[0].features.rightCols(kNumMelBanks - narrowband_cutoff_bank()).array() ==
           static_cast<float>(std::log(kEnergyFloor)))
              .all());

    e.num_frames = 97;
    CHECK_THROWS_WITH(load_utterances(std::vector<ManifestEntry>{e}, dir), doctest::Contains("manifest says 97"));
    e.num_frames = 98;
    e.sample_rate = SampleRate::k16k;
    CHECK_THROWS(load_utterances(std::vector<ManifestEntry>{e}, dir));
}

TEST_CASE("length filter drops exactly T > 3000") {
    std::vector<Utterance> utts{utterance("a", 2999), utterance("b", 3000), utterance("c", 3001), utterance("d", 10)};
    const auto kept = filter_by_length(utts);
    REQUIRE(kept.size() == 3);
    CHECK(kept[0].id == "a");
    CHECK(kept[1].id == "b");
    CHECK(kept[2].id == "d");
}

TEST_CASE("batching packs by cost") {
    const std::vector<Utterance> utts{utterance("u400", 400), utterance("u500", 500), utterance("u700", 700)};
    const auto batches = make_batches(utts, 1000, 0, BatchOrigin::kUnlabeled);
    REQUIRE(batches.size() == 2);
    std::vector<std::vector<std::string>> ids;
    for (const auto& b : batches) ids.push_back(b.ids);
    std::sort(ids.begin(), ids.end());
    CHECK(ids[0] == std::vector<std::string>{"u500", "u400"});
    CHECK(ids[1] == std::vector<std::string>{"u700"});
    for (const auto& b : batches) CHECK(b.cost() <= 1000);

    CHECK_THROWS_WITH(make_batches(utts, 600, 0, BatchOrigin::kUnlabeled), doctest::Contains("u700"));
    CHECK_THROWS_WITH(make_batches(utts, 1000, 0, BatchOrigin::kLabeled), doctest::Contains("no transcript"));

    const std::vector<Utterance> labeled{utterance("l", 10, std::vector<int>{2, 3, 4})};
    const auto lb = make_batches(labeled, 40, 0, BatchOrigin::kLabeled);
    CHECK(lb[0].cost() == 40);
    CHECK(lb[0].labels(0) == std::vector<int>{2, 3, 4});
    CHECK(testing::bit_equal(lb[0].features(0), labeled[0].features));
    CHECK(make_batches(utts, 1000, 0, BatchOrigin::kUnlabeled)[0].ids ==
          make_batches(utts, 1000, 0, BatchOrigin::kUnlabeled)[0].ids);
}
