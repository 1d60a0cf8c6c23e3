// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#include "sslt/toy_corpus.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace sslt {

namespace {

constexpr std::array<const char*, 24> kLexicon{"cat", "dog", "sun", "red", "big",  "map",  "hot", "box",
                                               "fly", "jam", "kid", "owl", "pig",  "van",  "web", "yes",
                                               "zoo", "quiz", "wax", "up", "lid", "fog", "it's", "gem"};

/// Two tone frequencies per symbol, all below 3.6 kHz so 8 kHz audio keeps them.
std::pair<double, double> tones_for(char ch) {
    const int id = ch == '\'' ? 26 : ch - 'a';
    const double low = 300.0 + 70.0 * id;
    const double high = 1800.0 + 65.0 * ((id * 7) % 27);
    return {low, high};
}

}  // namespace

Waveform synthesize_text(const std::string& text, int sample_rate, std::uint64_t seed) {
    const MelConfig mel = MelConfig::for_rate(sample_rate);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> char_frames(13, 17);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> noise(0.0, 0.003);

    Waveform wav;
    wav.sample_rate = sample_rate;
    auto silence = [&](int frames) {
        for (int i = 0; i < frames * mel.hop; ++i) wav.samples.push_back(static_cast<float>(noise(rng)));
    };
    silence(4);
    for (char ch : text) {
        if (ch == ' ') {
            silence(8);
            continue;
        }
        if (!((ch >= 'a' && ch <= 'z') || ch == '\'')) {
            throw std::invalid_argument(std::string("synthesize_text: unsupported character '") + ch + "'");
        }
        const auto [f1, f2] = tones_for(ch);
        const double p1 = phase(rng);
        const double p2 = phase(rng);
        const int n = char_frames(rng) * mel.hop;
        for (int i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / sample_rate;
            // short linear ramps avoid clicks at symbol boundaries
            const double ramp = std::min({1.0, i / (0.005 * sample_rate), (n - i) / (0.005 * sample_rate)});
            const double s = 0.25 * std::sin(2.0 * std::numbers::pi * f1 * t + p1) +
                             0.15 * std::sin(2.0 * std::numbers::pi * f2 * t + p2);
            wav.samples.push_back(static_cast<float>(ramp * s + noise(rng)));
        }
    }
    silence(4);
    return wav;
}

std::string random_sentence(int min_words, int max_words, std::uint64_t seed) {
    if (min_words < 1 || max_words < min_words) throw std::invalid_argument("random_sentence: bad word range");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> count(min_words, max_words);
    std::uniform_int_distribution<std::size_t> pick(0, kLexicon.size() - 1);
    std::string out;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
        if (i > 0) out += ' ';
        out += kLexicon[pick(rng)];
    }
    return out;
}

ToyCorpusPaths write_toy_corpus(const std::filesystem::path& dir, const ToyCorpusConfig& cfg) {
    if (cfg.labeled < 0 || cfg.unlabeled < 0 || cfg.unlabeled_narrowband < 0 ||
        cfg.unlabeled_narrowband > cfg.unlabeled) {
        throw std::invalid_argument("write_toy_corpus: bad utterance counts");
    }
    std::filesystem::create_directories(dir / "audio");
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32)};
    std::mt19937_64 rng(seq);

    auto make = [&](const std::string& id, bool labeled, int sample_rate) {
        const std::string text = random_sentence(cfg.min_words, cfg.max_words, rng());
        const Waveform wav = synthesize_text(text, sample_rate, rng());
        const std::string rel = "audio/" + id + ".wav";
        write_wav(dir / rel, wav);
        ManifestEntry e;
        e.id = id;
        e.audio_path = rel;
        e.sample_rate = sample_rate == 8000 ? SampleRate::k8k : SampleRate::k16k;
        e.num_frames = num_frames(wav.samples.size(), MelConfig::for_rate(sample_rate));
        if (labeled) e.transcript = Vocabulary::encode(text);
        return e;
    };

    std::vector<ManifestEntry> labeled;
    for (int i = 0; i < cfg.labeled; ++i) labeled.push_back(make("lab" + std::to_string(i), true, 16000));
    std::vector<ManifestEntry> unlabeled;
    for (int i = 0; i < cfg.unlabeled; ++i) {
        const bool narrow = i >= cfg.unlabeled - cfg.unlabeled_narrowband;
        unlabeled.push_back(make("unl" + std::to_string(i), false, narrow ? 8000 : 16000));
    }
    ToyCorpusPaths paths{dir / "labeled.jsonl", dir / "unlabeled.jsonl"};
    save_manifest(paths.labeled, labeled);
    save_manifest(paths.unlabeled, unlabeled);
    return paths;
}

}  // namespace sslt
