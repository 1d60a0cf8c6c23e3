// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic speech-like corpus for smoke tests and overfitting runs. Every
// character is rendered as a fixed pair of sine tones, word gaps as faint
// noise, so transcripts are recoverable from log-Mel features alone.

#pragma once

#include "sslt/frontend.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sslt {

struct ToyCorpusConfig {
    int labeled = 20;
    int unlabeled = 40;
    int unlabeled_narrowband = 10;  // how many unlabeled utterances are 8 kHz
    int min_words = 2;
    int max_words = 3;
    std::uint64_t seed = 7;
};

/// Waveform for `text` (lower-case letters, apostrophes and spaces).
Waveform synthesize_text(const std::string& text, int sample_rate, std::uint64_t seed);

/// Random word sequence drawn from the built-in lexicon.
std::string random_sentence(int min_words, int max_words, std::uint64_t seed);

struct ToyCorpusPaths {
    std::filesystem::path labeled;
    std::filesystem::path unlabeled;
};

/// Writes audio under dir/audio and the manifests labeled.jsonl and
/// unlabeled.jsonl with paths relative to `dir`.
ToyCorpusPaths write_toy_corpus(const std::filesystem::path& dir, const ToyCorpusConfig& cfg);

}  // namespace sslt
