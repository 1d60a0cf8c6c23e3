// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

namespace sslt {

struct WerCounts {
    int substitutions = 0;
    int deletions = 0;
    int insertions = 0;
    int reference_words = 0;

    int errors() const { return substitutions + deletions + insertions; }
    /// (S + D + I) / max(N, 1).
    double rate() const;

    WerCounts& operator+=(const WerCounts& other);
    bool operator==(const WerCounts&) const = default;
};

/// Minimum edit distance alignment with unit costs. When several alignments
/// are optimal the backtrace prefers substitution, then deletion, then
/// insertion.
WerCounts wer(std::span<const std::string> reference, std::span<const std::string> hypothesis);

/// Whitespace tokenization.
std::vector<std::string> split_words(const std::string& text);

/// Word-level WER of two whitespace-separated strings.
WerCounts wer(const std::string& reference, const std::string& hypothesis);

}  // namespace sslt
