// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Data ingestion: JSON Lines manifests, 80-bank log-Mel features, the
// 8 kHz -> 16 kHz bank zero-filling, length filtering and batching by the
// product of input and output length.

#pragma once

#include "sslt/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sslt {

inline constexpr int kNumMelBanks = 80;
inline constexpr double kEnergyFloor = 1e-10;
inline constexpr double kMelUpperHz = 8000.0;
inline constexpr int kMaxFrames = 3000;  // 30 s at a 10 ms hop

enum class SampleRate { k8k, k16k };

SampleRate parse_sample_rate(const std::string& tag);
std::string to_string(SampleRate rate);
int hertz(SampleRate rate);

// ---------------------------------------------------------------------------
// Character vocabulary
// ---------------------------------------------------------------------------

/// Fixed character vocabulary: 0 blank, 1 word separator, 2..27 'a'..'z',
/// 28 apostrophe.
class Vocabulary {
public:
    static constexpr int kSpace = 1;
    static constexpr int kSize = 29;

    static std::vector<int> encode(const std::string& text);
    static std::string decode(std::span<const int> tokens);
    static char symbol(int id);
};

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string id;
    std::optional<std::string> feature_path;
    std::optional<std::string> audio_path;
    std::optional<std::vector<int>> transcript;
    SampleRate sample_rate = SampleRate::k16k;
    int num_frames = 0;

    /// Entries with a transcript belong to the labeled set.
    bool labeled() const { return transcript.has_value(); }
};

/// Parses one JSON Lines manifest. Blank lines are skipped; errors name the
/// 1-based line number.
std::vector<ManifestEntry> parse_manifest(std::istream& in, int vocab_size = Vocabulary::kSize);
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path, int vocab_size = Vocabulary::kSize);

std::string manifest_line(const ManifestEntry& entry);
void write_manifest(std::ostream& out, std::span<const ManifestEntry> entries);
void save_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

struct Utterance {
    std::string id;
    Mat<float> features;  // [T x 80]
    std::optional<std::vector<int>> transcript;
    SampleRate sample_rate = SampleRate::k16k;

    int frames() const { return static_cast<int>(features.rows()); }
    int labels() const { return transcript ? static_cast<int>(transcript->size()) : 0; }
};

struct MelConfig {
    int sample_rate = 16000;
    int window = 400;
    int hop = 160;
    int fft_size = 512;

    static MelConfig for_rate(int sample_rate);
};

/// Mel scale 2595 * log10(1 + f / 700) and its inverse.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// The 82 band edges (Hz) of the 80 triangular filters spanning 0..8 kHz.
/// Bank i rises from edge i, peaks at edge i + 1 and falls to edge i + 2.
std::vector<double> mel_band_edges();

/// First bank with any response above 4 kHz; banks from here up carry no
/// energy in 8 kHz audio.
int narrowband_cutoff_bank();

/// Number of frames produced for `samples` samples (no padding).
int num_frames(std::size_t samples, const MelConfig& cfg);

/// 80-bank log-Mel energies, 25 ms Hann window, 10 ms hop. The bank layout is
/// always the 0..8 kHz one, so 8 kHz input leaves the upper banks at the floor.
Mat<float> log_mel(std::span<const float> waveform, int sample_rate);

/// Copies banks below the narrowband cutoff and sets every bank at or above it
/// to log(kEnergyFloor). Idempotent.
Mat<float> upconvert_8k(const Mat<float>& features_8k);

/// Binary feature file: 8-byte magic "SSLTFEAT", uint32 T, uint32 dim, then
/// T*dim little-endian float32 values, row-major.
void write_feature_file(const std::filesystem::path& path, const Mat<float>& features);
Mat<float> read_feature_file(const std::filesystem::path& path);

/// Mono RIFF/WAVE, 16-bit PCM or 32-bit float.
struct Waveform {
    std::vector<float> samples;
    int sample_rate = 16000;
};
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& wav);

/// Loads features for every entry; relative paths resolve against `base_dir`.
/// 8 kHz entries are upconverted.
std::vector<Utterance> load_utterances(std::span<const ManifestEntry> entries, const std::filesystem::path& base_dir);

/// Drops utterances longer than `max_frames`.
std::vector<Utterance> filter_by_length(std::vector<Utterance> utterances, int max_frames = kMaxFrames);

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

enum class BatchOrigin { kLabeled, kUnlabeled };

std::string to_string(BatchOrigin origin);

struct Batch {
    BatchOrigin origin = BatchOrigin::kUnlabeled;
    std::vector<std::string> ids;
    std::vector<int> frame_lengths;
    int max_frames = 0;
    std::vector<float> padded_features;  // [B x max_frames x 80], zero padded
    std::vector<int> label_lengths;      // labeled batches only
    int max_labels = 0;
    std::vector<int> padded_labels;      // [B x max_labels], blank padded

    int size() const { return static_cast<int>(ids.size()); }
    Mat<float> features(int i) const;
    std::vector<int> labels(int i) const;
    /// Sum over members of T_i * (U_i + 1).
    std::int64_t cost() const;
};

/// T * (U + 1); U counts only when the utterance joins a labeled batch.
std::int64_t batch_cost(const Utterance& utt, BatchOrigin origin);

/// Sorts by length (longest first), packs greedily first-fit under `cap`, then
/// shuffles batch order with `seed`.
std::vector<Batch> make_batches(std::span<const Utterance> utterances, std::int64_t cap, std::uint64_t seed,
                                BatchOrigin origin);

}  // namespace sslt
