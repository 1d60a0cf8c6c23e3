// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#include "sslt/frontend.hpp"

#include <fftw3.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace sslt {

SampleRate parse_sample_rate(const std::string& tag) {
    if (tag == "16k") return SampleRate::k16k;
    if (tag == "8k") return SampleRate::k8k;
    throw std::invalid_argument("unknown sample_rate tag '" + tag + "' (expected \"8k\" or \"16k\")");
}

std::string to_string(SampleRate rate) {
    return rate == SampleRate::k8k ? "8k" : "16k";
}

int hertz(SampleRate rate) {
    return rate == SampleRate::k8k ? 8000 : 16000;
}

std::string to_string(BatchOrigin origin) {
    return origin == BatchOrigin::kLabeled ? "labeled" : "unlabeled";
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

std::vector<int> Vocabulary::encode(const std::string& text) {
    std::vector<int> out;
    bool pending_space = false;
    for (char ch : text) {
        if (ch == ' ' || ch == '\t') {
            pending_space = !out.empty();
            continue;
        }
        int id = -1;
        if (ch >= 'a' && ch <= 'z') id = 2 + (ch - 'a');
        else if (ch >= 'A' && ch <= 'Z') id = 2 + (ch - 'A');
        else if (ch == '\'') id = 28;
        if (id < 0) throw std::invalid_argument(std::string("character '") + ch + "' is not in the vocabulary");
        if (pending_space) out.push_back(kSpace);
        pending_space = false;
        out.push_back(id);
    }
    return out;
}

char Vocabulary::symbol(int id) {
    if (id == kSpace) return ' ';
    if (id >= 2 && id < 28) return static_cast<char>('a' + (id - 2));
    if (id == 28) return '\'';
    throw std::out_of_range("token id " + std::to_string(id) + " has no symbol");
}

std::string Vocabulary::decode(std::span<const int> tokens) {
    std::string out;
    for (int id : tokens) {
        if (id == 0) continue;
        out.push_back(symbol(id));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

namespace {

ManifestEntry parse_entry(const nlohmann::json& j, int vocab_size) {
    if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
    ManifestEntry e;
    if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty()) {
        throw std::invalid_argument("missing or empty string field 'id'");
    }
    e.id = j["id"].get<std::string>();
    if (j.contains("feature_path")) e.feature_path = j["feature_path"].get<std::string>();
    if (j.contains("audio_path")) e.audio_path = j["audio_path"].get<std::string>();
    if (e.feature_path.has_value() == e.audio_path.has_value()) {
        throw std::invalid_argument("exactly one of 'feature_path' and 'audio_path' must be present");
    }
    if (!j.contains("sample_rate") || !j["sample_rate"].is_string()) {
        throw std::invalid_argument("missing string field 'sample_rate'");
    }
    e.sample_rate = parse_sample_rate(j["sample_rate"].get<std::string>());
    if (!j.contains("num_frames") || !j["num_frames"].is_number_integer()) {
        throw std::invalid_argument("missing integer field 'num_frames'");
    }
    e.num_frames = j["num_frames"].get<int>();
    if (e.num_frames <= 0) throw std::invalid_argument("'num_frames' must be positive");
    if (j.contains("transcript") && !j["transcript"].is_null()) {
        std::vector<int> tokens = j["transcript"].get<std::vector<int>>();
        for (int t : tokens) {
            if (t <= 0 || t >= vocab_size) {
                throw std::invalid_argument("transcript token " + std::to_string(t) + " outside vocabulary [1, " +
                                            std::to_string(vocab_size) + ")");
            }
        }
        e.transcript = std::move(tokens);
    }
    return e;
}

}  // namespace

std::vector<ManifestEntry> parse_manifest(std::istream& in, int vocab_size) {
    std::vector<ManifestEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
        try {
            entries.push_back(parse_entry(nlohmann::json::parse(line), vocab_size));
        } catch (const std::exception& ex) {
            throw std::runtime_error("manifest line " + std::to_string(line_no) + ": " + ex.what());
        }
    }
    return entries;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path, int vocab_size) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    return parse_manifest(in, vocab_size);
}

std::string manifest_line(const ManifestEntry& e) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    if (e.feature_path) j["feature_path"] = *e.feature_path;
    if (e.audio_path) j["audio_path"] = *e.audio_path;
    if (e.transcript) j["transcript"] = *e.transcript;
    j["sample_rate"] = to_string(e.sample_rate);
    j["num_frames"] = e.num_frames;
    return j.dump();
}

void write_manifest(std::ostream& out, std::span<const ManifestEntry> entries) {
    for (const auto& e : entries) out << manifest_line(e) << '\n';
}

void save_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest " + path.string());
    write_manifest(out, entries);
}

// ---------------------------------------------------------------------------
// log-Mel
// ---------------------------------------------------------------------------

MelConfig MelConfig::for_rate(int sample_rate) {
    if (sample_rate == 16000) return MelConfig{16000, 400, 160, 512};
    if (sample_rate == 8000) return MelConfig{8000, 200, 80, 256};
    throw std::invalid_argument("log_mel: unsupported sample rate " + std::to_string(sample_rate));
}

double hz_to_mel(double hz) {
    return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel) {
    return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<double> mel_band_edges() {
    const double top = hz_to_mel(kMelUpperHz);
    std::vector<double> edges(kNumMelBanks + 2);
    for (int i = 0; i < kNumMelBanks + 2; ++i) edges[i] = mel_to_hz(top * i / (kNumMelBanks + 1));
    return edges;
}

int narrowband_cutoff_bank() {
    static const int cutoff = [] {
        const auto edges = mel_band_edges();
        for (int b = 0; b < kNumMelBanks; ++b) {
            if (edges[b + 2] > 4000.0) return b;
        }
        return kNumMelBanks;
    }();
    return cutoff;
}

int num_frames(std::size_t samples, const MelConfig& cfg) {
    if (samples < static_cast<std::size_t>(cfg.window)) return 0;
    return static_cast<int>((samples - cfg.window) / cfg.hop) + 1;
}

namespace {

/// [80 x (fft/2 + 1)] triangular weights, triangles linear in mel.
Mat<double> mel_filterbank(const MelConfig& cfg) {
    const int bins = cfg.fft_size / 2 + 1;
    const auto edges = mel_band_edges();
    Mat<double> fb = Mat<double>::Zero(kNumMelBanks, bins);
    for (int b = 0; b < kNumMelBanks; ++b) {
        const double lo = hz_to_mel(edges[b]);
        const double mid = hz_to_mel(edges[b + 1]);
        const double hi = hz_to_mel(edges[b + 2]);
        for (int k = 0; k < bins; ++k) {
            const double m = hz_to_mel(static_cast<double>(k) * cfg.sample_rate / cfg.fft_size);
            const double w = std::min((m - lo) / (mid - lo), (hi - m) / (hi - mid));
            if (w > 0.0) fb(b, k) = w;
        }
    }
    return fb;
}

const Mat<double>& cached_filterbank(int sample_rate) {
    static const Mat<double> fb16 = mel_filterbank(MelConfig::for_rate(16000));
    static const Mat<double> fb8 = mel_filterbank(MelConfig::for_rate(8000));
    return sample_rate == 8000 ? fb8 : fb16;
}

struct FftwPlanDeleter {
    void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

Mat<float> log_mel(std::span<const float> waveform, int sample_rate) {
    const MelConfig cfg = MelConfig::for_rate(sample_rate);
    const int frames = num_frames(waveform.size(), cfg);
    if (frames == 0) {
        throw std::invalid_argument("log_mel: waveform of " + std::to_string(waveform.size()) +
                                    " samples is shorter than one " + std::to_string(cfg.window) + "-sample window");
    }
    const Mat<double>& fb = cached_filterbank(sample_rate);
    const int bins = cfg.fft_size / 2 + 1;

    std::vector<double> window(static_cast<std::size_t>(cfg.window));
    for (int n = 0; n < cfg.window; ++n) {
        window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / cfg.window);
    }

    std::unique_ptr<double, FftwFree> in(static_cast<double*>(fftw_malloc(sizeof(double) * cfg.fft_size)));
    std::unique_ptr<fftw_complex, FftwFree> out(
        static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * static_cast<std::size_t>(bins))));
    std::unique_ptr<fftw_plan_s, FftwPlanDeleter> plan(
        fftw_plan_dft_r2c_1d(cfg.fft_size, in.get(), out.get(), FFTW_ESTIMATE));

    Mat<float> features(frames, kNumMelBanks);
    Eigen::VectorXd power(bins);
    for (int f = 0; f < frames; ++f) {
        const std::size_t start = static_cast<std::size_t>(f) * cfg.hop;
        std::fill(in.get(), in.get() + cfg.fft_size, 0.0);
        for (int n = 0; n < cfg.window; ++n) in.get()[n] = static_cast<double>(waveform[start + n]) * window[n];
        fftw_execute(plan.get());
        for (int k = 0; k < bins; ++k) {
            power(k) = out.get()[k][0] * out.get()[k][0] + out.get()[k][1] * out.get()[k][1];
        }
        const Eigen::VectorXd energies = fb * power;
        for (int b = 0; b < kNumMelBanks; ++b) {
            features(f, b) = static_cast<float>(std::log(std::max(energies(b), kEnergyFloor)));
        }
    }
    return features;
}

Mat<float> upconvert_8k(const Mat<float>& features_8k) {
    if (features_8k.cols() != kNumMelBanks) {
        throw std::invalid_argument("upconvert_8k: expected 80 banks, got " + std::to_string(features_8k.cols()));
    }
    Mat<float> out = features_8k;
    const int cutoff = narrowband_cutoff_bank();
    out.rightCols(kNumMelBanks - cutoff).setConstant(static_cast<float>(std::log(kEnergyFloor)));
    return out;
}

// ---------------------------------------------------------------------------
// Utterance loading and filtering
// ---------------------------------------------------------------------------

std::vector<Utterance> load_utterances(std::span<const ManifestEntry> entries, const std::filesystem::path& base_dir) {
    std::vector<Utterance> out;
    out.reserve(entries.size());
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    for (const auto& e : entries) {
        Utterance u;
        u.id = e.id;
        u.transcript = e.transcript;
        u.sample_rate = e.sample_rate;
        if (e.feature_path) {
            u.features = read_feature_file(resolve(*e.feature_path));
        } else {
            const Waveform wav = read_wav(resolve(*e.audio_path));
            if (wav.sample_rate != hertz(e.sample_rate)) {
                throw std::runtime_error("utterance " + e.id + ": audio is " + std::to_string(wav.sample_rate) +
                                         " Hz but manifest says " + to_string(e.sample_rate));
            }
            u.features = log_mel(wav.samples, wav.sample_rate);
        }
        if (u.features.cols() != kNumMelBanks) {
            throw std::runtime_error("utterance " + e.id + ": features have " + std::to_string(u.features.cols()) +
                                     " banks, expected 80");
        }
        if (!u.features.allFinite()) throw std::runtime_error("utterance " + e.id + ": non-finite feature values");
        if (e.sample_rate == SampleRate::k8k) u.features = upconvert_8k(u.features);
        if (u.frames() != e.num_frames) {
            throw std::runtime_error("utterance " + e.id + ": manifest says " + std::to_string(e.num_frames) +
                                     " frames, data has " + std::to_string(u.frames()));
        }
        out.push_back(std::move(u));
    }
    return out;
}

std::vector<Utterance> filter_by_length(std::vector<Utterance> utterances, int max_frames) {
    std::erase_if(utterances, [max_frames](const Utterance& u) { return u.frames() > max_frames; });
    return utterances;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

Mat<float> Batch::features(int i) const {
    const int len = frame_lengths.at(static_cast<std::size_t>(i));
    Mat<float> out(len, kNumMelBanks);
    const float* src = padded_features.data() + static_cast<std::size_t>(i) * max_frames * kNumMelBanks;
    std::copy(src, src + static_cast<std::size_t>(len) * kNumMelBanks, out.data());
    return out;
}

std::vector<int> Batch::labels(int i) const {
    if (origin != BatchOrigin::kLabeled) throw std::logic_error("unlabeled batch has no transcripts");
    const int len = label_lengths.at(static_cast<std::size_t>(i));
    const auto begin = padded_labels.begin() + static_cast<std::ptrdiff_t>(i) * max_labels;
    return {begin, begin + len};
}

std::int64_t Batch::cost() const {
    std::int64_t total = 0;
    for (int i = 0; i < size(); ++i) {
        const int u = origin == BatchOrigin::kLabeled ? label_lengths[static_cast<std::size_t>(i)] : 0;
        total += static_cast<std::int64_t>(frame_lengths[static_cast<std::size_t>(i)]) * (u + 1);
    }
    return total;
}

std::int64_t batch_cost(const Utterance& utt, BatchOrigin origin) {
    const int u = origin == BatchOrigin::kLabeled ? utt.labels() : 0;
    return static_cast<std::int64_t>(utt.frames()) * (u + 1);
}

std::vector<Batch> make_batches(std::span<const Utterance> utterances, std::int64_t cap, std::uint64_t seed,
                                BatchOrigin origin) {
    for (const auto& u : utterances) {
        if (origin == BatchOrigin::kLabeled && !u.transcript) {
            throw std::invalid_argument("make_batches: utterance " + u.id + " has no transcript for a labeled batch");
        }
        const std::int64_t c = batch_cost(u, origin);
        if (c > cap) {
            throw std::invalid_argument("make_batches: utterance " + u.id + " has cost " + std::to_string(c) +
                                        " above the batch cap " + std::to_string(cap));
        }
    }

    std::vector<std::size_t> order(utterances.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return utterances[a].frames() > utterances[b].frames();
    });

    std::vector<std::vector<std::size_t>> bins;
    std::vector<std::int64_t> load;
    for (std::size_t idx : order) {
        const std::int64_t c = batch_cost(utterances[idx], origin);
        std::size_t b = 0;
        while (b < bins.size() && load[b] + c > cap) ++b;
        if (b == bins.size()) {
            bins.emplace_back();
            load.push_back(0);
        }
        bins[b].push_back(idx);
        load[b] += c;
    }

    std::vector<Batch> batches;
    batches.reserve(bins.size());
    for (const auto& members : bins) {
        Batch batch;
        batch.origin = origin;
        for (std::size_t idx : members) {
            batch.max_frames = std::max(batch.max_frames, utterances[idx].frames());
            if (origin == BatchOrigin::kLabeled) batch.max_labels = std::max(batch.max_labels, utterances[idx].labels());
        }
        batch.padded_features.assign(members.size() * batch.max_frames * kNumMelBanks, 0.0f);
        if (origin == BatchOrigin::kLabeled) batch.padded_labels.assign(members.size() * batch.max_labels, 0);
        for (std::size_t i = 0; i < members.size(); ++i) {
            const Utterance& u = utterances[members[i]];
            batch.ids.push_back(u.id);
            batch.frame_lengths.push_back(u.frames());
            std::copy(u.features.data(), u.features.data() + u.features.size(),
                      batch.padded_features.begin() + static_cast<std::ptrdiff_t>(i * batch.max_frames * kNumMelBanks));
            if (origin == BatchOrigin::kLabeled) {
                batch.label_lengths.push_back(u.labels());
                std::copy(u.transcript->begin(), u.transcript->end(),
                          batch.padded_labels.begin() + static_cast<std::ptrdiff_t>(i * batch.max_labels));
            }
        }
        batches.push_back(std::move(batch));
    }

    std::mt19937_64 rng(seed);
    std::shuffle(batches.begin(), batches.end(), rng);
    return batches;
}

}  // namespace sslt
