// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary feature files and minimal RIFF/WAVE I/O. All multi-byte fields are
// little-endian regardless of the host.

#include "sslt/frontend.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sslt {

namespace {

constexpr std::array<char, 8> kFeatureMagic{'S', 'S', 'L', 'T', 'F', 'E', 'A', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(bytes, 4);
}

void put_u16(std::ostream& out, std::uint16_t v) {
    const char bytes[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    out.write(bytes, 2);
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void write_feature_file(const std::filesystem::path& path, const Mat<float>& features) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write feature file " + path.string());
    out.write(kFeatureMagic.data(), kFeatureMagic.size());
    put_u32(out, static_cast<std::uint32_t>(features.rows()));
    put_u32(out, static_cast<std::uint32_t>(features.cols()));
    for (Eigen::Index i = 0; i < features.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(features.data()[i]));
    if (!out) throw std::runtime_error("short write to " + path.string());
}

Mat<float> read_feature_file(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kFeatureMagic.data(), kFeatureMagic.size()) != 0) {
        throw std::runtime_error(path.string() + ": not a feature file (bad magic)");
    }
    const std::uint32_t rows = get_u32(bytes.data() + 8);
    const std::uint32_t cols = get_u32(bytes.data() + 12);
    const std::size_t expected = 16 + static_cast<std::size_t>(rows) * cols * 4;
    if (bytes.size() != expected) {
        throw std::runtime_error(path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                                 std::to_string(bytes.size()));
    }
    Mat<float> features(rows, cols);
    for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * cols; ++i) {
        features.data()[i] = std::bit_cast<float>(get_u32(bytes.data() + 16 + 4 * i));
    }
    return features;
}

Waveform read_wav(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw std::runtime_error(path.string() + ": not a RIFF/WAVE file");
    }
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_size = 0;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* chunk = bytes.data() + pos;
        const std::uint32_t size = get_u32(chunk + 4);
        if (pos + 8 + size > bytes.size()) throw std::runtime_error(path.string() + ": truncated chunk");
        if (std::memcmp(chunk, "fmt ", 4) == 0 && size >= 16) {
            format = get_u16(chunk + 8);
            channels = get_u16(chunk + 10);
            rate = get_u32(chunk + 12);
            bits = get_u16(chunk + 22);
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = chunk + 8;
            data_size = size;
        }
        pos += 8 + size + (size & 1u);
    }
    if (!data || channels == 0) throw std::runtime_error(path.string() + ": missing fmt or data chunk");
    const bool pcm16 = format == 1 && bits == 16;
    const bool float32 = format == 3 && bits == 32;
    if (!pcm16 && !float32) throw std::runtime_error(path.string() + ": only 16-bit PCM and 32-bit float are supported");

    const std::size_t width = bits / 8;
    const std::size_t frames = data_size / (width * channels);
    Waveform wav;
    wav.sample_rate = static_cast<int>(rate);
    wav.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::size_t ch = 0; ch < channels; ++ch) {
            const unsigned char* p = data + (i * channels + ch) * width;
            acc += pcm16 ? static_cast<std::int16_t>(get_u16(p)) / 32768.0 : std::bit_cast<float>(get_u32(p));
        }
        wav.samples[i] = static_cast<float>(acc / channels);
    }
    return wav;
}

void write_wav(const std::filesystem::path& path, const Waveform& wav) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const std::uint32_t data_size = static_cast<std::uint32_t>(wav.samples.size() * 2);
    out.write("RIFF", 4);
    put_u32(out, 36 + data_size);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(out, 16);
    put_u16(out, 1);
    put_u16(out, 1);
    put_u32(out, static_cast<std::uint32_t>(wav.sample_rate));
    put_u32(out, static_cast<std::uint32_t>(wav.sample_rate) * 2);
    put_u16(out, 2);
    put_u16(out, 16);
    out.write("data", 4);
    put_u32(out, data_size);
    for (float s : wav.samples) {
        const double clipped = std::clamp(static_cast<double>(s), -1.0, 32767.0 / 32768.0);
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clipped * 32768.0))));
    }
    if (!out) throw std::runtime_error("short write to " + path.string());
}

}  // namespace sslt
