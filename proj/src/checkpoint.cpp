// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#include "sslt/checkpoint.hpp"

#include "sslt/config.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace sslt {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'S', 'L', 'T', 'T', 'C', 'K', 'P'};

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Writer {
public:
    void bytes(const void* data, std::size_t n) { buf_.append(static_cast<const char*>(data), n); }
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void str(const std::string& s) { bytes(s.data(), s.size()); }
    void tensor(const std::string& name, const Mat<float>& m) {
        u32(static_cast<std::uint32_t>(name.size()));
        str(name);
        u32(static_cast<std::uint32_t>(m.rows()));
        u32(static_cast<std::uint32_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.size(); ++i) u32(std::bit_cast<std::uint32_t>(m.data()[i]));
    }
    const std::string& buffer() const { return buf_; }

private:
    void le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& buf, std::size_t end, std::string file) : buf_(buf), end_(end), file_(std::move(file)) {}

    void need(std::size_t n) const {
        if (pos_ + n > end_) throw std::runtime_error(file_ + ": checkpoint is truncated");
    }
    std::uint64_t le(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    std::string str(std::size_t n) {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }

private:
    const std::string& buf_;
    std::size_t end_;
    std::string file_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    const auto params = state.model.params();

    nlohmann::ordered_json meta;
    meta["config"] = to_json(state.config);
    meta["stage"] = to_string(state.stage);
    meta["step"] = state.step;
    meta["optimizer_steps"] = state.optimizer.steps;

    Writer w;
    w.bytes(kMagic.data(), kMagic.size());
    w.u32(kCheckpointVersion);
    const std::string meta_text = meta.dump();
    w.u64(meta_text.size());
    w.str(meta_text);
    w.u32(static_cast<std::uint32_t>(3 * params.size()));
    for (const Param<float>* p : params) w.tensor(p->name, p->value);
    for (std::size_t i = 0; i < params.size(); ++i) w.tensor("adam.m/" + params[i]->name, state.optimizer.m[i]);
    for (std::size_t i = 0; i < params.size(); ++i) w.tensor("adam.v/" + params[i]->name, state.optimizer.v[i]);
    w.u64(fnv1a(w.buffer()));

    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
        out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
        if (!out) throw std::runtime_error("short write to checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    const std::string file = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + file);
    const std::string buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

    if (buf.size() < kMagic.size() + 4 || std::memcmp(buf.data(), kMagic.data(), kMagic.size()) != 0) {
        throw std::runtime_error(file + ": not a checkpoint (bad magic)");
    }
    Reader header(buf, buf.size(), file);
    header.skip(kMagic.size());
    const std::uint32_t version = header.u32();
    if (version != kCheckpointVersion) {
        throw std::runtime_error(file + ": checkpoint format version " + std::to_string(version) +
                                 " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    if (buf.size() < 8 + 4 + 8) throw std::runtime_error(file + ": checkpoint is truncated");
    const std::size_t body_end = buf.size() - 8;
    Reader tail(buf, buf.size(), file);
    tail.skip(body_end);
    if (tail.u64() != fnv1a(buf.substr(0, body_end))) {
        throw std::runtime_error(file + ": checkpoint is corrupt (checksum mismatch)");
    }

    Reader r(buf, body_end, file);
    r.skip(kMagic.size() + 4);
    const std::uint64_t meta_size = r.u64();
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(r.str(meta_size));
    } catch (const nlohmann::json::exception& ex) {
        throw std::runtime_error(file + ": unreadable checkpoint metadata: " + ex.what());
    }

    std::map<std::string, Mat<float>> tensors;
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str(r.u32());
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        Mat<float> m(rows, cols);
        for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = std::bit_cast<float>(r.u32());
        if (!tensors.emplace(name, std::move(m)).second) {
            throw std::runtime_error(file + ": duplicate tensor '" + name + "'");
        }
    }
    if (r.pos() != body_end) throw std::runtime_error(file + ": trailing bytes after tensor table");

    TrainerConfig cfg;
    Stage stage;
    std::int64_t step = 0;
    std::vector<std::int64_t> optimizer_steps;
    try {
        cfg = trainer_config_from_json(meta.at("config"));
        stage = parse_stage(meta.at("stage").get<std::string>());
        step = meta.at("step").get<std::int64_t>();
        optimizer_steps = meta.at("optimizer_steps").get<std::vector<std::int64_t>>();
    } catch (const std::exception& ex) {
        throw std::runtime_error(file + ": bad checkpoint metadata: " + ex.what());
    }

    TrainState state(cfg, stage);
    state.step = step;
    const ParamList<float> params = state.model.params();
    if (optimizer_steps.size() != params.size()) {
        throw std::runtime_error(file + ": optimizer step table does not match the model");
    }
    auto take = [&](const std::string& name, const Param<float>& like) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw std::runtime_error(file + ": missing tensor '" + name + "'");
        if (it->second.rows() != like.value.rows() || it->second.cols() != like.value.cols()) {
            throw std::runtime_error(file + ": tensor '" + name + "' has shape " + std::to_string(it->second.rows()) +
                                     "x" + std::to_string(it->second.cols()) + ", model expects " +
                                     std::to_string(like.value.rows()) + "x" + std::to_string(like.value.cols()));
        }
        Mat<float> out = std::move(it->second);
        tensors.erase(it);
        return out;
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i]->value = take(params[i]->name, *params[i]);
        state.optimizer.m[i] = take("adam.m/" + params[i]->name, *params[i]);
        state.optimizer.v[i] = take("adam.v/" + params[i]->name, *params[i]);
        state.optimizer.steps[i] = optimizer_steps[i];
    }
    if (!tensors.empty()) throw std::runtime_error(file + ": unexpected tensor '" + tensors.begin()->first + "'");
    return state;
}

}  // namespace sslt
