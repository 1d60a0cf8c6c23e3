// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#include "sslt/config.hpp"

#include <fstream>
#include <set>

namespace sslt {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

/// Reads fields of one JSON object and rejects keys nobody asked for.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError("config: '" + where_ + "' must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& ex) {
            throw ConfigError("config: field '" + name(key) + "': " + ex.what());
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    std::string name(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) throw ConfigError("config: unknown field '" + name(key.c_str()) + "'");
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

ordered_json schedule_json(const ScheduleConfig& s) {
    ordered_json j;
    j["k"] = s.k;
    j["warmup"] = s.warmup;
    j["total_steps"] = s.total_steps;
    j["d_model"] = s.d_model;
    return j;
}

void read_schedule(const json& j, const std::string& where, ScheduleConfig& s) {
    ObjectReader r(j, where);
    r.get("k", s.k);
    r.get("warmup", s.warmup);
    r.get("total_steps", s.total_steps);
    r.get("d_model", s.d_model);
    r.finish();
}

}  // namespace

std::filesystem::path RunConfig::resolve(const std::string& path) const {
    const std::filesystem::path p(path);
    return p.is_absolute() ? p : base_dir / p;
}

ordered_json to_json(const TrainerConfig& cfg) {
    ordered_json j;
    j["seed"] = cfg.seed;
    const EncoderConfig& e = cfg.model.encoder;
    j["encoder"] = {{"feature_dim", e.feature_dim},
                    {"conv_channels", e.conv_channels},
                    {"pool_strides", e.pool_strides},
                    {"num_layers", e.num_layers},
                    {"d_model", e.d_model},
                    {"ffn_dim", e.ffn_dim},
                    {"num_heads", e.num_heads},
                    {"max_relative_distance", e.max_relative_distance}};
    const ContrastiveConfig& c = cfg.model.contrastive;
    j["contrastive"] = {{"num_negatives", c.num_negatives},
                        {"temperature", c.temperature},
                        {"target_dim", c.target_dim},
                        {"negatives_from_masked_only", c.negatives_from_masked_only}};
    const PredictionConfig& p = cfg.model.prediction;
    j["prediction"] = {{"vocab_size", p.vocab_size},
                       {"num_blocks", p.num_blocks},
                       {"lstm_cell", p.lstm_cell},
                       {"proj_dim", p.proj_dim},
                       {"embed_dim", p.embed_dim}};
    j["joint"] = {{"joint_dim", cfg.model.joint.joint_dim}};
    j["masking"] = {{"start_probability", cfg.masking.start_probability}, {"span", cfg.masking.span}};
    ordered_json pre;
    pre["schedule"] = schedule_json(cfg.pretrain_schedule);
    pre["alpha"] = cfg.weights.alpha;
    pre["labeled_frame_cap"] = cfg.labeled_frame_cap;
    pre["unlabeled_frame_cap"] = cfg.unlabeled_frame_cap;
    j["pretrain"] = pre;
    ordered_json ft;
    ft["schedule"] = schedule_json(cfg.finetune_schedule);
    ft["frame_cap"] = cfg.finetune_frame_cap;
    j["finetune"] = ft;
    j["optimizer"] = {{"beta1", cfg.optimizer.beta1},
                      {"beta2", cfg.optimizer.beta2},
                      {"epsilon", cfg.optimizer.epsilon},
                      {"clip_norm", cfg.optimizer.clip_norm}};
    j["streaming"] = {{"chunk_size", cfg.streaming.chunk_size}, {"left_chunks", cfg.streaming.left_chunks}};
    j["decode"] = {{"max_symbols_per_frame", cfg.max_symbols_per_frame}};
    return j;
}

namespace {

void read_trainer_fields(ObjectReader& r, TrainerConfig& cfg) {
    r.get("seed", cfg.seed);
    if (const json* e = r.child("encoder")) {
        ObjectReader er(*e, "encoder");
        EncoderConfig& x = cfg.model.encoder;
        er.get("feature_dim", x.feature_dim);
        er.get("conv_channels", x.conv_channels);
        er.get("pool_strides", x.pool_strides);
        er.get("num_layers", x.num_layers);
        er.get("d_model", x.d_model);
        er.get("ffn_dim", x.ffn_dim);
        er.get("num_heads", x.num_heads);
        er.get("max_relative_distance", x.max_relative_distance);
        er.finish();
    }
    if (const json* c = r.child("contrastive")) {
        ObjectReader cr(*c, "contrastive");
        ContrastiveConfig& x = cfg.model.contrastive;
        cr.get("num_negatives", x.num_negatives);
        cr.get("temperature", x.temperature);
        cr.get("target_dim", x.target_dim);
        cr.get("negatives_from_masked_only", x.negatives_from_masked_only);
        cr.finish();
    }
    if (const json* p = r.child("prediction")) {
        ObjectReader pr(*p, "prediction");
        PredictionConfig& x = cfg.model.prediction;
        pr.get("vocab_size", x.vocab_size);
        pr.get("num_blocks", x.num_blocks);
        pr.get("lstm_cell", x.lstm_cell);
        pr.get("proj_dim", x.proj_dim);
        pr.get("embed_dim", x.embed_dim);
        pr.finish();
    }
    if (const json* jj = r.child("joint")) {
        ObjectReader jr(*jj, "joint");
        jr.get("joint_dim", cfg.model.joint.joint_dim);
        jr.finish();
    }
    if (const json* m = r.child("masking")) {
        ObjectReader mr(*m, "masking");
        mr.get("start_probability", cfg.masking.start_probability);
        mr.get("span", cfg.masking.span);
        mr.finish();
    }
    if (const json* p = r.child("pretrain")) {
        ObjectReader pr(*p, "pretrain");
        if (const json* s = pr.child("schedule")) read_schedule(*s, "pretrain.schedule", cfg.pretrain_schedule);
        pr.get("alpha", cfg.weights.alpha);
        pr.get("labeled_frame_cap", cfg.labeled_frame_cap);
        pr.get("unlabeled_frame_cap", cfg.unlabeled_frame_cap);
        pr.finish();
    }
    if (const json* f = r.child("finetune")) {
        ObjectReader fr(*f, "finetune");
        if (const json* s = fr.child("schedule")) read_schedule(*s, "finetune.schedule", cfg.finetune_schedule);
        fr.get("frame_cap", cfg.finetune_frame_cap);
        fr.finish();
    }
    if (const json* o = r.child("optimizer")) {
        ObjectReader orr(*o, "optimizer");
        orr.get("beta1", cfg.optimizer.beta1);
        orr.get("beta2", cfg.optimizer.beta2);
        orr.get("epsilon", cfg.optimizer.epsilon);
        orr.get("clip_norm", cfg.optimizer.clip_norm);
        orr.finish();
    }
    if (const json* s = r.child("streaming")) {
        ObjectReader sr(*s, "streaming");
        sr.get("chunk_size", cfg.streaming.chunk_size);
        sr.get("left_chunks", cfg.streaming.left_chunks);
        sr.finish();
    }
    if (const json* d = r.child("decode")) {
        ObjectReader dr(*d, "decode");
        dr.get("max_symbols_per_frame", cfg.max_symbols_per_frame);
        dr.finish();
    }
}

void validate_or_throw(const TrainerConfig& cfg) {
    try {
        cfg.validate();
    } catch (const std::exception& ex) {
        throw ConfigError(std::string("config: ") + ex.what());
    }
}

}  // namespace

TrainerConfig trainer_config_from_json(const json& j) {
    TrainerConfig cfg;
    ObjectReader r(j, "");
    read_trainer_fields(r, cfg);
    r.finish();
    validate_or_throw(cfg);
    return cfg;
}

ordered_json to_json(const RunConfig& cfg) {
    ordered_json j = to_json(cfg.trainer);
    j["data"] = {{"labeled", cfg.data.labeled},
                 {"unlabeled", cfg.data.unlabeled},
                 {"validation", cfg.data.validation},
                 {"test", cfg.data.test},
                 {"max_frames", cfg.data.max_frames}};
    j["logging"] = {{"metrics_path", cfg.logging.metrics_path},
                    {"log_interval", cfg.logging.log_interval},
                    {"validation_interval", cfg.logging.validation_interval},
                    {"checkpoint_interval", cfg.logging.checkpoint_interval}};
    return j;
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    cfg.base_dir = base_dir;
    ObjectReader r(j, "");
    read_trainer_fields(r, cfg.trainer);
    if (const json* d = r.child("data")) {
        ObjectReader dr(*d, "data");
        dr.get("labeled", cfg.data.labeled);
        dr.get("unlabeled", cfg.data.unlabeled);
        dr.get("validation", cfg.data.validation);
        dr.get("test", cfg.data.test);
        dr.get("max_frames", cfg.data.max_frames);
        dr.finish();
    }
    if (const json* l = r.child("logging")) {
        ObjectReader lr(*l, "logging");
        lr.get("metrics_path", cfg.logging.metrics_path);
        lr.get("log_interval", cfg.logging.log_interval);
        lr.get("validation_interval", cfg.logging.validation_interval);
        lr.get("checkpoint_interval", cfg.logging.checkpoint_interval);
        lr.finish();
    }
    r.finish();
    validate_or_throw(cfg.trainer);
    if (cfg.data.max_frames < 1) throw ConfigError("config: data.max_frames must be positive");
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& ex) {
        throw ConfigError("config " + path.string() + ": " + ex.what());
    }
    RunConfig cfg = run_config_from_json(j, path.parent_path());
    std::vector<std::string> paths{cfg.data.labeled, cfg.data.unlabeled, cfg.data.validation};
    paths.insert(paths.end(), cfg.data.test.begin(), cfg.data.test.end());
    for (const auto& p : paths) {
        if (!p.empty() && !std::filesystem::exists(cfg.resolve(p))) {
            throw ConfigError("config: referenced path does not exist: " + cfg.resolve(p).string());
        }
    }
    return cfg;
}

}  // namespace sslt
