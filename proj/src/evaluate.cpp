// Copyright 2026 The ssl-transducer Authors
// SPDX-License-Identifier: Apache-2.0

#include "sslt/evaluate.hpp"

#include <stdexcept>

namespace sslt {

std::vector<Hypothesis> decode_utterances(const Model<float>& model, const TrainerConfig& cfg,
                                          const std::vector<Utterance>& utterances, bool streaming) {
    std::vector<Hypothesis> out;
    out.reserve(utterances.size());
    for (const auto& utt : utterances) {
        const int frames = downsample_length(utt.frames(), cfg.model.encoder);
        const AttentionMask mask = attention_mask_for(frames, cfg.streaming, streaming);
        const std::vector<int> tokens = model.transcribe(utt.features, mask, cfg.max_symbols_per_frame);
        out.push_back({utt.id, Vocabulary::decode(tokens)});
    }
    return out;
}

WerCounts EvalReport::total() const {
    WerCounts t;
    for (const auto& s : sets) t += s.counts;
    return t;
}

nlohmann::ordered_json EvalReport::to_json() const {
    auto counts_json = [](const WerCounts& c) {
        nlohmann::ordered_json j;
        j["wer"] = c.rate();
        j["substitutions"] = c.substitutions;
        j["deletions"] = c.deletions;
        j["insertions"] = c.insertions;
        j["reference_words"] = c.reference_words;
        return j;
    };
    nlohmann::ordered_json j;
    j["sets"] = nlohmann::ordered_json::array();
    for (const auto& s : sets) {
        nlohmann::ordered_json e;
        e["name"] = s.name;
        e["utterances"] = s.utterances;
        e.update(counts_json(s.counts));
        j["sets"].push_back(e);
    }
    j["overall"] = counts_json(total());
    return j;
}

SetReport evaluate_set(const Model<float>& model, const TrainerConfig& cfg, const std::string& name,
                       const std::vector<Utterance>& utterances, bool streaming) {
    for (const auto& utt : utterances) {
        if (!utt.transcript) throw std::invalid_argument("test utterance " + utt.id + " has no transcript");
    }
    const std::vector<Hypothesis> hyps = decode_utterances(model, cfg, utterances, streaming);
    SetReport report;
    report.name = name;
    report.utterances = static_cast<int>(utterances.size());
    for (std::size_t i = 0; i < utterances.size(); ++i) {
        report.counts += wer(Vocabulary::decode(*utterances[i].transcript), hyps[i].text);
    }
    return report;
}

}  // namespace sslt
