#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mdfg/document.hpp"
#include "mdfg/jsonl.hpp"
#include "mdfg/util.hpp"

namespace mdfg {

// A source is excluded outright when more than this fraction of its sampled
// texts is judged irrelevant.
inline constexpr double kIrrelevantExclusionThreshold = 0.30;
inline constexpr size_t kDefaultSampleSize = 300;

struct SourceJudgment {
    std::string doc_id;
    bool irrelevant = false;
};

struct SourceDecision {
    std::string source;
    size_t sampled = 0;
    double irrelevant_fraction = 0.0;
    bool exclude = false;

    std::string_view verdict() const { return exclude ? "exclude" : "include"; }
};

// Reservoir sample (algorithm R) of min(n, population) documents from one
// file, in a deterministic order under a fixed seed. Sampled docs keep
// their stream order.
inline std::vector<Document> sample_source(const std::string& path, size_t n, uint64_t seed) {
    if (n < 1) throw ConfigError("sample size must be >= 1");
    std::vector<Document> reservoir;
    std::vector<size_t> order;  // arrival index per reservoir slot
    reservoir.reserve(n);
    Rng rng(seed);
    size_t seen = 0;
    for_each_document(path, [&](Document&& d) {
        if (reservoir.size() < n) {
            reservoir.push_back(std::move(d));
            order.push_back(seen);
        } else {
            size_t j = static_cast<size_t>(rng.below(seen + 1));
            if (j < n) {
                reservoir[j] = std::move(d);
                order[j] = seen;
            }
        }
        ++seen;
    });
    if (seen == 0) throw EmptySource("no parseable documents in " + path);

    std::vector<size_t> idx(reservoir.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return order[a] < order[b]; });
    std::vector<Document> out;
    out.reserve(idx.size());
    for (size_t i : idx) out.push_back(std::move(reservoir[i]));
    return out;
}

inline SourceDecision vet_source(const std::string& source,
                                 const std::vector<SourceJudgment>& judgments) {
    if (judgments.empty()) throw NoJudgments("no judgments for source " + source);
    size_t irrelevant = 0;
    for (const auto& j : judgments)
        if (j.irrelevant) ++irrelevant;
    SourceDecision d;
    d.source = source;
    d.sampled = judgments.size();
    d.irrelevant_fraction = static_cast<double>(irrelevant) / static_cast<double>(judgments.size());
    d.exclude = d.irrelevant_fraction > kIrrelevantExclusionThreshold;
    return d;
}

// Judgment file: JSONL of {"doc_id": ..., "irrelevant": bool}.
inline std::vector<SourceJudgment> read_judgments(const std::string& path) {
    std::vector<SourceJudgment> out;
    LineReader reader(path);
    std::string line;
    while (reader.next(line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("doc_id") || !j.contains("irrelevant"))
            throw MalformedRecord("bad judgment line: " + line);
        out.push_back({j["doc_id"].get<std::string>(), j["irrelevant"].get<bool>()});
    }
    return out;
}

inline json decision_to_json(const SourceDecision& d) {
    return json{{"source", d.source},
                {"sampled", d.sampled},
                {"irrelevant_fraction", d.irrelevant_fraction},
                {"verdict", std::string(d.verdict())}};
}

inline std::vector<SourceDecision> read_decisions(const std::string& path) {
    std::vector<SourceDecision> out;
    LineReader reader(path);
    std::string line;
    while (reader.next(line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("source") || !j.contains("verdict"))
            throw MalformedRecord("bad decision line: " + line);
        SourceDecision d;
        d.source = j["source"].get<std::string>();
        d.sampled = j.value("sampled", size_t{0});
        d.irrelevant_fraction = j.value("irrelevant_fraction", 0.0);
        d.exclude = j["verdict"].get<std::string>() == "exclude";
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace mdfg
