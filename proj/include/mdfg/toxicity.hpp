#pragma once

#include <algorithm>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mdfg/classifier.hpp"
#include "mdfg/document.hpp"
#include "mdfg/util.hpp"

namespace mdfg {

inline constexpr const char* kToxicLabel = "toxic";
inline constexpr const char* kBenignLabel = "benign";

// Pool items enter a loop round's candidate set when scored strictly above
// this threshold.
inline constexpr double kCandidateThreshold = 0.5;

struct ToxicityTrainSet {
    struct Item {
        std::string text;
        bool toxic = false;
        std::string provenance;
    };

    std::vector<Item> items;

    size_t toxic_count() const {
        size_t n = 0;
        for (const auto& i : items) n += i.toxic ? 1 : 0;
        return n;
    }
    size_t benign_count() const { return items.size() - toxic_count(); }
};

// Assembles the initial training set: the labeled source corpora with each
// toxic item duplicated once (doubling happens here and only here), plus a
// seeded benign sample from the caller's own high-quality corpus.
inline ToxicityTrainSet build_initial_toxicity_set(
    const std::map<std::string, std::vector<std::pair<std::string, bool>>>& sources,
    const std::vector<std::string>& own_benign, size_t benign_sample_n, uint64_t seed) {
    ToxicityTrainSet set;
    for (const auto& [name, corpus] : sources) {
        if (corpus.empty()) throw EmptySource("empty toxicity source: " + name);
        for (const auto& [text, toxic] : corpus) {
            set.items.push_back({text, toxic, name});
            if (toxic) set.items.push_back({text, toxic, name});
        }
    }
    if (benign_sample_n > 0) {
        if (own_benign.size() < benign_sample_n)
            throw InsufficientNegatives("own-benign pool smaller than requested sample");
        std::vector<size_t> idx(own_benign.size());
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng(seed);
        for (size_t i = 0; i < benign_sample_n; ++i) {
            size_t j = i + static_cast<size_t>(rng.below(idx.size() - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(benign_sample_n);
        std::sort(idx.begin(), idx.end());
        for (size_t i : idx) set.items.push_back({own_benign[i], false, "own_samples"});
    }
    return set;
}

inline LinearModel train_toxicity(const ToxicityTrainSet& set, const TrainParams& params,
                                  const FeatureConfig& cfg) {
    if (set.items.empty()) throw EmptyCorpus("toxicity training set is empty");
    if (set.toxic_count() == 0 || set.benign_count() == 0)
        throw SingleClass("toxicity training needs both classes");
    std::vector<std::pair<std::string, std::vector<std::string>>> corpus;
    corpus.reserve(set.items.size());
    for (const auto& item : set.items)
        corpus.push_back({item.text, {item.toxic ? kToxicLabel : kBenignLabel}});
    return train(corpus, params, cfg, {kBenignLabel, kToxicLabel}, nullptr, kToxicLabel);
}

// Behavioral contract: one verdict per input, in input order. nullopt marks
// an item the oracle could not judge; callers skip those.
class OracleClient {
public:
    virtual ~OracleClient() = default;
    virtual std::vector<std::optional<bool>> label_batch(const std::vector<std::string>& texts) = 0;
};

class MockOracle : public OracleClient {
public:
    explicit MockOracle(std::function<bool(const std::string&)> fn) : fn_(std::move(fn)) {}

    std::vector<std::optional<bool>> label_batch(const std::vector<std::string>& texts) override {
        std::vector<std::optional<bool>> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(fn_(t));
        return out;
    }

private:
    std::function<bool(const std::string&)> fn_;
};

struct LoopRoundResult {
    LinearModel model;
    ToxicityTrainSet set;
    size_t candidates = 0;
    size_t labeled = 0;
    bool no_op = false;
};

// One LLM-in-the-loop round: screen pool items the current model scores
// strictly above the candidate threshold, have the oracle label them, merge
// them into the base set (no re-doubling) and retrain. Oracle failure
// aborts the round before any state changes.
inline LoopRoundResult llm_loop_round(const LinearModel& model,
                                      const std::vector<std::string>& pool, OracleClient& oracle,
                                      const ToxicityTrainSet& base_set, size_t round_k,
                                      const TrainParams& params,
                                      double candidate_threshold = kCandidateThreshold,
                                      size_t candidate_cap = 50000) {
    LoopRoundResult result;
    std::vector<std::string> candidates;
    for (const auto& text : pool) {
        if (predict_score(model, text) > candidate_threshold) {
            candidates.push_back(text);
            if (candidates.size() >= candidate_cap) break;
        }
    }
    result.candidates = candidates.size();
    if (candidates.empty()) {
        std::cerr << "warning: no pool item scored above " << candidate_threshold
                  << "; loop round is a no-op\n";
        result.model = model;
        result.set = base_set;
        result.no_op = true;
        return result;
    }

    std::vector<std::optional<bool>> labels = oracle.label_batch(candidates);
    if (labels.size() != candidates.size())
        throw OracleUnavailable("oracle returned a mismatched batch");

    result.set = base_set;
    const std::string provenance = "oracle_round_" + std::to_string(round_k);
    for (size_t i = 0; i < candidates.size(); ++i) {
        if (!labels[i]) continue;  // unparseable verdict, skipped
        result.set.items.push_back({candidates[i], *labels[i], provenance});
        ++result.labeled;
    }
    result.model = train_toxicity(result.set, params, model.feature_config);
    return result;
}

struct ToxicityVerdict {
    double score = 0.0;
    bool toxic = false;
};

inline ToxicityVerdict score_toxicity(const LinearModel& model, const std::string& text) {
    ToxicityVerdict v;
    v.score = predict_score(model, text);
    v.toxic = is_toxic_score(v.score);
    return v;
}

// Counts follow the separated-test-halves convention: the toxic half
// contributes TP (labeled toxic) and FP (labeled benign); the benign half
// contributes TN (labeled benign) and FN (labeled toxic).
struct ToxicityEvalResult {
    size_t tp = 0, fp = 0, tn = 0, fn = 0;

    double precision() const {
        return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    double specificity() const {
        return tn + fn == 0 ? 0.0 : static_cast<double>(tn) / static_cast<double>(tn + fn);
    }
};

inline ToxicityEvalResult eval_toxicity(const LinearModel& model,
                                        const std::vector<std::string>& toxic_test,
                                        const std::vector<std::string>& benign_test) {
    if (toxic_test.empty() || benign_test.empty())
        throw EmptyTestSet("both toxicity test halves are required");
    ToxicityEvalResult r;
    for (const auto& t : toxic_test) {
        if (score_toxicity(model, t).toxic) ++r.tp;
        else ++r.fp;
    }
    for (const auto& t : benign_test) {
        if (score_toxicity(model, t).toxic) ++r.fn;
        else ++r.tn;
    }
    return r;
}

}  // namespace mdfg
