#pragma once

#include <algorithm>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mdfg/classifier.hpp"
#include "mdfg/document.hpp"
#include "mdfg/jsonl.hpp"
#include "mdfg/util.hpp"

namespace mdfg {

inline std::vector<std::string> domain_label_names() {
    std::vector<std::string> names;
    names.reserve(kNumDomains);
    for (auto n : kDomainNames) names.emplace_back(n);
    return names;
}

// Expert keyword lists per domain (general has none). A text is assigned
// every domain whose keyword-match count reaches the frequency threshold.
struct KeywordRuleSet {
    enum class CountMode { distinct, occurrences };

    std::map<DomainLabel, std::vector<std::string>> keywords;
    size_t freq_threshold = 3;
    CountMode count_mode = CountMode::distinct;

    void validate(bool warn = false) const {
        if (freq_threshold < 1) throw ConfigError("freq_threshold must be >= 1");
        for (const auto& [domain, words] : keywords) {
            if (domain == DomainLabel::general)
                throw ConfigError("the general domain takes no keywords");
            if (words.empty()) throw ConfigError("empty keyword list");
            std::unordered_set<std::string> seen;
            for (const auto& w : words) {
                if (w.empty()) throw ConfigError("empty keyword");
                if (!seen.insert(w).second) throw ConfigError("duplicate keyword: " + w);
            }
            if (warn && (words.size() < 20 || words.size() > 50))
                std::cerr << "warning: domain " << to_string(domain) << " has " << words.size()
                          << " keywords (expected 20-50)\n";
        }
    }

    bool has_keyword(DomainLabel d, const std::string& w) const {
        auto it = keywords.find(d);
        return it != keywords.end() &&
               std::find(it->second.begin(), it->second.end(), w) != it->second.end();
    }

    // Appends w unless already present; returns whether it was added.
    bool add_keyword(DomainLabel d, const std::string& w) {
        if (d == DomainLabel::general || w.empty()) return false;
        if (has_keyword(d, w)) return false;
        keywords[d].push_back(w);
        return true;
    }
};

struct DomainAnnotation {
    enum class Origin { rule, model, confident_model };

    std::set<DomainLabel> labels;
    Origin origin = Origin::rule;
};

namespace detail {

inline size_t count_occurrences(const std::string& text, const std::string& word) {
    size_t count = 0;
    size_t pos = 0;
    while ((pos = text.find(word, pos)) != std::string::npos) {
        ++count;
        pos += word.size();
    }
    return count;
}

}  // namespace detail

// Rule-based bootstrap: count keyword matches per domain (distinct
// keywords by default) and assign every domain reaching the threshold;
// general when none does.
inline DomainAnnotation rule_classify(const std::string& text, const KeywordRuleSet& rules) {
    DomainAnnotation ann;
    ann.origin = DomainAnnotation::Origin::rule;
    for (const auto& [domain, words] : rules.keywords) {
        size_t matches = 0;
        for (const auto& w : words) {
            if (rules.count_mode == KeywordRuleSet::CountMode::distinct) {
                if (text.find(w) != std::string::npos) ++matches;
            } else {
                matches += detail::count_occurrences(text, w);
            }
        }
        if (matches >= rules.freq_threshold) ann.labels.insert(domain);
    }
    if (ann.labels.empty()) ann.labels.insert(DomainLabel::general);
    return ann;
}

// Keyword file: `[domain]` section headers, one keyword per line, '#'
// comments. The general domain takes no section.
inline KeywordRuleSet load_keywords(const std::string& path) {
    KeywordRuleSet rules;
    LineReader reader(path);
    std::string line;
    std::optional<DomainLabel> current;
    while (reader.next(line)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[' && t.back() == ']') {
            auto name = t.substr(1, t.size() - 2);
            auto d = parse_domain(name);
            if (!d) throw ConfigError("unknown domain section: [" + name + "]");
            if (*d == DomainLabel::general)
                throw ConfigError("the general domain takes no keyword section");
            current = d;
            continue;
        }
        if (!current) throw ConfigError("keyword before any [domain] section: " + t);
        rules.add_keyword(*current, t);
    }
    rules.validate(true);
    return rules;
}

inline void save_keywords(const KeywordRuleSet& rules, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const auto& [domain, words] : rules.keywords) {
        out << '[' << to_string(domain) << "]\n";
        for (const auto& w : words) out << w << '\n';
        out << '\n';
    }
}

// Labels the corpus with the rules, then trains the classifier over the
// full 11-label universe on those annotations.
inline LinearModel bootstrap_train(const std::vector<std::string>& corpus,
                                   const KeywordRuleSet& rules, const TrainParams& params,
                                   const FeatureConfig& cfg) {
    if (corpus.empty()) throw EmptyCorpus("bootstrap corpus is empty");
    std::vector<std::pair<std::string, std::vector<std::string>>> labeled;
    labeled.reserve(corpus.size());
    for (const auto& text : corpus) {
        DomainAnnotation ann = rule_classify(text, rules);
        std::vector<std::string> labels;
        for (DomainLabel d : ann.labels) labels.emplace_back(to_string(d));
        labeled.push_back({text, std::move(labels)});
    }
    return train(labeled, params, cfg, domain_label_names());
}

inline constexpr double kMultiLabelThreshold = 0.3;

// Single prediction is the argmax; the multi set is every label with
// probability strictly above 0.3, falling back to the argmax when empty.
inline std::pair<DomainLabel, std::set<DomainLabel>> classify_domains(const LinearModel& model,
                                                                      const std::string& text) {
    auto top = predict(model, text, 1, 0.0);
    DomainLabel single = parse_domain(top.front().label).value();
    std::set<DomainLabel> multi;
    for (const auto& p : predict(model, text, -1, kMultiLabelThreshold))
        multi.insert(parse_domain(p.label).value());
    if (multi.empty()) multi.insert(single);
    return {single, multi};
}

struct IterationConfig {
    double confidence_threshold = 0.9;
    size_t keyword_candidates_per_domain = 10;
    size_t rounds = 1;
    size_t candidate_min_len = 2;   // candidate keyword length range, in characters
    size_t candidate_max_len = 4;
    size_t candidate_min_support = 3;  // confident docs containing the candidate
    double candidate_ratio = 5.0;      // domain rate vs elsewhere

    void validate() const {
        if (!(confidence_threshold > 0.0 && confidence_threshold <= 1.0))
            throw ConfigError("confidence_threshold must lie in (0,1]");
        if (candidate_min_len < 1 || candidate_max_len < candidate_min_len)
            throw ConfigError("bad candidate length range");
    }
};

struct IterationResult {
    LinearModel model;
    KeywordRuleSet rules;
    std::vector<std::pair<std::string, std::vector<std::string>>> train_set;
    std::vector<std::pair<DomainLabel, std::string>> added_keywords;
    size_t confident_count = 0;
    bool no_op = false;
};

namespace detail {

// Candidate keywords per domain: character n-grams that appear in the
// domain's confidently-labeled texts at a rate candidate_ratio times their
// rate elsewhere. Deterministic ordering: ratio, then support, then text.
inline std::vector<std::pair<DomainLabel, std::string>> induce_keywords(
    const std::vector<std::pair<size_t, DomainLabel>>& confident,  // (pool index, label)
    const std::vector<std::string>& pool, const KeywordRuleSet& rules,
    const IterationConfig& cfg) {
    std::array<size_t, kNumDomains> domain_docs{};
    for (const auto& [idx, d] : confident) ++domain_docs[static_cast<size_t>(d)];

    // Document frequency of each gram, overall and per domain.
    std::unordered_map<std::string, std::array<uint32_t, kNumDomains>> df;
    for (const auto& [idx, d] : confident) {
        auto cps = utf8_decode(pool[idx]);
        std::unordered_set<std::string> seen;
        for (size_t n = cfg.candidate_min_len; n <= cfg.candidate_max_len; ++n) {
            if (cps.size() < n) break;
            for (size_t i = 0; i + n <= cps.size(); ++i) {
                bool clean = true;
                std::string gram;
                for (size_t k = 0; k < n && clean; ++k) {
                    if (is_unicode_space(cps[i + k])) clean = false;
                    else utf8_append(gram, cps[i + k]);
                }
                if (clean) seen.insert(std::move(gram));
            }
        }
        for (auto& g : seen) {
            auto& row = df[g];
            ++row[static_cast<size_t>(d)];
        }
    }

    std::vector<std::pair<DomainLabel, std::string>> added;
    const size_t total_docs = confident.size();
    for (size_t di = 0; di < kNumDomains; ++di) {
        const auto domain = static_cast<DomainLabel>(di);
        if (domain == DomainLabel::general) continue;
        const size_t nd = domain_docs[di];
        if (nd == 0) continue;
        const size_t nother = total_docs - nd;

        struct Cand {
            double ratio;
            uint32_t support;
            std::string gram;
        };
        std::vector<Cand> cands;
        for (const auto& [gram, row] : df) {
            const uint32_t in_domain = row[di];
            if (in_domain < cfg.candidate_min_support) continue;
            uint32_t elsewhere = 0;
            for (size_t k = 0; k < kNumDomains; ++k)
                if (k != di) elsewhere += row[k];
            const double rate_domain = static_cast<double>(in_domain) / static_cast<double>(nd);
            const double rate_other = nother == 0
                                          ? 0.0
                                          : static_cast<double>(elsewhere) / static_cast<double>(nother);
            const double denom = rate_other > 0.0
                                     ? rate_other
                                     : 1.0 / static_cast<double>(std::max<size_t>(nother, 1));
            const double ratio = rate_domain / denom;
            if (ratio < cfg.candidate_ratio) continue;
            if (rules.has_keyword(domain, gram)) continue;
            cands.push_back({ratio, in_domain, gram});
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.ratio != b.ratio) return a.ratio > b.ratio;
            if (a.support != b.support) return a.support > b.support;
            return a.gram < b.gram;
        });
        // Prefer maximal grams: skip candidates contained in an already
        // accepted longer candidate for the same domain.
        std::vector<std::string> accepted;
        for (const auto& c : cands) {
            if (accepted.size() >= cfg.keyword_candidates_per_domain) break;
            bool redundant = false;
            for (const auto& a : accepted)
                if (a.find(c.gram) != std::string::npos) { redundant = true; break; }
            if (redundant) continue;
            accepted.push_back(c.gram);
            added.push_back({domain, c.gram});
        }
    }
    return added;
}

}  // namespace detail

// One optimization round: predict over the pool, keep confident results,
// grow the keyword lists from them, re-annotate the pool with the grown
// rules, and retrain on rule labels with confident labels winning
// conflicts. Seed keywords are never removed.
inline IterationResult iterate_optimize(LinearModel model, KeywordRuleSet rules,
                                        const std::vector<std::string>& pool,
                                        const IterationConfig& cfg, const TrainParams& params) {
    cfg.validate();
    rules.validate();
    if (pool.empty()) throw EmptyPool("iteration pool is empty");

    IterationResult result;
    std::vector<std::pair<size_t, DomainLabel>> confident;
    for (size_t i = 0; i < pool.size(); ++i) {
        auto preds = predict(model, pool[i], 1, 0.0);
        if (preds.front().prob >= cfg.confidence_threshold)
            confident.push_back({i, parse_domain(preds.front().label).value()});
    }
    result.confident_count = confident.size();
    if (confident.empty()) {
        std::cerr << "warning: no predictions reached confidence "
                  << cfg.confidence_threshold << "; round is a no-op\n";
        result.model = std::move(model);
        result.rules = std::move(rules);
        result.no_op = true;
        return result;
    }

    result.added_keywords = detail::induce_keywords(confident, pool, rules, cfg);
    for (const auto& [domain, word] : result.added_keywords) rules.add_keyword(domain, word);

    std::unordered_map<size_t, DomainLabel> confident_by_idx;
    for (const auto& [idx, d] : confident) confident_by_idx[idx] = d;

    result.train_set.reserve(pool.size());
    for (size_t i = 0; i < pool.size(); ++i) {
        std::vector<std::string> labels;
        if (auto it = confident_by_idx.find(i); it != confident_by_idx.end()) {
            labels.emplace_back(to_string(it->second));
        } else {
            for (DomainLabel d : rule_classify(pool[i], rules).labels)
                labels.emplace_back(to_string(d));
        }
        result.train_set.push_back({pool[i], std::move(labels)});
    }

    result.model = train(result.train_set, params, model.feature_config, domain_label_names());
    result.rules = std::move(rules);
    return result;
}

struct DomainEvalResult {
    // Single-label strategy: one predicted label per document, judged
    // against the document's true-label set.
    double single_precision = 0.0;  // correct / predicted
    double single_recall = 0.0;     // correct / total true labels
    size_t single_correct = 0;
    size_t single_predicted = 0;
    size_t true_label_total = 0;

    // Multi-label strategy: micro-averaged over per-label counts.
    double micro_precision = 0.0;
    double micro_recall = 0.0;
    std::array<size_t, kNumDomains> tp{}, fp{}, fn{};

    size_t sum_tp() const { size_t s = 0; for (auto v : tp) s += v; return s; }
    size_t sum_fp() const { size_t s = 0; for (auto v : fp) s += v; return s; }
    size_t sum_fn() const { size_t s = 0; for (auto v : fn) s += v; return s; }
};

struct DomainTestCase {
    std::string text;
    DomainLabel gold_single = DomainLabel::general;
    std::set<DomainLabel> gold_multi;
};

// Folds one prediction into the tallies. A single-label prediction counts
// as correct when it belongs to the document's true-label set.
inline void accumulate_eval(DomainEvalResult& r, const std::set<DomainLabel>& gold_multi,
                            DomainLabel pred_single, const std::set<DomainLabel>& pred_multi) {
    if (gold_multi.empty()) throw EmptyTestSet("test case without gold labels");
    ++r.single_predicted;
    if (gold_multi.count(pred_single)) ++r.single_correct;
    r.true_label_total += gold_multi.size();
    for (DomainLabel d : pred_multi) {
        if (gold_multi.count(d)) ++r.tp[static_cast<size_t>(d)];
        else ++r.fp[static_cast<size_t>(d)];
    }
    for (DomainLabel d : gold_multi)
        if (!pred_multi.count(d)) ++r.fn[static_cast<size_t>(d)];
}

inline void finalize_eval(DomainEvalResult& r) {
    r.single_precision = r.single_predicted == 0
                             ? 0.0
                             : static_cast<double>(r.single_correct) /
                                   static_cast<double>(r.single_predicted);
    r.single_recall = r.true_label_total == 0
                          ? 0.0
                          : static_cast<double>(r.single_correct) /
                                static_cast<double>(r.true_label_total);
    const size_t tp = r.sum_tp(), fp = r.sum_fp(), fn = r.sum_fn();
    r.micro_precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    r.micro_recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

inline DomainEvalResult eval_domain(const LinearModel& model,
                                    const std::vector<DomainTestCase>& test) {
    if (test.empty()) throw EmptyTestSet("domain test set is empty");
    DomainEvalResult r;
    for (const auto& tc : test) {
        auto [single, multi] = classify_domains(model, tc.text);
        accumulate_eval(r, tc.gold_multi, single, multi);
    }
    finalize_eval(r);
    return r;
}

}  // namespace mdfg
