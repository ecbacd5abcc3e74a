#pragma once

#include <algorithm>
#include <array>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mdfg/document.hpp"
#include "mdfg/jsonl.hpp"
#include "mdfg/util.hpp"

namespace mdfg {

// All reports here are pure folds with exact merge: counters add, derived
// rates are computed at output time only.

// Ten half-open deciles [a,b) with the last interval closed at 1.0. Scores
// are clamped into the covered range, so binning is total.
class ScoreHistogram {
public:
    static constexpr size_t kBins = 10;

    static size_t bin_of(double score) {
        if (score <= 0.0) return 0;
        if (score >= 0.9) return kBins - 1;
        const size_t b = static_cast<size_t>(score * 10.0);
        return std::min(b, kBins - 1);
    }

    static std::string bin_label(size_t i) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(1);
        os << '[' << (static_cast<double>(i) / 10.0) << ',' << (static_cast<double>(i + 1) / 10.0)
           << (i + 1 == kBins ? ']' : ')');
        return os.str();
    }

    void add(double score) {
        ++counts_[bin_of(score)];
        ++total_;
    }

    void merge(const ScoreHistogram& o) {
        for (size_t i = 0; i < kBins; ++i) counts_[i] += o.counts_[i];
        total_ += o.total_;
    }

    size_t count(size_t bin) const { return counts_[bin]; }
    size_t total() const { return total_; }

    double proportion(size_t bin) const {
        return total_ == 0 ? 0.0
                           : static_cast<double>(counts_[bin]) / static_cast<double>(total_);
    }

    json to_json() const {
        json bins = json::array();
        for (size_t i = 0; i < kBins; ++i)
            bins.push_back({{"interval", bin_label(i)},
                            {"count", counts_[i]},
                            {"proportion", proportion(i)}});
        return {{"total", total_}, {"bins", std::move(bins)}};
    }

    bool operator==(const ScoreHistogram&) const = default;

private:
    std::array<size_t, kBins> counts_{};
    size_t total_ = 0;
};

struct QualityDistribution {
    ScoreHistogram hist;

    void add(const AnnotatedDocument& a) { hist.add(a.quality_score); }
    void merge(const QualityDistribution& o) { hist.merge(o.hist); }

    json to_json() const { return hist.to_json(); }

    std::string to_csv() const {
        std::ostringstream os;
        os << "interval,count,proportion\n";
        for (size_t i = 0; i < ScoreHistogram::kBins; ++i)
            os << ScoreHistogram::bin_label(i) << ',' << hist.count(i) << ',' << hist.proportion(i)
               << '\n';
        return os.str();
    }

    bool operator==(const QualityDistribution&) const = default;
};

// A document counts once per label in its multi-label set, so proportions
// may sum past 100%.
struct DomainDistribution {
    std::array<size_t, kNumDomains> counts{};
    size_t total_docs = 0;

    void add(const AnnotatedDocument& a) {
        ++total_docs;
        for (DomainLabel d : a.domain_multi) ++counts[static_cast<size_t>(d)];
    }

    void merge(const DomainDistribution& o) {
        for (size_t i = 0; i < kNumDomains; ++i) counts[i] += o.counts[i];
        total_docs += o.total_docs;
    }

    double proportion(size_t i) const {
        return total_docs == 0 ? 0.0
                               : static_cast<double>(counts[i]) / static_cast<double>(total_docs);
    }

    json to_json() const {
        json domains = json::array();
        for (size_t i = 0; i < kNumDomains; ++i)
            domains.push_back({{"domain", std::string(kDomainNames[i])},
                               {"count", counts[i]},
                               {"proportion", proportion(i)}});
        return {{"total_docs", total_docs}, {"domains", std::move(domains)}};
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << "domain,count,proportion\n";
        for (size_t i = 0; i < kNumDomains; ++i)
            os << kDomainNames[i] << ',' << counts[i] << ',' << proportion(i) << '\n';
        return os.str();
    }

    bool operator==(const DomainDistribution&) const = default;
};

// Share of each quality interval's documents carrying each domain label.
// Cells of an empty interval are null, not zero. The Total column is the
// same share over all documents.
struct QualityDomainTable {
    std::array<std::array<size_t, kNumDomains>, ScoreHistogram::kBins> cells{};
    std::array<size_t, ScoreHistogram::kBins> interval_docs{};
    std::array<size_t, kNumDomains> domain_totals{};
    size_t total_docs = 0;

    void add(const AnnotatedDocument& a) {
        const size_t bin = ScoreHistogram::bin_of(a.quality_score);
        ++interval_docs[bin];
        ++total_docs;
        for (DomainLabel d : a.domain_multi) {
            ++cells[bin][static_cast<size_t>(d)];
            ++domain_totals[static_cast<size_t>(d)];
        }
    }

    void merge(const QualityDomainTable& o) {
        for (size_t b = 0; b < ScoreHistogram::kBins; ++b) {
            interval_docs[b] += o.interval_docs[b];
            for (size_t d = 0; d < kNumDomains; ++d) cells[b][d] += o.cells[b][d];
        }
        for (size_t d = 0; d < kNumDomains; ++d) domain_totals[d] += o.domain_totals[d];
        total_docs += o.total_docs;
    }

    json to_json() const {
        json rows = json::array();
        for (size_t d = 0; d < kNumDomains; ++d) {
            json row;
            row["domain"] = std::string(kDomainNames[d]);
            json by_interval = json::array();
            for (size_t b = 0; b < ScoreHistogram::kBins; ++b) {
                if (interval_docs[b] == 0) {
                    by_interval.push_back(nullptr);
                } else {
                    by_interval.push_back(100.0 * static_cast<double>(cells[b][d]) /
                                          static_cast<double>(interval_docs[b]));
                }
            }
            row["percent_by_interval"] = std::move(by_interval);
            row["total_percent"] = total_docs == 0
                                       ? json(nullptr)
                                       : json(100.0 * static_cast<double>(domain_totals[d]) /
                                              static_cast<double>(total_docs));
            rows.push_back(std::move(row));
        }
        json intervals = json::array();
        for (size_t b = 0; b < ScoreHistogram::kBins; ++b)
            intervals.push_back(ScoreHistogram::bin_label(b));
        return {{"intervals", std::move(intervals)},
                {"interval_docs", interval_docs},
                {"total_docs", total_docs},
                {"rows", std::move(rows)}};
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << "domain";
        for (size_t b = 0; b < ScoreHistogram::kBins; ++b)
            os << ',' << ScoreHistogram::bin_label(b);
        os << ",total\n";
        for (size_t d = 0; d < kNumDomains; ++d) {
            os << kDomainNames[d];
            for (size_t b = 0; b < ScoreHistogram::kBins; ++b) {
                os << ',';
                if (interval_docs[b] != 0)
                    os << 100.0 * static_cast<double>(cells[b][d]) /
                              static_cast<double>(interval_docs[b]);
            }
            os << ',';
            if (total_docs != 0)
                os << 100.0 * static_cast<double>(domain_totals[d]) /
                          static_cast<double>(total_docs);
            os << '\n';
        }
        return os.str();
    }

    bool operator==(const QualityDomainTable&) const = default;
};

struct ToxicityDistribution {
    ScoreHistogram hist;
    size_t toxic = 0;
    size_t benign = 0;
    double label_threshold = kToxicLabelThreshold;

    void add(const AnnotatedDocument& a) {
        hist.add(a.toxicity_score);
        if (a.toxicity_score > label_threshold) ++toxic;
        else ++benign;
    }

    void merge(const ToxicityDistribution& o) {
        hist.merge(o.hist);
        toxic += o.toxic;
        benign += o.benign;
    }

    double toxic_fraction() const {
        const size_t total = toxic + benign;
        return total == 0 ? 0.0 : static_cast<double>(toxic) / static_cast<double>(total);
    }

    json to_json() const {
        json j = hist.to_json();
        j["label_threshold"] = label_threshold;
        j["toxic_count"] = toxic;
        j["benign_count"] = benign;
        j["toxic_fraction"] = toxic_fraction();
        return j;
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << "interval,count,proportion\n";
        for (size_t i = 0; i < ScoreHistogram::kBins; ++i)
            os << ScoreHistogram::bin_label(i) << ',' << hist.count(i) << ',' << hist.proportion(i)
               << '\n';
        os << "toxic," << toxic << ',' << toxic_fraction() << '\n';
        os << "benign," << benign << ',' << (1.0 - toxic_fraction()) << '\n';
        return os.str();
    }

    bool operator==(const ToxicityDistribution&) const = default;
};

// Writes records whose toxicity score strictly exceeds the threshold.
inline size_t extract_toxic_subset(const std::string& input_path, double threshold,
                                   JsonlWriter& out) {
    size_t written = 0;
    for_each_annotated(input_path, [&](AnnotatedDocument&& a) {
        if (a.toxicity_score > threshold) {
            out.write(a);
            ++written;
        }
    });
    return written;
}

struct AcceptanceJudgment {
    std::string doc_id;
    bool accepted = false;
};

inline std::vector<AcceptanceJudgment> read_acceptance_judgments(const std::string& path) {
    std::vector<AcceptanceJudgment> out;
    LineReader reader(path);
    std::string line;
    while (reader.next(line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("doc_id") || !j.contains("accepted"))
            throw MalformedRecord("bad acceptance judgment: " + line);
        out.push_back({j["doc_id"].get<std::string>(), j["accepted"].get<bool>()});
    }
    return out;
}

// Human-acceptance rate per quality interval. Intervals with no judgments
// report null; judgments naming unknown documents are skipped with a
// warning.
struct AcceptanceReport {
    std::array<size_t, ScoreHistogram::kBins> judged{};
    std::array<size_t, ScoreHistogram::kBins> accepted{};
    size_t unknown_ids = 0;

    void merge(const AcceptanceReport& o) {
        for (size_t i = 0; i < ScoreHistogram::kBins; ++i) {
            judged[i] += o.judged[i];
            accepted[i] += o.accepted[i];
        }
        unknown_ids += o.unknown_ids;
    }

    json to_json() const {
        json bins = json::array();
        for (size_t i = 0; i < ScoreHistogram::kBins; ++i) {
            json rate = judged[i] == 0 ? json(nullptr)
                                       : json(static_cast<double>(accepted[i]) /
                                              static_cast<double>(judged[i]));
            bins.push_back({{"interval", ScoreHistogram::bin_label(i)},
                            {"judged", judged[i]},
                            {"accepted", accepted[i]},
                            {"rate", std::move(rate)}});
        }
        return {{"unknown_doc_ids", unknown_ids}, {"bins", std::move(bins)}};
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << "interval,judged,accepted,rate\n";
        for (size_t i = 0; i < ScoreHistogram::kBins; ++i) {
            os << ScoreHistogram::bin_label(i) << ',' << judged[i] << ',' << accepted[i] << ',';
            if (judged[i] != 0)
                os << static_cast<double>(accepted[i]) / static_cast<double>(judged[i]);
            os << '\n';
        }
        return os.str();
    }

    bool operator==(const AcceptanceReport&) const = default;
};

inline AcceptanceReport acceptance_report(const std::string& annotated_path,
                                          const std::vector<AcceptanceJudgment>& judgments) {
    std::unordered_map<std::string, double> score_by_id;
    for_each_annotated(annotated_path, [&](AnnotatedDocument&& a) {
        score_by_id[a.doc.id] = a.quality_score;
    });
    AcceptanceReport report;
    for (const auto& j : judgments) {
        auto it = score_by_id.find(j.doc_id);
        if (it == score_by_id.end()) {
            std::cerr << "warning: judgment for unknown doc_id " << j.doc_id << ", skipped\n";
            ++report.unknown_ids;
            continue;
        }
        const size_t bin = ScoreHistogram::bin_of(it->second);
        ++report.judged[bin];
        if (j.accepted) ++report.accepted[bin];
    }
    return report;
}

}  // namespace mdfg
