#pragma once

#include <array>
#include <fstream>
#include <functional>
#include <string>
#include <unordered_set>
#include <vector>

#include "mdfg/document.hpp"
#include "mdfg/sensitive.hpp"
#include "mdfg/unicode.hpp"
#include "mdfg/util.hpp"

namespace mdfg {

struct PreprocessConfig {
    size_t min_avg_line_len = 10;       // drop below this mean line length
    size_t min_chars = 200;             // drop shorter texts
    double min_chinese_ratio = 0.30;    // drop below this CJK share
    double sensitive_line_ratio = 0.50; // drop when any line exceeds this coverage
    size_t ngram_n = 13;                // dedup gram size, in characters
    double dup_ratio = 0.50;            // drop when repeated coverage exceeds this

    void validate() const {
        if (min_avg_line_len < 1 || min_chars < 1 || ngram_n < 1)
            throw ConfigError("preprocess counts must be >= 1");
        auto in01 = [](double r) { return r >= 0.0 && r <= 1.0; };
        if (!in01(min_chinese_ratio) || !in01(sensitive_line_ratio) || !in01(dup_ratio))
            throw ConfigError("preprocess ratios must lie in [0,1]");
    }
};

// Average line length (splitting on '\n', ignoring empty lines) strictly
// below the minimum, then total character count strictly below the minimum.
// Characters are Unicode scalar values.
inline FilterVerdict filter_length(const Document& doc, const PreprocessConfig& cfg) {
    auto cps = utf8_decode(doc.text);
    size_t total = cps.size();
    size_t lines = 0;
    size_t line_chars = 0;
    size_t line_len = 0;
    for (char32_t cp : cps) {
        if (cp == U'\n') {
            if (line_len > 0) { ++lines; line_chars += line_len; }
            line_len = 0;
        } else {
            ++line_len;
        }
    }
    if (line_len > 0) { ++lines; line_chars += line_len; }

    double avg = lines == 0 ? 0.0 : static_cast<double>(line_chars) / static_cast<double>(lines);
    if (avg < static_cast<double>(cfg.min_avg_line_len))
        return FilterVerdict::drop(FilterVerdict::Reason::avg_line_length);
    if (total < cfg.min_chars)
        return FilterVerdict::drop(FilterVerdict::Reason::too_short);
    return FilterVerdict::ok();
}

// CJK share of the non-whitespace characters strictly below the minimum.
// Empty or all-whitespace text counts as ratio 0.
inline FilterVerdict filter_char_proportion(const Document& doc, const PreprocessConfig& cfg) {
    auto cps = utf8_decode(doc.text);
    size_t cjk = 0, total = 0;
    for (char32_t cp : cps) {
        if (is_unicode_space(cp)) continue;
        ++total;
        if (is_cjk(cp)) ++cjk;
    }
    double ratio = total == 0 ? 0.0 : static_cast<double>(cjk) / static_cast<double>(total);
    if (ratio < cfg.min_chinese_ratio)
        return FilterVerdict::drop(FilterVerdict::Reason::char_proportion);
    return FilterVerdict::ok();
}

// Drops the whole document when any single line's sensitive-character
// coverage strictly exceeds the threshold.
inline FilterVerdict filter_sensitive(const Document& doc, const SensitiveLexicon& lex,
                                      const PreprocessConfig& cfg) {
    if (lex.empty()) return FilterVerdict::ok();
    auto cps = utf8_decode(doc.text);
    size_t begin = 0;
    for (size_t i = 0; i <= cps.size(); ++i) {
        if (i == cps.size() || cps[i] == U'\n') {
            size_t len = i - begin;
            if (len > 0) {
                size_t covered = lex.covered_chars(cps, begin, i);
                if (static_cast<double>(covered) > cfg.sensitive_line_ratio * static_cast<double>(len))
                    return FilterVerdict::drop(FilterVerdict::Reason::sensitive_words);
            }
            begin = i + 1;
        }
    }
    return FilterVerdict::ok();
}

// Character n-gram fingerprints over the NFC-normalized text. Returns the
// fingerprint per gram start position; normalized length via out param.
inline std::vector<uint64_t> ngram_fingerprints(const std::string& text, size_t n,
                                                size_t* normalized_len = nullptr) {
    auto cps = utf8_decode(nfc_normalize(text));
    if (normalized_len) *normalized_len = cps.size();
    std::vector<uint64_t> fps;
    if (cps.size() < n) return fps;
    fps.reserve(cps.size() - n + 1);
    for (size_t i = 0; i + n <= cps.size(); ++i) {
        uint64_t h = kFnvOffset;
        for (size_t k = 0; k < n; ++k) h = fnv1a_u32(static_cast<uint32_t>(cps[i + k]), h);
        fps.push_back(h);
    }
    return fps;
}

// Sharded set of n-gram fingerprints seen in previously kept documents.
// Fingerprints are never removed during a run; the shard of a fingerprint
// is a pure function of its value.
class DedupIndex {
public:
    static constexpr size_t kShards = 256;
    static constexpr char kMagic[9] = "MDFGDD01";

    explicit DedupIndex(size_t ngram_n = 13) : ngram_n_(ngram_n) {}

    size_t ngram_n() const { return ngram_n_; }

    bool contains(uint64_t fp) const { return shards_[shard_of(fp)].count(fp) > 0; }
    void insert(uint64_t fp) { shards_[shard_of(fp)].insert(fp); }

    size_t size() const {
        size_t total = 0;
        for (const auto& s : shards_) total += s.size();
        return total;
    }

    // Repeated-character proportion of one document against the current
    // index, and the document's fingerprints for later insertion.
    double repeated_proportion(const std::string& text, std::vector<uint64_t>* fps_out) const {
        size_t len = 0;
        std::vector<uint64_t> fps = ngram_fingerprints(text, ngram_n_, &len);
        double prop = 0.0;
        if (len > 0 && !fps.empty()) {
            size_t covered = 0;
            size_t covered_end = 0;  // exclusive end of covered prefix region
            for (size_t i = 0; i < fps.size(); ++i) {
                if (!contains(fps[i])) continue;
                size_t b = std::max(i, covered_end);
                size_t e = i + ngram_n_;
                if (e > b) covered += e - b;
                if (e > covered_end) covered_end = e;
            }
            prop = static_cast<double>(covered) / static_cast<double>(len);
        }
        if (fps_out) *fps_out = std::move(fps);
        return prop;
    }

    // Check-then-insert for one document; only kept documents publish
    // their grams.
    FilterVerdict process(const std::string& text, double dup_ratio) {
        std::vector<uint64_t> fps;
        double prop = repeated_proportion(text, &fps);
        if (prop > dup_ratio) return FilterVerdict::drop(FilterVerdict::Reason::duplicate);
        for (uint64_t fp : fps) insert(fp);
        return FilterVerdict::ok();
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open " + path + " for writing");
        out.write(kMagic, 8);
        uint64_t checksum = kFnvOffset;
        auto put64 = [&](uint64_t v) {
            char buf[8];
            for (int i = 0; i < 8; ++i) buf[i] = char((v >> (8 * i)) & 0xFF);
            out.write(buf, 8);
            checksum = fnv1a_u64(v, checksum);
        };
        put64(ngram_n_);
        put64(kShards);
        for (const auto& shard : shards_) {
            std::vector<uint64_t> sorted(shard.begin(), shard.end());
            std::sort(sorted.begin(), sorted.end());
            put64(sorted.size());
            for (uint64_t fp : sorted) put64(fp);
        }
        char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = char((checksum >> (8 * i)) & 0xFF);
        out.write(buf, 8);
        if (!out) throw IoError("write failed: " + path);
    }

    static DedupIndex load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path);
        char magic[8];
        if (!in.read(magic, 8)) throw CorruptModel("truncated index file");
        if (std::string_view(magic, 8) != std::string_view(kMagic, 8))
            throw VersionMismatch("not a dedup index file");
        uint64_t checksum = kFnvOffset;
        auto get64 = [&]() {
            char buf[8];
            if (!in.read(buf, 8)) throw CorruptModel("truncated index file");
            uint64_t v = 0;
            for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(buf[i])) << (8 * i);
            checksum = fnv1a_u64(v, checksum);
            return v;
        };
        DedupIndex index(static_cast<size_t>(get64()));
        uint64_t shards = get64();
        if (shards != kShards) throw VersionMismatch("unexpected shard count");
        for (size_t s = 0; s < kShards; ++s) {
            uint64_t count = get64();
            for (uint64_t i = 0; i < count; ++i) index.insert(get64());
        }
        uint64_t expected = checksum;
        char buf[8];
        if (!in.read(buf, 8)) throw CorruptModel("truncated index file");
        uint64_t stored = 0;
        for (int i = 0; i < 8; ++i) stored |= uint64_t(uint8_t(buf[i])) << (8 * i);
        if (stored != expected) throw CorruptModel("index checksum mismatch");
        return index;
    }

private:
    static size_t shard_of(uint64_t fp) { return fp >> 56; }

    size_t ngram_n_;
    std::array<std::unordered_set<uint64_t>, kShards> shards_;
};

struct RemovalStage {
    std::string name;
    size_t input = 0;
    size_t removed = 0;

    double removed_fraction() const {
        return input == 0 ? 0.0 : static_cast<double>(removed) / static_cast<double>(input);
    }
};

// Per-stage removal accounting. input(k+1) = input(k) - removed(k) holds by
// construction; remaining fractions are relative to the first stage input.
struct RemovalReport {
    std::vector<RemovalStage> stages;
    size_t malformed_skipped = 0;

    size_t original_input() const { return stages.empty() ? 0 : stages.front().input; }

    size_t remaining_after(size_t stage_idx) const {
        size_t left = original_input();
        for (size_t i = 0; i <= stage_idx && i < stages.size(); ++i) left -= stages[i].removed;
        return left;
    }

    double remaining_fraction_after(size_t stage_idx) const {
        size_t orig = original_input();
        return orig == 0 ? 1.0
                         : static_cast<double>(remaining_after(stage_idx)) / static_cast<double>(orig);
    }

    json to_json() const {
        json out;
        out["malformed_skipped"] = malformed_skipped;
        json list = json::array();
        for (size_t i = 0; i < stages.size(); ++i) {
            const auto& s = stages[i];
            list.push_back({{"stage", s.name},
                            {"input", s.input},
                            {"removed", s.removed},
                            {"removed_fraction_of_stage_input", s.removed_fraction()},
                            {"remaining_fraction_of_original", remaining_fraction_after(i)}});
        }
        out["stages"] = std::move(list);
        return out;
    }
};

// Streaming application of the four rules in order: data length, character
// proportion, sensitive words, deduplication. Short-circuits at the first
// drop; only documents surviving all rules publish dedup grams.
class Preprocessor {
public:
    Preprocessor(PreprocessConfig cfg, SensitiveLexicon lexicon)
        : cfg_(std::move(cfg)), lexicon_(std::move(lexicon)), index_(cfg_.ngram_n) {
        cfg_.validate();
    }

    FilterVerdict process(const Document& doc) {
        ++counts_[0];
        FilterVerdict v = filter_length(doc, cfg_);
        if (!v.keep) { ++removed_[0]; return v; }
        ++counts_[1];
        v = filter_char_proportion(doc, cfg_);
        if (!v.keep) { ++removed_[1]; return v; }
        ++counts_[2];
        v = filter_sensitive(doc, lexicon_, cfg_);
        if (!v.keep) { ++removed_[2]; return v; }
        ++counts_[3];
        v = index_.process(doc.text, cfg_.dup_ratio);
        if (!v.keep) ++removed_[3];
        return v;
    }

    void count_malformed() { ++malformed_; }

    RemovalReport report() const {
        RemovalReport r;
        static const char* names[4] = {"data_length", "char_proportion", "sensitive_words",
                                       "deduplication"};
        for (size_t i = 0; i < 4; ++i) r.stages.push_back({names[i], counts_[i], removed_[i]});
        r.malformed_skipped = malformed_;
        return r;
    }

    DedupIndex& index() { return index_; }
    const PreprocessConfig& config() const { return cfg_; }

private:
    PreprocessConfig cfg_;
    SensitiveLexicon lexicon_;
    DedupIndex index_;
    size_t counts_[4] = {0, 0, 0, 0};
    size_t removed_[4] = {0, 0, 0, 0};
    size_t malformed_ = 0;
};

// Runs the full pass over a list of input files; kept documents go to the
// callback in input order.
inline RemovalReport run_preprocess(const std::vector<std::string>& paths,
                                    const PreprocessConfig& cfg, SensitiveLexicon lexicon,
                                    const std::function<void(const Document&)>& on_kept) {
    Preprocessor pp(cfg, std::move(lexicon));
    for (const auto& path : paths) {
        size_t skipped = for_each_document(path, [&](Document&& d) {
            if (pp.process(d).keep) on_kept(d);
        });
        for (size_t i = 0; i < skipped; ++i) pp.count_malformed();
    }
    return pp.report();
}

}  // namespace mdfg
