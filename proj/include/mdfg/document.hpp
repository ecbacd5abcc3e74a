#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "mdfg/util.hpp"

namespace mdfg {

// Interchange schema marker written into every emitted record.
inline constexpr const char* kSchemaVersion = "mdfg-2";

// The 11 domain categories. Order is the registration order used for
// serialization and deterministic tie-breaking everywhere.
enum class DomainLabel : uint8_t {
    math = 0,
    book,
    law,
    finance,
    education,
    dialogue,
    encyclopedia,
    news,
    medicine,
    technology,
    general,
};

inline constexpr size_t kNumDomains = 11;

inline constexpr std::array<std::string_view, kNumDomains> kDomainNames = {
    "math", "book", "law", "finance", "education", "dialogue",
    "encyclopedia", "news", "medicine", "technology", "general",
};

inline std::string_view to_string(DomainLabel d) {
    return kDomainNames[static_cast<size_t>(d)];
}

inline std::optional<DomainLabel> parse_domain(std::string_view s) {
    for (size_t i = 0; i < kNumDomains; ++i)
        if (kDomainNames[i] == s) return static_cast<DomainLabel>(i);
    return std::nullopt;
}

// Toxicity labeling rule: a record is toxic iff its score strictly exceeds
// this threshold.
inline constexpr double kToxicLabelThreshold = 0.99;

inline bool is_toxic_score(double score) { return score > kToxicLabelThreshold; }

struct Document {
    std::string id;
    std::string text;
    std::string source;
    std::map<std::string, std::string> meta;

    bool operator==(const Document&) const = default;
};

struct AnnotatedDocument {
    Document doc;
    double quality_score = 0.5;
    DomainLabel domain_single = DomainLabel::general;
    std::set<DomainLabel> domain_multi;
    double toxicity_score = 0.0;
    bool toxic = false;

    std::string_view toxicity_label() const { return toxic ? "toxic" : "benign"; }

    bool operator==(const AnnotatedDocument&) const = default;
};

// Construction-time invariant check; serialization assumes these hold.
inline void validate(const AnnotatedDocument& a) {
    if (a.doc.id.empty()) throw MalformedRecord("record id is empty");
    if (!(a.quality_score > 0.0 && a.quality_score < 1.0) || !std::isfinite(a.quality_score))
        throw MalformedRecord("quality_score outside (0,1)");
    if (!(a.toxicity_score >= 0.0 && a.toxicity_score <= 1.0) || !std::isfinite(a.toxicity_score))
        throw MalformedRecord("toxicity_score outside [0,1]");
    if (a.domain_multi.empty()) throw MalformedRecord("domain_multi is empty");
    if (a.toxic != is_toxic_score(a.toxicity_score))
        throw MalformedRecord("toxicity_label inconsistent with toxicity_score");
}

inline AnnotatedDocument make_annotated(Document doc, double quality_score,
                                        DomainLabel single, std::set<DomainLabel> multi,
                                        double toxicity_score) {
    AnnotatedDocument a;
    a.doc = std::move(doc);
    a.quality_score = quality_score;
    a.domain_single = single;
    a.domain_multi = std::move(multi);
    a.toxicity_score = toxicity_score;
    a.toxic = is_toxic_score(toxicity_score);
    validate(a);
    return a;
}

struct FilterVerdict {
    enum class Reason : uint8_t {
        none = 0,
        avg_line_length,
        too_short,
        char_proportion,
        sensitive_words,
        duplicate,
    };

    bool keep = true;
    Reason reason = Reason::none;

    static FilterVerdict ok() { return {true, Reason::none}; }
    static FilterVerdict drop(Reason r) { return {false, r}; }
};

inline std::string_view to_string(FilterVerdict::Reason r) {
    switch (r) {
        case FilterVerdict::Reason::none: return "none";
        case FilterVerdict::Reason::avg_line_length: return "avg_line_length";
        case FilterVerdict::Reason::too_short: return "too_short";
        case FilterVerdict::Reason::char_proportion: return "char_proportion";
        case FilterVerdict::Reason::sensitive_words: return "sensitive_words";
        case FilterVerdict::Reason::duplicate: return "duplicate";
    }
    return "none";
}

// Deterministic record id for inputs that arrive without one.
inline std::string derive_id(std::string_view source, uint64_t byte_offset) {
    uint64_t h = fnv1a(source);
    h = fnv1a_u32(0x1F, h);  // separator
    h = fnv1a_u64(byte_offset, h);
    return to_hex16(h);
}

}  // namespace mdfg
