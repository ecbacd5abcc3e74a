#pragma once

#include <functional>
#include <memory>
#include <string>

#include "mdfg/classifier.hpp"
#include "mdfg/document.hpp"
#include "mdfg/domain.hpp"
#include "mdfg/jsonl.hpp"
#include "mdfg/quality.hpp"
#include "mdfg/toxicity.hpp"

namespace mdfg {

// The three evaluators plus their content fingerprints; fingerprints are
// stamped into each output record's meta for reproducibility audits.
struct AnnotatorBundle {
    std::shared_ptr<const QualityScorer> quality;
    LinearModel domain;
    LinearModel toxicity;
    std::string quality_fingerprint;
    std::string domain_fingerprint;
    std::string toxicity_fingerprint;

    static AnnotatorBundle make(std::shared_ptr<const QualityScorer> quality_scorer,
                                std::string quality_fp, LinearModel domain_model,
                                LinearModel toxicity_model) {
        AnnotatorBundle b;
        b.quality = std::move(quality_scorer);
        b.quality_fingerprint = std::move(quality_fp);
        b.domain_fingerprint = to_hex16(domain_model.fingerprint());
        b.toxicity_fingerprint = to_hex16(toxicity_model.fingerprint());
        b.domain = std::move(domain_model);
        b.toxicity = std::move(toxicity_model);
        return b;
    }

    std::string fingerprint_tag() const {
        return "quality:" + quality_fingerprint + ",domain:" + domain_fingerprint +
               ",toxicity:" + toxicity_fingerprint;
    }
};

inline AnnotatedDocument annotate_one(const AnnotatorBundle& bundle, Document doc) {
    const double q = score_quality(*bundle.quality, doc);
    auto [single, multi] = classify_domains(bundle.domain, doc.text);
    const ToxicityVerdict tox = score_toxicity(bundle.toxicity, doc.text);
    doc.meta["models"] = bundle.fingerprint_tag();
    return make_annotated(std::move(doc), q, single, multi, tox.score);
}

struct AnnotateCounts {
    size_t annotated = 0;
    size_t quarantined = 0;
    size_t malformed = 0;
};

// Runs the three evaluators over a stream of documents, in input order.
// A per-record scorer failure routes the record to the quarantine callback
// with the error text; the run continues.
inline AnnotateCounts annotate_corpus(
    const std::string& input_path, const AnnotatorBundle& bundle,
    const std::function<void(const AnnotatedDocument&)>& on_annotated,
    const std::function<void(const Document&, const std::string& error)>& on_quarantined) {
    AnnotateCounts counts;
    counts.malformed = for_each_document(input_path, [&](Document&& d) {
        try {
            on_annotated(annotate_one(bundle, d));
            ++counts.annotated;
        } catch (const Error& e) {
            ++counts.quarantined;
            if (on_quarantined) on_quarantined(d, e.what());
        }
    });
    return counts;
}

inline std::string write_quarantined(const Document& d, const std::string& error) {
    json j = json::parse(write_document(d));
    j["error"] = error;
    return j.dump();
}

}  // namespace mdfg
