#pragma once

#include <fnmatch.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "mdfg/annotate.hpp"
#include "mdfg/external_scorer.hpp"
#include "mdfg/prepare.hpp"
#include "mdfg/preprocess.hpp"
#include "mdfg/stats.hpp"
#include "mdfg/version.hpp"

namespace mdfg {

// Expands a leaf-level glob ("dir/*.jsonl") into a sorted file list; a
// plain path passes through. Sorting keeps reruns byte-identical.
inline std::vector<std::string> expand_glob(const std::string& pattern) {
    namespace fs = std::filesystem;
    if (pattern.find('*') == std::string::npos && pattern.find('?') == std::string::npos)
        return {pattern};
    fs::path p(pattern);
    fs::path dir = p.parent_path().empty() ? fs::path(".") : p.parent_path();
    std::string leaf = p.filename().string();
    std::vector<std::string> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string name = entry.path().filename().string();
        if (fnmatch(leaf.c_str(), name.c_str(), 0) == 0) out.push_back(entry.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct PipelineConfig {
    std::vector<std::string> input_patterns;
    std::string out_dir;
    std::string lexicon_path;
    std::string keywords_path;  // informational; domain model is the input
    std::string quality_model_path;
    std::string domain_model_path;
    std::string toxicity_model_path;
    std::string quality_scorer = "builtin";  // builtin | pipe:<cmd> | http://host:port
    std::string judgments_path;
    std::string decisions_path;
    uint64_t seed = 42;
    size_t sample_n = kDefaultSampleSize;
    size_t jobs = 1;
    PreprocessConfig preprocess;

    void set(const std::string& key, const std::string& value) {
        if (key == "input") input_patterns.push_back(value);
        else if (key == "out_dir") out_dir = value;
        else if (key == "lexicon") lexicon_path = value;
        else if (key == "keywords") keywords_path = value;
        else if (key == "quality_model") quality_model_path = value;
        else if (key == "domain_model") domain_model_path = value;
        else if (key == "toxicity_model") toxicity_model_path = value;
        else if (key == "quality_scorer") quality_scorer = value;
        else if (key == "judgments") judgments_path = value;
        else if (key == "decisions") decisions_path = value;
        else if (key == "seed") seed = std::stoull(value);
        else if (key == "sample_n") sample_n = std::stoull(value);
        else if (key == "jobs") jobs = std::stoull(value);
        else if (key == "min_avg_line_len") preprocess.min_avg_line_len = std::stoull(value);
        else if (key == "min_chars") preprocess.min_chars = std::stoull(value);
        else if (key == "min_chinese_ratio") preprocess.min_chinese_ratio = std::stod(value);
        else if (key == "sensitive_line_ratio") preprocess.sensitive_line_ratio = std::stod(value);
        else if (key == "ngram_n") preprocess.ngram_n = std::stoull(value);
        else if (key == "dup_ratio") preprocess.dup_ratio = std::stod(value);
        else throw ConfigError("unknown config key: " + key);
    }

    // Plain key = value lines, '#' comments. CLI flags override by calling
    // set() again after load.
    static PipelineConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file " + path);
        PipelineConfig cfg;
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("bad config line " + std::to_string(lineno) + ": " + t);
            cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        }
        return cfg;
    }

    std::vector<std::string> expanded_inputs() const {
        std::vector<std::string> files;
        for (const auto& p : input_patterns) {
            auto expanded = expand_glob(p);
            files.insert(files.end(), expanded.begin(), expanded.end());
        }
        return files;
    }

    void validate() const {
        namespace fs = std::filesystem;
        if (input_patterns.empty()) throw ConfigError("no input configured");
        if (out_dir.empty()) throw ConfigError("no out_dir configured");
        auto files = expanded_inputs();
        if (files.empty()) throw ConfigError("input pattern matched no files");
        for (const auto& f : files)
            if (!fs::exists(f)) throw ConfigError("input file missing: " + f);
        auto need = [](const std::string& p, const char* what) {
            if (p.empty()) throw ConfigError(std::string("missing required path: ") + what);
            if (!fs::exists(p)) throw ConfigError(std::string(what) + " not found: " + p);
        };
        need(lexicon_path, "lexicon");
        if (quality_scorer == "builtin") need(quality_model_path, "quality_model");
        need(domain_model_path, "domain_model");
        need(toxicity_model_path, "toxicity_model");
        if (!judgments_path.empty() && !fs::exists(judgments_path))
            throw ConfigError("judgments file not found: " + judgments_path);
        if (!decisions_path.empty() && !fs::exists(decisions_path))
            throw ConfigError("decisions file not found: " + decisions_path);
        preprocess.validate();
    }
};

struct PipelineResult {
    int exit_code = 0;
    json report;
};

namespace detail {

inline std::shared_ptr<const QualityScorer> make_quality_scorer(const PipelineConfig& cfg,
                                                                std::string& fingerprint) {
    if (cfg.quality_scorer == "builtin") {
        LinearModel m = load_model(cfg.quality_model_path);
        fingerprint = to_hex16(m.fingerprint());
        return std::make_shared<BuiltinScorer>(std::move(m));
    }
    if (cfg.quality_scorer.rfind("pipe:", 0) == 0) {
        std::string cmd = cfg.quality_scorer.substr(5);
        fingerprint = "pipe-" + to_hex16(fnv1a(cmd));
        return std::make_shared<PipeScorer>(cmd);
    }
    if (cfg.quality_scorer.rfind("http://", 0) == 0) {
        std::string host;
        int port;
        std::string path;
        HttpOracle::parse_url(cfg.quality_scorer, host, port, path);
        fingerprint = "http-" + to_hex16(fnv1a(cfg.quality_scorer));
        return std::make_shared<HttpScorer>(host, port);
    }
    throw ConfigError("unknown quality_scorer: " + cfg.quality_scorer);
}

}  // namespace detail

// Full corpus run: optional source vetting, the four-rule preprocessing
// pass, three-way annotation and the standard report set. Exit codes:
// 0 success, 1 configuration error, 2 runtime error.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, bool dry_run = false) {
    namespace fs = std::filesystem;
    PipelineResult result;
    try {
        cfg.validate();
    } catch (const Error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        result.exit_code = 1;
        result.report = {{"error", e.what()}};
        return result;
    }

    const auto inputs = cfg.expanded_inputs();
    if (dry_run) {
        json plan;
        plan["inputs"] = inputs;
        plan["stages"] = json::array();
        if (!cfg.judgments_path.empty() || !cfg.decisions_path.empty())
            plan["stages"].push_back("prepare");
        plan["stages"].push_back("preprocess");
        plan["stages"].push_back("annotate");
        plan["stages"].push_back("stats");
        plan["out_dir"] = cfg.out_dir;
        std::cout << plan.dump(2) << "\n";
        result.report = std::move(plan);
        return result;
    }

    try {
        fs::create_directories(cfg.out_dir);
        fs::create_directories(fs::path(cfg.out_dir) / "stats");
        const auto out = [&](const char* name) { return (fs::path(cfg.out_dir) / name).string(); };

        // Source vetting. Judgments are matched against a fresh
        // deterministic sample (same seed as the sampling run that produced
        // them), then sources over the irrelevance threshold are dropped.
        std::set<std::string> excluded_sources;
        std::vector<SourceDecision> decisions;
        if (!cfg.decisions_path.empty()) {
            decisions = read_decisions(cfg.decisions_path);
        } else if (!cfg.judgments_path.empty()) {
            auto judgments = read_judgments(cfg.judgments_path);
            std::map<std::string, std::string> source_by_doc;
            for (const auto& file : inputs) {
                for (const auto& d : sample_source(file, cfg.sample_n, cfg.seed))
                    source_by_doc[d.id] = d.source;
            }
            std::map<std::string, std::vector<SourceJudgment>> by_source;
            for (const auto& j : judgments) {
                auto it = source_by_doc.find(j.doc_id);
                if (it == source_by_doc.end()) {
                    std::cerr << "warning: judgment for unsampled doc_id " << j.doc_id
                              << ", skipped\n";
                    continue;
                }
                by_source[it->second].push_back(j);
            }
            for (const auto& [source, js] : by_source) decisions.push_back(vet_source(source, js));
        }
        if (!decisions.empty()) {
            JsonlWriter writer(out("decisions.jsonl"));
            for (const auto& d : decisions) {
                writer.write_line(decision_to_json(d).dump());
                if (d.exclude) excluded_sources.insert(d.source);
            }
        }

        // Preprocess.
        SensitiveLexicon lexicon = load_lexicon(cfg.lexicon_path);
        Preprocessor pp(cfg.preprocess, std::move(lexicon));
        size_t prepare_input = 0, prepare_removed = 0;
        {
            JsonlWriter kept(out("kept.jsonl"));
            for (const auto& file : inputs) {
                size_t skipped = for_each_document(file, [&](Document&& d) {
                    ++prepare_input;
                    if (excluded_sources.count(d.source)) {
                        ++prepare_removed;
                        return;
                    }
                    if (pp.process(d).keep) kept.write(d);
                });
                for (size_t i = 0; i < skipped; ++i) pp.count_malformed();
            }
        }
        RemovalReport removal = pp.report();
        if (!decisions.empty())
            removal.stages.insert(removal.stages.begin(),
                                  {"preparation", prepare_input, prepare_removed});
        {
            std::ofstream rep(out("removal_report.json"));
            rep << removal.to_json().dump(2) << "\n";
        }

        // Annotate.
        std::string quality_fp;
        auto scorer = detail::make_quality_scorer(cfg, quality_fp);
        AnnotatorBundle bundle = AnnotatorBundle::make(scorer, quality_fp,
                                                       load_model(cfg.domain_model_path),
                                                       load_model(cfg.toxicity_model_path));
        AnnotateCounts counts;
        {
            JsonlWriter annotated(out("annotated.jsonl"));
            JsonlWriter quarantine(out("quarantine.jsonl"));
            counts = annotate_corpus(
                out("kept.jsonl"), bundle,
                [&](const AnnotatedDocument& a) { annotated.write(a); },
                [&](const Document& d, const std::string& err) {
                    quarantine.write_line(write_quarantined(d, err));
                });
        }

        // Reports.
        QualityDistribution quality;
        DomainDistribution domains;
        QualityDomainTable cross;
        ToxicityDistribution toxicity;
        for_each_annotated(out("annotated.jsonl"), [&](AnnotatedDocument&& a) {
            quality.add(a);
            domains.add(a);
            cross.add(a);
            toxicity.add(a);
        });
        auto emit = [&](const char* name, const json& j, const std::string& csv) {
            std::ofstream jf((fs::path(cfg.out_dir) / "stats" / (std::string(name) + ".json")));
            jf << j.dump(2) << "\n";
            std::ofstream cf((fs::path(cfg.out_dir) / "stats" / (std::string(name) + ".csv")));
            cf << csv;
        };
        emit("quality", quality.to_json(), quality.to_csv());
        emit("domains", domains.to_json(), domains.to_csv());
        emit("cross", cross.to_json(), cross.to_csv());
        emit("toxicity", toxicity.to_json(), toxicity.to_csv());

        json report;
        report["schema"] = kSchemaVersion;
        report["inputs"] = inputs;
        report["removal"] = removal.to_json();
        report["annotated"] = counts.annotated;
        report["quarantined"] = counts.quarantined;
        report["annotate_malformed"] = counts.malformed;
        report["toxic_count"] = toxicity.toxic;
        report["partial"] = counts.quarantined > 0;
        report["outputs"] = {out("kept.jsonl"), out("removal_report.json"),
                             out("annotated.jsonl"), out("quarantine.jsonl")};
        {
            std::ofstream rep(out("pipeline_report.json"));
            rep << report.dump(2) << "\n";
        }
        result.report = std::move(report);
        return result;
    } catch (const std::exception& e) {
        std::cerr << "pipeline error: " << e.what() << "\n";
        result.exit_code = 2;
        result.report = {{"error", e.what()}};
        return result;
    }
}

}  // namespace mdfg
