#pragma once

#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include <nlohmann/json.hpp>

#include "mdfg/document.hpp"
#include "mdfg/util.hpp"

namespace mdfg {

using json = nlohmann::json;

namespace detail {

inline const std::set<std::string, std::less<>>& known_record_keys() {
    static const std::set<std::string, std::less<>> keys = {
        "id", "text", "source", "schema", "quality_score", "domain_single",
        "domain_multi", "toxicity_score", "toxicity_label",
    };
    return keys;
}

}  // namespace detail

// Parses one JSONL line into a Document. A UTF-8 BOM prefix is tolerated.
// Unknown fields are kept in meta (non-string values as compact JSON) so
// heterogeneous source metadata survives the pipeline. Records without a
// source take default_source; records without an id get one derived from
// (source, byte offset), which keeps reruns deterministic.
inline Document parse_record(std::string_view line, uint64_t byte_offset = 0,
                             std::string_view default_source = {}) {
    if (line.size() >= 3 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw MalformedRecord("not a JSON object");
    auto text_it = j.find("text");
    if (text_it == j.end() || !text_it->is_string())
        throw MalformedRecord("missing or non-string \"text\" field");

    Document d;
    d.text = text_it->get<std::string>();
    if (auto it = j.find("source"); it != j.end() && it->is_string() && !it->get<std::string>().empty())
        d.source = it->get<std::string>();
    else
        d.source = std::string(default_source);
    if (auto it = j.find("id"); it != j.end() && it->is_string() && !it->get<std::string>().empty())
        d.id = it->get<std::string>();
    else if (auto it2 = j.find("id"); it2 != j.end() && it2->is_number())
        d.id = it2->dump();
    else
        d.id = derive_id(d.source, byte_offset);

    const auto& known = detail::known_record_keys();
    for (auto& [key, value] : j.items()) {
        if (known.count(key)) continue;
        if (key == "meta" && value.is_object()) {
            for (auto& [mk, mv] : value.items())
                d.meta[mk] = mv.is_string() ? mv.get<std::string>() : mv.dump();
            continue;
        }
        d.meta[key] = value.is_string() ? value.get<std::string>() : value.dump();
    }
    return d;
}

// Parses a fully annotated record, enforcing the AnnotatedDocument
// invariants on the way in.
inline AnnotatedDocument parse_annotated(std::string_view line, uint64_t byte_offset = 0) {
    if (line.size() >= 3 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw MalformedRecord("not a JSON object");

    AnnotatedDocument a;
    a.doc = parse_record(line, byte_offset);

    auto num = [&](const char* key) -> double {
        auto it = j.find(key);
        if (it == j.end() || !it->is_number())
            throw MalformedRecord(std::string("missing numeric \"") + key + "\" field");
        return it->get<double>();
    };
    a.quality_score = num("quality_score");
    a.toxicity_score = num("toxicity_score");

    auto single_it = j.find("domain_single");
    if (single_it == j.end() || !single_it->is_string())
        throw MalformedRecord("missing \"domain_single\" field");
    auto single = parse_domain(single_it->get<std::string>());
    if (!single) throw MalformedRecord("unknown domain label: " + single_it->get<std::string>());
    a.domain_single = *single;

    auto multi_it = j.find("domain_multi");
    if (multi_it == j.end() || !multi_it->is_array())
        throw MalformedRecord("missing \"domain_multi\" array");
    for (const auto& v : *multi_it) {
        if (!v.is_string()) throw MalformedRecord("non-string entry in domain_multi");
        auto d = parse_domain(v.get<std::string>());
        if (!d) throw MalformedRecord("unknown domain label: " + v.get<std::string>());
        a.domain_multi.insert(*d);
    }

    auto label_it = j.find("toxicity_label");
    if (label_it == j.end() || !label_it->is_string())
        throw MalformedRecord("missing \"toxicity_label\" field");
    const std::string label = label_it->get<std::string>();
    if (label != "toxic" && label != "benign")
        throw MalformedRecord("unknown toxicity label: " + label);
    a.toxic = label == "toxic";

    validate(a);
    return a;
}

namespace detail {

inline void put_meta_and_base(json& j, const Document& d) {
    for (const auto& [k, v] : d.meta)
        if (!known_record_keys().count(k)) j[k] = v;
    j["id"] = d.id;
    j["text"] = d.text;
    j["source"] = d.source;
    j["schema"] = kSchemaVersion;
}

}  // namespace detail

// One JSONL line, no trailing newline. parse_record(write_document(d))
// reproduces d exactly.
inline std::string write_document(const Document& d) {
    json j;
    detail::put_meta_and_base(j, d);
    return j.dump();
}

inline std::string write_record(const AnnotatedDocument& a) {
    validate(a);
    json j;
    detail::put_meta_and_base(j, a.doc);
    j["quality_score"] = a.quality_score;
    j["domain_single"] = std::string(to_string(a.domain_single));
    json multi = json::array();
    for (DomainLabel d : a.domain_multi) multi.push_back(std::string(to_string(d)));
    j["domain_multi"] = std::move(multi);
    j["toxicity_score"] = a.toxicity_score;
    j["toxicity_label"] = std::string(a.toxicity_label());
    return j.dump();
}

// Streaming line reader over a plain or gzip-compressed file (".gz" suffix).
// Tracks the byte offset of the current line within the decompressed stream
// so derived ids are stable across reruns.
class LineReader {
public:
    explicit LineReader(const std::string& path) : path_(path) {
        if (path.size() > 3 && path.substr(path.size() - 3) == ".gz") {
            gz_ = gzopen(path.c_str(), "rb");
            if (!gz_) throw IoError("cannot open " + path);
        } else {
            file_.open(path, std::ios::binary);
            if (!file_) throw IoError("cannot open " + path);
        }
    }

    ~LineReader() {
        if (gz_) gzclose(gz_);
    }

    LineReader(const LineReader&) = delete;
    LineReader& operator=(const LineReader&) = delete;

    // Reads the next line (without terminator). Returns false at EOF.
    bool next(std::string& line) {
        line_offset_ = next_offset_;
        line.clear();
        if (gz_) {
            char buf[4096];
            bool got = false;
            while (gzgets(gz_, buf, sizeof(buf))) {
                got = true;
                line += buf;
                if (!line.empty() && line.back() == '\n') break;
            }
            if (!got) return false;
        } else {
            if (!std::getline(file_, line)) return false;
            line += '\n';  // uniform accounting; stripped below
        }
        next_offset_ += line.size();
        while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
        return true;
    }

    uint64_t line_offset() const { return line_offset_; }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ifstream file_;
    gzFile gz_ = nullptr;
    uint64_t next_offset_ = 0;
    uint64_t line_offset_ = 0;
};

class JsonlWriter {
public:
    explicit JsonlWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open " + path + " for writing");
    }

    void write_line(std::string_view line) {
        out_ << line << '\n';
        if (!out_) throw IoError("write failed");
    }

    void write(const Document& d) { write_line(write_document(d)); }
    void write(const AnnotatedDocument& a) { write_line(write_record(a)); }

private:
    std::ofstream out_;
};

// Streams documents out of one file, skipping unparseable lines.
// on_bad, when set, sees each skipped line.
inline size_t for_each_document(const std::string& path,
                                const std::function<void(Document&&)>& fn,
                                const std::function<void(const std::string&)>& on_bad = {}) {
    LineReader reader(path);
    std::string line;
    size_t skipped = 0;
    while (reader.next(line)) {
        if (trim(line).empty()) continue;
        try {
            fn(parse_record(line, reader.line_offset(), reader.path()));
        } catch (const MalformedRecord&) {
            ++skipped;
            if (on_bad) on_bad(line);
        }
    }
    return skipped;
}

inline std::vector<Document> read_documents(const std::string& path) {
    std::vector<Document> docs;
    for_each_document(path, [&](Document&& d) { docs.push_back(std::move(d)); });
    return docs;
}

inline size_t for_each_annotated(const std::string& path,
                                 const std::function<void(AnnotatedDocument&&)>& fn) {
    LineReader reader(path);
    std::string line;
    size_t skipped = 0;
    while (reader.next(line)) {
        if (trim(line).empty()) continue;
        try {
            fn(parse_annotated(line, reader.line_offset()));
        } catch (const MalformedRecord&) {
            ++skipped;
        }
    }
    return skipped;
}

}  // namespace mdfg
