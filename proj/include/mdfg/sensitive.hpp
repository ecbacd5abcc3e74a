#pragma once

#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mdfg/jsonl.hpp"
#include "mdfg/unicode.hpp"
#include "mdfg/util.hpp"

namespace mdfg {

// Word list driving the line-level sensitive-character filter. Matching is
// leftmost-longest and non-overlapping: at each position the longest
// lexicon word starting there wins, and scanning resumes after it.
class SensitiveLexicon {
public:
    SensitiveLexicon() { nodes_.emplace_back(); }

    explicit SensitiveLexicon(const std::vector<std::string>& words) : SensitiveLexicon() {
        for (const auto& w : words) add(w);
    }

    void add(std::string_view word) {
        auto cps = utf8_decode(word);
        if (cps.empty()) throw ConfigError("empty sensitive word");
        if (!words_.insert(std::string(word)).second) return;  // duplicate
        size_t node = 0;
        for (char32_t cp : cps) {
            auto& children = nodes_[node].children;
            auto it = children.find(cp);
            if (it == children.end()) {
                nodes_.emplace_back();
                it = nodes_[node].children.emplace(cp, nodes_.size() - 1).first;
            }
            node = it->second;
        }
        nodes_[node].terminal = true;
    }

    bool empty() const { return words_.empty(); }
    size_t size() const { return words_.size(); }
    const std::set<std::string>& words() const { return words_; }

    // Number of positions in [begin, end) covered by matches.
    size_t covered_chars(const std::vector<char32_t>& cps, size_t begin, size_t end) const {
        size_t covered = 0;
        size_t i = begin;
        while (i < end) {
            size_t len = longest_match(cps, i, end);
            if (len > 0) {
                covered += len;
                i += len;
            } else {
                ++i;
            }
        }
        return covered;
    }

private:
    struct Node {
        std::unordered_map<char32_t, size_t> children;
        bool terminal = false;
    };

    size_t longest_match(const std::vector<char32_t>& cps, size_t pos, size_t end) const {
        size_t node = 0;
        size_t best = 0;
        for (size_t i = pos; i < end; ++i) {
            auto it = nodes_[node].children.find(cps[i]);
            if (it == nodes_[node].children.end()) break;
            node = it->second;
            if (nodes_[node].terminal) best = i - pos + 1;
        }
        return best;
    }

    std::vector<Node> nodes_;
    std::set<std::string> words_;
};

// Lexicon file: one word per line, UTF-8, '#' starts a comment line.
inline SensitiveLexicon load_lexicon(const std::string& path) {
    SensitiveLexicon lex;
    LineReader reader(path);
    std::string line;
    while (reader.next(line)) {
        std::string w = trim(line);
        if (w.empty() || w[0] == '#') continue;
        lex.add(w);
    }
    return lex;
}

}  // namespace mdfg
