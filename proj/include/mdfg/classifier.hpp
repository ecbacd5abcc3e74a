#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mdfg/unicode.hpp"
#include "mdfg/util.hpp"

namespace mdfg {

struct FeatureConfig {
    size_t ngram_min = 1;
    size_t ngram_max = 3;
    size_t hash_buckets = size_t{1} << 21;
    size_t embed_dim = 64;

    void validate() const {
        if (ngram_min < 1 || ngram_max < ngram_min) throw ConfigError("bad n-gram range");
        if (hash_buckets < 1 || embed_dim < 1) throw ConfigError("buckets and dim must be >= 1");
    }

    bool operator==(const FeatureConfig&) const = default;
};

struct TrainParams {
    size_t epochs = 5;
    double lr = 0.1;  // linearly decayed towards 0 over the run
    uint64_t seed = 42;
    size_t min_count = 1;  // buckets seen fewer times than this stay at zero

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    }
};

struct Prediction {
    std::string label;
    double prob = 0.0;
};

// Hashed bag of character n-grams with counts, sorted by bucket so that
// accumulation order (and therefore training) is reproducible.
struct FeatureVec {
    std::vector<std::pair<uint32_t, double>> items;
    double total = 0.0;
};

inline FeatureVec featurize(std::string_view text, const FeatureConfig& cfg) {
    cfg.validate();
    FeatureVec fv;
    if (text.empty()) return fv;
    auto cps = utf8_decode(nfc_normalize(text));
    std::unordered_map<uint32_t, double> counts;
    for (size_t n = cfg.ngram_min; n <= cfg.ngram_max; ++n) {
        if (cps.size() < n) break;
        for (size_t i = 0; i + n <= cps.size(); ++i) {
            uint64_t h = kFnvOffset;
            for (size_t k = 0; k < n; ++k) h = fnv1a_u32(static_cast<uint32_t>(cps[i + k]), h);
            counts[static_cast<uint32_t>(h % cfg.hash_buckets)] += 1.0;
        }
    }
    fv.items.assign(counts.begin(), counts.end());
    std::sort(fv.items.begin(), fv.items.end());
    for (const auto& [bucket, c] : fv.items) fv.total += c;
    return fv;
}

// Averaged-embedding linear classifier: hashed n-gram features, one
// embedding row per bucket, a linear output layer and a softmax readout.
struct LinearModel {
    static constexpr char kMagic[9] = "MDFGFT01";

    FeatureConfig feature_config;
    std::vector<std::string> labels;
    int positive_index = -1;  // designated positive label for binary scoring
    std::vector<double> embeddings;  // hash_buckets x embed_dim, row-major
    std::vector<double> output;      // n_labels x embed_dim, row-major

    size_t dim() const { return feature_config.embed_dim; }
    size_t n_labels() const { return labels.size(); }

    int label_index(std::string_view name) const {
        for (size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == name) return static_cast<int>(i);
        return -1;
    }

    // Mean embedding of the feature bag; zero vector for empty input.
    std::vector<double> hidden(const FeatureVec& fv) const {
        std::vector<double> h(dim(), 0.0);
        if (fv.total <= 0.0) return h;
        for (const auto& [bucket, count] : fv.items) {
            const double* row = &embeddings[size_t(bucket) * dim()];
            for (size_t d = 0; d < dim(); ++d) h[d] += count * row[d];
        }
        const double inv = 1.0 / fv.total;
        for (double& v : h) v *= inv;
        return h;
    }

    std::vector<double> scores(const std::vector<double>& h) const {
        std::vector<double> z(n_labels(), 0.0);
        for (size_t l = 0; l < n_labels(); ++l) {
            const double* row = &output[l * dim()];
            double s = 0.0;
            for (size_t d = 0; d < dim(); ++d) s += row[d] * h[d];
            z[l] = s;
        }
        return z;
    }

    std::vector<double> probs(const FeatureVec& fv) const { return softmax(scores(hidden(fv))); }

    std::vector<double> probs(std::string_view text) const {
        return probs(featurize(text, feature_config));
    }

    static std::vector<double> softmax(std::vector<double> z) {
        double mx = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double& v : z) { v = std::exp(v - mx); sum += v; }
        for (double& v : z) v /= sum;
        return z;
    }

    // Stable content hash over configuration and weights.
    uint64_t fingerprint() const {
        uint64_t h = fnv1a(std::string_view(kMagic, 8));
        h = fnv1a_u64(feature_config.hash_buckets, h);
        h = fnv1a_u64(feature_config.embed_dim, h);
        h = fnv1a_u64(feature_config.ngram_min, h);
        h = fnv1a_u64(feature_config.ngram_max, h);
        h = fnv1a_u64(static_cast<uint64_t>(static_cast<int64_t>(positive_index)), h);
        for (const auto& l : labels) h = fnv1a(l, fnv1a_u32(0x1F, h));
        auto mix = [&](const std::vector<double>& m) {
            for (double v : m) {
                uint64_t bits;
                std::memcpy(&bits, &v, 8);
                h = fnv1a_u64(bits, h);
            }
        };
        mix(embeddings);
        mix(output);
        return h;
    }
};

namespace detail {

// Softmax cross-entropy value and gradients for one example. Gradients are
// written for the output matrix (dense) and the touched embedding rows
// (sparse, same layout as fv.items). Shared by the SGD loop and the
// finite-difference checks.
inline double ce_grad(const LinearModel& m, const FeatureVec& fv, size_t target,
                      std::vector<double>* grad_output,
                      std::vector<std::vector<double>>* grad_embed_rows) {
    const size_t dim = m.dim();
    const size_t n = m.n_labels();
    std::vector<double> h = m.hidden(fv);
    std::vector<double> p = LinearModel::softmax(m.scores(h));
    double loss = -std::log(std::max(p[target], 1e-300));

    std::vector<double> gz = p;
    gz[target] -= 1.0;

    if (grad_output) {
        grad_output->assign(n * dim, 0.0);
        for (size_t l = 0; l < n; ++l)
            for (size_t d = 0; d < dim; ++d) (*grad_output)[l * dim + d] = gz[l] * h[d];
    }
    if (grad_embed_rows) {
        std::vector<double> gh(dim, 0.0);
        for (size_t l = 0; l < n; ++l) {
            const double* row = &m.output[l * dim];
            for (size_t d = 0; d < dim; ++d) gh[d] += gz[l] * row[d];
        }
        grad_embed_rows->assign(fv.items.size(), std::vector<double>(dim, 0.0));
        if (fv.total > 0.0) {
            for (size_t i = 0; i < fv.items.size(); ++i) {
                const double w = fv.items[i].second / fv.total;
                for (size_t d = 0; d < dim; ++d) (*grad_embed_rows)[i][d] = w * gh[d];
            }
        }
    }
    return loss;
}

inline double sgd_step(LinearModel& m, const FeatureVec& fv, size_t target, double lr,
                       const std::unordered_set<uint32_t>* frozen) {
    if (fv.total <= 0.0) return -std::log(1.0 / static_cast<double>(m.n_labels()));
    const size_t dim = m.dim();
    std::vector<double> h = m.hidden(fv);
    std::vector<double> p = LinearModel::softmax(m.scores(h));
    double loss = -std::log(std::max(p[target], 1e-300));

    std::vector<double> gz = p;
    gz[target] -= 1.0;

    // grad wrt hidden uses the pre-update output matrix
    std::vector<double> gh(dim, 0.0);
    for (size_t l = 0; l < m.n_labels(); ++l) {
        const double* row = &m.output[l * dim];
        for (size_t d = 0; d < dim; ++d) gh[d] += gz[l] * row[d];
    }
    for (size_t l = 0; l < m.n_labels(); ++l) {
        double* row = &m.output[l * dim];
        const double g = lr * gz[l];
        for (size_t d = 0; d < dim; ++d) row[d] -= g * h[d];
    }
    for (const auto& [bucket, count] : fv.items) {
        if (frozen && frozen->count(bucket)) continue;
        double* row = &m.embeddings[size_t(bucket) * dim];
        const double g = lr * count / fv.total;
        for (size_t d = 0; d < dim; ++d) row[d] -= g * gh[d];
    }
    return loss;
}

}  // namespace detail

// Supervised training: seeded SGD over shuffled examples, one update per
// (example, label) pair, linear learning-rate decay. label_order, when
// given, pins the label indexing; otherwise labels register in order of
// first appearance.
inline LinearModel train(const std::vector<std::pair<std::string, std::vector<std::string>>>& corpus,
                         const TrainParams& params, const FeatureConfig& cfg,
                         const std::vector<std::string>& label_order = {},
                         std::vector<double>* epoch_mean_loss = nullptr,
                         const std::string& positive_label = {}) {
    params.validate();
    cfg.validate();
    if (corpus.empty()) throw EmptyCorpus("training corpus is empty");

    LinearModel m;
    m.feature_config = cfg;
    m.labels = label_order;
    std::unordered_map<std::string, size_t> label_idx;
    for (size_t i = 0; i < m.labels.size(); ++i) label_idx[m.labels[i]] = i;

    std::vector<FeatureVec> feats(corpus.size());
    std::vector<std::vector<size_t>> targets(corpus.size());
    std::unordered_map<uint32_t, double> bucket_counts;
    for (size_t i = 0; i < corpus.size(); ++i) {
        const auto& [text, labels] = corpus[i];
        if (labels.empty()) throw LabelMissing("example without labels");
        feats[i] = featurize(text, cfg);
        for (const auto& [bucket, count] : feats[i].items) bucket_counts[bucket] += count;
        for (const auto& l : labels) {
            auto it = label_idx.find(l);
            if (it == label_idx.end()) {
                if (!label_order.empty())
                    throw LabelMissing("label not in the declared label set: " + l);
                label_idx[l] = m.labels.size();
                m.labels.push_back(l);
                it = label_idx.find(l);
            }
            targets[i].push_back(it->second);
        }
    }
    if (m.labels.size() < 2) throw SingleClass("training needs at least two labels");

    if (!positive_label.empty()) {
        m.positive_index = m.label_index(positive_label);
        if (m.positive_index < 0) throw LabelMissing("positive label absent: " + positive_label);
    }

    std::unordered_set<uint32_t> frozen;
    if (params.min_count > 1)
        for (const auto& [bucket, count] : bucket_counts)
            if (count < static_cast<double>(params.min_count)) frozen.insert(bucket);

    Rng rng(params.seed);
    const size_t dim = cfg.embed_dim;
    m.embeddings.resize(cfg.hash_buckets * dim);
    const double bound = 1.0 / static_cast<double>(dim);
    for (double& v : m.embeddings) v = rng.uniform(-bound, bound);
    for (uint32_t b : frozen)
        std::fill_n(m.embeddings.begin() + size_t(b) * dim, dim, 0.0);
    m.output.assign(m.labels.size() * dim, 0.0);

    std::vector<size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    const double total_steps = static_cast<double>(params.epochs * corpus.size());
    size_t step = 0;
    if (epoch_mean_loss) epoch_mean_loss->clear();
    for (size_t epoch = 0; epoch < params.epochs; ++epoch) {
        fisher_yates_shuffle(order, rng);
        double loss_sum = 0.0;
        size_t loss_n = 0;
        for (size_t i : order) {
            const double lr = params.lr * (1.0 - static_cast<double>(step) / total_steps);
            for (size_t target : targets[i]) {
                loss_sum += detail::sgd_step(m, feats[i], target, lr,
                                             frozen.empty() ? nullptr : &frozen);
                ++loss_n;
            }
            ++step;
        }
        if (epoch_mean_loss) epoch_mean_loss->push_back(loss_n ? loss_sum / loss_n : 0.0);
    }
    return m;
}

// Top-k readout (k >= 1): best k labels with prob >= threshold, ties broken
// by label registration order. k == -1: every label with prob strictly
// above the threshold, descending.
inline std::vector<Prediction> predict(const LinearModel& m, std::string_view text, int k,
                                       double threshold = 0.0) {
    if (k == 0 || k < -1) throw ConfigError("k must be >= 1 or -1");
    std::vector<double> p = m.probs(text);
    std::vector<size_t> idx(p.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        if (p[a] != p[b]) return p[a] > p[b];
        return a < b;
    });
    std::vector<Prediction> out;
    if (k >= 1) {
        for (size_t r = 0; r < idx.size() && out.size() < static_cast<size_t>(k); ++r)
            if (p[idx[r]] >= threshold) out.push_back({m.labels[idx[r]], p[idx[r]]});
    } else {
        for (size_t r = 0; r < idx.size(); ++r)
            if (p[idx[r]] > threshold) out.push_back({m.labels[idx[r]], p[idx[r]]});
    }
    return out;
}

// Probability of the designated positive label of a two-label model.
inline double predict_score(const LinearModel& m, std::string_view text) {
    if (m.n_labels() != 2) throw NotBinary("predict_score needs a two-label model");
    const size_t pos = m.positive_index >= 0 ? static_cast<size_t>(m.positive_index) : 0;
    return m.probs(text)[pos];
}

namespace detail {

struct BinaryWriter {
    std::ofstream out;
    uint64_t checksum = kFnvOffset;

    explicit BinaryWriter(const std::string& path) : out(path, std::ios::binary) {
        if (!out) throw IoError("cannot open " + path + " for writing");
    }
    void raw(const char* p, size_t n) { out.write(p, static_cast<std::streamsize>(n)); }
    void u64(uint64_t v) {
        char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = char((v >> (8 * i)) & 0xFF);
        raw(buf, 8);
        checksum = fnv1a_u64(v, checksum);
    }
    void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
        checksum = fnv1a(s, checksum);
    }
};

struct BinaryReader {
    std::ifstream in;
    uint64_t checksum = kFnvOffset;

    explicit BinaryReader(const std::string& path) : in(path, std::ios::binary) {
        if (!in) throw IoError("cannot open " + path);
    }
    void raw(char* p, size_t n) {
        if (!in.read(p, static_cast<std::streamsize>(n))) throw CorruptModel("truncated file");
    }
    uint64_t u64() {
        char buf[8];
        raw(buf, 8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(buf[i])) << (8 * i);
        checksum = fnv1a_u64(v, checksum);
        return v;
    }
    int64_t i64() { return static_cast<int64_t>(u64()); }
    double f64() {
        uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str() {
        size_t n = u64();
        if (n > (size_t{1} << 32)) throw CorruptModel("absurd string length");
        std::string s(n, '\0');
        raw(s.data(), n);
        checksum = fnv1a(s, checksum);
        return s;
    }
};

}  // namespace detail

// Versioned binary model file, little-endian fixed-width fields with a
// trailing checksum; portable across platforms.
inline void save_model(const LinearModel& m, const std::string& path) {
    detail::BinaryWriter w(path);
    w.raw(LinearModel::kMagic, 8);
    w.u64(m.feature_config.hash_buckets);
    w.u64(m.feature_config.embed_dim);
    w.u64(m.feature_config.ngram_min);
    w.u64(m.feature_config.ngram_max);
    w.i64(m.positive_index);
    w.u64(m.labels.size());
    for (const auto& l : m.labels) w.str(l);
    for (double v : m.embeddings) w.f64(v);
    for (double v : m.output) w.f64(v);
    w.u64(w.checksum);
    if (!w.out) throw IoError("write failed: " + path);
}

inline LinearModel load_model(const std::string& path) {
    detail::BinaryReader r(path);
    char magic[8];
    r.raw(magic, 8);
    if (std::string_view(magic, 8) != std::string_view(LinearModel::kMagic, 8))
        throw VersionMismatch("not a model file (bad magic)");
    LinearModel m;
    m.feature_config.hash_buckets = r.u64();
    m.feature_config.embed_dim = r.u64();
    m.feature_config.ngram_min = r.u64();
    m.feature_config.ngram_max = r.u64();
    m.feature_config.validate();
    m.positive_index = static_cast<int>(r.i64());
    size_t n_labels = r.u64();
    if (n_labels == 0 || n_labels > 1'000'000) throw CorruptModel("bad label count");
    m.labels.reserve(n_labels);
    std::unordered_set<std::string> seen;
    for (size_t i = 0; i < n_labels; ++i) {
        m.labels.push_back(r.str());
        if (!seen.insert(m.labels.back()).second) throw CorruptModel("duplicate label");
    }
    m.embeddings.resize(m.feature_config.hash_buckets * m.feature_config.embed_dim);
    for (double& v : m.embeddings) v = r.f64();
    m.output.resize(n_labels * m.feature_config.embed_dim);
    for (double& v : m.output) v = r.f64();
    uint64_t expected = r.checksum;
    uint64_t stored = r.u64();
    if (stored != expected) throw CorruptModel("checksum mismatch");
    for (double v : m.embeddings)
        if (!std::isfinite(v)) throw CorruptModel("non-finite embedding value");
    for (double v : m.output)
        if (!std::isfinite(v)) throw CorruptModel("non-finite output value");
    return m;
}

}  // namespace mdfg
