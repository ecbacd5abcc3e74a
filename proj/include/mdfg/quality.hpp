#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "mdfg/classifier.hpp"
#include "mdfg/document.hpp"
#include "mdfg/util.hpp"

namespace mdfg {

// Emitted quality scores live strictly inside (0,1); saturated raw outputs
// are clamped to this margin.
inline constexpr double kScoreClamp = 1e-6;

struct LossWeights {
    double w_mse = 1.0;
    double w_mr = 1.0;
    double w_cs = 1.0;
    double margin = 0.1;

    void validate() const {
        if (w_mse < 0 || w_mr < 0 || w_cs < 0) throw ConfigError("loss weights must be >= 0");
        if (w_mse == 0 && w_mr == 0 && w_cs == 0) throw ConfigError("at least one loss weight > 0");
        if (!(margin > 0)) throw ConfigError("margin must be > 0");
    }
};

using ScorePair = std::pair<size_t, size_t>;  // (positive index, negative index)

// Three-term training loss over a batch of scores s and binary labels y:
//   w_mse * mean((s-y)^2)
// + w_mr  * mean over pairs of max(0, margin - (s_pos - s_neg))
// + w_cs  * (1 - cos(s, y)), 0 when either vector is all-zero.
inline double combined_loss(const std::vector<double>& scores, const std::vector<double>& labels,
                            const std::vector<ScorePair>& pairs, const LossWeights& w) {
    w.validate();
    if (scores.size() != labels.size()) throw LengthMismatch("scores/labels size mismatch");
    const size_t n = scores.size();
    double loss = 0.0;
    if (w.w_mse > 0 && n > 0) {
        double mse = 0.0;
        for (size_t i = 0; i < n; ++i) mse += (scores[i] - labels[i]) * (scores[i] - labels[i]);
        loss += w.w_mse * mse / static_cast<double>(n);
    }
    if (w.w_mr > 0 && !pairs.empty()) {
        double mr = 0.0;
        for (const auto& [p, q] : pairs) mr += std::max(0.0, w.margin - (scores[p] - scores[q]));
        loss += w.w_mr * mr / static_cast<double>(pairs.size());
    }
    if (w.w_cs > 0 && n > 0) {
        double dot = 0.0, ns = 0.0, ny = 0.0;
        for (size_t i = 0; i < n; ++i) {
            dot += scores[i] * labels[i];
            ns += scores[i] * scores[i];
            ny += labels[i] * labels[i];
        }
        if (ns > 0.0 && ny > 0.0) loss += w.w_cs * (1.0 - dot / (std::sqrt(ns) * std::sqrt(ny)));
    }
    return loss;
}

// Loss plus dL/ds_i for every batch element.
inline double combined_loss_grad(const std::vector<double>& scores,
                                 const std::vector<double>& labels,
                                 const std::vector<ScorePair>& pairs, const LossWeights& w,
                                 std::vector<double>& grad) {
    w.validate();
    if (scores.size() != labels.size()) throw LengthMismatch("scores/labels size mismatch");
    const size_t n = scores.size();
    grad.assign(n, 0.0);
    double loss = 0.0;
    if (w.w_mse > 0 && n > 0) {
        double mse = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double d = scores[i] - labels[i];
            mse += d * d;
            grad[i] += w.w_mse * 2.0 * d / static_cast<double>(n);
        }
        loss += w.w_mse * mse / static_cast<double>(n);
    }
    if (w.w_mr > 0 && !pairs.empty()) {
        double mr = 0.0;
        const double scale = w.w_mr / static_cast<double>(pairs.size());
        for (const auto& [p, q] : pairs) {
            const double hinge = w.margin - (scores[p] - scores[q]);
            if (hinge > 0) {
                mr += hinge;
                grad[p] -= scale;
                grad[q] += scale;
            }
        }
        loss += w.w_mr * mr / static_cast<double>(pairs.size());
    }
    if (w.w_cs > 0 && n > 0) {
        double dot = 0.0, ns = 0.0, ny = 0.0;
        for (size_t i = 0; i < n; ++i) {
            dot += scores[i] * labels[i];
            ns += scores[i] * scores[i];
            ny += labels[i] * labels[i];
        }
        if (ns > 0.0 && ny > 0.0) {
            const double s_norm = std::sqrt(ns), y_norm = std::sqrt(ny);
            loss += w.w_cs * (1.0 - dot / (s_norm * y_norm));
            for (size_t i = 0; i < n; ++i) {
                const double dcos = labels[i] / (s_norm * y_norm) -
                                    dot * scores[i] / (ns * s_norm * y_norm);
                grad[i] += -w.w_cs * dcos;
            }
        }
    }
    return loss;
}

struct QualityTrainSet {
    std::vector<std::string> positives;
    std::vector<std::string> negatives;
};

// Positives: union of the curated corpora. Negatives: seeded sample of the
// raw pool sized to match, giving the 1:1 class balance.
inline QualityTrainSet build_quality_training_set(
    const std::vector<std::vector<std::string>>& positive_sources,
    const std::vector<std::string>& negative_pool, uint64_t seed) {
    QualityTrainSet set;
    for (const auto& src : positive_sources) {
        if (src.empty()) throw EmptySource("empty positive source");
        set.positives.insert(set.positives.end(), src.begin(), src.end());
    }
    if (set.positives.empty()) throw EmptySource("no positive sources");
    if (negative_pool.empty()) throw EmptySource("empty negative pool");
    if (negative_pool.size() < set.positives.size())
        throw InsufficientNegatives("negative pool smaller than positive set");

    std::vector<size_t> idx(negative_pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    // Partial Fisher-Yates: the first |positives| slots are the sample.
    for (size_t i = 0; i < set.positives.size(); ++i) {
        size_t j = i + static_cast<size_t>(rng.below(idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(set.positives.size());
    std::sort(idx.begin(), idx.end());  // pool order, deterministic
    set.negatives.reserve(idx.size());
    for (size_t i : idx) set.negatives.push_back(negative_pool[i]);
    return set;
}

struct QualityTrainParams {
    size_t epochs = 5;
    double lr = 0.1;
    uint64_t seed = 42;
    size_t batch_size = 32;
    LossWeights weights;

    void validate() const {
        if (epochs < 1 || batch_size < 1) throw ConfigError("epochs and batch_size must be >= 1");
        if (!(lr > 0)) throw ConfigError("lr must be > 0");
        weights.validate();
    }
};

namespace detail {

// Batch gradient of the combined loss through the two-label model:
// s_i = sigmoid(z_pos - z_neg). Returns the batch loss; accumulates dense
// output-matrix gradients and per-bucket embedding gradients.
inline double quality_batch_grad(const LinearModel& m, const std::vector<const FeatureVec*>& batch,
                                 const std::vector<double>& y, const std::vector<ScorePair>& pairs,
                                 const LossWeights& w, std::vector<double>& grad_output,
                                 std::unordered_map<uint32_t, std::vector<double>>& grad_embed) {
    const size_t dim = m.dim();
    const size_t pos = m.positive_index >= 0 ? static_cast<size_t>(m.positive_index) : 0;
    const size_t neg = 1 - pos;
    const size_t n = batch.size();

    std::vector<std::vector<double>> hidden(n);
    std::vector<double> s(n);
    for (size_t i = 0; i < n; ++i) {
        hidden[i] = m.hidden(*batch[i]);
        const std::vector<double> z = m.scores(hidden[i]);
        s[i] = 1.0 / (1.0 + std::exp(-(z[pos] - z[neg])));
    }

    std::vector<double> gs;
    const double loss = combined_loss_grad(s, y, pairs, w, gs);

    grad_output.assign(m.output.size(), 0.0);
    for (size_t i = 0; i < n; ++i) {
        const double gu = gs[i] * s[i] * (1.0 - s[i]);  // d loss / d (z_pos - z_neg)
        if (gu == 0.0) continue;
        for (size_t d = 0; d < dim; ++d) {
            grad_output[pos * dim + d] += gu * hidden[i][d];
            grad_output[neg * dim + d] -= gu * hidden[i][d];
        }
        const FeatureVec& fv = *batch[i];
        if (fv.total <= 0.0) continue;
        for (const auto& [bucket, count] : fv.items) {
            auto& g = grad_embed[bucket];
            if (g.empty()) g.assign(dim, 0.0);
            const double scale = gu * count / fv.total;
            for (size_t d = 0; d < dim; ++d)
                g[d] += scale * (m.output[pos * dim + d] - m.output[neg * dim + d]);
        }
    }
    return loss;
}

inline LinearModel init_binary_model(const FeatureConfig& cfg, uint64_t seed) {
    LinearModel m;
    m.feature_config = cfg;
    m.labels = {"neg", "pos"};
    m.positive_index = 1;
    Rng rng(seed);
    const double bound = 1.0 / static_cast<double>(cfg.embed_dim);
    m.embeddings.resize(cfg.hash_buckets * cfg.embed_dim);
    for (double& v : m.embeddings) v = rng.uniform(-bound, bound);
    m.output.assign(2 * cfg.embed_dim, 0.0);
    return m;
}

// Mini-batch SGD on the combined loss. Ranking pairs are formed per batch
// by zipping its shuffled positives with its shuffled negatives.
inline std::vector<double> fit_combined(LinearModel& m, const std::vector<std::string>& texts,
                                        const std::vector<double>& labels,
                                        const QualityTrainParams& params) {
    params.validate();
    if (texts.empty()) throw EmptyCorpus("no quality training texts");
    if (texts.size() != labels.size()) throw LengthMismatch("texts/labels size mismatch");

    std::vector<FeatureVec> feats(texts.size());
    for (size_t i = 0; i < texts.size(); ++i) feats[i] = featurize(texts[i], m.feature_config);

    Rng rng(params.seed);
    std::vector<size_t> order(texts.size());
    std::iota(order.begin(), order.end(), 0);
    const size_t batches_per_epoch = (texts.size() + params.batch_size - 1) / params.batch_size;
    const double total_steps = static_cast<double>(params.epochs * batches_per_epoch);
    size_t step = 0;
    std::vector<double> epoch_loss;

    std::vector<double> grad_output;
    std::unordered_map<uint32_t, std::vector<double>> grad_embed;
    for (size_t epoch = 0; epoch < params.epochs; ++epoch) {
        fisher_yates_shuffle(order, rng);
        double loss_sum = 0.0;
        for (size_t b = 0; b < order.size(); b += params.batch_size) {
            const size_t end = std::min(order.size(), b + params.batch_size);
            std::vector<const FeatureVec*> batch;
            std::vector<double> y;
            std::vector<size_t> pos_slots, neg_slots;
            for (size_t i = b; i < end; ++i) {
                batch.push_back(&feats[order[i]]);
                y.push_back(labels[order[i]]);
                (labels[order[i]] > 0.5 ? pos_slots : neg_slots).push_back(batch.size() - 1);
            }
            fisher_yates_shuffle(pos_slots, rng);
            fisher_yates_shuffle(neg_slots, rng);
            std::vector<ScorePair> pairs;
            for (size_t i = 0; i < std::min(pos_slots.size(), neg_slots.size()); ++i)
                pairs.push_back({pos_slots[i], neg_slots[i]});

            grad_embed.clear();
            loss_sum += quality_batch_grad(m, batch, y, pairs, params.weights, grad_output,
                                           grad_embed);
            const double lr = params.lr * (1.0 - static_cast<double>(step) / total_steps);
            for (size_t i = 0; i < grad_output.size(); ++i) m.output[i] -= lr * grad_output[i];
            const size_t dim = m.dim();
            for (const auto& [bucket, g] : grad_embed) {
                double* row = &m.embeddings[size_t(bucket) * dim];
                for (size_t d = 0; d < dim; ++d) row[d] -= lr * g[d];
            }
            ++step;
        }
        epoch_loss.push_back(loss_sum / static_cast<double>(batches_per_epoch));
    }
    return epoch_loss;
}

}  // namespace detail

// Scorer contract: score(text) in the open interval (0,1), deterministic
// for fixed model state.
class QualityScorer {
public:
    virtual ~QualityScorer() = default;
    virtual double score(std::string_view text) const = 0;
};

inline double clamp_score(double s) {
    return std::min(1.0 - kScoreClamp, std::max(kScoreClamp, s));
}

class BuiltinScorer : public QualityScorer {
public:
    BuiltinScorer() = default;
    explicit BuiltinScorer(LinearModel model) : model_(std::move(model)) {}

    double score(std::string_view text) const override {
        return clamp_score(predict_score(model_, text));
    }

    LinearModel& model() { return model_; }
    const LinearModel& model() const { return model_; }

private:
    LinearModel model_;
};

inline BuiltinScorer pretrain_quality(const QualityTrainSet& set, const QualityTrainParams& params,
                                      const FeatureConfig& cfg,
                                      std::vector<double>* epoch_loss = nullptr) {
    if (set.positives.empty() || set.negatives.empty())
        throw EmptyCorpus("quality training set needs both classes");
    const size_t diff = set.positives.size() > set.negatives.size()
                            ? set.positives.size() - set.negatives.size()
                            : set.negatives.size() - set.positives.size();
    if (diff > 1) throw ConfigError("quality training set must be balanced 1:1");

    LinearModel m = detail::init_binary_model(cfg, params.seed);
    std::vector<std::string> texts;
    std::vector<double> labels;
    texts.reserve(set.positives.size() + set.negatives.size());
    for (const auto& t : set.positives) { texts.push_back(t); labels.push_back(1.0); }
    for (const auto& t : set.negatives) { texts.push_back(t); labels.push_back(0.0); }
    std::vector<double> losses = detail::fit_combined(m, texts, labels, params);
    if (epoch_loss) *epoch_loss = std::move(losses);
    return BuiltinScorer(std::move(m));
}

struct SelfTrainState {
    size_t round = 0;
    LinearModel model;
    std::vector<std::string> positives;       // curated, never pseudo-labeled
    std::vector<std::string> pool;            // unlabeled raw-web pool
    std::vector<size_t> sample_indices;       // current sampled subset
    std::vector<int> pseudo_labels;           // parallel to sample_indices
    uint64_t seed = 42;
};

inline constexpr double kPseudoLabelThreshold = 0.5;

// One self-training round: draw a fresh sample from the pool (seeded by
// round), pseudo-label it with the current model, then continue training on
// the curated positives plus the pseudo-labeled sample.
inline SelfTrainState self_train_round(SelfTrainState state, size_t sample_size,
                                       QualityTrainParams params) {
    if (state.pool.empty()) throw EmptyPool("self-training pool is empty");
    if (sample_size < 1) throw ConfigError("sample_size must be >= 1");
    sample_size = std::min(sample_size, state.pool.size());

    Rng rng(state.seed + 0x9E3779B97F4A7C15ULL * (state.round + 1));
    std::vector<size_t> idx(state.pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (size_t i = 0; i < sample_size; ++i) {
        size_t j = i + static_cast<size_t>(rng.below(idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(sample_size);
    std::sort(idx.begin(), idx.end());

    state.sample_indices = idx;
    state.pseudo_labels.clear();
    std::vector<std::string> texts;
    std::vector<double> labels;
    for (const auto& t : state.positives) { texts.push_back(t); labels.push_back(1.0); }
    for (size_t i : idx) {
        const double s = predict_score(state.model, state.pool[i]);
        const int y = s >= kPseudoLabelThreshold ? 1 : 0;
        state.pseudo_labels.push_back(y);
        texts.push_back(state.pool[i]);
        labels.push_back(static_cast<double>(y));
    }
    params.seed = state.seed + 0xD1B54A32D192ED03ULL * (state.round + 1);
    detail::fit_combined(state.model, texts, labels, params);
    state.round += 1;
    return state;
}

inline double score_quality(const QualityScorer& scorer, const Document& doc) {
    return clamp_score(scorer.score(doc.text));
}

}  // namespace mdfg
