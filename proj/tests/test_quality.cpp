#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "mdfg/external_scorer.hpp"
#include "mdfg/quality.hpp"
#include "oracles.hpp"

using namespace mdfg;
namespace fs = std::filesystem;

namespace {

FeatureConfig small_config() {
    FeatureConfig cfg;
    cfg.hash_buckets = 1 << 16;
    cfg.embed_dim = 32;
    return cfg;
}

// Prose-like positives from one vocabulary, noise negatives from another.
struct QualityFixture {
    std::vector<std::string> positives;
    std::vector<std::string> negatives;
    std::vector<std::string> held_pos;
    std::vector<std::string> held_neg;
};

QualityFixture make_fixture(uint64_t seed, size_t n = 150) {
    Rng rng(seed);
    QualityFixture f;
    for (size_t i = 0; i < n; ++i) {
        f.positives.push_back(oracles::cjk_text(rng, 0x4E00, 200, 40 + rng.below(40)));
        f.negatives.push_back(oracles::cjk_text(rng, 0x7000, 200, 40 + rng.below(40)));
    }
    for (size_t i = 0; i < 40; ++i) {
        f.held_pos.push_back(oracles::cjk_text(rng, 0x4E00, 200, 40 + rng.below(40)));
        f.held_neg.push_back(oracles::cjk_text(rng, 0x7000, 200, 40 + rng.below(40)));
    }
    return f;
}

double mean_score(const QualityScorer& s, const std::vector<std::string>& texts) {
    double sum = 0.0;
    for (const auto& t : texts) sum += s.score(t);
    return sum / static_cast<double>(texts.size());
}

double auc(const QualityScorer& s, const std::vector<std::string>& pos,
           const std::vector<std::string>& neg) {
    double wins = 0.0;
    for (const auto& p : pos)
        for (const auto& n : neg) {
            const double sp = s.score(p), sn = s.score(n);
            if (sp > sn) wins += 1.0;
            else if (sp == sn) wins += 0.5;
        }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

}  // namespace

TEST_CASE("combined loss is zero at a perfect fit") {
    LossWeights w;
    std::vector<double> s = {1.0, 0.0, 1.0};
    std::vector<double> y = {1.0, 0.0, 1.0};
    std::vector<ScorePair> pairs = {{0, 1}};  // 1.0 - 0.0 beats the margin
    CHECK(combined_loss(s, y, pairs, w) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("margin term vanishes for well-separated pairs") {
    LossWeights w;
    w.w_mse = 0.0;
    w.w_cs = 0.0;
    std::vector<double> s = {0.9, 0.1};
    std::vector<double> y = {1.0, 0.0};
    CHECK(combined_loss(s, y, {{0, 1}}, w) == 0.0);
}

TEST_CASE("combined loss matches the hand-computed value") {
    LossWeights w;  // unit weights, margin 0.1
    std::vector<double> s = {0.5, 0.5};
    std::vector<double> y = {1.0, 0.0};
    const double loss = combined_loss(s, y, {{0, 1}}, w);
    CHECK(loss == Catch::Approx(0.6429).margin(1e-4));
}

TEST_CASE("combined loss validates its inputs") {
    LossWeights w;
    CHECK_THROWS_AS(combined_loss({0.5}, {1.0, 0.0}, {}, w), LengthMismatch);
    LossWeights zero;
    zero.w_mse = zero.w_mr = zero.w_cs = 0.0;
    CHECK_THROWS_AS(combined_loss({0.5}, {1.0}, {}, zero), ConfigError);
}

TEST_CASE("cosine term is defined as zero for all-zero labels") {
    LossWeights w;
    w.w_mse = 0.0;
    w.w_mr = 0.0;
    std::vector<double> s = {0.5, 0.5};
    std::vector<double> y = {0.0, 0.0};
    CHECK(combined_loss(s, y, {}, w) == 0.0);
}

TEST_CASE("score-space gradient of the combined loss matches finite differences") {
    LossWeights w;
    std::vector<double> s = {0.62, 0.17, 0.88, 0.33};
    std::vector<double> y = {1.0, 0.0, 1.0, 0.0};
    std::vector<ScorePair> pairs = {{0, 1}, {2, 3}};
    std::vector<double> grad;
    combined_loss_grad(s, y, pairs, w, grad);
    for (size_t i = 0; i < s.size(); ++i) {
        double fd = oracles::central_diff(&s[i], 1e-6,
                                          [&]() { return combined_loss(s, y, pairs, w); });
        CHECK(oracles::rel_err(fd, grad[i]) < 1e-4);
    }
}

TEST_CASE("model-space gradient of the combined loss matches finite differences") {
    FeatureConfig cfg{1, 2, 16, 3};
    LinearModel m = detail::init_binary_model(cfg, 99);
    Rng rng(101);
    for (double& v : m.output) v = rng.uniform(-0.3, 0.3);

    std::vector<std::string> texts = {"甲乙丙丁", "戊己庚", "辛壬癸子", "丑寅卯"};
    std::vector<double> y = {1.0, 0.0, 1.0, 0.0};
    std::vector<FeatureVec> feats;
    std::vector<const FeatureVec*> batch;
    for (const auto& t : texts) feats.push_back(featurize(t, cfg));
    for (const auto& f : feats) batch.push_back(&f);
    std::vector<ScorePair> pairs = {{0, 1}, {2, 3}};
    LossWeights w;

    std::vector<double> grad_out;
    std::unordered_map<uint32_t, std::vector<double>> grad_emb;
    detail::quality_batch_grad(m, batch, y, pairs, w, grad_out, grad_emb);

    auto loss_fn = [&]() {
        std::vector<double> go;
        std::unordered_map<uint32_t, std::vector<double>> ge;
        return detail::quality_batch_grad(m, batch, y, pairs, w, go, ge);
    };
    double max_err = 0.0;
    for (size_t i = 0; i < m.output.size(); ++i) {
        double fd = oracles::central_diff(&m.output[i], 1e-5, loss_fn);
        max_err = std::max(max_err, oracles::rel_err(fd, grad_out[i]));
    }
    for (const auto& [bucket, g] : grad_emb) {
        double* row = &m.embeddings[size_t(bucket) * cfg.embed_dim];
        for (size_t d = 0; d < cfg.embed_dim; ++d) {
            double fd = oracles::central_diff(&row[d], 1e-5, loss_fn);
            max_err = std::max(max_err, oracles::rel_err(fd, g[d]));
        }
    }
    CHECK(max_err < 1e-4);
}

TEST_CASE("training-set assembly enforces the 1:1 ratio") {
    Rng rng(5);
    std::vector<std::string> wiki, books, pool;
    for (int i = 0; i < 60; ++i) wiki.push_back(oracles::cjk_text(rng, 0x4E00, 100, 30));
    for (int i = 0; i < 40; ++i) books.push_back(oracles::cjk_text(rng, 0x5000, 100, 30));
    for (int i = 0; i < 500; ++i) pool.push_back(oracles::cjk_text(rng, 0x7000, 100, 30));

    QualityTrainSet set = build_quality_training_set({wiki, books}, pool, 42);
    CHECK(set.positives.size() == 100);
    CHECK(set.negatives.size() == 100);

    QualityTrainSet again = build_quality_training_set({wiki, books}, pool, 42);
    CHECK(set.negatives == again.negatives);
    QualityTrainSet other = build_quality_training_set({wiki, books}, pool, 43);
    CHECK(set.negatives != other.negatives);

    CHECK_THROWS_AS(build_quality_training_set({wiki}, std::vector<std::string>(10, "x"), 1),
                    InsufficientNegatives);
    CHECK_THROWS_AS(build_quality_training_set({{}}, pool, 1), EmptySource);
}

TEST_CASE("pretraining separates the quality fixture") {
    QualityFixture f = make_fixture(1234);
    QualityTrainSet set{f.positives, f.negatives};
    QualityTrainParams params;
    params.epochs = 20;
    params.lr = 4.0;
    std::vector<double> losses;
    BuiltinScorer scorer = pretrain_quality(set, params, small_config(), &losses);

    CHECK(losses.back() <= losses.front());
    CHECK(auc(scorer, f.held_pos, f.held_neg) >= 0.95);
    CHECK(mean_score(scorer, f.held_pos) - mean_score(scorer, f.held_neg) >= 0.3);

    for (const auto& t : f.held_pos) {
        const double s = scorer.score(t);
        CHECK(s > 0.0);
        CHECK(s < 1.0);
    }
}

TEST_CASE("degenerate identical-text training stays near one half") {
    std::vector<std::string> same(20, "完全相同的文本内容");
    QualityTrainSet set{same, same};
    QualityTrainParams params;
    params.epochs = 5;
    params.lr = 4.0;
    BuiltinScorer scorer = pretrain_quality(set, params, small_config());
    const double s = scorer.score("完全相同的文本内容");
    CHECK(s > 0.25);
    CHECK(s < 0.75);
}

TEST_CASE("self-training round advances state deterministically") {
    QualityFixture f = make_fixture(777, 80);
    QualityTrainSet set{f.positives, f.negatives};
    QualityTrainParams params;
    params.epochs = 6;
    params.lr = 2.0;
    BuiltinScorer scorer = pretrain_quality(set, params, small_config());

    SelfTrainState state;
    state.model = scorer.model();
    state.positives = f.positives;
    state.pool = f.negatives;  // raw pool
    state.pool.insert(state.pool.end(), f.held_neg.begin(), f.held_neg.end());
    state.seed = 42;

    const uint64_t before = state.model.fingerprint();
    SelfTrainState s1 = self_train_round(state, 40, params);
    CHECK(s1.round == 1);
    CHECK(s1.model.fingerprint() != before);
    CHECK(s1.sample_indices.size() == 40);
    CHECK(s1.pseudo_labels.size() == 40);

    // Same input state reproduces the same sample and labels.
    SelfTrainState s1b = self_train_round(state, 40, params);
    CHECK(s1b.sample_indices == s1.sample_indices);
    CHECK(s1b.pseudo_labels == s1.pseudo_labels);

    CHECK_THROWS_AS(self_train_round(SelfTrainState{}, 10, params), EmptyPool);
}

TEST_CASE("a pool of high-scoring texts gets all-positive pseudo-labels") {
    QualityFixture f = make_fixture(888, 100);
    QualityTrainSet set{f.positives, f.negatives};
    QualityTrainParams params;
    params.epochs = 20;
    params.lr = 4.0;
    BuiltinScorer scorer = pretrain_quality(set, params, small_config());

    SelfTrainState state;
    state.model = scorer.model();
    state.positives = f.positives;
    state.pool = f.held_pos;  // positive-vocabulary texts only
    state.seed = 7;
    SelfTrainState next = self_train_round(state, 20, params);
    for (int y : next.pseudo_labels) CHECK(y == 1);
}

TEST_CASE("two self-training rounds keep the separation") {
    QualityFixture f = make_fixture(999);
    QualityTrainSet set{f.positives, f.negatives};
    QualityTrainParams params;
    params.epochs = 20;
    params.lr = 4.0;
    BuiltinScorer scorer = pretrain_quality(set, params, small_config());
    const double base = mean_score(scorer, f.held_pos) - mean_score(scorer, f.held_neg);

    SelfTrainState state;
    state.model = scorer.model();
    state.positives = f.positives;
    state.pool = f.negatives;
    state.pool.insert(state.pool.end(), f.held_neg.begin(), f.held_neg.end());
    state.seed = 11;
    state = self_train_round(state, 60, params);
    state = self_train_round(state, 60, params);
    CHECK(state.round == 2);

    BuiltinScorer after{state.model};
    const double sep = mean_score(after, f.held_pos) - mean_score(after, f.held_neg);
    CHECK(sep >= base - 0.05);
    for (const auto& t : f.held_pos) {
        const double s = after.score(t);
        CHECK(s > 0.0);
        CHECK(s < 1.0);
    }
}

TEST_CASE("score_quality clamps into the open interval and handles empty text") {
    QualityFixture f = make_fixture(1010, 60);
    QualityTrainSet set{f.positives, f.negatives};
    QualityTrainParams params;
    params.epochs = 10;
    params.lr = 4.0;
    BuiltinScorer scorer = pretrain_quality(set, params, small_config());

    Document empty;
    empty.id = "e";
    CHECK(score_quality(scorer, empty) == Catch::Approx(0.5).margin(1e-9));
    Document doc;
    doc.id = "d";
    doc.text = f.held_pos[0];
    const double s = score_quality(scorer, doc);
    CHECK(s >= kScoreClamp);
    CHECK(s <= 1.0 - kScoreClamp);
}

TEST_CASE("pipe scorer speaks the line protocol") {
    auto dir = fs::temp_directory_path() / "mdfg_quality_tests";
    fs::create_directories(dir);
    auto script = (dir / "scorer.py").string();
    {
        std::ofstream out(script);
        out << "import sys, base64\n"
               "for line in sys.stdin:\n"
               "    parts = line.split()\n"
               "    text = base64.b64decode(parts[1]).decode('utf-8')\n"
               "    print('%.6f' % min(0.9, len(text) / 100.0), flush=True)\n";
    }
    PipeScorer scorer("python3 " + script);
    CHECK(scorer.score(std::string(50, 'x')) == Catch::Approx(0.5).margin(1e-6));
    CHECK(scorer.score("早上好") == Catch::Approx(0.03).margin(1e-6));
}

TEST_CASE("pipe scorer failures surface after retries") {
    ExternalScorerConfig cfg;
    cfg.timeout_ms = 300;
    cfg.retries = 2;
    PipeScorer hung("sleep 30", cfg);
    CHECK_THROWS_AS(hung.score("text"), ExternalScorerUnavailable);

    PipeScorer garbage("echo not-a-number && cat > /dev/null", cfg);
    CHECK_THROWS_AS(garbage.score("text"), ExternalScorerUnavailable);
}

TEST_CASE("http scorer round-trips against a local service") {
    httplib::Server server;
    server.Post("/score", [](const httplib::Request& req, httplib::Response& res) {
        REQUIRE(req.body.rfind("SCORE ", 0) == 0);
        res.set_content("0.731000", "text/plain");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpScorer scorer("127.0.0.1", port);
    CHECK(scorer.score("某个文本") == Catch::Approx(0.731).margin(1e-6));

    server.stop();
    worker.join();

    ExternalScorerConfig cfg;
    cfg.timeout_ms = 300;
    cfg.retries = 2;
    HttpScorer dead("127.0.0.1", port, cfg);
    CHECK_THROWS_AS(dead.score("text"), ExternalScorerUnavailable);
}
