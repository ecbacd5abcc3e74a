#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "mdfg/domain.hpp"
#include "oracles.hpp"

using namespace mdfg;
namespace fs = std::filesystem;

namespace {

KeywordRuleSet three_domain_rules() {
    KeywordRuleSet rules;
    rules.keywords[DomainLabel::law] = {"法院", "判决", "律师"};
    rules.keywords[DomainLabel::finance] = {"银行", "股票", "投资"};
    rules.keywords[DomainLabel::news] = {"记者", "报道", "新闻"};
    return rules;
}

// Texts carry all three seed keywords of their domain, one planted word the
// seed lists do not know, and filler from a disjoint character block.
struct PlantedFixture {
    std::vector<std::string> pool;
    std::vector<std::string> held_texts;
    std::vector<DomainLabel> held_labels;
    std::map<DomainLabel, std::string> planted = {
        {DomainLabel::law, "诉讼"},
        {DomainLabel::finance, "基金"},
        {DomainLabel::news, "采访"},
    };
};

PlantedFixture make_planted(uint64_t seed, size_t per_domain = 50) {
    PlantedFixture f;
    Rng rng(seed);
    const std::map<DomainLabel, std::vector<std::string>> seeds = {
        {DomainLabel::law, {"法院", "判决", "律师"}},
        {DomainLabel::finance, {"银行", "股票", "投资"}},
        {DomainLabel::news, {"记者", "报道", "新闻"}},
    };
    auto make_text = [&](DomainLabel d) {
        std::string t;
        for (const auto& w : seeds.at(d)) t += w + " ";
        t += f.planted.at(d) + " ";
        t += oracles::cjk_text(rng, 0x8100, 400, 20 + rng.below(20));
        return t;
    };
    for (const auto& [d, words] : seeds) {
        for (size_t i = 0; i < per_domain; ++i) f.pool.push_back(make_text(d));
        for (size_t i = 0; i < 15; ++i) {
            f.held_texts.push_back(make_text(d));
            f.held_labels.push_back(d);
        }
    }
    return f;
}

double single_accuracy(const LinearModel& m, const std::vector<std::string>& texts,
                       const std::vector<DomainLabel>& labels) {
    size_t correct = 0;
    for (size_t i = 0; i < texts.size(); ++i)
        if (classify_domains(m, texts[i]).first == labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(texts.size());
}

FeatureConfig small_config() {
    FeatureConfig cfg;
    cfg.hash_buckets = 1 << 16;
    cfg.embed_dim = 32;
    return cfg;
}

}  // namespace

TEST_CASE("rule classification thresholds on distinct keywords") {
    KeywordRuleSet rules = three_domain_rules();
    DomainAnnotation a = rule_classify("法院的判决由律师宣读", rules);
    CHECK(a.labels == std::set<DomainLabel>{DomainLabel::law});
    CHECK(a.origin == DomainAnnotation::Origin::rule);

    // One keyword repeated many times is still one distinct match.
    std::string repeated;
    for (int i = 0; i < 10; ++i) repeated += "法院";
    CHECK(rule_classify(repeated, rules).labels == std::set<DomainLabel>{DomainLabel::general});

    DomainAnnotation multi =
        rule_classify("银行的股票投资报告由记者报道成新闻", rules);
    CHECK(multi.labels == std::set<DomainLabel>{DomainLabel::finance, DomainLabel::news});
}

TEST_CASE("occurrence counting mode is available behind a flag") {
    KeywordRuleSet rules = three_domain_rules();
    rules.count_mode = KeywordRuleSet::CountMode::occurrences;
    std::string repeated;
    for (int i = 0; i < 10; ++i) repeated += "法院";
    CHECK(rule_classify(repeated, rules).labels == std::set<DomainLabel>{DomainLabel::law});
}

TEST_CASE("rule classification never returns an empty set") {
    KeywordRuleSet rules = three_domain_rules();
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        auto labels = rule_classify(oracles::cjk_text(rng, 0x4E00, 5000, rng.below(100)), rules).labels;
        CHECK_FALSE(labels.empty());
    }
    CHECK(rule_classify("", rules).labels == std::set<DomainLabel>{DomainLabel::general});
}

TEST_CASE("keyword files round-trip and validate") {
    auto dir = fs::temp_directory_path() / "mdfg_domain_tests";
    fs::create_directories(dir);
    auto path = (dir / "keywords.txt").string();
    {
        std::ofstream out(path);
        out << "# seed list\n[law]\n法院\n判决\n\n[finance]\n银行\n股票\n";
    }
    KeywordRuleSet rules = load_keywords(path);
    CHECK(rules.keywords.at(DomainLabel::law).size() == 2);
    CHECK(rules.keywords.at(DomainLabel::finance).size() == 2);

    auto out_path = (dir / "saved.txt").string();
    save_keywords(rules, out_path);
    KeywordRuleSet reloaded = load_keywords(out_path);
    CHECK(reloaded.keywords == rules.keywords);

    {
        std::ofstream out(path);
        out << "[nonsense]\nword\n";
    }
    CHECK_THROWS_AS(load_keywords(path), ConfigError);
    {
        std::ofstream out(path);
        out << "[general]\nword\n";
    }
    CHECK_THROWS_AS(load_keywords(path), ConfigError);
    {
        std::ofstream out(path);
        out << "word-before-section\n";
    }
    CHECK_THROWS_AS(load_keywords(path), ConfigError);
}

TEST_CASE("bootstrap training covers the full label set") {
    PlantedFixture f = make_planted(11);
    TrainParams params;
    params.lr = 1.0;
    params.epochs = 10;
    LinearModel m = bootstrap_train(f.pool, three_domain_rules(), params, small_config());
    CHECK(m.labels.size() == kNumDomains);
    CHECK(m.labels == domain_label_names());
}

TEST_CASE("bootstrap model agrees with the rules on held-out data") {
    PlantedFixture f = make_planted(13);
    KeywordRuleSet rules = three_domain_rules();
    TrainParams params;
    params.lr = 1.0;
    params.epochs = 15;
    LinearModel m = bootstrap_train(f.pool, rules, params, small_config());

    size_t agree = 0;
    for (size_t i = 0; i < f.held_texts.size(); ++i) {
        auto rule_labels = rule_classify(f.held_texts[i], rules).labels;
        if (rule_labels.count(classify_domains(m, f.held_texts[i]).first)) ++agree;
    }
    CHECK(static_cast<double>(agree) / f.held_texts.size() >= 0.9);
}

TEST_CASE("an all-general corpus trains and predicts general") {
    Rng rng(17);
    std::vector<std::string> corpus;
    for (int i = 0; i < 40; ++i) corpus.push_back(oracles::cjk_text(rng, 0x8100, 400, 30));
    TrainParams params;
    params.lr = 1.0;
    params.epochs = 10;
    LinearModel m = bootstrap_train(corpus, three_domain_rules(), params, small_config());
    for (int i = 0; i < 5; ++i) {
        auto [single, multi] = classify_domains(m, oracles::cjk_text(rng, 0x8100, 400, 30));
        CHECK(single == DomainLabel::general);
    }
}

TEST_CASE("classify_domains multi set is never empty") {
    // Untrained model: uniform probabilities, all below 0.3, so the multi
    // set falls back to the argmax.
    LinearModel m;
    m.feature_config = small_config();
    m.labels = domain_label_names();
    m.embeddings.assign(m.feature_config.hash_buckets * m.feature_config.embed_dim, 0.0);
    m.output.assign(kNumDomains * m.feature_config.embed_dim, 0.0);
    auto [single, multi] = classify_domains(m, "任意文本");
    CHECK(multi == std::set<DomainLabel>{single});
    CHECK(single == DomainLabel::math);  // uniform tie broken by label order
}

TEST_CASE("iterative optimization learns planted keywords") {
    PlantedFixture f = make_planted(19);
    KeywordRuleSet rules = three_domain_rules();
    TrainParams params;
    params.lr = 1.0;
    params.epochs = 15;
    LinearModel m = bootstrap_train(f.pool, rules, params, small_config());
    const double acc_before = single_accuracy(m, f.held_texts, f.held_labels);

    IterationConfig icfg;
    IterationResult r1 = iterate_optimize(m, rules, f.pool, icfg, params);
    CHECK_FALSE(r1.no_op);
    CHECK(r1.confident_count > 0);

    size_t total_before = 0, total_after = 0;
    for (const auto& [d, words] : rules.keywords) total_before += words.size();
    for (const auto& [d, words] : r1.rules.keywords) total_after += words.size();
    CHECK(total_after > total_before);

    // Every planted word is recovered.
    for (const auto& [d, w] : f.planted) CHECK(r1.rules.has_keyword(d, w));
    // Seed keywords are never removed.
    for (const auto& [d, words] : rules.keywords)
        for (const auto& w : words) CHECK(r1.rules.has_keyword(d, w));

    const double acc_after = single_accuracy(r1.model, f.held_texts, f.held_labels);
    CHECK(acc_after >= acc_before);

    IterationResult r2 = iterate_optimize(r1.model, r1.rules, f.pool, icfg, params);
    const double acc_round2 = single_accuracy(r2.model, f.held_texts, f.held_labels);
    CHECK(acc_round2 >= acc_before);
}

TEST_CASE("a too-high confidence threshold makes the round a no-op") {
    PlantedFixture f = make_planted(23, 20);
    KeywordRuleSet rules = three_domain_rules();
    LinearModel m;
    m.feature_config = small_config();
    m.labels = domain_label_names();
    m.embeddings.assign(m.feature_config.hash_buckets * m.feature_config.embed_dim, 0.0);
    m.output.assign(kNumDomains * m.feature_config.embed_dim, 0.0);
    const uint64_t before = m.fingerprint();

    IterationConfig icfg;
    icfg.confidence_threshold = 1.0;  // uniform probs can never reach this
    IterationResult r = iterate_optimize(m, rules, f.pool, icfg, TrainParams{});
    CHECK(r.no_op);
    CHECK(r.model.fingerprint() == before);
    CHECK(r.rules.keywords == rules.keywords);
}

TEST_CASE("domain evaluation matches the worked micro example") {
    const auto A = DomainLabel::news, B = DomainLabel::finance, C = DomainLabel::law;
    DomainEvalResult r;
    accumulate_eval(r, {A, B}, A, {A});
    accumulate_eval(r, {A}, A, {A, C});
    finalize_eval(r);
    CHECK(r.micro_precision == Catch::Approx(2.0 / 3.0));
    CHECK(r.micro_recall == Catch::Approx(2.0 / 3.0));
    CHECK(r.single_correct == 2);
    CHECK(r.single_precision == 1.0);
    CHECK(r.single_recall == Catch::Approx(2.0 / 3.0));  // three true labels
}

TEST_CASE("domain metrics equal brute-force confusion counting") {
    Rng rng(29);
    for (int trial = 0; trial < 50; ++trial) {
        DomainEvalResult r;
        std::vector<std::set<std::string>> gold_s, pred_s;
        const size_t docs = 1 + rng.below(20);
        size_t correct_single = 0, true_total = 0;
        for (size_t i = 0; i < docs; ++i) {
            std::set<DomainLabel> gold, pred;
            while (gold.empty()) {
                for (size_t d = 0; d < kNumDomains; ++d)
                    if (rng.below(6) == 0) gold.insert(static_cast<DomainLabel>(d));
            }
            while (pred.empty()) {
                for (size_t d = 0; d < kNumDomains; ++d)
                    if (rng.below(6) == 0) pred.insert(static_cast<DomainLabel>(d));
            }
            auto single = static_cast<DomainLabel>(rng.below(kNumDomains));
            accumulate_eval(r, gold, single, pred);

            std::set<std::string> gs, ps;
            for (auto d : gold) gs.insert(std::string(to_string(d)));
            for (auto d : pred) ps.insert(std::string(to_string(d)));
            gold_s.push_back(gs);
            pred_s.push_back(ps);
            if (gold.count(single)) ++correct_single;
            true_total += gold.size();
        }
        finalize_eval(r);
        auto counts = oracles::micro_counts(gold_s, pred_s);
        REQUIRE(r.sum_tp() == counts.tp);
        REQUIRE(r.sum_fp() == counts.fp);
        REQUIRE(r.sum_fn() == counts.fn);
        REQUIRE(r.single_correct == correct_single);
        REQUIRE(r.true_label_total == true_total);
    }
}

TEST_CASE("micro precision and recall equal accuracy in the single-label case") {
    Rng rng(31);
    DomainEvalResult r;
    size_t correct = 0;
    const size_t docs = 200;
    for (size_t i = 0; i < docs; ++i) {
        auto gold = static_cast<DomainLabel>(rng.below(kNumDomains));
        auto pred = static_cast<DomainLabel>(rng.below(kNumDomains));
        accumulate_eval(r, {gold}, pred, {pred});
        if (gold == pred) ++correct;
    }
    finalize_eval(r);
    const double acc = static_cast<double>(correct) / docs;
    CHECK(r.micro_precision == Catch::Approx(acc));
    CHECK(r.micro_recall == Catch::Approx(acc));
    CHECK(r.single_precision == Catch::Approx(acc));
}

TEST_CASE("eval_domain rejects an empty test set") {
    LinearModel m;
    CHECK_THROWS_AS(eval_domain(m, {}), EmptyTestSet);
}
