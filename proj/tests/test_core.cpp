#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <zlib.h>

#include "mdfg/document.hpp"
#include "mdfg/jsonl.hpp"
#include "mdfg/prepare.hpp"
#include "oracles.hpp"

using namespace mdfg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto dir = fs::temp_directory_path() / "mdfg_core_tests";
    fs::create_directories(dir);
    return dir;
}

AnnotatedDocument random_annotated(Rng& rng) {
    Document d;
    d.id = to_hex16(rng.next());
    d.source = "src" + std::to_string(rng.below(5));
    std::string text;
    const size_t len = 1 + rng.below(60);
    for (size_t i = 0; i < len; ++i) {
        switch (rng.below(4)) {
            case 0: utf8_append(text, 0x4E00 + static_cast<char32_t>(rng.below(500))); break;
            case 1: text += char('a' + rng.below(26)); break;
            case 2: utf8_append(text, 0x1F600 + static_cast<char32_t>(rng.below(16))); break;
            default: text += rng.below(10) == 0 ? '\n' : ' '; break;
        }
    }
    d.text = text;
    const size_t n_meta = rng.below(3);
    for (size_t i = 0; i < n_meta; ++i)
        d.meta["k" + std::to_string(i)] = "v" + std::to_string(rng.below(100));

    const double quality = 0.001 + 0.998 * rng.uniform01();
    const double toxicity = rng.below(4) == 0 ? 0.99 + 0.01 * rng.uniform01() : rng.uniform01();
    const auto single = static_cast<DomainLabel>(rng.below(kNumDomains));
    std::set<DomainLabel> multi = {static_cast<DomainLabel>(rng.below(kNumDomains))};
    if (rng.below(2) == 0) multi.insert(static_cast<DomainLabel>(rng.below(kNumDomains)));
    return make_annotated(std::move(d), quality, single, multi, std::min(1.0, toxicity));
}

}  // namespace

TEST_CASE("parse_record maps fields directly") {
    Document d = parse_record(R"({"text":"你好世界","source":"wudao"})");
    CHECK(d.text == "你好世界");
    CHECK(d.source == "wudao");
    CHECK_FALSE(d.id.empty());
}

TEST_CASE("parse_record rejects records without text") {
    CHECK_THROWS_AS(parse_record(R"({"source":"x"})"), MalformedRecord);
    CHECK_THROWS_AS(parse_record("not json at all"), MalformedRecord);
    CHECK_THROWS_AS(parse_record(R"(["array"])"), MalformedRecord);
    CHECK_THROWS_AS(parse_record(R"({"text":42})"), MalformedRecord);
}

TEST_CASE("parse_record strips a UTF-8 BOM") {
    std::string line = "\xEF\xBB\xBF" R"({"text":"abc","source":"s"})";
    Document d = parse_record(line);
    CHECK(d.text == "abc");
    Document again = parse_record(write_document(d));
    CHECK(again == d);
}

TEST_CASE("parse_record preserves unknown fields in meta") {
    Document d = parse_record(R"({"text":"t","source":"s","url":"http://e.x","score":3})");
    CHECK(d.meta.at("url") == "http://e.x");
    CHECK(d.meta.at("score") == "3");
    Document rt = parse_record(write_document(d));
    CHECK(rt == d);
}

TEST_CASE("missing ids are derived deterministically from source and offset") {
    Document a = parse_record(R"({"text":"t","source":"s"})", 123);
    Document b = parse_record(R"({"text":"t","source":"s"})", 123);
    Document c = parse_record(R"({"text":"t","source":"s"})", 124);
    CHECK(a.id == b.id);
    CHECK(a.id != c.id);
    CHECK(a.id == derive_id("s", 123));
}

TEST_CASE("annotated round-trip preserves every field") {
    Rng rng(20240811);
    for (int i = 0; i < 1000; ++i) {
        AnnotatedDocument a = random_annotated(rng);
        AnnotatedDocument b = parse_annotated(write_record(a));
        REQUIRE(b == a);
    }
}

TEST_CASE("toxicity label is forced by the 0.99 rule") {
    Rng rng(7);
    AnnotatedDocument a = random_annotated(rng);
    a.toxicity_score = 1.0;
    a.toxic = true;
    validate(a);
    std::string line = write_record(a);
    CHECK(line.find("\"toxicity_label\":\"toxic\"") != std::string::npos);

    a.toxicity_score = 0.99;  // not strictly above the threshold
    a.toxic = false;
    validate(a);
    CHECK(write_record(a).find("\"toxicity_label\":\"benign\"") != std::string::npos);
}

TEST_CASE("invariant violations are construction-time errors") {
    Rng rng(9);
    AnnotatedDocument good = random_annotated(rng);

    AnnotatedDocument bad = good;
    bad.quality_score = 0.0;
    CHECK_THROWS_AS(validate(bad), MalformedRecord);
    bad = good;
    bad.quality_score = 1.0;
    CHECK_THROWS_AS(validate(bad), MalformedRecord);
    bad = good;
    bad.domain_multi.clear();
    CHECK_THROWS_AS(validate(bad), MalformedRecord);
    bad = good;
    bad.toxic = !is_toxic_score(bad.toxicity_score);
    CHECK_THROWS_AS(validate(bad), MalformedRecord);
}

TEST_CASE("single- and multi-label domains are independent") {
    Rng rng(11);
    AnnotatedDocument a = random_annotated(rng);
    a.domain_single = DomainLabel::law;
    a.domain_multi = {DomainLabel::news};
    validate(a);  // single need not belong to multi
    AnnotatedDocument b = parse_annotated(write_record(a));
    CHECK(b.domain_single == DomainLabel::law);
    CHECK(b.domain_multi == std::set<DomainLabel>{DomainLabel::news});
}

TEST_CASE("gzip-compressed input is transparently decoded") {
    auto path = (temp_dir() / "in.jsonl.gz").string();
    gzFile gz = gzopen(path.c_str(), "wb");
    REQUIRE(gz);
    for (int i = 0; i < 5; ++i) {
        std::string line = R"({"text":"доброе утро 早上好","source":"gz"})" "\n";
        gzwrite(gz, line.data(), static_cast<unsigned>(line.size()));
    }
    gzclose(gz);
    auto docs = read_documents(path);
    REQUIRE(docs.size() == 5);
    CHECK(docs[2].source == "gz");
    CHECK(docs[0].id != docs[1].id);  // distinct offsets
}

TEST_CASE("malformed lines are counted and skipped") {
    auto path = (temp_dir() / "bad.jsonl").string();
    {
        std::ofstream out(path);
        out << R"({"text":"ok","source":"s"})" << "\n";
        out << "{broken\n";
        out << R"({"source":"missing text"})" << "\n";
        out << R"({"text":"ok2","source":"s"})" << "\n";
    }
    std::vector<Document> docs;
    size_t skipped = for_each_document(path, [&](Document&& d) { docs.push_back(std::move(d)); });
    CHECK(docs.size() == 2);
    CHECK(skipped == 2);
}

TEST_CASE("reservoir sample returns the whole population when small") {
    auto path = (temp_dir() / "small.jsonl").string();
    {
        std::ofstream out(path);
        for (int i = 0; i < 50; ++i)
            out << R"({"text":"doc )" << i << R"(","source":"s"})" << "\n";
    }
    auto sample = sample_source(path, 200, 1);
    CHECK(sample.size() == 50);
    CHECK(sample.front().text == "doc 0");
    CHECK(sample.back().text == "doc 49");
}

TEST_CASE("sampling is deterministic under a fixed seed") {
    auto path = (temp_dir() / "pop.jsonl").string();
    {
        std::ofstream out(path);
        for (int i = 0; i < 5000; ++i)
            out << R"({"id":"d)" << i << R"(","text":"doc )" << i << R"(","source":"s"})" << "\n";
    }
    auto a = sample_source(path, 300, 7);
    auto b = sample_source(path, 300, 7);
    auto c = sample_source(path, 300, 8);
    REQUIRE(a.size() == 300);
    CHECK(a.size() == b.size());
    bool identical = true;
    for (size_t i = 0; i < a.size(); ++i) identical = identical && a[i].id == b[i].id;
    CHECK(identical);
    bool differs = c.size() != a.size();
    for (size_t i = 0; !differs && i < a.size(); ++i) differs = a[i].id != c[i].id;
    CHECK(differs);
}

TEST_CASE("reservoir sampling is uniform across seeds") {
    auto path = (temp_dir() / "uniform.jsonl").string();
    const size_t population = 50;
    const size_t n = 15;
    {
        std::ofstream out(path);
        for (size_t i = 0; i < population; ++i)
            out << R"({"id":"d)" << i << R"(","text":"doc","source":"s"})" << "\n";
    }
    std::vector<size_t> hits(population, 0);
    const size_t seeds = 1000;
    for (size_t seed = 0; seed < seeds; ++seed) {
        for (const auto& d : sample_source(path, n, seed)) {
            size_t idx = std::stoul(d.id.substr(1));
            ++hits[idx];
        }
    }
    const double expected = static_cast<double>(n) / static_cast<double>(population);
    for (size_t i = 0; i < population; ++i) {
        const double freq = static_cast<double>(hits[i]) / static_cast<double>(seeds);
        INFO("doc " << i << " freq " << freq);
        CHECK(std::abs(freq - expected) < 0.05);
    }
}

TEST_CASE("empty sources are rejected") {
    auto path = (temp_dir() / "empty.jsonl").string();
    std::ofstream(path).close();
    CHECK_THROWS_AS(sample_source(path, 10, 1), EmptySource);
}

TEST_CASE("source vetting applies the strict 30% rule") {
    auto judg = [](size_t total, size_t irrelevant) {
        std::vector<SourceJudgment> v;
        for (size_t i = 0; i < total; ++i) v.push_back({"d" + std::to_string(i), i < irrelevant});
        return v;
    };
    SourceDecision d = vet_source("a", judg(100, 31));
    CHECK(d.exclude);
    CHECK(d.irrelevant_fraction == Catch::Approx(0.31));

    d = vet_source("b", judg(100, 30));
    CHECK_FALSE(d.exclude);  // 0.30 is not strictly above 0.30

    d = vet_source("c", judg(10, 0));
    CHECK_FALSE(d.exclude);
    CHECK(d.irrelevant_fraction == 0.0);
    CHECK(d.sampled == 10);

    CHECK_THROWS_AS(vet_source("d", {}), NoJudgments);
}

TEST_CASE("adding an irrelevant judgment never flips exclude to include") {
    Rng rng(31337);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<SourceJudgment> v;
        const size_t total = 1 + rng.below(50);
        for (size_t i = 0; i < total; ++i)
            v.push_back({"d" + std::to_string(i), rng.below(2) == 0});
        const bool before = vet_source("s", v).exclude;
        v.push_back({"extra", true});
        const bool after = vet_source("s", v).exclude;
        if (before) CHECK(after);
    }
}

TEST_CASE("judgment and decision files round-trip") {
    auto dir = temp_dir();
    auto jpath = (dir / "judgments.jsonl").string();
    {
        std::ofstream out(jpath);
        out << R"({"doc_id":"a","irrelevant":true})" << "\n";
        out << R"({"doc_id":"b","irrelevant":false})" << "\n";
    }
    auto js = read_judgments(jpath);
    REQUIRE(js.size() == 2);
    CHECK(js[0].irrelevant);
    CHECK_FALSE(js[1].irrelevant);

    auto dpath = (dir / "decisions.jsonl").string();
    {
        std::ofstream out(dpath);
        out << decision_to_json(vet_source("s", js)).dump() << "\n";
    }
    auto ds = read_decisions(dpath);
    REQUIRE(ds.size() == 1);
    CHECK(ds[0].source == "s");
    CHECK(ds[0].exclude);  // 1 of 2 irrelevant
}
