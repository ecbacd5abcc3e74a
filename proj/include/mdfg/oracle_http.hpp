#pragma once

#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>

#include "mdfg/jsonl.hpp"
#include "mdfg/toxicity.hpp"
#include "mdfg/util.hpp"

namespace mdfg {

// Single-token verdict prompt used for every oracle request; temperature is
// pinned to 0 so reruns are reproducible given the same endpoint.
inline constexpr const char* kOracleSystemPrompt =
    "You are a content-safety rater for Chinese web text. Reply with exactly one word: "
    "\"toxic\" if the text contains offensive, hateful, sexually explicit, violent, or "
    "otherwise harmful content, or \"benign\" otherwise.";

struct HttpOracleConfig {
    std::string url;    // chat-completions style endpoint
    std::string key;    // bearer token, optional
    std::string model;  // model name passed through in the request
    std::string audit_path;  // JSONL request/response log, optional
    int timeout_ms = 30000;

    static HttpOracleConfig from_env() {
        HttpOracleConfig cfg;
        if (const char* v = std::getenv("MDFG_ORACLE_URL")) cfg.url = v;
        if (const char* v = std::getenv("MDFG_ORACLE_KEY")) cfg.key = v;
        if (const char* v = std::getenv("MDFG_ORACLE_MODEL")) cfg.model = v;
        if (cfg.url.empty())
            throw ConfigError("MDFG_ORACLE_URL is not set");
        return cfg;
    }
};

// Labels candidates through a chat-completions endpoint, one request per
// text. Connection or protocol failures abort the whole batch; a reply that
// is not a recognizable verdict only skips its item.
class HttpOracle : public OracleClient {
public:
    explicit HttpOracle(HttpOracleConfig cfg) : cfg_(std::move(cfg)) {
        parse_url(cfg_.url, host_, port_, path_);
    }

    std::vector<std::optional<bool>> label_batch(const std::vector<std::string>& texts) override {
        httplib::Client client(host_, port_);
        client.set_connection_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
        client.set_read_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
        httplib::Headers headers;
        if (!cfg_.key.empty()) headers.insert({"Authorization", "Bearer " + cfg_.key});

        std::ofstream audit;
        if (!cfg_.audit_path.empty()) audit.open(cfg_.audit_path, std::ios::app);

        std::vector<std::optional<bool>> out;
        out.reserve(texts.size());
        for (const auto& text : texts) {
            json request = {
                {"model", cfg_.model},
                {"temperature", 0},
                {"messages",
                 {{{"role", "system"}, {"content", kOracleSystemPrompt}},
                  {{"role", "user"}, {"content", text}}}},
            };
            auto res = client.Post(path_, headers, request.dump(), "application/json");
            if (!res || res->status != 200)
                throw OracleUnavailable(res ? "oracle returned HTTP status " +
                                                  std::to_string(res->status)
                                            : "oracle connection failed");
            if (audit.is_open())
                audit << json{{"request", request}, {"response", res->body}}.dump() << '\n';
            out.push_back(parse_verdict(res->body));
            if (!out.back())
                std::cerr << "warning: unparseable oracle verdict, item skipped\n";
        }
        return out;
    }

    static std::optional<bool> parse_verdict(const std::string& body) {
        json j = json::parse(body, nullptr, false);
        if (j.is_discarded()) return std::nullopt;
        std::string content;
        try {
            content = j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception&) {
            return std::nullopt;
        }
        std::string word = trim(content);
        std::transform(word.begin(), word.end(), word.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        if (word == "toxic") return true;
        if (word == "benign") return false;
        return std::nullopt;
    }

    static void parse_url(const std::string& url, std::string& host, int& port,
                          std::string& path) {
        std::string rest = url;
        if (rest.rfind("http://", 0) == 0) rest = rest.substr(7);
        else throw ConfigError("oracle URL must start with http://");
        auto slash = rest.find('/');
        path = slash == std::string::npos ? "/" : rest.substr(slash);
        std::string hostport = rest.substr(0, slash);
        auto colon = hostport.find(':');
        port = 80;
        if (colon != std::string::npos) {
            port = std::atoi(hostport.substr(colon + 1).c_str());
            hostport = hostport.substr(0, colon);
        }
        host = hostport;
        if (host.empty() || port <= 0) throw ConfigError("bad oracle URL: " + url);
    }

private:
    HttpOracleConfig cfg_;
    std::string host_;
    int port_ = 80;
    std::string path_;
};

}  // namespace mdfg
