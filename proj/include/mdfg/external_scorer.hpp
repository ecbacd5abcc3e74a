#pragma once

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include <httplib.h>

#include "mdfg/quality.hpp"
#include "mdfg/util.hpp"

namespace mdfg {

// Wire protocol shared by both transports: one request line
//   SCORE <base64 text>
// answered by one line containing a decimal score in [0,1].
inline std::string make_score_request(std::string_view text) {
    return "SCORE " + base64_encode(text);
}

inline double parse_score_response(std::string_view body) {
    std::string s = trim(body);
    if (s.empty()) throw ExternalScorerUnavailable("empty scorer response");
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || !(v >= 0.0 && v <= 1.0))
        throw ExternalScorerUnavailable("unparseable scorer response: " + s);
    return v;
}

struct ExternalScorerConfig {
    int timeout_ms = 5000;
    int retries = 3;
};

// Scorer backed by a child process speaking the line protocol on
// stdin/stdout. The child is restarted between retry attempts.
class PipeScorer : public QualityScorer {
public:
    explicit PipeScorer(std::string command, ExternalScorerConfig cfg = {})
        : command_(std::move(command)), cfg_(cfg) {}

    ~PipeScorer() override { stop(); }

    PipeScorer(const PipeScorer&) = delete;
    PipeScorer& operator=(const PipeScorer&) = delete;

    double score(std::string_view text) const override {
        const std::string request = make_score_request(text) + "\n";
        std::string failure;
        for (int attempt = 0; attempt < cfg_.retries; ++attempt) {
            try {
                ensure_running();
                write_all(request);
                return clamp_score(parse_score_response(read_line()));
            } catch (const ExternalScorerUnavailable& e) {
                failure = e.what();
                stop();
            }
        }
        throw ExternalScorerUnavailable("scorer failed after " + std::to_string(cfg_.retries) +
                                        " attempts: " + failure);
    }

private:
    void ensure_running() const {
        if (pid_ > 0) return;
        int to_child[2], from_child[2];
        if (pipe(to_child) != 0 || pipe(from_child) != 0)
            throw ExternalScorerUnavailable("pipe() failed");
        pid_t pid = fork();
        if (pid < 0) throw ExternalScorerUnavailable("fork() failed");
        if (pid == 0) {
            dup2(to_child[0], STDIN_FILENO);
            dup2(from_child[1], STDOUT_FILENO);
            close(to_child[0]); close(to_child[1]);
            close(from_child[0]); close(from_child[1]);
            execl("/bin/sh", "sh", "-c", command_.c_str(), (char*)nullptr);
            _exit(127);
        }
        close(to_child[0]);
        close(from_child[1]);
        pid_ = pid;
        in_fd_ = to_child[1];
        out_fd_ = from_child[0];
    }

    void stop() const {
        if (in_fd_ >= 0) { close(in_fd_); in_fd_ = -1; }
        if (out_fd_ >= 0) { close(out_fd_); out_fd_ = -1; }
        if (pid_ > 0) {
            kill(pid_, SIGTERM);
            int status = 0;
            waitpid(pid_, &status, 0);
            pid_ = -1;
        }
    }

    void write_all(const std::string& data) const {
        size_t off = 0;
        while (off < data.size()) {
            ssize_t n = ::write(in_fd_, data.data() + off, data.size() - off);
            if (n <= 0) {
                if (errno == EINTR) continue;
                throw ExternalScorerUnavailable("scorer pipe write failed");
            }
            off += static_cast<size_t>(n);
        }
    }

    std::string read_line() const {
        std::string line;
        char c;
        for (;;) {
            struct pollfd pfd = {out_fd_, POLLIN, 0};
            int r = poll(&pfd, 1, cfg_.timeout_ms);
            if (r == 0) throw ExternalScorerUnavailable("scorer timed out");
            if (r < 0) {
                if (errno == EINTR) continue;
                throw ExternalScorerUnavailable("scorer poll failed");
            }
            ssize_t n = ::read(out_fd_, &c, 1);
            if (n == 0) throw ExternalScorerUnavailable("scorer closed its pipe");
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ExternalScorerUnavailable("scorer pipe read failed");
            }
            if (c == '\n') return line;
            line += c;
            if (line.size() > 4096) throw ExternalScorerUnavailable("scorer response too long");
        }
    }

    std::string command_;
    ExternalScorerConfig cfg_;
    mutable pid_t pid_ = -1;
    mutable int in_fd_ = -1;
    mutable int out_fd_ = -1;
};

// Scorer backed by HTTP POST /score on a remote service.
class HttpScorer : public QualityScorer {
public:
    HttpScorer(std::string host, int port, ExternalScorerConfig cfg = {})
        : host_(std::move(host)), port_(port), cfg_(cfg) {}

    double score(std::string_view text) const override {
        httplib::Client client(host_, port_);
        client.set_connection_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
        client.set_read_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
        std::string failure = "no attempt made";
        for (int attempt = 0; attempt < cfg_.retries; ++attempt) {
            auto res = client.Post("/score", make_score_request(text), "text/plain");
            if (res && res->status == 200) {
                try {
                    return clamp_score(parse_score_response(res->body));
                } catch (const ExternalScorerUnavailable& e) {
                    failure = e.what();
                    continue;
                }
            }
            failure = res ? "HTTP status " + std::to_string(res->status) : "connection failed";
        }
        throw ExternalScorerUnavailable("scorer failed after " + std::to_string(cfg_.retries) +
                                        " attempts: " + failure);
    }

private:
    std::string host_;
    int port_;
    ExternalScorerConfig cfg_;
};

}  // namespace mdfg
