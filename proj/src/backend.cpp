#include "paragen/backend.hpp"

#include <cerrno>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"
#include "paragen/errors.hpp"
#include "paragen/text.hpp"

namespace paragen::backend {

namespace {

using clock = std::chrono::steady_clock;

// Writing to a child that already exited must surface as BackendError, not
// kill the whole process with SIGPIPE.
void ignore_sigpipe_once() {
    static const bool done = [] {
        std::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)done;
}

std::string describe_exit(int status) {
    if (WIFEXITED(status))
        return "exited with status " + std::to_string(WEXITSTATUS(status));
    if (WIFSIGNALED(status))
        return "killed by signal " + std::to_string(WTERMSIG(status));
    return "ended abnormally";
}

}  // namespace

void BackendConfig::validate() const {
    if (command.empty()) throw InputError("backend: empty command");
    if (!std::isfinite(timeout_seconds) || timeout_seconds <= 0)
        throw InputError("backend: timeout must be positive");
}

BackendProcess::BackendProcess(BackendConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    ignore_sigpipe_once();

    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0) throw BackendError("backend: pipe failed");
    if (pipe(from_child) != 0) {
        close(to_child[0]);
        close(to_child[1]);
        throw BackendError("backend: pipe failed");
    }

    const int pid = fork();
    if (pid < 0) {
        for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]})
            close(fd);
        throw BackendError("backend: fork failed");
    }
    if (pid == 0) {
        // Own process group so shutdown() can kill the shell and anything it
        // spawned in one signal.
        setpgid(0, 0);
        dup2(to_child[0], STDIN_FILENO);
        dup2(from_child[1], STDOUT_FILENO);
        for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]})
            close(fd);
        execl("/bin/sh", "sh", "-c", cfg_.command.c_str(), (char*)nullptr);
        _exit(127);
    }

    pid_ = pid;
    close(to_child[0]);
    close(from_child[1]);
    in_fd_ = to_child[1];
    out_fd_ = from_child[0];
}

BackendProcess::~BackendProcess() { shutdown(); }

void BackendProcess::shutdown() {
    if (in_fd_ >= 0) {
        close(in_fd_);
        in_fd_ = -1;
    }
    if (out_fd_ >= 0) {
        close(out_fd_);
        out_fd_ = -1;
    }
    if (pid_ > 0) {
        kill(-pid_, SIGTERM);
        int status = 0;
        // Give the group a moment to exit cleanly, then force it.
        for (int i = 0; i < 50; ++i) {
            if (waitpid(pid_, &status, WNOHANG) == pid_) {
                pid_ = -1;
                return;
            }
            usleep(10 * 1000);
        }
        kill(-pid_, SIGKILL);
        waitpid(pid_, &status, 0);
        pid_ = -1;
    }
}

std::string BackendProcess::round_trip(const std::string& line) {
    if (pid_ <= 0 || in_fd_ < 0) throw BackendError("backend: process not running");

    std::string payload = line;
    payload.push_back('\n');
    std::size_t written = 0;
    while (written < payload.size()) {
        const ssize_t n = write(in_fd_, payload.data() + written,
                                payload.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            int status = 0;
            if (waitpid(pid_, &status, WNOHANG) == pid_) {
                pid_ = -1;
                throw BackendError("backend " + describe_exit(status) +
                                   " before accepting a request");
            }
            throw BackendError(std::string("backend: write failed: ") +
                               std::strerror(errno));
        }
        written += static_cast<std::size_t>(n);
    }

    const auto deadline =
        clock::now() + std::chrono::duration_cast<clock::duration>(
                           std::chrono::duration<double>(cfg_.timeout_seconds));
    for (;;) {
        const std::size_t eol = buffer_.find('\n');
        if (eol != std::string::npos) {
            std::string reply = buffer_.substr(0, eol);
            buffer_.erase(0, eol + 1);
            ++lines_read_;
            return reply;
        }

        const auto remaining = deadline - clock::now();
        if (remaining <= clock::duration::zero())
            throw BackendError("backend: no response within " +
                               std::to_string(cfg_.timeout_seconds) + " s");
        const int remaining_ms = static_cast<int>(
            std::chrono::duration_cast<std::chrono::milliseconds>(remaining).count());

        pollfd pfd{};
        pfd.fd = out_fd_;
        pfd.events = POLLIN;
        const int rc = poll(&pfd, 1, std::max(1, remaining_ms));
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw BackendError(std::string("backend: poll failed: ") +
                               std::strerror(errno));
        }
        if (rc == 0)
            throw BackendError("backend: no response within " +
                               std::to_string(cfg_.timeout_seconds) + " s");

        char chunk[4096];
        const ssize_t n = read(out_fd_, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw BackendError(std::string("backend: read failed: ") +
                               std::strerror(errno));
        }
        if (n == 0) {
            int status = 0;
            std::string detail = "closed its output";
            if (waitpid(pid_, &status, WNOHANG) == pid_) {
                pid_ = -1;
                detail = describe_exit(status);
            }
            throw BackendError("backend " + detail + " before replying");
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

std::vector<std::string> BackendProcess::generate(const std::string& source, int n) {
    if (n < 1) throw InputError("backend generate: n must be >= 1");
    const std::uint64_t id = next_id_++;
    nlohmann::json req;
    req["id"] = id;
    req["source"] = source;
    req["n"] = n;
    const std::string reply = round_trip(req.dump());
    const std::string where = "backend response line " + std::to_string(lines_read_);
    try {
        const nlohmann::json j = nlohmann::json::parse(reply);
        if (j.at("id").get<std::uint64_t>() != id)
            throw ProtocolError(where + ": response id does not match the request");
        std::vector<std::string> out;
        for (const auto& c : j.at("candidates")) out.push_back(c.get<std::string>());
        if (static_cast<int>(out.size()) != n)
            throw ProtocolError(where + ": expected " + std::to_string(n) +
                                " candidates, got " + std::to_string(out.size()));
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(where + ": " + e.what());
    }
}

std::vector<double> BackendProcess::embed(const std::string& text) {
    const std::uint64_t id = next_id_++;
    nlohmann::json req;
    req["id"] = id;
    req["text"] = text;
    const std::string reply = round_trip(req.dump());
    const std::string where = "backend response line " + std::to_string(lines_read_);
    try {
        const nlohmann::json j = nlohmann::json::parse(reply);
        if (j.at("id").get<std::uint64_t>() != id)
            throw ProtocolError(where + ": response id does not match the request");
        std::vector<double> out;
        for (const auto& v : j.at("embedding")) out.push_back(v.get<double>());
        if (out.empty()) throw ProtocolError(where + ": empty embedding");
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(where + ": " + e.what());
    }
}

std::vector<std::string> ExternalGenerator::generate(
    const std::vector<std::string>& source_tokens, int n, Rng&) {
    return process_.generate(text::join(source_tokens), n);
}

ExternalEmbedder::ExternalEmbedder(BackendProcess& process, int expected_dim)
    : process_(process), dim_(expected_dim) {
    if (expected_dim < 0) throw InputError("embedder: negative dimension");
}

int ExternalEmbedder::dimension() const {
    if (dim_ == 0)
        throw BackendError("external embedder: dimension not known before the first embed");
    return dim_;
}

std::vector<double> ExternalEmbedder::embed(const std::vector<std::string>& tokens) {
    if (tokens.empty()) throw InputError("embed: empty token list");
    std::vector<double> e = process_.embed(text::join(tokens));
    if (dim_ == 0) dim_ = static_cast<int>(e.size());
    if (static_cast<int>(e.size()) != dim_)
        throw ProtocolError("external embedder: dimension changed from " +
                            std::to_string(dim_) + " to " +
                            std::to_string(e.size()));
    return e;
}

}  // namespace paragen::backend
