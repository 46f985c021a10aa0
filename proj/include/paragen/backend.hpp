#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "paragen/scoring.hpp"

// Client side of the external-backend protocol: line-delimited JSON over a
// child process's standard streams. One request line, one response line, in
// lockstep; every response must echo the request id. The same channel serves
// generation ({"id", "source", "n"} -> {"id", "candidates": [...]}) and
// embedding ({"id", "text"} -> {"id", "embedding": [...]}).
namespace paragen::backend {

struct BackendConfig {
    std::string command;            // launched via /bin/sh -c
    double timeout_seconds = 30.0;  // per round trip

    void validate() const;  // InputError on empty command or bad deadline
};

// Owns the child process. Responses that are not JSON, lack fields, or echo
// a stale id raise ProtocolError naming the response line; a dead child or a
// missed deadline raises BackendError. The destructor terminates the child's
// process group, so a wedged backend never outlives its client.
class BackendProcess {
  public:
    explicit BackendProcess(BackendConfig cfg);
    ~BackendProcess();
    BackendProcess(const BackendProcess&) = delete;
    BackendProcess& operator=(const BackendProcess&) = delete;

    // Exactly n candidate strings; any other count is a protocol violation.
    std::vector<std::string> generate(const std::string& source, int n);

    // Non-empty embedding vector.
    std::vector<double> embed(const std::string& text);

    const BackendConfig& config() const { return cfg_; }

  private:
    std::string round_trip(const std::string& line);
    void shutdown();

    BackendConfig cfg_;
    int pid_ = -1;
    int in_fd_ = -1;    // we write requests here
    int out_fd_ = -1;   // we read responses here
    std::string buffer_;
    std::uint64_t next_id_ = 1;
    std::uint64_t lines_read_ = 0;  // response line counter for error messages
};

// Adapts the backend to the candidate-generation interface. The prompt
// tokens are joined into one source string; the backend owns its own
// randomness, so the rng parameter is unused and run-to-run determinism is
// whatever the backend guarantees.
class ExternalGenerator : public scoring::CandidateGenerator {
  public:
    explicit ExternalGenerator(BackendProcess& process) : process_(process) {}

    std::vector<std::string> generate(const std::vector<std::string>& source_tokens,
                                      int n, Rng& rng) override;

  private:
    BackendProcess& process_;
};

// Adapts the backend to the embedding interface. expected_dim = 0 pins the
// dimension from the first response; any later disagreement is a protocol
// violation.
class ExternalEmbedder : public scoring::Embedder {
  public:
    explicit ExternalEmbedder(BackendProcess& process, int expected_dim = 0);

    int dimension() const override;
    std::vector<double> embed(const std::vector<std::string>& tokens) override;

  private:
    BackendProcess& process_;
    int dim_ = 0;  // 0 until pinned
};

}  // namespace paragen::backend
