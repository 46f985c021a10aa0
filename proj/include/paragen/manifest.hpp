#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "json.hpp"

// Run manifests: one JSON file per CLI run recording what ran, the fully
// resolved configuration, derived seeds, input/output paths, timings, and
// how the run ended. Written on success and on failure, so every run can be
// audited, and a finished manifest can be replayed to reproduce its outputs.
namespace paragen::manifest {

inline constexpr const char* kToolName = "paragen";
inline constexpr const char* kToolVersion = "0.1.0";

struct RunManifest {
    std::string subcommand;
    nlohmann::json config = nlohmann::json::object();  // resolved option values
    std::map<std::string, std::uint64_t> seeds;        // component stream -> seed
    std::map<std::string, std::string> inputs;         // role -> path
    std::map<std::string, std::string> outputs;        // role -> path
    std::map<std::string, double> timings_seconds;     // phase -> wall time
    std::string status = "ok";                         // "ok" or "error"
    std::string error;                                 // set when status == "error"
    int exit_code = 0;

    std::string to_json_text() const;  // pretty-printed, trailing newline
    static RunManifest from_json_text(const std::string& text);  // InputError

    // save creates missing parent directories so a failed run can still
    // leave its manifest behind.
    void save(const std::string& path) const;
    static RunManifest load(const std::string& path);
};

// <file>.manifest.json next to a file output, <dir>/manifest.json inside a
// directory output.
std::string default_manifest_path(const std::string& primary_output,
                                  bool output_is_dir);

}  // namespace paragen::manifest
