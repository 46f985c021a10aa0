#include "paragen/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "paragen/errors.hpp"

namespace paragen::manifest {

std::string RunManifest::to_json_text() const {
    nlohmann::json j;
    j["tool"] = kToolName;
    j["version"] = kToolVersion;
    j["subcommand"] = subcommand;
    j["config"] = config;
    j["seeds"] = seeds;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["timings_seconds"] = timings_seconds;
    j["status"] = status;
    if (!error.empty()) j["error"] = error;
    j["exit_code"] = exit_code;
    return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json_text(const std::string& text) {
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        if (j.value("tool", "") != kToolName)
            throw InputError("not a " + std::string(kToolName) + " manifest");
        RunManifest m;
        m.subcommand = j.at("subcommand").get<std::string>();
        m.config = j.at("config");
        if (!m.config.is_object()) throw InputError("manifest config must be an object");
        m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
        m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
        m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
        m.timings_seconds =
            j.at("timings_seconds").get<std::map<std::string, double>>();
        m.status = j.at("status").get<std::string>();
        m.error = j.value("error", "");
        m.exit_code = j.at("exit_code").get<int>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed manifest: ") + e.what());
    }
}

void RunManifest::save(const std::string& path) const {
    const std::filesystem::path parent = std::filesystem::path(path).parent_path();
    std::error_code ec;
    if (!parent.empty()) std::filesystem::create_directories(parent, ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write manifest: " + path);
    out << to_json_text();
    if (!out.flush()) throw InputError("cannot write manifest: " + path);
}

RunManifest RunManifest::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read manifest: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return from_json_text(buf.str());
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

std::string default_manifest_path(const std::string& primary_output,
                                  bool output_is_dir) {
    if (output_is_dir)
        return (std::filesystem::path(primary_output) / "manifest.json").string();
    return primary_output + ".manifest.json";
}

}  // namespace paragen::manifest
