#pragma once

#include "verifact/gateway.hpp"
#include "verifact/transport.hpp"
#include "verifact/verification.hpp"

#include <chrono>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace verifact::cli {

enum ExitCode : int { kSuccess = 0, kPartialFailure = 1, kUsageError = 2 };

struct RunConfig {
    JudgePanel panel;
    GatewayMode mode = GatewayMode::Replay;
    std::string cassette;
    std::string llm_endpoint;
    std::string llm_key;  ///< never written to manifests
    bool offline = true;
    std::string snapshot;
    SearchConfig search;
    std::chrono::milliseconds fetch_timeout{10'000};
    std::size_t snippet_k = 5;
    std::size_t jobs = 4;
    std::size_t max_in_flight = 4;
    int query_rounds = 2;
    bool detect = true;
    bool refine = true;
    bool reflect = true;
    bool strict = false;
    bool track_flips = false;
    std::optional<std::size_t> replay_fallback_judge;
    std::string templates;
    std::string prompts;
    std::string responses;
    std::string references;
    std::string out = "out";
};

/// Reads a JSON config file. Relative paths inside it resolve against the
/// file's directory.
RunConfig load_run_config(const std::string& path);
/// VERIFACT_LLM_ENDPOINT, VERIFACT_LLM_KEY and VERIFACT_SEARCH_KEY.
void apply_environment(RunConfig& config, const std::map<std::string, std::string>& env);
/// Throws ConfigError on the first violated constraint. Gateway and
/// evidence settings are only checked when the command needs them.
void validate(const RunConfig& config, bool needs_gateway = true, bool needs_evidence = true);
/// Config without secrets; this is what the run manifest digests.
json describe(const RunConfig& config);

struct Environment {
    std::map<std::string, std::string> vars;
    std::shared_ptr<Transport> llm_transport;  ///< HttpTransport when null
    std::shared_ptr<Transport> web_transport;  ///< HttpTransport when null
    std::ostream* out = nullptr;               ///< std::cout when null
    std::ostream* err = nullptr;               ///< std::cerr when null

    static Environment from_process();
};

/// Entry point; `args` excludes the program name. Returns an ExitCode.
int run(const std::vector<std::string>& args, Environment env);

}  // namespace verifact::cli
