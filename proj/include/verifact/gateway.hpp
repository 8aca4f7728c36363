#pragma once

#include "verifact/core.hpp"
#include "verifact/transport.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

namespace verifact {

/// The judge prompt family. Each value has one data file under templates/.
enum class TemplateId {
    Decomposition,
    CompletenessCheck,
    MissingRelationCheck,
    SelfReflection,
    DivergentFilter,
    HumanFactCoverage,
    EntailmentCheck,
    FixIncomplete,
    AddMissingRelation,
    QueryParaphrase,
    FactVerification,
};

VERIFACT_ENUM_NAMES(TemplateId, std::pair{TemplateId::Decomposition, std::string_view{"Decomposition"}},
                    std::pair{TemplateId::CompletenessCheck, std::string_view{"CompletenessCheck"}},
                    std::pair{TemplateId::MissingRelationCheck, std::string_view{"MissingRelationCheck"}},
                    std::pair{TemplateId::SelfReflection, std::string_view{"SelfReflection"}},
                    std::pair{TemplateId::DivergentFilter, std::string_view{"DivergentFilter"}},
                    std::pair{TemplateId::HumanFactCoverage, std::string_view{"HumanFactCoverage"}},
                    std::pair{TemplateId::EntailmentCheck, std::string_view{"EntailmentCheck"}},
                    std::pair{TemplateId::FixIncomplete, std::string_view{"FixIncomplete"}},
                    std::pair{TemplateId::AddMissingRelation, std::string_view{"AddMissingRelation"}},
                    std::pair{TemplateId::QueryParaphrase, std::string_view{"QueryParaphrase"}},
                    std::pair{TemplateId::FactVerification, std::string_view{"FactVerification"}});

/// File stem of the template's data file, e.g. "completeness_check".
std::string_view template_file_stem(TemplateId id);

using Bindings = std::map<std::string, std::string>;

/// Template sources keyed by id. Placeholders are written `{{name}}`.
class TemplateLibrary {
  public:
    /// Templates compiled into the library from templates/*.txt.
    static const TemplateLibrary& builtin();
    /// Builtins overridden by any `<stem>.txt` present in `dir`.
    static TemplateLibrary with_overrides(const std::filesystem::path& dir);

    const std::string& source(TemplateId id) const;
    std::vector<std::string> placeholders(TemplateId id) const;

    /// Substitutes every placeholder. Unbound placeholders raise
    /// MissingBinding; with `strict`, so do bindings whose value is empty.
    std::string render(TemplateId id, const Bindings& bindings, bool strict = true) const;

  private:
    std::map<TemplateId, std::string> sources_;
};

std::string render(TemplateId id, const Bindings& bindings, bool strict = true);

struct JudgeSpec {
    std::string model;
    double temperature = 0.0;
    std::optional<std::string> endpoint;  ///< overrides GatewayConfig::endpoint
};

struct JudgePanel {
    std::vector<JudgeSpec> judges;
    std::size_t size() const noexcept { return judges.size(); }
};

struct PromptRequest {
    TemplateId template_id = TemplateId::EntailmentCheck;
    Bindings bindings;
    std::size_t judge_index = 0;
};

enum class GatewayMode { Live, Record, Replay };

VERIFACT_ENUM_NAMES(GatewayMode, std::pair{GatewayMode::Live, std::string_view{"Live"}},
                    std::pair{GatewayMode::Record, std::string_view{"Record"}},
                    std::pair{GatewayMode::Replay, std::string_view{"Replay"}});

/// Deterministic request identity: SHA-256 over the canonical JSON of
/// template id, bindings and model name.
std::string fingerprint(const PromptRequest& request, std::string_view model);

/// Recorded completions, one JSON object per line in an append-only file.
class Cassette {
  public:
    struct Entry {
        std::string fingerprint;
        std::string template_id;
        std::string model;
        std::string completion;
    };

    Cassette() = default;
    /// Loads `path` if it exists; later appends go to the same file.
    explicit Cassette(std::filesystem::path path);

    std::optional<std::string> find(const std::string& fingerprint) const;
    /// Adds an entry (first write wins) and appends it to the backing file.
    void put(const Entry& entry);
    std::size_t size() const;
    const std::filesystem::path& path() const noexcept { return path_; }

  private:
    std::filesystem::path path_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::string> entries_;
};

struct GatewayConfig {
    JudgePanel panel;
    GatewayMode mode = GatewayMode::Replay;
    std::string endpoint;  ///< chat-completion URL (VERIFACT_LLM_ENDPOINT)
    std::string api_key;   ///< VERIFACT_LLM_KEY
    std::string auth_header = "Authorization";
    std::string auth_prefix = "Bearer ";
    std::size_t max_in_flight = 4;
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
    std::chrono::milliseconds timeout{120'000};
    bool strict_bindings = true;
    /// On a Replay miss, retry the lookup as if this judge had been asked.
    std::optional<std::size_t> replay_fallback_judge;
};

/// Builds the chat-completion request body for one rendered prompt.
json chat_request_body(const JudgeSpec& judge, const std::string& prompt);
/// Extracts choices[0].message.content; throws ProviderError on any other shape.
std::string chat_response_content(int status, const std::string& body);

/// Judge-model access shared by all pipeline stages. Thread-safe.
class Gateway {
  public:
    Gateway(GatewayConfig config, std::shared_ptr<Transport> transport,
            std::shared_ptr<Cassette> cassette = nullptr,
            const TemplateLibrary& templates = TemplateLibrary::builtin());

    std::string complete(const PromptRequest& request);
    std::string complete(const PromptRequest& request, GatewayMode mode);

    std::string render(const PromptRequest& request) const;
    const JudgePanel& panel() const noexcept { return config_.panel; }
    const GatewayConfig& config() const noexcept { return config_; }
    const JudgeSpec& judge(std::size_t index) const;

    std::size_t completions() const noexcept { return completions_.load(); }
    std::size_t network_requests() const noexcept { return network_requests_.load(); }
    std::size_t peak_in_flight() const noexcept { return peak_in_flight_.load(); }

  private:
    std::string live(const PromptRequest& request, const JudgeSpec& judge);

    GatewayConfig config_;
    std::shared_ptr<Transport> transport_;
    std::shared_ptr<Cassette> cassette_;
    TemplateLibrary templates_;
    std::counting_semaphore<1 << 16> slots_;
    std::atomic<std::size_t> completions_{0};
    std::atomic<std::size_t> network_requests_{0};
    std::atomic<std::size_t> in_flight_{0};
    std::atomic<std::size_t> peak_in_flight_{0};
};

}  // namespace verifact
