#include "verifact/gateway.hpp"

#include "verifact/digest.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <sstream>
#include <thread>

namespace verifact {

namespace detail {
const std::vector<std::pair<std::string_view, std::string_view>>& builtin_template_sources();
}

namespace {

constexpr std::pair<TemplateId, std::string_view> kStems[] = {
    {TemplateId::Decomposition, "decomposition"},
    {TemplateId::CompletenessCheck, "completeness_check"},
    {TemplateId::MissingRelationCheck, "missing_relation_check"},
    {TemplateId::SelfReflection, "self_reflection"},
    {TemplateId::DivergentFilter, "divergent_filter"},
    {TemplateId::HumanFactCoverage, "human_fact_coverage"},
    {TemplateId::EntailmentCheck, "entailment_check"},
    {TemplateId::FixIncomplete, "fix_incomplete"},
    {TemplateId::AddMissingRelation, "add_missing_relation"},
    {TemplateId::QueryParaphrase, "query_paraphrase"},
    {TemplateId::FactVerification, "fact_verification"},
};

// Calls `on_text` for literal runs and `on_placeholder` for each {{name}}.
template <typename Text, typename Placeholder>
void scan_template(std::string_view tpl, Text&& on_text, Placeholder&& on_placeholder) {
    std::size_t pos = 0;
    while (pos < tpl.size()) {
        auto open = tpl.find("{{", pos);
        if (open == std::string_view::npos) break;
        auto close = tpl.find("}}", open + 2);
        if (close == std::string_view::npos) break;
        on_text(tpl.substr(pos, open - pos));
        on_placeholder(std::string(tpl.substr(open + 2, close - open - 2)));
        pos = close + 2;
    }
    on_text(tpl.substr(pos));
}

}  // namespace

std::string_view template_file_stem(TemplateId id) {
    for (const auto& [tid, stem] : kStems)
        if (tid == id) return stem;
    return "";
}

const TemplateLibrary& TemplateLibrary::builtin() {
    static const TemplateLibrary lib = [] {
        TemplateLibrary l;
        const auto& sources = detail::builtin_template_sources();
        for (const auto& [tid, stem] : kStems) {
            bool found = false;
            for (const auto& [name, text] : sources) {
                if (name == stem) {
                    l.sources_[tid] = std::string(text);
                    found = true;
                }
            }
            if (!found) throw Error("builtin template missing: " + std::string(stem));
        }
        return l;
    }();
    return lib;
}

TemplateLibrary TemplateLibrary::with_overrides(const std::filesystem::path& dir) {
    TemplateLibrary l = builtin();
    for (const auto& [tid, stem] : kStems) {
        auto file = dir / (std::string(stem) + ".txt");
        if (!std::filesystem::exists(file)) continue;
        std::ifstream in(file, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        l.sources_[tid] = ss.str();
    }
    return l;
}

const std::string& TemplateLibrary::source(TemplateId id) const { return sources_.at(id); }

std::vector<std::string> TemplateLibrary::placeholders(TemplateId id) const {
    std::vector<std::string> names;
    scan_template(source(id), [](std::string_view) {}, [&](std::string name) {
        if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(std::move(name));
    });
    return names;
}

std::string TemplateLibrary::render(TemplateId id, const Bindings& bindings, bool strict) const {
    std::string out;
    scan_template(
        source(id), [&](std::string_view text) { out.append(text); },
        [&](const std::string& name) {
            auto it = bindings.find(name);
            if (it == bindings.end() || (strict && it->second.empty())) throw MissingBinding(name);
            out.append(it->second);
        });
    return out;
}

std::string render(TemplateId id, const Bindings& bindings, bool strict) {
    return TemplateLibrary::builtin().render(id, bindings, strict);
}

std::string fingerprint(const PromptRequest& request, std::string_view model) {
    json canonical = {
        {"template", std::string(to_string(request.template_id))},
        {"bindings", request.bindings},
        {"model", std::string(model)},
    };
    return sha256_hex(canonical.dump());
}

Cassette::Cassette(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) return;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            auto j = json::parse(line);
            entries_.try_emplace(j.at("fingerprint").get<std::string>(), j.at("completion").get<std::string>());
        } catch (const json::exception& e) {
            throw Error(path_.string() + ":" + std::to_string(lineno) + ": malformed cassette entry: " + e.what());
        }
    }
}

std::optional<std::string> Cassette::find(const std::string& fp) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(fp);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void Cassette::put(const Entry& entry) {
    std::lock_guard lock(mutex_);
    if (!entries_.try_emplace(entry.fingerprint, entry.completion).second) return;
    if (path_.empty()) return;
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot append to cassette " + path_.string());
    json j = {{"fingerprint", entry.fingerprint},
              {"template", entry.template_id},
              {"model", entry.model},
              {"completion", entry.completion}};
    out << j.dump() << '\n';
}

std::size_t Cassette::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

json chat_request_body(const JudgeSpec& judge, const std::string& prompt) {
    return json{{"model", judge.model},
                {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
                {"temperature", judge.temperature}};
}

std::string chat_response_content(int status, const std::string& body) {
    if (status < 200 || status >= 300) throw ProviderError(status, body);
    try {
        auto j = json::parse(body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (content.is_null()) return {};
        return content.get<std::string>();
    } catch (const json::exception&) {
        throw ProviderError(status, body);
    }
}

Gateway::Gateway(GatewayConfig config, std::shared_ptr<Transport> transport, std::shared_ptr<Cassette> cassette,
                 const TemplateLibrary& templates)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      cassette_(std::move(cassette)),
      templates_(templates),
      slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, config_.max_in_flight))) {
    if (config_.panel.judges.empty()) throw ConfigError("judge panel must contain at least one judge");
    if (config_.max_in_flight < 1) throw ConfigError("max_in_flight must be at least 1");
    if (config_.max_attempts < 1) throw ConfigError("max_attempts must be at least 1");
    if ((config_.mode == GatewayMode::Replay || config_.mode == GatewayMode::Record) && !cassette_)
        throw ConfigError("replay and record modes require a cassette");
}

const JudgeSpec& Gateway::judge(std::size_t index) const {
    if (index >= config_.panel.judges.size())
        throw ConfigError("judge index " + std::to_string(index) + " outside panel of " +
                          std::to_string(config_.panel.judges.size()));
    return config_.panel.judges[index];
}

std::string Gateway::render(const PromptRequest& request) const {
    return templates_.render(request.template_id, request.bindings, config_.strict_bindings);
}

std::string Gateway::complete(const PromptRequest& request) { return complete(request, config_.mode); }

std::string Gateway::complete(const PromptRequest& request, GatewayMode mode) {
    const auto& spec = judge(request.judge_index);
    // Rendering first surfaces MissingBinding in every mode.
    (void)render(request);
    auto fp = fingerprint(request, spec.model);

    if (mode == GatewayMode::Replay) {
        if (!cassette_) throw ConfigError("replay mode requires a cassette");
        if (auto hit = cassette_->find(fp)) {
            ++completions_;
            return *hit;
        }
        if (config_.replay_fallback_judge && *config_.replay_fallback_judge != request.judge_index) {
            auto fallback_fp = fingerprint(request, judge(*config_.replay_fallback_judge).model);
            if (auto hit = cassette_->find(fallback_fp)) {
                spdlog::warn("cassette miss for {}; using fallback judge entry", fp.substr(0, 12));
                ++completions_;
                return *hit;
            }
        }
        throw CassetteMiss(fp);
    }

    auto text = live(request, spec);
    if (mode == GatewayMode::Record) {
        if (!cassette_) throw ConfigError("record mode requires a cassette");
        cassette_->put({fp, std::string(to_string(request.template_id)), spec.model, text});
    }
    ++completions_;
    return text;
}

std::string Gateway::live(const PromptRequest& request, const JudgeSpec& spec) {
    if (!transport_) throw NetworkError("no transport configured");
    HttpRequest http;
    http.method = "POST";
    http.url = spec.endpoint.value_or(config_.endpoint);
    if (http.url.empty()) throw ConfigError("no chat-completion endpoint configured (VERIFACT_LLM_ENDPOINT)");
    http.timeout = config_.timeout;
    http.headers.emplace_back("Content-Type", "application/json");
    if (!config_.api_key.empty()) http.headers.emplace_back(config_.auth_header, config_.auth_prefix + config_.api_key);
    http.body = chat_request_body(spec, render(request)).dump();

    slots_.acquire();
    auto now = ++in_flight_;
    auto peak = peak_in_flight_.load();
    while (now > peak && !peak_in_flight_.compare_exchange_weak(peak, now)) {
    }
    struct Release {
        Gateway* g;
        ~Release() {
            --g->in_flight_;
            g->slots_.release();
        }
    } release{this};

    auto backoff = config_.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        bool last = attempt >= config_.max_attempts;
        try {
            ++network_requests_;
            auto response = transport_->send(http);
            bool retryable = response.status == 429 || response.status >= 500;
            if (!retryable || last) return chat_response_content(response.status, response.body);
            spdlog::warn("judge {} returned HTTP {} (attempt {}/{})", spec.model, response.status, attempt,
                         config_.max_attempts);
        } catch (const NetworkError& e) {
            if (last) throw NetworkError(std::string(e.what()) + " (after " + std::to_string(attempt) + " attempts)");
            spdlog::warn("judge {} request failed: {} (attempt {}/{})", spec.model, e.what(), attempt,
                         config_.max_attempts);
        }
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
    }
}

}  // namespace verifact
