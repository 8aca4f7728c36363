#include "verifact/cli.hpp"

#include "verifact/benchmark.hpp"
#include "verifact/digest.hpp"
#include "verifact/evidence.hpp"
#include "verifact/pipeline.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

extern char** environ;

namespace verifact::cli {

namespace fs = std::filesystem;

namespace {

std::string resolve(const fs::path& base, const std::string& value) {
    if (value.empty()) return value;
    fs::path p(value);
    return p.is_absolute() ? value : (base / p).lexically_normal().string();
}

GatewayMode parse_mode(const std::string& s) {
    auto m = to_lower_ascii(s);
    if (m == "live") return GatewayMode::Live;
    if (m == "record") return GatewayMode::Record;
    if (m == "replay") return GatewayMode::Replay;
    throw ConfigError("unknown gateway mode '" + s + "' (expected live, record or replay)");
}

bool parse_offline(const std::string& s) {
    auto m = to_lower_ascii(s);
    if (m == "offline") return true;
    if (m == "online") return false;
    throw ConfigError("unknown evidence source '" + s + "' (expected online or offline)");
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("malformed config file " + path + ": " + e.what());
    }
    auto base = fs::path(path).parent_path();
    RunConfig c;
    try {
        for (const auto& judge : j.value("judges", json::array())) {
            JudgeSpec spec;
            if (judge.is_string()) {
                spec.model = judge.get<std::string>();
            } else {
                spec.model = judge.at("model").get<std::string>();
                spec.temperature = judge.value("temperature", 0.0);
                if (judge.contains("endpoint")) spec.endpoint = judge["endpoint"].get<std::string>();
            }
            c.panel.judges.push_back(std::move(spec));
        }
        if (j.contains("mode")) c.mode = parse_mode(j["mode"].get<std::string>());
        c.cassette = resolve(base, j.value("cassette", std::string{}));
        c.llm_endpoint = j.value("llm_endpoint", std::string{});
        if (j.contains("evidence")) c.offline = parse_offline(j["evidence"].get<std::string>());
        c.snapshot = resolve(base, j.value("snapshot", std::string{}));
        if (j.contains("search")) {
            const auto& s = j["search"];
            c.search.endpoint = s.value("endpoint", c.search.endpoint);
            c.search.top_n = s.value("top_n", c.search.top_n);
            c.search.timeout = std::chrono::milliseconds(s.value("timeout_ms", c.search.timeout.count()));
        }
        c.fetch_timeout = std::chrono::milliseconds(j.value("fetch_timeout_ms", c.fetch_timeout.count()));
        c.snippet_k = j.value("snippet_k", c.snippet_k);
        c.jobs = j.value("jobs", c.jobs);
        c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
        c.query_rounds = j.value("query_rounds", c.query_rounds);
        if (j.contains("stages")) {
            const auto& s = j["stages"];
            c.detect = s.value("detect", c.detect);
            c.refine = s.value("refine", c.refine);
            c.reflect = s.value("reflect", c.reflect);
            c.track_flips = s.value("track_flips", c.track_flips);
        }
        c.strict = j.value("strict", c.strict);
        if (j.contains("replay_fallback_judge") && !j["replay_fallback_judge"].is_null())
            c.replay_fallback_judge = j["replay_fallback_judge"].get<std::size_t>();
        c.templates = resolve(base, j.value("templates", std::string{}));
        c.prompts = resolve(base, j.value("prompts", std::string{}));
        c.responses = resolve(base, j.value("responses", std::string{}));
        c.references = resolve(base, j.value("references", std::string{}));
        if (j.contains("out")) c.out = resolve(base, j["out"].get<std::string>());
    } catch (const json::exception& e) {
        throw ConfigError("invalid config file " + path + ": " + e.what());
    }
    return c;
}

void apply_environment(RunConfig& config, const std::map<std::string, std::string>& env) {
    if (auto it = env.find("VERIFACT_LLM_ENDPOINT"); it != env.end() && !it->second.empty()) config.llm_endpoint = it->second;
    if (auto it = env.find("VERIFACT_LLM_KEY"); it != env.end()) config.llm_key = it->second;
    if (auto it = env.find("VERIFACT_SEARCH_KEY"); it != env.end()) config.search.api_key = it->second;
}

void validate(const RunConfig& c, bool needs_gateway, bool needs_evidence) {
    if (c.jobs < 1) throw ConfigError("jobs must be at least 1");
    if (c.max_in_flight < 1) throw ConfigError("max_in_flight must be at least 1");
    if (c.snippet_k < 1) throw ConfigError("snippet_k must be at least 1");
    if (c.search.top_n < 1) throw ConfigError("search.top_n must be at least 1");
    if (c.query_rounds < 0) throw ConfigError("query_rounds must not be negative");
    if (needs_gateway) {
        if (c.panel.judges.empty()) throw ConfigError("no judges configured");
        if (c.mode != GatewayMode::Live && c.cassette.empty())
            throw ConfigError(std::string(to_string(c.mode)) + " mode requires a cassette path");
        if (c.mode != GatewayMode::Replay && c.llm_endpoint.empty())
            throw ConfigError("live and record modes require an LLM endpoint (VERIFACT_LLM_ENDPOINT)");
        if (c.replay_fallback_judge && *c.replay_fallback_judge >= c.panel.size())
            throw ConfigError("replay_fallback_judge is outside the panel");
    }
    if (needs_evidence) {
        if (c.offline && c.snapshot.empty()) throw ConfigError("offline evidence requires a snapshot path");
        if (!c.offline && c.search.api_key.empty())
            throw ConfigError("online evidence requires a search API key (VERIFACT_SEARCH_KEY)");
    }
}

json describe(const RunConfig& c) {
    json judges = json::array();
    for (const auto& j : c.panel.judges) {
        json spec{{"model", j.model}, {"temperature", j.temperature}};
        if (j.endpoint) spec["endpoint"] = *j.endpoint;
        judges.push_back(spec);
    }
    return json{{"judges", judges},
                {"mode", c.mode},
                {"cassette", c.cassette},
                {"evidence", c.offline ? "offline" : "online"},
                {"snapshot", c.snapshot},
                {"search", {{"endpoint", c.search.endpoint}, {"top_n", c.search.top_n}}},
                {"fetch_timeout_ms", c.fetch_timeout.count()},
                {"snippet_k", c.snippet_k},
                {"jobs", c.jobs},
                {"max_in_flight", c.max_in_flight},
                {"query_rounds", c.query_rounds},
                {"stages", {{"detect", c.detect}, {"refine", c.refine}, {"reflect", c.reflect}, {"track_flips", c.track_flips}}},
                {"strict", c.strict},
                {"replay_fallback_judge", c.replay_fallback_judge ? json(*c.replay_fallback_judge) : json(nullptr)},
                {"templates", c.templates},
                {"prompts", c.prompts},
                {"responses", c.responses},
                {"references", c.references}};
}

Environment Environment::from_process() {
    Environment env;
    for (char** e = environ; e && *e; ++e) {
        std::string_view kv(*e);
        auto eq = kv.find('=');
        if (eq != std::string_view::npos) env.vars.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
    }
    return env;
}

namespace {

std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    std::vector<json> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            rows.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

template <typename T>
std::vector<T> load_jsonl(const std::string& path) {
    std::vector<T> out;
    std::size_t row = 0;
    for (const auto& j : read_jsonl(path)) {
        ++row;
        try {
            out.push_back(j.get<T>());
        } catch (const json::exception& e) {
            throw ConfigError(path + ": record " + std::to_string(row) + ": " + e.what());
        }
    }
    return out;
}

template <typename T>
std::string to_jsonl(const std::vector<T>& rows) {
    std::string out;
    for (const auto& r : rows) out += json(r).dump() + "\n";
    return out;
}

std::string utc_now() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct Flags {
    std::string config;
    std::string mode;
    std::string evidence;
    std::string out;
    std::optional<std::size_t> jobs;
    std::string templates;
    std::string snapshot;
    std::string cassette;
    std::string prompts;
    std::string responses;
    std::string references;
    std::vector<std::string> judges;
    std::string from;
    std::string provenance = "model";
    std::string annotations_a;
    std::string annotations_b;
    std::string positive = "true";
    std::string report;
    std::string flips;
    std::string format = "text";
    bool track_flips = false;
    bool quiet = false;
    bool verbose = false;
};

class Session {
  public:
    Session(RunConfig config, Environment env, std::string command, std::ostream& out, std::ostream& err)
        : cfg(std::move(config)), out(out), err(err), env_(std::move(env)), command_(std::move(command)) {}

    RunConfig cfg;
    std::ostream& out;
    std::ostream& err;
    std::vector<std::string> failures;

    void init_gateway() {
        GatewayConfig g;
        g.panel = cfg.panel;
        g.mode = cfg.mode;
        g.endpoint = cfg.llm_endpoint;
        g.api_key = cfg.llm_key;
        g.max_in_flight = cfg.max_in_flight;
        g.replay_fallback_judge = cfg.replay_fallback_judge;
        if (!cfg.cassette.empty()) {
            if (cfg.mode == GatewayMode::Replay && !fs::exists(cfg.cassette))
                throw ConfigError("cassette not found: " + cfg.cassette);
            cassette_ = std::make_shared<Cassette>(cfg.cassette);
            if (cfg.mode == GatewayMode::Replay) note_input("cassette", cfg.cassette);
        }
        auto transport = env_.llm_transport ? env_.llm_transport : std::make_shared<HttpTransport>();
        templates_ = cfg.templates.empty() ? TemplateLibrary::builtin() : TemplateLibrary::with_overrides(cfg.templates);
        gateway_ = std::make_unique<Gateway>(g, transport, cassette_, templates_);

        PipelineOptions opts;
        opts.jobs = cfg.jobs;
        opts.run_detection = cfg.detect;
        opts.run_refinement = cfg.refine;
        opts.track_flips = cfg.track_flips;
        opts.detection.strict = cfg.strict;
        opts.detection.reflect = cfg.reflect;
        opts.verify.snippet_k = cfg.snippet_k;
        opts.verify.query_rounds = cfg.query_rounds;
        pipeline_ = std::make_unique<Pipeline>(*gateway_, opts);
    }

    void init_evidence(bool record_snapshot) {
        if (cfg.offline) {
            if (!fs::exists(fs::path(cfg.snapshot) / "manifests"))
                throw ConfigError("snapshot not found: " + cfg.snapshot);
            store_ = std::make_unique<EvidenceStore>(cfg.snapshot);
            if (fs::exists(fs::path(cfg.snapshot) / "snapshot.json"))
                note_input("snapshot", (fs::path(cfg.snapshot) / "snapshot.json").string());
            provider_ = [this](const std::string& prompt_id) -> EvidenceSource {
                return OfflineSource{store_.get(), prompt_id};
            };
            return;
        }
        auto web = env_.web_transport ? env_.web_transport : std::make_shared<HttpTransport>();
        search_ = std::make_unique<SearchClient>(cfg.search, web);
        fetcher_ = std::make_unique<PageFetcher>(web, cfg.fetch_timeout);
        if (record_snapshot) {
            if (cfg.snapshot.empty()) throw ConfigError("recording a snapshot requires --snapshot DIR");
            store_ = std::make_unique<EvidenceStore>(cfg.snapshot);
            recorder_ = std::make_unique<SnapshotRecorder>(*store_);
        }
        provider_ = [this](const std::string& prompt_id) -> EvidenceSource {
            return OnlineSource{search_.get(), fetcher_.get(), recorder_.get(), prompt_id, cfg.jobs};
        };
    }

    void flush_snapshot() {
        if (recorder_) recorder_->flush(utc_now());
    }

    Pipeline& pipeline() { return *pipeline_; }
    Gateway& gateway() { return *gateway_; }
    const EvidenceProvider* provider() const { return provider_ ? &provider_ : nullptr; }

    void load_prompts() {
        if (cfg.prompts.empty()) throw ConfigError("this command needs --prompts");
        for (auto& p : load_jsonl<Prompt>(cfg.prompts)) {
            if (p.id.empty()) throw ConfigError(cfg.prompts + ": prompt without id");
            if (!prompts_.emplace(p.id, p).second) throw ConfigError(cfg.prompts + ": duplicate prompt id " + p.id);
        }
        note_input("prompts", cfg.prompts);
    }

    std::vector<ModelResponse> load_responses() {
        if (cfg.responses.empty()) throw ConfigError("this command needs --responses");
        auto responses = load_jsonl<ModelResponse>(cfg.responses);
        std::set<std::string> ids;
        for (const auto& r : responses) {
            if (!ids.insert(r.id).second) throw ConfigError(cfg.responses + ": duplicate response id " + r.id);
            if (!prompts_.empty() && !prompts_.count(r.prompt_id))
                throw ConfigError(cfg.responses + ": response " + r.id + " refers to unknown prompt " + r.prompt_id);
        }
        note_input("responses", cfg.responses);
        return responses;
    }

    const Prompt& prompt_for(const ModelResponse& r) const {
        auto it = prompts_.find(r.prompt_id);
        if (it == prompts_.end()) throw ConfigError("unknown prompt " + r.prompt_id);
        return it->second;
    }

    void note_input(const std::string& name, const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        inputs_[name] = json{{"path", path}, {"sha256", sha256_hex(ss.str())}};
    }

    void fail(const std::string& item, const std::string& what) {
        spdlog::error("{}: {}", item, what);
        failures.push_back(item + ": " + what);
    }

    void write_output(const std::string& name, const std::string& content) {
        write_file_atomic(fs::path(cfg.out) / name, content);
        outputs_.push_back(name);
    }

    int finish() {
        json manifest{{"command", command_},
                      {"tool_version", VERIFACT_VERSION},
                      {"config", describe(cfg)},
                      {"config_digest", sha256_hex(describe(cfg).dump())},
                      {"inputs", inputs_},
                      {"outputs", outputs_},
                      {"failures", failures}};
        write_file_atomic(fs::path(cfg.out) / "run_manifest.json", manifest.dump(2) + "\n");
        if (!failures.empty()) {
            err << failures.size() << " item(s) failed; see run_manifest.json\n";
            return kPartialFailure;
        }
        return kSuccess;
    }

  private:
    Environment env_;
    std::string command_;
    std::shared_ptr<Cassette> cassette_;
    TemplateLibrary templates_ = TemplateLibrary::builtin();
    std::unique_ptr<Gateway> gateway_;
    std::unique_ptr<Pipeline> pipeline_;
    std::unique_ptr<EvidenceStore> store_;
    std::unique_ptr<SearchClient> search_;
    std::unique_ptr<PageFetcher> fetcher_;
    std::unique_ptr<SnapshotRecorder> recorder_;
    EvidenceProvider provider_;
    std::map<std::string, Prompt> prompts_;
    json inputs_ = json::object();
    std::vector<std::string> outputs_;
};

// Stage chain. Each stage maps response id -> result and skips responses
// whose earlier stage failed.

using Responses = std::vector<ModelResponse>;

std::map<std::string, DecompositionResult> stage_extract(Session& s, const Responses& responses) {
    std::map<std::string, DecompositionResult> out;
    for (const auto& r : responses) {
        try {
            out.emplace(r.id, s.pipeline().extract(r));
        } catch (const Error& e) {
            s.fail(r.id, std::string("extract: ") + e.what());
        }
    }
    return out;
}

template <typename T>
std::map<std::string, T> load_stage(Session& s, const std::string& path, const char* name) {
    std::map<std::string, T> out;
    for (auto& row : load_jsonl<T>(path)) {
        auto id = row.response_id;
        out.emplace(std::move(id), std::move(row));
    }
    s.note_input(name, path);
    return out;
}

std::map<std::string, DetectionResult> stage_detect(Session& s, const Responses& responses,
                                                    const std::map<std::string, DecompositionResult>& decomposed) {
    std::map<std::string, DetectionResult> out;
    for (const auto& r : responses) {
        auto it = decomposed.find(r.id);
        if (it == decomposed.end()) continue;
        try {
            out.emplace(r.id, s.pipeline().detect(it->second, r));
        } catch (const Error& e) {
            s.fail(r.id, std::string("detect: ") + e.what());
        }
    }
    return out;
}

std::map<std::string, RefinedResponse> stage_refine(Session& s, const Responses& responses,
                                                    const std::map<std::string, DetectionResult>& detected) {
    std::map<std::string, RefinedResponse> out;
    for (const auto& r : responses) {
        auto it = detected.find(r.id);
        if (it == detected.end()) continue;
        try {
            auto refined = s.pipeline().refine(it->second, r, s.prompt_for(r));
            for (const auto& e : refined.refinement.errors) spdlog::warn("{}: refinement: {}", r.id, e);
            out.emplace(r.id, std::move(refined));
        } catch (const Error& e) {
            s.fail(r.id, std::string("refine: ") + e.what());
        }
    }
    return out;
}

std::map<std::string, VerifiedResponse> stage_verify(Session& s, const Responses& responses,
                                                     const std::map<std::string, RefinedResponse>& refined) {
    std::map<std::string, VerifiedResponse> out;
    for (const auto& r : responses) {
        auto it = refined.find(r.id);
        if (it == refined.end()) continue;
        try {
            const auto& ref = it->second.refinement;
            out.emplace(r.id, s.pipeline().verify(r.id, ref.facts, ref.records, (*s.provider())(r.prompt_id)));
        } catch (const Error& e) {
            s.fail(r.id, std::string("verify: ") + e.what());
        }
    }
    return out;
}

template <typename T>
std::vector<T> in_order(const Responses& responses, const std::map<std::string, T>& results) {
    std::vector<T> rows;
    for (const auto& r : responses)
        if (auto it = results.find(r.id); it != results.end()) rows.push_back(it->second);
    return rows;
}

// Upstream results for a stage: loaded with --from, or recomputed.
std::map<std::string, DecompositionResult> upto_extract(Session& s, const Responses& rs, const Flags& f, bool from_here) {
    if (from_here && !f.from.empty()) return load_stage<DecompositionResult>(s, f.from, "from");
    return stage_extract(s, rs);
}

std::map<std::string, DetectionResult> upto_detect(Session& s, const Responses& rs, const Flags& f, bool from_here) {
    if (from_here && !f.from.empty()) return load_stage<DetectionResult>(s, f.from, "from");
    return stage_detect(s, rs, upto_extract(s, rs, f, false));
}

std::map<std::string, RefinedResponse> upto_refine(Session& s, const Responses& rs, const Flags& f, bool from_here) {
    if (from_here && !f.from.empty()) return load_stage<RefinedResponse>(s, f.from, "from");
    return stage_refine(s, rs, upto_detect(s, rs, f, false));
}

int cmd_extract(Session& s) {
    validate(s.cfg, true, false);
    if (!s.cfg.prompts.empty()) s.load_prompts();
    auto responses = s.load_responses();
    s.init_gateway();
    auto facts = stage_extract(s, responses);
    s.write_output("facts.jsonl", to_jsonl(in_order(responses, facts)));
    return s.finish();
}

int cmd_detect(Session& s, const Flags& f) {
    validate(s.cfg, true, false);
    if (!s.cfg.prompts.empty()) s.load_prompts();
    auto responses = s.load_responses();
    s.init_gateway();
    auto detected = stage_detect(s, responses, upto_extract(s, responses, f, true));
    s.write_output("detections.jsonl", to_jsonl(in_order(responses, detected)));
    return s.finish();
}

int cmd_refine(Session& s, const Flags& f) {
    validate(s.cfg, true, false);
    s.load_prompts();
    auto responses = s.load_responses();
    s.init_gateway();
    auto refined = stage_refine(s, responses, upto_detect(s, responses, f, true));
    s.write_output("refined.jsonl", to_jsonl(in_order(responses, refined)));
    return s.finish();
}

int cmd_verify(Session& s, const Flags& f, bool record_snapshot) {
    validate(s.cfg, true, true);
    if (record_snapshot && s.cfg.offline) throw ConfigError("snapshot needs --evidence online");
    s.load_prompts();
    auto responses = s.load_responses();
    s.init_gateway();
    s.init_evidence(record_snapshot);
    auto verified = stage_verify(s, responses, upto_refine(s, responses, f, true));
    s.write_output("verified.jsonl", to_jsonl(in_order(responses, verified)));
    if (record_snapshot) s.flush_snapshot();
    return s.finish();
}

std::map<std::string, ReferenceSet> load_references(Session& s) {
    std::map<std::string, ReferenceSet> refs;
    if (s.cfg.references.empty()) return refs;
    for (auto& r : load_jsonl<ReferenceSet>(s.cfg.references)) refs.emplace(r.prompt_id, std::move(r));
    s.note_input("references", s.cfg.references);
    return refs;
}

int cmd_evaluate(Session& s) {
    validate(s.cfg, true, true);
    s.load_prompts();
    auto responses = s.load_responses();
    auto references = load_references(s);
    s.init_gateway();
    s.init_evidence(false);

    auto decomposed = stage_extract(s, responses);
    auto detected = stage_detect(s, responses, decomposed);
    auto refined = stage_refine(s, responses, detected);
    auto verified = stage_verify(s, responses, refined);

    std::vector<ResponseScore> scores;
    std::vector<std::string> notes;
    std::set<std::string> unreferenced;
    std::map<std::string, VerificationLabel> before, after;
    for (const auto& r : responses) {
        auto it = verified.find(r.id);
        if (it == verified.end()) continue;
        ResponseRun run;
        run.response = r;
        run.verified = it->second;
        auto ref = references.find(r.prompt_id);
        if (ref == references.end()) unreferenced.insert(r.prompt_id);
        try {
            scores.push_back(s.pipeline().score(run, s.prompt_for(r), ref == references.end() ? nullptr : &ref->second));
        } catch (const Error& e) {
            s.fail(r.id, std::string("score: ") + e.what());
        }
        for (const auto& [id, label] : it->second.before_refinement) {
            before[r.id + "/" + id] = label;
            for (const auto& fact : it->second.facts)
                if (fact.id == id && fact.verification) after[r.id + "/" + id] = fact.verification->label;
        }
    }
    for (const auto& p : unreferenced) notes.push_back("prompt " + p + " has no reference set; recall skipped");

    auto report = make_report(std::move(scores), std::move(notes));
    s.write_output("facts.jsonl", to_jsonl(in_order(responses, decomposed)));
    s.write_output("detections.jsonl", to_jsonl(in_order(responses, detected)));
    s.write_output("refined.jsonl", to_jsonl(in_order(responses, refined)));
    s.write_output("verified.jsonl", to_jsonl(in_order(responses, verified)));
    s.write_output("report.json", json(report).dump(2) + "\n");
    s.write_output("report.txt", render_table(report));
    if (s.cfg.track_flips) {
        auto flips = label_flip_report(before, after);
        s.write_output("flips.json", json(flips).dump(2) + "\n");
        s.write_output("flips.txt", render_flip_report(flips));
    }
    s.out << render_table(report);
    return s.finish();
}

int cmd_reference(Session& s, const Flags& f) {
    ReferenceProvenance provenance;
    auto p = to_lower_ascii(f.provenance);
    if (p == "model" || p == "modelunion")
        provenance = ReferenceProvenance::ModelUnion;
    else if (p == "human" || p == "humananswers")
        provenance = ReferenceProvenance::HumanAnswers;
    else
        throw ConfigError("unknown provenance '" + f.provenance + "' (expected model or human)");
    bool verify = provenance == ReferenceProvenance::ModelUnion;
    validate(s.cfg, true, verify);
    s.load_prompts();
    auto answers = s.load_responses();
    s.init_gateway();
    if (verify) s.init_evidence(!s.cfg.offline && !s.cfg.snapshot.empty());

    std::vector<std::string> order;
    std::map<std::string, std::vector<ModelResponse>> by_prompt;
    for (const auto& a : answers) {
        if (!by_prompt.count(a.prompt_id)) order.push_back(a.prompt_id);
        by_prompt[a.prompt_id].push_back(a);
    }
    std::vector<ReferenceSet> sets;
    for (const auto& pid : order) {
        std::vector<std::string> errors;
        try {
            sets.push_back(s.pipeline().build_reference(s.prompt_for(by_prompt[pid].front()), by_prompt[pid], provenance,
                                                        verify ? s.provider() : nullptr, &errors));
        } catch (const Error& e) {
            s.fail(pid, std::string("reference: ") + e.what());
        }
        for (const auto& e : errors) s.fail(pid, e);
    }
    s.write_output("references.jsonl", to_jsonl(sets));
    if (verify) s.flush_snapshot();
    return s.finish();
}

std::map<std::string, std::string> load_annotations(const std::string& path) {
    std::map<std::string, std::string> labels;
    for (const auto& row : read_jsonl(path)) {
        if (!row.contains("id") || !row.contains("label"))
            throw ConfigError(path + ": annotation rows need \"id\" and \"label\"");
        auto id = row["id"].is_string() ? row["id"].get<std::string>() : row["id"].dump();
        auto label = row["label"].is_string() ? row["label"].get<std::string>() : row["label"].dump();
        if (!labels.emplace(id, label).second) throw ConfigError(path + ": duplicate id " + id);
    }
    return labels;
}

int cmd_agreement(Session& s, const Flags& f) {
    validate(s.cfg, false, false);
    if (f.annotations_a.empty() || f.annotations_b.empty()) throw ConfigError("agreement needs --a and --b");
    auto a = load_annotations(f.annotations_a);
    auto b = load_annotations(f.annotations_b);
    s.note_input("a", f.annotations_a);
    s.note_input("b", f.annotations_b);
    if (a.size() != b.size()) throw LengthMismatch(a.size(), b.size());
    std::vector<std::string> la, lb;
    std::size_t positives = 0, recalled = 0;
    for (const auto& [id, label] : a) {
        auto it = b.find(id);
        if (it == b.end()) throw ConfigError("id " + id + " missing from " + f.annotations_b);
        la.push_back(label);
        lb.push_back(it->second);
        if (label == f.positive) {
            ++positives;
            if (it->second == f.positive) ++recalled;
        }
    }
    json result{{"items", la.size()},
                {"kappa", cohens_kappa(la, lb)},
                {"observed_agreement", static_cast<double>(std::inner_product(la.begin(), la.end(), lb.begin(), 0, std::plus<>(), std::equal_to<>())) / la.size()},
                {"positive_label", f.positive},
                {"recall_of_b", positives ? json(static_cast<double>(recalled) / positives) : json(nullptr)}};
    s.write_output("agreement.json", result.dump(2) + "\n");
    s.out << result.dump(2) << "\n";
    return s.finish();
}

int cmd_report(Session& s, const Flags& f) {
    if (f.report.empty()) throw ConfigError("report needs --report FILE");
    EvaluationReport report;
    try {
        report = json::parse(read_file(f.report)).get<EvaluationReport>();
    } catch (const json::exception& e) {
        throw ConfigError(f.report + ": " + e.what());
    }
    auto fmt = to_lower_ascii(f.format);
    if (fmt == "json")
        s.out << json(report).dump(2) << "\n";
    else if (fmt == "text")
        s.out << render_table(report);
    else
        throw ConfigError("unknown format '" + f.format + "' (expected text or json)");
    if (!f.flips.empty()) {
        auto j = json::parse(read_file(f.flips));
        FlipReport flips;
        for (const auto& p : j.at("pairs"))
            flips.pairs[{p.at("before").get<VerificationLabel>(), p.at("after").get<VerificationLabel>()}] =
                p.at("count").get<std::size_t>();
        flips.changed = j.at("changed").get<std::size_t>();
        flips.total = j.at("total").get<std::size_t>();
        flips.rate = j.at("rate").get<double>();
        s.out << (fmt == "json" ? j.dump(2) + "\n" : render_flip_report(flips));
    }
    return kSuccess;
}

void add_common(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config, "JSON run configuration");
    sub->add_option("--mode", f.mode, "Gateway mode: live, record or replay");
    sub->add_option("--evidence", f.evidence, "Evidence source: online or offline");
    sub->add_option("--out", f.out, "Output directory");
    sub->add_option("--jobs", f.jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--templates", f.templates, "Directory of template overrides");
    sub->add_option("--snapshot", f.snapshot, "Evidence snapshot directory");
    sub->add_option("--cassette", f.cassette, "Judge cassette (JSONL)");
    sub->add_option("--prompts", f.prompts, "Prompts JSONL");
    sub->add_option("--responses", f.responses, "Responses JSONL");
    sub->add_option("--judge", f.judges, "Judge model (repeatable; replaces the configured panel)");
    sub->add_flag("-q,--quiet", f.quiet, "Only report errors");
    sub->add_flag("--verbose", f.verbose, "Debug logging");
}

RunConfig effective_config(const Flags& f, const Environment& env) {
    RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
    apply_environment(c, env.vars);
    if (!f.mode.empty()) c.mode = parse_mode(f.mode);
    if (!f.evidence.empty()) c.offline = parse_offline(f.evidence);
    if (!f.out.empty()) c.out = f.out;
    if (f.jobs) c.jobs = *f.jobs;
    if (!f.templates.empty()) c.templates = f.templates;
    if (!f.snapshot.empty()) c.snapshot = f.snapshot;
    if (!f.cassette.empty()) c.cassette = f.cassette;
    if (!f.prompts.empty()) c.prompts = f.prompts;
    if (!f.responses.empty()) c.responses = f.responses;
    if (!f.references.empty()) c.references = f.references;
    if (f.track_flips) c.track_flips = true;
    if (!f.judges.empty()) {
        c.panel.judges.clear();
        for (const auto& m : f.judges) c.panel.judges.push_back(JudgeSpec{m, 0.0, std::nullopt});
    }
    return c;
}

}  // namespace

int run(const std::vector<std::string>& args, Environment env) {
    std::ostream& out = env.out ? *env.out : std::cout;
    std::ostream& err = env.err ? *env.err : std::cerr;

    CLI::App app{"verifact: fact extraction, refinement and verification for long-form answers"};
    app.require_subcommand(1);
    Flags f;

    auto* extract = app.add_subcommand("extract", "Decompose responses into facts");
    auto* detect = app.add_subcommand("detect", "Detect incomplete facts and missing relations");
    auto* refine = app.add_subcommand("refine", "Revise incomplete facts and add missing relation facts");
    auto* verify = app.add_subcommand("verify", "Verify facts against web evidence");
    auto* evaluate = app.add_subcommand("evaluate", "Full pipeline plus precision/recall scoring");
    auto* snapshot = app.add_subcommand("snapshot", "Verify online and record an evidence snapshot");
    auto* reference = app.add_subcommand("reference", "Build per-prompt reference fact sets");
    auto* agreement = app.add_subcommand("agreement", "Cohen's kappa and recall between two annotation files");
    auto* report = app.add_subcommand("report", "Render a saved evaluation report");

    for (auto* sub : {extract, detect, refine, verify, evaluate, snapshot, reference, agreement}) add_common(sub, f);
    for (auto* sub : {detect, refine, verify, snapshot})
        sub->add_option("--from", f.from, "Output of the previous stage (JSONL)");
    evaluate->add_option("--references", f.references, "Reference sets JSONL");
    evaluate->add_flag("--track-flips", f.track_flips, "Also verify the original text of revised facts");
    reference->add_option("--provenance", f.provenance, "model (supported facts of model answers) or human");
    agreement->add_option("--a", f.annotations_a, "First annotation JSONL ({id, label})")->required();
    agreement->add_option("--b", f.annotations_b, "Second annotation JSONL ({id, label})")->required();
    agreement->add_option("--positive", f.positive, "Label counted as positive for recall");
    report->add_option("--report", f.report, "report.json from evaluate")->required();
    report->add_option("--flips", f.flips, "flips.json from evaluate");
    report->add_option("--format", f.format, "text or json");

    std::vector<std::string> argv_store{"verifact"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kUsageError;
    }

    auto previous_level = spdlog::get_level();
    spdlog::set_level(f.quiet ? spdlog::level::err : f.verbose ? spdlog::level::debug : spdlog::level::warn);
    struct Restore {
        spdlog::level::level_enum level;
        ~Restore() { spdlog::set_level(level); }
    } restore{previous_level};

    auto* sub = app.get_subcommands().front();
    try {
        auto config = effective_config(f, env);
        Session s(std::move(config), std::move(env), sub->get_name(), out, err);
        if (sub == extract) return cmd_extract(s);
        if (sub == detect) return cmd_detect(s, f);
        if (sub == refine) return cmd_refine(s, f);
        if (sub == verify) return cmd_verify(s, f, false);
        if (sub == snapshot) return cmd_verify(s, f, true);
        if (sub == evaluate) return cmd_evaluate(s);
        if (sub == reference) return cmd_reference(s, f);
        if (sub == agreement) return cmd_agreement(s, f);
        if (sub == report) return cmd_report(s, f);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    }
    return kUsageError;
}

}  // namespace verifact::cli
