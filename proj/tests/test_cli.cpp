#include <doctest.h>

#include "support/harness.hpp"
#include "support/world.hpp"

#include "verifact/cli.hpp"
#include "verifact/evidence.hpp"

#include <fstream>
#include <sstream>

using namespace verifact;
using namespace verifact::testing;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out, err;
};

Run cli_run(std::vector<std::string> args, std::shared_ptr<Transport> llm = nullptr,
            std::shared_ptr<Transport> web = nullptr) {
    std::ostringstream out, err;
    cli::Environment env;
    env.vars["VERIFACT_SEARCH_KEY"] = "test-key";
    auto sentinel = std::make_shared<CountingTransport>();
    env.llm_transport = llm ? llm : sentinel;
    env.web_transport = web ? web : sentinel;
    env.out = &out;
    env.err = &err;
    Run r;
    r.code = cli::run(args, env);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string corpus_config() { return (fixture_dir() / "corpus" / "config.json").string(); }

std::vector<json> jsonl(const fs::path& path) {
    std::vector<json> rows;
    std::ifstream in(path);
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) rows.push_back(json::parse(line));
    return rows;
}

// A live setup over the scripted world, writing into `dir`.
struct LiveWorld {
    World world = World::load(fixture_dir() / "world.json");
    std::shared_ptr<ScriptedLlm> llm = std::make_shared<ScriptedLlm>(world.responder());
    std::shared_ptr<FakeWeb> web = std::make_shared<FakeWeb>("https://search.test/search");

    explicit LiveWorld(const TempDir& dir) {
        world.install(*web);
        std::string prompts, responses;
        for (const auto& p : world.prompts()) prompts += json(p).dump() + "\n";
        for (const auto& r : world.responses()) responses += json(r).dump() + "\n";
        write_file_atomic(dir / "prompts.jsonl", prompts);
        write_file_atomic(dir / "responses.jsonl", responses);
        json config{{"judges", world.judges()},
                    {"mode", "record"},
                    {"cassette", "cassette.jsonl"},
                    {"llm_endpoint", "https://llm.test/v1/chat/completions"},
                    {"evidence", "online"},
                    {"snapshot", "snapshot"},
                    {"search", {{"endpoint", "https://search.test/search"}}},
                    {"jobs", 2},
                    {"prompts", "prompts.jsonl"},
                    {"responses", "responses.jsonl"}};
        write_file_atomic(dir / "config.json", config.dump(2));
    }
};

std::map<std::string, std::string> labels_of(const fs::path& verified) {
    std::map<std::string, std::string> labels;
    for (const auto& row : jsonl(verified))
        for (const auto& f : row.at("facts"))
            labels[f.at("id").get<std::string>()] = f.at("verification").at("label").get<std::string>();
    return labels;
}

}  // namespace

TEST_CASE("usage and input errors exit with 2") {
    TempDir dir;
    CHECK(cli_run({}).code == cli::kUsageError);
    CHECK(cli_run({"frobnicate"}).code == cli::kUsageError);
    auto missing = cli_run({"extract", "--config", corpus_config(), "--responses", (dir / "nope.jsonl").string(),
                            "--out", (dir / "out").string()});
    CHECK(missing.code == cli::kUsageError);
    CHECK(missing.err.find("nope.jsonl") != std::string::npos);
    CHECK(cli_run({"extract", "--config", (dir / "absent.json").string()}).code == cli::kUsageError);
    CHECK(cli_run({"extract", "--config", corpus_config(), "--mode", "sideways"}).code == cli::kUsageError);
    write_file_atomic(dir / "bad.json", R"({"judges": [], "mode": "replay"})");
    CHECK(cli_run({"extract", "--config", (dir / "bad.json").string()}).code == cli::kUsageError);
}

TEST_CASE("config layering") {
    TempDir dir;
    write_file_atomic(dir / "c.json", R"({"judges": [{"model": "j1", "temperature": 0.2}, "j2"], "mode": "replay",
        "cassette": "tape.jsonl", "evidence": "offline", "snapshot": "snap", "jobs": 3})");
    auto cfg = cli::load_run_config((dir / "c.json").string());
    CHECK(cfg.panel.judges.size() == 2);
    CHECK(cfg.jobs == 3);
    CHECK(cfg.cassette == (dir / "tape.jsonl").string());
    cli::apply_environment(cfg, {{"VERIFACT_LLM_KEY", "secret"}, {"VERIFACT_LLM_ENDPOINT", "https://x.test/"}});
    CHECK(cfg.llm_key == "secret");
    CHECK(cfg.llm_endpoint == "https://x.test/");
    CHECK(cli::describe(cfg).dump().find("secret") == std::string::npos);
    cli::validate(cfg);
    cfg.cassette.clear();
    CHECK_THROWS_AS(cli::validate(cfg), ConfigError);
    CHECK_NOTHROW(cli::validate(cfg, false, false));
}

TEST_CASE("extract in replay is byte-identical and network-free") {
    TempDir dir;
    auto sentinel = std::make_shared<CountingTransport>();
    auto a = cli_run({"extract", "--config", corpus_config(), "--out", (dir / "a").string()}, sentinel, sentinel);
    auto b = cli_run({"extract", "--config", corpus_config(), "--out", (dir / "b").string(), "--jobs", "3"}, sentinel,
                     sentinel);
    REQUIRE(a.code == cli::kSuccess);
    REQUIRE(b.code == cli::kSuccess);
    CHECK(sentinel->count() == 0);
    CHECK(read_file(dir / "a" / "facts.jsonl") == read_file(dir / "b" / "facts.jsonl"));
    CHECK(jsonl(dir / "a" / "facts.jsonl").size() == 10);

    auto rows = jsonl(fixture_dir() / "corpus" / "responses.jsonl");
    write_file_atomic(dir / "two.jsonl", rows[0].dump() + "\n" + rows[1].dump() + "\n");
    auto two = cli_run({"extract", "--config", corpus_config(), "--responses", (dir / "two.jsonl").string(), "--out",
                        (dir / "c").string()});
    CHECK(two.code == cli::kSuccess);
    CHECK(jsonl(dir / "c" / "facts.jsonl").size() == 2);
}

TEST_CASE("stages resume from the previous stage's output") {
    TempDir dir;
    auto out = (dir / "o").string();
    REQUIRE(cli_run({"extract", "--config", corpus_config(), "--out", out}).code == 0);
    REQUIRE(cli_run({"detect", "--config", corpus_config(), "--out", (dir / "full").string()}).code == 0);
    REQUIRE(cli_run({"detect", "--config", corpus_config(), "--out", out, "--from", out + "/facts.jsonl"}).code == 0);
    CHECK(read_file(dir / "o" / "detections.jsonl") == read_file(dir / "full" / "detections.jsonl"));
}

TEST_CASE("evaluate replays the fixture corpus deterministically") {
    TempDir dir;
    auto sentinel = std::make_shared<CountingTransport>();
    auto a = cli_run({"evaluate", "--config", corpus_config(), "--out", (dir / "a").string()}, sentinel, sentinel);
    auto b = cli_run({"evaluate", "--config", corpus_config(), "--out", (dir / "b").string()}, sentinel, sentinel);
    REQUIRE(a.code == cli::kSuccess);
    REQUIRE(b.code == cli::kSuccess);
    CHECK(sentinel->count() == 0);
    CHECK(read_file(dir / "a" / "report.json") == read_file(dir / "b" / "report.json"));
    CHECK(read_file(dir / "a" / "report.txt") == read_file(fixture_dir() / "corpus" / "expected_report.txt"));

    auto manifest = json::parse(read_file(dir / "a" / "run_manifest.json"));
    CHECK(manifest.at("command") == "evaluate");
    CHECK(manifest.contains("config_digest"));
    CHECK(manifest.at("inputs").contains("responses"));
    auto other = json::parse(read_file(dir / "b" / "run_manifest.json"));
    CHECK(manifest == other);

    auto report = json::parse(read_file(dir / "a" / "report.json"));
    CHECK(report.at("per_response").size() == 10);
    for (const auto& r : report.at("per_response")) {
        auto counts = r.at("labels");
        double total = counts.at("Supported").get<double>() + counts.at("Contradicted").get<double>() +
                       counts.at("Undecided").get<double>();
        CHECK(r.at("precision").get<double>() == doctest::Approx(counts.at("Supported").get<double>() / total));
    }
    auto flips = json::parse(read_file(dir / "a" / "flips.json"));
    CHECK(flips.at("changed").get<int>() >= 1);

    auto shown = cli_run({"report", "--report", (dir / "a" / "report.json").string()});
    CHECK(shown.code == 0);
    CHECK(shown.out == read_file(dir / "a" / "report.txt"));
}

TEST_CASE("a response without recorded completions is a partial failure") {
    TempDir dir;
    auto rows = jsonl(fixture_dir() / "corpus" / "responses.jsonl");
    std::string text;
    for (const auto& r : rows) text += r.dump() + "\n";
    text += json{{"id", "fb-eiffel:gamma"}, {"prompt_id", "fb-eiffel"}, {"model_id", "gamma"},
                 {"text", "The Eiffel Tower is made of cheese."}}
                .dump() +
            "\n";
    write_file_atomic(dir / "r.jsonl", text);
    auto run = cli_run({"evaluate", "--config", corpus_config(), "--responses", (dir / "r.jsonl").string(), "--out",
                        (dir / "o").string()});
    CHECK(run.code == cli::kPartialFailure);
    auto report = json::parse(read_file(dir / "o" / "report.json"));
    CHECK(report.at("per_response").size() == 10);
    auto manifest = json::parse(read_file(dir / "o" / "run_manifest.json"));
    CHECK_FALSE(manifest.at("failures").empty());
}

TEST_CASE("snapshot then offline replay gives the online labels") {
    TempDir dir;
    LiveWorld live(dir);
    auto cfg = (dir / "config.json").string();
    auto online = cli_run({"snapshot", "--config", cfg, "--out", (dir / "online").string()}, live.llm, live.web);
    REQUIRE(online.code == cli::kSuccess);
    CHECK(live.web->searches() > 0);
    CHECK(fs::exists(dir / "snapshot" / "snapshot.json"));

    auto sentinel = std::make_shared<CountingTransport>();
    auto offline = cli_run({"verify", "--config", cfg, "--mode", "replay", "--evidence", "offline", "--out",
                            (dir / "offline").string()},
                           sentinel, sentinel);
    REQUIRE(offline.code == cli::kSuccess);
    CHECK(sentinel->count() == 0);
    auto a = labels_of(dir / "online" / "verified.jsonl");
    auto b = labels_of(dir / "offline" / "verified.jsonl");
    CHECK(a.size() > 10);
    CHECK(a == b);
}

TEST_CASE("human references make no search traffic") {
    TempDir dir;
    LiveWorld live(dir);
    auto run = cli_run({"reference", "--config", (dir / "config.json").string(), "--provenance", "human", "--out",
                        (dir / "o").string()},
                       live.llm, live.web);
    REQUIRE(run.code == cli::kSuccess);
    CHECK(live.web->searches() == 0);
    CHECK(live.web->fetches() == 0);
    CHECK(live.llm->calls(TemplateId::FactVerification) == 0);
    auto refs = jsonl(dir / "o" / "references.jsonl");
    CHECK(refs.size() == 5);
    for (const auto& r : refs) CHECK(r.at("provenance") == "HumanAnswers");
}

TEST_CASE("agreement") {
    TempDir dir;
    write_file_atomic(dir / "a.jsonl", "{\"id\":1,\"label\":\"yes\"}\n{\"id\":2,\"label\":\"no\"}\n{\"id\":3,\"label\":\"yes\"}\n");
    write_file_atomic(dir / "b.jsonl", "{\"id\":3,\"label\":\"yes\"}\n{\"id\":2,\"label\":\"no\"}\n{\"id\":1,\"label\":\"yes\"}\n");
    auto same = cli_run({"agreement", "--a", (dir / "a.jsonl").string(), "--b", (dir / "b.jsonl").string(),
                         "--positive", "yes", "--out", (dir / "o").string()});
    REQUIRE(same.code == cli::kSuccess);
    auto result = json::parse(read_file(dir / "o" / "agreement.json"));
    CHECK(result.at("kappa") == 1.0);
    CHECK(result.at("recall_of_b") == 1.0);

    write_file_atomic(dir / "c.jsonl", "{\"id\":1,\"label\":\"yes\"}\n");
    CHECK(cli_run({"agreement", "--a", (dir / "a.jsonl").string(), "--b", (dir / "c.jsonl").string(), "--out",
                   (dir / "o").string()})
              .code == cli::kUsageError);
}
