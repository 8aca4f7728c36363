#include <doctest.h>

#include "support/harness.hpp"
#include "support/oracles.hpp"

#include "verifact/verification.hpp"

#include <algorithm>
#include <numeric>
#include <random>

using namespace verifact;
using namespace verifact::testing;
namespace oracle = verifact::testing::oracle;

namespace {

PageRef page(std::string url, std::string text) {
    return PageRef{std::move(url), FetchStatus::Ok, std::move(text), "", ""};
}

struct Web {
    std::shared_ptr<FakeWeb> web = std::make_shared<FakeWeb>();
    SearchClient search{SearchConfig{web->search_endpoint(), "key", "X-API-KEY", 10, std::chrono::seconds(1)}, web};
    PageFetcher fetcher{web, std::chrono::seconds(1)};

    OnlineSource source(SnapshotRecorder* recorder = nullptr, std::string prompt = "p1") {
        return OnlineSource{&search, &fetcher, recorder, std::move(prompt), 2};
    }
};

}  // namespace

TEST_CASE("query list parsing") {
    CHECK(parse_query_list("- first query\n2. second query\nnoise line\n* third") ==
          std::vector<std::string>{"first query", "second query", "third"});
    CHECK(parse_query_list("nothing here").empty());
}

TEST_CASE("query generation") {
    Harness h([](TemplateId id, const Bindings& b, const std::string&) -> std::optional<std::string> {
        if (id != TemplateId::QueryParaphrase) return std::nullopt;
        if (b.at("previous_queries") == "(none)") return "- gold price record\n- Gold Price   Record\n- gold 2023";
        CHECK(b.at("previous_queries") == "- gold price record\n- Gold Price   Record\n- gold 2023");
        return "- gold price record\n- bullion high";
    });
    std::string fact = "Gold prices hit a record in 2023.";
    auto q = generate_queries(fact, *h);
    CHECK(q == std::vector<std::string>{fact, "gold price record", "gold 2023", "bullion high"});
    CHECK(h.llm->calls(TemplateId::QueryParaphrase) == 2);

    Harness down([](TemplateId, const Bindings&, const std::string&) { return std::nullopt; });
    std::vector<std::string> diagnostics;
    CHECK(generate_queries(fact, *down, 0, 2, &diagnostics) == std::vector<std::string>{fact});
    CHECK(diagnostics.size() == 1);
    CHECK_THROWS_AS(generate_queries("  ", *h), std::invalid_argument);
}

TEST_CASE("search client") {
    auto web = std::make_shared<FakeWeb>();
    web->set_results("gold", {"https://a.test/1", "https://a.test/2", "https://a.test/3"});
    web->failing_queries = {"broken"};
    SearchClient client({web->search_endpoint(), "key", "X-API-KEY", 2, std::chrono::seconds(1)}, web);
    CHECK(client.search("gold") == std::vector<std::string>{"https://a.test/1", "https://a.test/2"});
    CHECK_THROWS_AS(client.search("broken"), SearchApiError);
    SearchClient keyless({web->search_endpoint(), "", "X-API-KEY", 2, std::chrono::seconds(1)}, web);
    CHECK_THROWS_AS(keyless.search("gold"), ConfigError);
    CHECK_THROWS_AS(parse_search_results("not json", 10), SearchApiError);
    CHECK(parse_search_results(R"({"organic":[{"link":"u1"},{"title":"x"},{"link":"u2"}]})", 10) ==
          std::vector<std::string>{"u1", "u2"});
    CHECK(parse_search_results(R"({"answerBox":{}})", 10).empty());
}

TEST_CASE("page fetcher") {
    auto web = std::make_shared<FakeWeb>();
    web->add_page("https://a.test/p", {200, "<html><body><p>Gold is dense and soft.</p><p>Second para.</p></body></html>"});
    web->add_page("https://a.test/txt", {200, "  plain body text  \n", "text/plain"});
    web->add_page("https://a.test/missing", {404, "not found"});
    web->add_page("https://a.test/empty", {200, "<html><script>x()</script></html>"});
    PageFetcher fetcher(web);
    auto p = fetcher.fetch("https://a.test/p");
    CHECK(p.text.find("Gold is dense and soft.") != std::string::npos);
    CHECK(p.text.find("<p>") == std::string::npos);
    CHECK(p.raw_size > p.text.size());
    CHECK(fetcher.fetch("https://a.test/txt").text == "plain body text");
    CHECK_THROWS_AS(fetcher.fetch("https://a.test/missing"), FetchError);
    CHECK_THROWS_AS(fetcher.fetch("https://a.test/empty"), FetchError);
    CHECK_THROWS_AS(fetcher.fetch("https://nowhere.test/"), FetchError);
}

TEST_CASE("online retrieval pools queries and survives failures") {
    Web w;
    w.web->add_page("https://a.test/1", {200, "<p>Gold prices rose sharply in 2023.</p>"});
    w.web->add_page("https://a.test/2", {200, "<p>Gold prices rose sharply in 2023.</p>"});
    w.web->add_page("https://a.test/3", {200, "<p>Central banks bought bullion.</p>"});
    w.web->add_page("https://a.test/4", {500, "oops"});
    w.web->set_results("q1", {"https://a.test/1", "https://a.test/4"});
    w.web->set_results("q2", {"https://a.test/3", "https://a.test/1", "https://a.test/2"});
    w.web->failing_queries = {"q3"};
    auto got = retrieve_evidence({"q1", "q3", "q2"}, w.source());
    REQUIRE(got.pages.size() == 3);
    CHECK(got.pages[0].url == "https://a.test/1");
    CHECK(got.pages[1].url == "https://a.test/3");
    CHECK(got.pages[2].status == FetchStatus::Failed);
    CHECK(got.pages[2].url == "https://a.test/4");
    CHECK(got.failures.size() == 2);
    CHECK(w.web->fetches() == 4);
    CHECK(w.web->searches() == 3);
}

TEST_CASE("online retrieval with every fetch failing is empty but not fatal") {
    Web w;
    w.web->set_results("q", {"https://dead.test/1", "https://dead.test/2"});
    auto got = retrieve_evidence({"q"}, w.source());
    for (const auto& p : got.pages) CHECK(p.status == FetchStatus::Failed);
    CHECK(rank_snippets("q", got.pages, 5).empty());
    CHECK(got.failures.size() == 2);
}

TEST_CASE("offline retrieval uses the snapshot and no network") {
    TempDir dir;
    EvidenceStore store(dir.path());
    SnapshotManifest m;
    m.prompt_id = "p1";
    for (int i = 0; i < 3; ++i) {
        PageSnapshot s{"https://a.test/" + std::to_string(i), "", "", "Stored page number " + std::to_string(i) + ".", 0};
        auto h = store.put_page(s);
        m.page_hashes.push_back(h);
        m.pages.push_back({h, s.url, "", 0});
    }
    m.queries = {{"q0", {m.page_hashes[2]}}, {"q1", {m.page_hashes[2], m.page_hashes[0]}}};
    store.write_manifest(m);

    auto counter = std::make_shared<CountingTransport>();
    SearchClient search({"https://search.test/search", "key"}, counter);
    PageFetcher fetcher(counter);
    (void)search;
    (void)fetcher;

    auto all = retrieve_evidence({"some other query"}, OfflineSource{&store, "p1"});
    REQUIRE(all.pages.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(all.pages[i].text == "Stored page number " + std::to_string(i) + ".");
        CHECK(all.pages[i].url == "https://a.test/" + std::to_string(i));
    }
    auto narrowed = retrieve_evidence({"q1", "q0"}, OfflineSource{&store, "p1"});
    REQUIRE(narrowed.pages.size() == 2);
    CHECK(narrowed.pages[0].url == "https://a.test/2");
    CHECK(narrowed.pages[1].url == "https://a.test/0");
    CHECK(counter->count() == 0);
    CHECK_THROWS_AS(retrieve_evidence({"q"}, OfflineSource{&store, "unknown"}), SnapshotMiss);
}

TEST_CASE("recorded online run replays offline to the same pages") {
    TempDir dir;
    EvidenceStore store(dir.path());
    SnapshotRecorder recorder(store);
    Web w;
    for (int i = 0; i < 4; ++i)
        w.web->add_page("https://a.test/" + std::to_string(i), {200, "<p>Page body number " + std::to_string(i) + " lives here.</p>"});
    w.web->set_results("q1", {"https://a.test/0", "https://a.test/1"});
    w.web->set_results("q2", {"https://a.test/2", "https://a.test/0", "https://a.test/9"});
    w.web->set_results("other", {"https://a.test/3"});
    auto online = retrieve_evidence({"q1", "q2"}, w.source(&recorder));
    retrieve_evidence({"other"}, w.source(&recorder));
    recorder.flush("2026-01-01T00:00:00Z");

    auto offline = retrieve_evidence({"q1", "q2"}, OfflineSource{&store, "p1"});
    std::vector<std::string> a, b;
    for (const auto& p : online.pages)
        if (p.status == FetchStatus::Ok) a.push_back(p.text);
    for (const auto& p : offline.pages) b.push_back(p.text);
    CHECK(a.size() == 3);
    CHECK(a == b);
    CHECK(retrieve_evidence({"unrecorded"}, OfflineSource{&store, "p1"}).pages.size() == 4);
}

TEST_CASE("paragraph splitting") {
    auto paras = split_paragraphs("Short.\n\nThis paragraph is long enough.\nIt continues here.\n\n\n  Another long paragraph here.  ");
    REQUIRE(paras.size() == 2);
    CHECK(paras[0] == "This paragraph is long enough.\nIt continues here.");
    CHECK(paras[1] == "Another long paragraph here.");
}

TEST_CASE("lexical scorer equals the formula") {
    std::mt19937 rng(21);
    const std::vector<std::string> vocab{"gold", "price", "rose", "bank", "silver", "the", "in", "2023", "fell"};
    std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1), len(1, 12), count(1, 8);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::string> docs(count(rng));
        for (auto& d : docs)
            for (auto n = len(rng); n > 0; --n) d += vocab[pick(rng)] + " ";
        std::string query;
        for (auto n = len(rng) / 3 + 1; n > 0; --n) query += vocab[pick(rng)] + " ";
        auto got = LexicalScorer().score(query, docs);
        for (std::size_t i = 0; i < docs.size(); ++i) CHECK(got[i] == doctest::Approx(oracle::bm25(query, docs, i)));
    }
}

TEST_CASE("rank_snippets examples") {
    std::vector<PageRef> pages{page("u0", "Silver is a precious metal used in jewelry.\n\nGold prices rose sharply in 2023."),
                               page("u1", "Central banks bought gold in large amounts.")};
    auto top = rank_snippets("Gold prices rose sharply in 2023.", pages, 5);
    REQUIRE(top.size() == 3);
    CHECK(top[0].text == "Gold prices rose sharply in 2023.");
    CHECK(top[0].source_url == "u0");
    CHECK(top[0].paragraph_index == 1);
    CHECK(rank_snippets("gold", pages, 1).size() == 1);
    CHECK(rank_snippets("gold", {}, 5).empty());
    CHECK_THROWS_AS(rank_snippets("gold", pages, 0), std::invalid_argument);
    pages[0].status = FetchStatus::Failed;
    for (const auto& s : rank_snippets("gold", pages, 5)) CHECK(s.page_index == 1);
}

TEST_CASE("rank_snippets matches a full sort of brute-force scores") {
    std::mt19937 rng(4);
    const std::vector<std::string> vocab{"gold", "price", "rose", "bank", "silver", "2023", "fell", "metal"};
    std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1), words(4, 10), paras(1, 4), npages(1, 4),
        kpick(1, 8);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<PageRef> pages;
        for (auto p = npages(rng); p > 0; --p) {
            std::string text;
            for (auto n = paras(rng); n > 0; --n) {
                for (auto w = words(rng); w > 0; --w) text += vocab[pick(rng)] + " ";
                text += "\n\n";
            }
            pages.push_back(page("u" + std::to_string(pages.size()), text));
        }
        std::vector<std::string> queries{vocab[pick(rng)] + " " + vocab[pick(rng)], vocab[pick(rng)]};
        auto k = kpick(rng);

        struct Row {
            double score;
            std::size_t page, para;
            std::string text;
        };
        std::vector<Row> rows;
        std::vector<std::string> all;
        for (std::size_t p = 0; p < pages.size(); ++p) {
            auto ps = split_paragraphs(pages[p].text);
            for (std::size_t i = 0; i < ps.size(); ++i) {
                rows.push_back({0, p, i, ps[i]});
                all.push_back(ps[i]);
            }
        }
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (const auto& q : queries) rows[r].score = std::max(rows[r].score, oracle::bm25(q, all, r));
        std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
            if (std::abs(a.score - b.score) > 1e-9) return a.score > b.score;
            return std::tie(a.page, a.para) < std::tie(b.page, b.para);
        });
        rows.resize(std::min(rows.size(), k));

        auto got = rank_snippets(queries, pages, k);
        REQUIRE(got.size() == rows.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].score == doctest::Approx(rows[i].score));
            if (i > 0) CHECK(got[i - 1].score >= got[i].score);
            if (i + 1 < rows.size() && std::abs(rows[i].score - rows[i + 1].score) < 1e-9 &&
                i > 0 && std::abs(rows[i].score - rows[i - 1].score) < 1e-9)
                continue;
            CHECK(got[i].text == rows[i].text);
        }
        CHECK(rank_snippets(queries, pages, k).size() == got.size());
    }
}

TEST_CASE("verdict parsing") {
    std::string why;
    CHECK(parse_verdict("The evidence mentions Contradicted facts.\nLabel: Supported", &why) == VerificationLabel::Supported);
    CHECK(parse_verdict("Supported at first.\nLabel: Contradicted\nLabel: Undecided") == VerificationLabel::Undecided);
    CHECK(parse_verdict("This claim is contradicted by [1].") == VerificationLabel::Contradicted);
    CHECK(parse_verdict("no idea") == VerificationLabel::Undecided);
}

TEST_CASE("classify_fact") {
    Harness h([](TemplateId id, const Bindings& b, const std::string&) -> std::optional<std::string> {
        if (id != TemplateId::FactVerification) return std::nullopt;
        CHECK(b.at("evidence").starts_with("[1] "));
        if (b.at("evidence").find("not") != std::string::npos) return "The evidence negates it.\nLabel: Contradicted";
        return "Label: Supported";
    });
    FactRecord fact{"f1", "r1", "Water boils at 100 degrees at sea level."};
    auto none = classify_fact(fact, {}, *h);
    CHECK(none.label == VerificationLabel::Undecided);
    CHECK(h.llm->calls() == 0);
    Snippet yes{"Water boils at 100 degrees at sea level, as measured.", 1.0, "u", 0, 0};
    CHECK(classify_fact(fact, {yes}, *h).label == VerificationLabel::Supported);
    Snippet no{"Water does not boil at 100 degrees at sea level.", 1.0, "u", 0, 0};
    CHECK(classify_fact(fact, {no}, *h).label == VerificationLabel::Contradicted);
    CHECK(format_evidence({yes, no}) ==
          "[1] Water boils at 100 degrees at sea level, as measured. (source: u)\n"
          "[2] Water does not boil at 100 degrees at sea level. (source: u)");

    Harness down([](TemplateId, const Bindings&, const std::string&) { return std::nullopt; });
    auto failed = classify_fact(fact, {yes}, *down);
    CHECK(failed.label == VerificationLabel::Undecided);
    CHECK_FALSE(failed.rationale.empty());
}

TEST_CASE("verify_fact end to end") {
    Web w;
    w.web->add_page("https://a.test/w", {200, "<p>Water boils at 100 degrees Celsius at sea level.</p>"});
    w.web->search_fn = [](const std::string&) { return std::vector<std::string>{"https://a.test/w", "https://x.test/"}; };
    Harness h([](TemplateId id, const Bindings&, const std::string&) -> std::optional<std::string> {
        if (id == TemplateId::QueryParaphrase) return "- water boiling point";
        if (id == TemplateId::FactVerification) return "Label: Supported";
        return std::nullopt;
    });
    FactRecord fact{"f1", "r1", "Water boils at 100 degrees."};
    auto v = verify_fact(fact, w.source(), *h);
    CHECK(v.outcome.label == VerificationLabel::Supported);
    CHECK(v.outcome.bundle_id == "f1");
    CHECK(v.bundle.queries.size() == 2);
    CHECK(v.bundle.snippets.size() == 1);
    CHECK_FALSE(v.bundle.diagnostics.empty());

    auto round = json(v.bundle).get<EvidenceBundle>();
    CHECK(round.queries == v.bundle.queries);
    CHECK(round.snippets.size() == 1);
    CHECK_FALSE(json(v.bundle).dump().find("\"text\":\"Water boils at 100 degrees Celsius") == std::string::npos);
}
