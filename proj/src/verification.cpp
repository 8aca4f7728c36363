#include "verifact/verification.hpp"

#include "verifact/digest.hpp"
#include "verifact/html.hpp"
#include "verifact/judge_parsing.hpp"
#include "verifact/parallel.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace verifact {

void to_json(json& j, const PageRef& p) {
    j = json{{"url", p.url}, {"status", p.status}, {"content_hash", p.content_hash}};
    if (p.status == FetchStatus::Failed) j["error"] = p.error;
}

void from_json(const json& j, PageRef& p) {
    p.url = j.at("url").get<std::string>();
    p.status = j.at("status").get<FetchStatus>();
    p.content_hash = j.value("content_hash", std::string{});
    p.error = j.value("error", std::string{});
    p.text = j.value("text", std::string{});
}

void to_json(json& j, const Snippet& s) {
    j = json{{"text", s.text},
             {"score", s.score},
             {"source_url", s.source_url},
             {"page_index", s.page_index},
             {"paragraph_index", s.paragraph_index}};
}

void from_json(const json& j, Snippet& s) {
    s.text = j.at("text").get<std::string>();
    s.score = j.at("score").get<double>();
    s.source_url = j.value("source_url", std::string{});
    s.page_index = j.value("page_index", std::size_t{0});
    s.paragraph_index = j.value("paragraph_index", std::size_t{0});
}

void to_json(json& j, const EvidenceBundle& b) {
    j = json{{"fact_id", b.fact_id}, {"queries", b.queries}, {"pages", b.pages}, {"snippets", b.snippets}};
    if (!b.diagnostics.empty()) j["diagnostics"] = b.diagnostics;
}

void from_json(const json& j, EvidenceBundle& b) {
    b.fact_id = j.at("fact_id").get<std::string>();
    b.queries = j.at("queries").get<std::vector<std::string>>();
    b.pages = j.at("pages").get<std::vector<PageRef>>();
    b.snippets = j.at("snippets").get<std::vector<Snippet>>();
    b.diagnostics = j.value("diagnostics", std::vector<std::string>{});
}

std::vector<std::string> parse_query_list(std::string_view raw) {
    std::vector<std::string> out;
    for (const auto& line : split_lines(raw)) {
        auto t = trim(line);
        std::string item;
        if (t.size() > 1 && (t[0] == '-' || t[0] == '*' || t[0] == '+') && t[1] == ' ') {
            item = trim(std::string_view(t).substr(2));
        } else {
            std::size_t i = 0;
            while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
            if (i == 0 || i + 1 >= t.size() || (t[i] != '.' && t[i] != ')') || t[i + 1] != ' ') continue;
            item = trim(std::string_view(t).substr(i + 2));
        }
        if (item.size() >= 2 && item.front() == '"' && item.back() == '"') item = item.substr(1, item.size() - 2);
        if (!item.empty()) out.push_back(std::move(item));
    }
    return out;
}

std::vector<std::string> generate_queries(const std::string& fact_text, Gateway& gateway, std::size_t judge_index,
                                          int rounds, std::vector<std::string>* diagnostics) {
    if (trim(fact_text).empty()) throw std::invalid_argument("fact text must be non-empty");
    std::vector<std::string> queries{fact_text};
    std::set<std::string> seen{normalize(fact_text)};
    std::vector<std::string> generated;
    for (int round = 0; round < rounds; ++round) {
        std::string previous;
        for (const auto& q : generated) previous += "- " + q + "\n";
        if (previous.empty()) previous = "(none)";
        PromptRequest req{TemplateId::QueryParaphrase, {{"claim", fact_text}, {"previous_queries", trim(previous)}}, judge_index};
        std::string raw;
        try {
            raw = gateway.complete(req);
        } catch (const GatewayError& e) {
            spdlog::warn("query generation stopped after {} round(s): {}", round, e.what());
            if (diagnostics) diagnostics->push_back(std::string("query generation: ") + e.what());
            break;
        }
        for (auto& q : parse_query_list(raw)) {
            generated.push_back(q);
            if (seen.insert(normalize(q)).second) queries.push_back(std::move(q));
        }
    }
    return queries;
}

SearchClient::SearchClient(SearchConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {}

std::vector<std::string> parse_search_results(const std::string& body, std::size_t top_n) {
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::exception& e) {
        throw SearchApiError(std::string("malformed search response: ") + e.what());
    }
    std::vector<std::string> urls;
    if (!doc.is_object()) throw SearchApiError("search response is not an object");
    auto it = doc.find("organic");
    if (it == doc.end()) return urls;
    if (!it->is_array()) throw SearchApiError("search response 'organic' is not a list");
    for (const auto& result : *it) {
        if (urls.size() >= top_n) break;
        if (result.is_object() && result.contains("link") && result["link"].is_string())
            urls.push_back(result["link"].get<std::string>());
    }
    return urls;
}

std::vector<std::string> SearchClient::search(const std::string& query) const {
    if (config_.api_key.empty()) throw ConfigError("search API key is not configured (VERIFACT_SEARCH_KEY)");
    HttpRequest req;
    req.method = "POST";
    req.url = config_.endpoint;
    req.headers = {{config_.api_key_header, config_.api_key}, {"Content-Type", "application/json"}};
    req.body = json{{"q", query}}.dump();
    req.timeout = config_.timeout;
    HttpResponse resp;
    try {
        resp = transport_->send(req);
    } catch (const NetworkError& e) {
        throw SearchApiError(std::string("search request failed: ") + e.what());
    }
    if (resp.status < 200 || resp.status >= 300)
        throw SearchApiError("search endpoint returned HTTP " + std::to_string(resp.status));
    return parse_search_results(resp.body, config_.top_n);
}

PageFetcher::PageFetcher(std::shared_ptr<Transport> transport, std::chrono::milliseconds timeout, std::string user_agent)
    : transport_(std::move(transport)), timeout_(timeout), user_agent_(std::move(user_agent)) {}

PageSnapshot PageFetcher::fetch(const std::string& url) const {
    HttpRequest req;
    req.method = "GET";
    req.url = url;
    req.headers = {{"User-Agent", user_agent_}};
    req.timeout = timeout_;
    HttpResponse resp;
    try {
        resp = transport_->send(req);
    } catch (const NetworkError& e) {
        throw FetchError(url + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw FetchError(url + ": " + e.what());
    }
    if (resp.status < 200 || resp.status >= 300) throw FetchError(url + ": HTTP " + std::to_string(resp.status));
    PageSnapshot page;
    page.url = url;
    page.raw_size = resp.body.size();
    bool plain = resp.content_type.rfind("text/plain", 0) == 0;
    page.text = plain ? trim(resp.body) : html_to_text(resp.body);
    if (page.text.empty()) throw FetchError(url + ": no text content");
    page.content_hash = sha256_hex(page.text);
    return page;
}

namespace {

PageRef to_ref(const PageSnapshot& s) {
    return PageRef{s.url, FetchStatus::Ok, s.text, {}, s.content_hash.empty() ? sha256_hex(s.text) : s.content_hash};
}

RetrievedEvidence retrieve_online(const std::vector<std::string>& queries, const OnlineSource& src) {
    if (!src.search || !src.fetcher) throw ConfigError("online evidence source is missing a search client or fetcher");
    RetrievedEvidence out;
    std::vector<std::vector<std::string>> per_query(queries.size());
    std::vector<std::string> urls;
    std::unordered_set<std::string> seen_urls;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        try {
            per_query[i] = src.search->search(queries[i]);
        } catch (const SearchApiError& e) {
            out.failures.push_back(std::string("search: ") + e.what());
            continue;
        }
        for (const auto& u : per_query[i])
            if (seen_urls.insert(u).second) urls.push_back(u);
    }

    struct Fetched {
        std::optional<PageSnapshot> page;
        std::string error;
    };
    auto fetched = parallel_map(urls.size(), src.jobs, [&](std::size_t i) {
        Fetched f;
        try {
            f.page = src.fetcher->fetch(urls[i]);
        } catch (const FetchError& e) {
            f.error = e.what();
        }
        return f;
    });

    std::unordered_map<std::string, std::size_t> by_url;
    for (std::size_t i = 0; i < urls.size(); ++i) by_url[urls[i]] = i;

    if (src.recorder) {
        for (std::size_t q = 0; q < queries.size(); ++q) {
            std::vector<PageSnapshot> pages;
            for (const auto& u : per_query[q])
                if (auto& f = fetched[by_url.at(u)]; f.page) pages.push_back(*f.page);
            src.recorder->record(src.prompt_id, queries[q], pages);
        }
    }

    std::unordered_set<std::string> seen_hashes;
    std::vector<PageRef> failed;
    for (std::size_t i = 0; i < urls.size(); ++i) {
        if (fetched[i].page) {
            auto ref = to_ref(*fetched[i].page);
            if (seen_hashes.insert(ref.content_hash).second) out.pages.push_back(std::move(ref));
        } else {
            out.failures.push_back(fetched[i].error);
            failed.push_back(PageRef{urls[i], FetchStatus::Failed, {}, fetched[i].error, {}});
        }
    }
    for (auto& f : failed) out.pages.push_back(std::move(f));
    return out;
}

RetrievedEvidence retrieve_offline(const std::vector<std::string>& queries, const OfflineSource& src) {
    if (!src.store) throw ConfigError("offline evidence source has no store");
    auto manifest = src.store->manifest(src.prompt_id);
    std::unordered_map<std::string, const std::vector<std::string>*> recorded;
    for (const auto& [q, hashes] : manifest.queries) recorded.emplace(q, &hashes);
    bool narrowed = !queries.empty() && std::all_of(queries.begin(), queries.end(),
                                                    [&](const auto& q) { return recorded.count(q) > 0; });
    std::vector<std::string> hashes;
    if (narrowed) {
        std::unordered_set<std::string> seen;
        for (const auto& q : queries)
            for (const auto& h : *recorded.at(q))
                if (seen.insert(h).second) hashes.push_back(h);
    } else {
        hashes = manifest.page_hashes;
    }
    RetrievedEvidence out;
    for (const auto& h : hashes) {
        PageRef ref;
        ref.content_hash = h;
        ref.text = src.store->read_blob(h);
        for (const auto& meta : manifest.pages)
            if (meta.hash == h) {
                ref.url = meta.url;
                break;
            }
        out.pages.push_back(std::move(ref));
    }
    return out;
}

}  // namespace

RetrievedEvidence retrieve_evidence(const std::vector<std::string>& queries, const EvidenceSource& source) {
    if (const auto* online = std::get_if<OnlineSource>(&source)) return retrieve_online(queries, *online);
    return retrieve_offline(queries, std::get<OfflineSource>(source));
}

std::vector<std::string> split_paragraphs(std::string_view text, std::size_t min_chars) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        auto p = trim(current);
        if (!p.empty() && utf8_length(p) >= min_chars) out.push_back(std::move(p));
        current.clear();
    };
    for (const auto& line : split_lines(text)) {
        if (trim(line).empty()) {
            flush();
        } else {
            if (!current.empty()) current.push_back('\n');
            current += line;
        }
    }
    flush();
    return out;
}

std::vector<double> LexicalScorer::score(const std::string& query, const std::vector<std::string>& paragraphs) const {
    std::vector<std::unordered_map<std::string, int>> tf(paragraphs.size());
    std::vector<double> length(paragraphs.size());
    std::unordered_map<std::string, int> df;
    for (std::size_t i = 0; i < paragraphs.size(); ++i) {
        auto tokens = tokenize(paragraphs[i]);
        length[i] = static_cast<double>(tokens.size());
        for (auto& t : tokens) ++tf[i][t];
        for (const auto& [t, n] : tf[i]) ++df[t];
    }
    double n_docs = static_cast<double>(paragraphs.size());
    double avg = paragraphs.empty() ? 0.0 : std::accumulate(length.begin(), length.end(), 0.0) / n_docs;

    auto q_tokens = tokenize(query);
    std::sort(q_tokens.begin(), q_tokens.end());
    q_tokens.erase(std::unique(q_tokens.begin(), q_tokens.end()), q_tokens.end());

    std::vector<double> scores(paragraphs.size(), 0.0);
    for (const auto& term : q_tokens) {
        auto d = df.find(term);
        if (d == df.end()) continue;
        double idf = std::log(1.0 + (n_docs - d->second + 0.5) / (d->second + 0.5));
        for (std::size_t i = 0; i < paragraphs.size(); ++i) {
            auto f = tf[i].find(term);
            if (f == tf[i].end()) continue;
            double norm = avg > 0 ? (1.0 - b_ + b_ * length[i] / avg) : 1.0;
            scores[i] += idf * f->second * (k1_ + 1.0) / (f->second + k1_ * norm);
        }
    }
    return scores;
}

const RelevanceScorer& default_scorer() {
    static const LexicalScorer scorer;
    return scorer;
}

std::vector<Snippet> rank_snippets(const std::vector<std::string>& queries, const std::vector<PageRef>& pages,
                                   std::size_t k, const RelevanceScorer& scorer) {
    if (k == 0) throw std::invalid_argument("snippet count must be at least 1");
    std::vector<Snippet> candidates;
    std::vector<std::string> paragraphs;
    for (std::size_t p = 0; p < pages.size(); ++p) {
        if (pages[p].status != FetchStatus::Ok) continue;
        auto paras = split_paragraphs(pages[p].text);
        for (std::size_t i = 0; i < paras.size(); ++i) {
            candidates.push_back(Snippet{paras[i], 0.0, pages[p].url, p, i});
            paragraphs.push_back(std::move(paras[i]));
        }
    }
    if (candidates.empty() || queries.empty()) return {};
    for (std::size_t q = 0; q < queries.size(); ++q) {
        auto scores = scorer.score(queries[q], paragraphs);
        for (std::size_t i = 0; i < candidates.size(); ++i)
            candidates[i].score = q == 0 ? scores[i] : std::max(candidates[i].score, scores[i]);
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Snippet& a, const Snippet& b) { return a.score > b.score; });
    if (candidates.size() > k) candidates.resize(k);
    return candidates;
}

std::vector<Snippet> rank_snippets(const std::string& query, const std::vector<PageRef>& pages, std::size_t k,
                                   const RelevanceScorer& scorer) {
    return rank_snippets(std::vector<std::string>{query}, pages, k, scorer);
}

std::string format_evidence(const std::vector<Snippet>& snippets) {
    std::string out;
    for (std::size_t i = 0; i < snippets.size(); ++i) {
        if (i) out += "\n";
        out += "[" + std::to_string(i + 1) + "] " + snippets[i].text;
        if (!snippets[i].source_url.empty()) out += " (source: " + snippets[i].source_url + ")";
    }
    return out;
}

VerificationLabel parse_verdict(std::string_view raw, std::string* rationale) {
    auto lines = split_lines(raw);
    for (std::size_t i = lines.size(); i-- > 0;) {
        auto t = trim(lines[i]);
        auto colon = t.find(':');
        if (colon == std::string::npos || !iequals(trim(std::string_view(t).substr(0, colon)), "label")) continue;
        if (auto label = try_parse_verification_label(std::string_view(t).substr(colon + 1))) {
            if (rationale) {
                std::string r;
                for (std::size_t j = 0; j < i; ++j) r += lines[j] + "\n";
                *rationale = trim(r);
            }
            return *label;
        }
    }
    if (rationale) *rationale = trim(raw);
    return parse_verification_label(raw);
}

VerificationOutcome classify_fact(const FactRecord& fact, const std::vector<Snippet>& snippets, Gateway& gateway,
                                  std::size_t judge_index) {
    VerificationOutcome out;
    out.bundle_id = fact.id;
    if (snippets.empty()) {
        out.label = VerificationLabel::Undecided;
        out.rationale = "no evidence retrieved";
        return out;
    }
    PromptRequest req{TemplateId::FactVerification, {{"claim", fact.text}, {"evidence", format_evidence(snippets)}}, judge_index};
    try {
        auto raw = gateway.complete(req);
        out.label = parse_verdict(raw, &out.rationale);
    } catch (const GatewayError& e) {
        out.label = VerificationLabel::Undecided;
        out.rationale = std::string("gateway error: ") + e.what();
    }
    return out;
}

VerifiedFact verify_fact(const FactRecord& fact, const EvidenceSource& source, Gateway& gateway,
                         const VerifyOptions& options) {
    VerifiedFact result;
    auto& bundle = result.bundle;
    bundle.fact_id = fact.id;
    bundle.queries = generate_queries(fact.text, gateway, options.judge_index, options.query_rounds, &bundle.diagnostics);
    auto evidence = retrieve_evidence(bundle.queries, source);
    bundle.pages = std::move(evidence.pages);
    for (auto& f : evidence.failures) bundle.diagnostics.push_back(std::move(f));
    const auto& scorer = options.scorer ? *options.scorer : default_scorer();
    bundle.snippets = rank_snippets(bundle.queries, bundle.pages, options.snippet_k, scorer);
    result.outcome = classify_fact(fact, bundle.snippets, gateway, options.judge_index);
    return result;
}

}  // namespace verifact
