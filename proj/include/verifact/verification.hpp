#pragma once

#include "verifact/core.hpp"
#include "verifact/evidence.hpp"
#include "verifact/gateway.hpp"
#include "verifact/transport.hpp"

#include <chrono>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace verifact {

enum class FetchStatus { Ok, Failed };
VERIFACT_ENUM_NAMES(FetchStatus, std::pair{FetchStatus::Ok, std::string_view{"Ok"}},
                    std::pair{FetchStatus::Failed, std::string_view{"Failed"}});

struct PageRef {
    std::string url;
    FetchStatus status = FetchStatus::Ok;
    std::string text;
    std::string error;
    std::string content_hash;  ///< empty for failed pages
};

struct Snippet {
    std::string text;
    double score = 0.0;
    std::string source_url;
    std::size_t page_index = 0;
    std::size_t paragraph_index = 0;
};

struct EvidenceBundle {
    std::string fact_id;
    std::vector<std::string> queries;
    std::vector<PageRef> pages;
    std::vector<Snippet> snippets;  ///< best first, at most snippet_k
    std::vector<std::string> diagnostics;
};

void to_json(json& j, const PageRef& p);
void from_json(const json& j, PageRef& p);
void to_json(json& j, const Snippet& s);
void from_json(const json& j, Snippet& s);
void to_json(json& j, const EvidenceBundle& b);
void from_json(const json& j, EvidenceBundle& b);

/// Parses a bulleted or numbered list of queries; other lines are ignored.
std::vector<std::string> parse_query_list(std::string_view raw);

/// The fact text followed by the paraphrases from `rounds` rounds, each
/// round seeded with everything written so far. Duplicates (after
/// normalization) are dropped. A gateway failure ends generation early and
/// keeps what was collected; the fact text itself is always returned.
std::vector<std::string> generate_queries(const std::string& fact_text, Gateway& gateway,
                                          std::size_t judge_index = 0, int rounds = 2,
                                          std::vector<std::string>* diagnostics = nullptr);

struct SearchConfig {
    std::string endpoint = "https://google.serper.dev/search";
    std::string api_key;  ///< VERIFACT_SEARCH_KEY
    std::string api_key_header = "X-API-KEY";
    std::size_t top_n = 10;
    std::chrono::milliseconds timeout{10'000};
};

/// Serper-compatible search: POST {"q": query}, read organic[].link.
class SearchClient {
  public:
    SearchClient(SearchConfig config, std::shared_ptr<Transport> transport);
    /// Throws ConfigError without an API key, SearchApiError on any failure.
    std::vector<std::string> search(const std::string& query) const;
    const SearchConfig& config() const noexcept { return config_; }

  private:
    SearchConfig config_;
    std::shared_ptr<Transport> transport_;
};

/// Reads organic[].link from a search response body; throws SearchApiError.
std::vector<std::string> parse_search_results(const std::string& body, std::size_t top_n);

class PageFetcher {
  public:
    explicit PageFetcher(std::shared_ptr<Transport> transport, std::chrono::milliseconds timeout = std::chrono::seconds(10),
                         std::string user_agent = "verifact/" VERIFACT_VERSION);
    /// GET and extract text. Throws FetchError on transport failure, a
    /// non-2xx status, or a page without usable text.
    PageSnapshot fetch(const std::string& url) const;

  private:
    std::shared_ptr<Transport> transport_;
    std::chrono::milliseconds timeout_;
    std::string user_agent_;
};

struct OnlineSource {
    const SearchClient* search = nullptr;
    const PageFetcher* fetcher = nullptr;
    SnapshotRecorder* recorder = nullptr;  ///< optional
    std::string prompt_id;
    std::size_t jobs = 4;
};

struct OfflineSource {
    const EvidenceStore* store = nullptr;
    std::string prompt_id;
};

using EvidenceSource = std::variant<OnlineSource, OfflineSource>;

struct RetrievedEvidence {
    std::vector<PageRef> pages;  ///< usable pages first-seen order, then failures
    std::vector<std::string> failures;
};

/// Online: searches every query, fetches each distinct URL once and keeps
/// pages in first-seen order; search and fetch failures are recorded and
/// skipped. Offline: when the snapshot recorded every one of `queries`, the
/// same page pool is rebuilt from the per-query lists; otherwise all pages
/// stored for the prompt are returned. Throws SnapshotMiss / CorruptEntry.
RetrievedEvidence retrieve_evidence(const std::vector<std::string>& queries, const EvidenceSource& source);

/// Blank-line delimited paragraphs of at least `min_chars` characters.
std::vector<std::string> split_paragraphs(std::string_view text, std::size_t min_chars = 20);

class RelevanceScorer {
  public:
    virtual ~RelevanceScorer() = default;
    /// One score per paragraph; the paragraph list is the whole collection.
    virtual std::vector<double> score(const std::string& query, const std::vector<std::string>& paragraphs) const = 0;
};

/// Okapi BM25 over the paragraph collection (tokens from `tokenize`).
class LexicalScorer final : public RelevanceScorer {
  public:
    explicit LexicalScorer(double k1 = 1.2, double b = 0.75) : k1_(k1), b_(b) {}
    std::vector<double> score(const std::string& query, const std::vector<std::string>& paragraphs) const override;

  private:
    double k1_;
    double b_;
};

const RelevanceScorer& default_scorer();

/// Top-k paragraphs of the usable pages by score; ties keep the earlier
/// page, then the earlier paragraph.
std::vector<Snippet> rank_snippets(const std::string& query, const std::vector<PageRef>& pages, std::size_t k,
                                   const RelevanceScorer& scorer = default_scorer());

/// Multi-query form: a paragraph's score is its best score over the queries.
std::vector<Snippet> rank_snippets(const std::vector<std::string>& queries, const std::vector<PageRef>& pages,
                                   std::size_t k, const RelevanceScorer& scorer = default_scorer());

std::string format_evidence(const std::vector<Snippet>& snippets);

/// Reads the final "Label:" line if present, otherwise the first label name
/// anywhere; unparseable output is Undecided.
VerificationLabel parse_verdict(std::string_view raw, std::string* rationale = nullptr);

/// Empty snippets give Undecided without a judge call; gateway errors give
/// Undecided with the error as rationale.
VerificationOutcome classify_fact(const FactRecord& fact, const std::vector<Snippet>& snippets, Gateway& gateway,
                                  std::size_t judge_index = 0);

struct VerifyOptions {
    std::size_t judge_index = 0;
    std::size_t snippet_k = 5;
    int query_rounds = 2;
    const RelevanceScorer* scorer = nullptr;  ///< default_scorer() when null
};

struct VerifiedFact {
    VerificationOutcome outcome;
    EvidenceBundle bundle;
};

/// Queries, evidence, ranking and classification for one fact. Never throws
/// for per-query or per-page failures; SnapshotMiss and CorruptEntry propagate.
VerifiedFact verify_fact(const FactRecord& fact, const EvidenceSource& source, Gateway& gateway,
                         const VerifyOptions& options = {});

}  // namespace verifact
