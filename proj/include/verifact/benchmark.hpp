#pragma once

#include "verifact/core.hpp"
#include "verifact/gateway.hpp"

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace verifact {

enum class ReferenceProvenance { ModelUnion, HumanAnswers };
VERIFACT_ENUM_NAMES(ReferenceProvenance, std::pair{ReferenceProvenance::ModelUnion, std::string_view{"ModelUnion"}},
                    std::pair{ReferenceProvenance::HumanAnswers, std::string_view{"HumanAnswers"}});

struct ReferenceSet {
    std::string prompt_id;
    std::vector<std::string> facts;
    ReferenceProvenance provenance = ReferenceProvenance::ModelUnion;
    std::size_t duplicates_dropped = 0;
};

void to_json(json& j, const ReferenceSet& r);
void from_json(const json& j, ReferenceSet& r);

/// Facts of one processed answer (after refinement, and after verification
/// for ModelUnion).
struct AnswerFacts {
    std::string source_id;
    std::vector<FactRecord> facts;
};

/// Union of the answers' facts in answer order. ModelUnion keeps Supported
/// facts only. Duplicates are dropped on exact normalized text. Throws
/// EmptyInput when there are no answers or nothing survives.
ReferenceSet build_reference_set(const std::string& prompt_id, std::span<const AnswerFacts> answers,
                                 ReferenceProvenance provenance);

struct LabelCounts {
    std::size_t supported = 0;
    std::size_t contradicted = 0;
    std::size_t undecided = 0;
    std::size_t total() const noexcept { return supported + contradicted + undecided; }
    void add(VerificationLabel label);
};

void to_json(json& j, const LabelCounts& c);
void from_json(const json& j, LabelCounts& c);

LabelCounts count_labels(std::span<const FactRecord> facts);

/// Supported / all facts with an outcome. Throws EmptyInput when no fact has one.
double compute_precision(std::span<const FactRecord> facts);
double compute_precision(std::span<const VerificationLabel> labels);

struct RecallResult {
    double recall = 0.0;
    std::size_t entailed = 0;
    std::size_t total = 0;
    std::vector<bool> per_fact;
    std::vector<std::string> flagged;  ///< reference facts judged by fallback
};

/// Entailment of each reference fact by the whole response. An empty
/// response scores 0 without judge calls; failed or unparseable items count
/// as not entailed. Throws EmptyInput on an empty reference set.
RecallResult compute_recall(const ReferenceSet& reference, const ModelResponse& response, Gateway& gateway,
                            std::size_t judge_index = 0, std::size_t jobs = 1);

/// Harmonic mean; 0 when both are 0. Throws std::invalid_argument outside [0,1].
double compute_f1(double precision, double recall);

struct CoverageResult {
    double coverage = 0.0;
    std::size_t supported = 0;
    std::size_t total = 0;
    std::vector<std::optional<std::size_t>> matched;  ///< index into the extracted list
    std::vector<std::string> flagged;
};

/// Which extracted claim (if any) the judge selected. "None of the above",
/// answers that combine several claims, and unrecognized answers give empty.
std::optional<std::size_t> parse_coverage_answer(std::string_view raw, std::span<const std::string> extracted,
                                                 bool* recognized = nullptr);

/// Fraction of human facts supported by a single extracted claim. Throws
/// EmptyInput on an empty human list; an empty extracted list scores 0
/// without judge calls.
CoverageResult coverage_of_human_facts(std::span<const std::string> extracted, std::span<const std::string> human,
                                       Gateway& gateway, std::size_t judge_index = 0, std::size_t jobs = 1);

/// Mean coverage over several human reference sets.
double mean_coverage(std::span<const CoverageResult> results);

struct DivergenceCheck {
    bool divergent = false;
    bool flagged = false;  ///< unparseable or failed; retained
    std::string raw;
};

DivergenceCheck check_divergent(const Prompt& prompt, Gateway& gateway, std::size_t judge_index = 0);
/// True when the prompt should be excluded.
bool filter_divergent(const Prompt& prompt, Gateway& gateway, std::size_t judge_index = 0);

namespace detail {
template <typename Labels>
double kappa(const Labels& a, const Labels& b) {
    using T = typename Labels::value_type;
    if (a.size() != b.size()) throw LengthMismatch(a.size(), b.size());
    if (a.empty()) throw EmptyInput("label vectors");
    std::map<T, std::size_t> ca, cb;
    std::size_t agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++ca[a[i]];
        ++cb[b[i]];
        if (a[i] == b[i]) ++agree;
    }
    double n = static_cast<double>(a.size());
    std::size_t chance = 0;
    for (const auto& [label, count] : ca)
        if (auto it = cb.find(label); it != cb.end()) chance += count * it->second;
    if (chance == a.size() * a.size()) return agree == a.size() ? 1.0 : 0.0;
    double p_o = agree / n;
    double p_e = static_cast<double>(chance) / (n * n);
    return (p_o - p_e) / (1.0 - p_e);
}
}  // namespace detail

/// Cohen's kappa. When chance agreement is 1 the result is 1 for identical
/// vectors and 0 otherwise. Throws LengthMismatch / EmptyInput.
template <typename T>
double cohens_kappa(std::span<const T> a, std::span<const T> b) {
    return detail::kappa(a, b);
}

template <typename T>
double cohens_kappa(const std::vector<T>& a, const std::vector<T>& b) {
    return detail::kappa(a, b);
}

struct FlipReport {
    std::map<std::pair<VerificationLabel, VerificationLabel>, std::size_t> pairs;
    std::size_t changed = 0;
    std::size_t total = 0;
    double rate = 0.0;
};

void to_json(json& j, const FlipReport& r);

/// Throws std::invalid_argument when a key of `before` is missing from `after`.
FlipReport label_flip_report(const std::map<std::string, VerificationLabel>& before,
                             const std::map<std::string, VerificationLabel>& after);
std::string render_flip_report(const FlipReport& report);

struct ResponseScore {
    std::string response_id;
    std::string prompt_id;
    std::string model_id;
    PromptSource source = PromptSource::Custom;
    double precision = 0.0;
    std::optional<double> recall;  ///< absent when the prompt has no reference set
    std::optional<double> f1;
    LabelCounts labels;
    std::vector<std::string> notes;
};

void to_json(json& j, const ResponseScore& s);
void from_json(const json& j, ResponseScore& s);

struct AggregateRow {
    std::string model_id;
    std::string block;  ///< "Overall" or a prompt source
    std::size_t responses = 0;
    double precision = 0.0;                 ///< mean over responses
    std::optional<double> recall;           ///< mean over responses with a recall
    std::optional<double> f1;               ///< from the aggregate precision and recall
};

struct EvaluationReport {
    std::vector<ResponseScore> per_response;
    std::vector<AggregateRow> aggregates;
    std::vector<std::string> notes;
};

void to_json(json& j, const AggregateRow& r);
void to_json(json& j, const EvaluationReport& r);
void from_json(const json& j, EvaluationReport& r);

std::string_view block_name(PromptSource source);

/// Macro-averaged rows per model: Overall, then each prompt source present.
std::vector<AggregateRow> aggregate(std::span<const ResponseScore> scores);
EvaluationReport make_report(std::vector<ResponseScore> scores, std::vector<std::string> notes = {});

/// Aligned text table, one row per model, Precision/Recall/F1 per block in
/// percent with two decimals.
std::string render_table(const EvaluationReport& report);

}  // namespace verifact
