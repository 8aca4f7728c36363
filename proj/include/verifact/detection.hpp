#pragma once

#include "verifact/core.hpp"
#include "verifact/extraction.hpp"
#include "verifact/gateway.hpp"
#include "verifact/spanmap.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace verifact {

struct IncompletenessJudgment {
    std::string fact_id;
    std::string judge;
    bool is_incomplete = false;
    std::optional<IncompletenessCategory> category;  ///< present iff is_incomplete
    std::string rationale;
    std::optional<std::string> diagnostic;  ///< set when the verdict was a parse/gateway fallback
};

struct RelationJudgment {
    MissingSpan span;
    std::string judge;
    bool indicates_relation = false;
    std::optional<RelationType> relation;  ///< present iff indicates_relation
    std::string rationale;
    std::optional<std::string> diagnostic;
};

struct HumanAnnotation {
    bool is_incomplete = false;
    ConfidenceLevel confidence = ConfidenceLevel::Low;
};

/// Maps a "Dependent Type" answer onto the four incompleteness categories.
IncompletenessCategory map_dependent_type(std::string_view answer);

/// Interprets a completeness-check completion. Throws ParseError when no
/// Dependent/Independent classification can be found.
IncompletenessJudgment parse_incompleteness(std::string_view completion, std::string fact_id, std::string judge);

/// Interprets a missing-relation completion. Comparison/Expansion/NO give a
/// negative judgment. Throws ParseError when neither YES nor NO is present,
/// or YES comes without a level-1 relation.
RelationJudgment parse_relation(std::string_view completion, MissingSpan span, std::string judge);

/// Renders the completeness check with the whole response as context. With
/// `strict` false a ParseError becomes a negative judgment with a diagnostic.
IncompletenessJudgment detect_incomplete(const FactRecord& fact, const ModelResponse& context, Gateway& gateway,
                                         std::size_t judge_index, bool strict = false);

RelationJudgment classify_missing_span(const MissingSpan& span, const ModelResponse& response, Gateway& gateway,
                                       std::size_t judge_index);

/// Self-reflection: does any current fact already express the span? A fact
/// containing the span verbatim (normalized) answers true without a call.
/// Unparseable output answers false.
bool reflect_span_covered(const MissingSpan& span, std::span<const FactRecord> facts, Gateway& gateway,
                          std::size_t judge_index);

/// Union merge over one item's panel verdicts (panel order). The category
/// is the majority among positive judges; ties go to the earliest judge.
/// Throws EmptyInput on an empty list.
std::optional<MergedIssue> ensemble_merge(std::span<const IncompletenessJudgment> per_judge);
std::optional<MergedIssue> ensemble_merge(std::span<const RelationJudgment> per_judge);

/// Positive iff some annotator is positive with high confidence or at least
/// two annotators are positive. Throws EmptyInput on an empty list.
bool merge_human_annotations(std::span<const HumanAnnotation> annotations);

struct DetectionOptions {
    bool strict = false;
    bool reflect = true;
    std::size_t reflection_judge = 0;
    std::size_t jobs = 1;
    SpanFilter span_filter;
};

struct DetectionResult {
    std::string response_id;
    std::vector<FactRecord> facts;             ///< input facts with Incomplete issues attached
    std::vector<MissingSpan> spans;            ///< candidate spans from the span mapper
    std::vector<MergedIssue> relation_issues;  ///< MissingRelation issues that survived reflection
    std::vector<json> audit;                   ///< one entry per judgment
};

void to_json(json& j, const DetectionResult& d);
void from_json(const json& j, DetectionResult& d);

/// Step 2 over one decomposed response, using every judge of the panel.
DetectionResult detect(const DecompositionResult& decomposition, const ModelResponse& response, Gateway& gateway,
                       const DetectionOptions& options = {});

}  // namespace verifact
