#pragma once

#include "verifact/core.hpp"
#include "verifact/gateway.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace verifact {

enum class RefinementStrategy { ReviseIncomplete, AddRelationFact };

VERIFACT_ENUM_NAMES(RefinementStrategy,
                    std::pair{RefinementStrategy::ReviseIncomplete, std::string_view{"ReviseIncomplete"}},
                    std::pair{RefinementStrategy::AddRelationFact, std::string_view{"AddRelationFact"}});

struct RefinementRecord {
    std::optional<FactRecord> before;  ///< absent for AddRelationFact
    FactRecord after;
    RefinementStrategy strategy = RefinementStrategy::ReviseIncomplete;
    MergedIssue issue;
};

void to_json(json& j, const RefinementRecord& r);
void from_json(const json& j, RefinementRecord& r);

/// The originating question and answer of the response being refined.
struct RefineContext {
    std::string question;
    std::string answer;
    std::string response_id;
    std::size_t judge_index = 0;
};

/// Human-readable category name as used in the completeness-check prompt.
std::string_view category_display_name(IncompletenessCategory category);

/// Rewrites an incomplete fact into a self-contained one. The id is kept and
/// the origin becomes Refined. An unfenced completion leaves the fact as is
/// with a refinement-parse-error flag; an empty or unchanged revision leaves
/// it as is with a refinement-noop flag.
FactRecord refine_incomplete(const FactRecord& fact, const MergedIssue& issue, const RefineContext& context,
                             Gateway& gateway);

/// Writes a new fact stating the missed temporal or contingency relation.
/// Returns empty when the completion has no fenced relationship sentence.
std::optional<FactRecord> synthesize_relation_fact(const MergedIssue& issue, const RefineContext& context,
                                                   Gateway& gateway);

struct RefinementResult {
    std::vector<FactRecord> facts;  ///< input order, then synthesized facts in span order
    std::vector<RefinementRecord> records;
    std::vector<MissingSpan> unresolved;
    std::vector<std::string> errors;
    std::size_t resolved_relations = 0;
};

/// Applies both strategies: every fact carrying an Incomplete issue is
/// revised and every MissingRelation issue is turned into a new fact.
/// Per-item failures are collected, never thrown.
RefinementResult refine_all(std::span<const FactRecord> facts, std::span<const MergedIssue> relation_issues,
                            const RefineContext& context, Gateway& gateway, std::size_t jobs = 1);

}  // namespace verifact
