#pragma once

#include "verifact/errors.hpp"
#include "verifact/text.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace verifact {

using json = nlohmann::json;

enum class PromptSource { FactBenchLike, RedditLike, Custom };
enum class FactOrigin { Decomposed, Refined, SynthesizedRelation };
enum class IncompletenessCategory { AmbiguousConcept, MissingComparandum, OmittedCondition, Other };
enum class RelationType { Temporal, Contingency };
enum class VerificationLabel { Supported, Contradicted, Undecided };
enum class ConfidenceLevel { High, Low };

template <typename E>
struct EnumNames;

#define VERIFACT_ENUM_NAMES(Enum, ...)                                                       \
    template <>                                                                              \
    struct EnumNames<Enum> {                                                                 \
        static constexpr std::array values = {__VA_ARGS__};                                  \
    }

VERIFACT_ENUM_NAMES(PromptSource, std::pair{PromptSource::FactBenchLike, std::string_view{"FactBenchLike"}},
                    std::pair{PromptSource::RedditLike, std::string_view{"RedditLike"}},
                    std::pair{PromptSource::Custom, std::string_view{"Custom"}});
VERIFACT_ENUM_NAMES(FactOrigin, std::pair{FactOrigin::Decomposed, std::string_view{"Decomposed"}},
                    std::pair{FactOrigin::Refined, std::string_view{"Refined"}},
                    std::pair{FactOrigin::SynthesizedRelation, std::string_view{"SynthesizedRelation"}});
VERIFACT_ENUM_NAMES(IncompletenessCategory,
                    std::pair{IncompletenessCategory::AmbiguousConcept, std::string_view{"AmbiguousConcept"}},
                    std::pair{IncompletenessCategory::MissingComparandum, std::string_view{"MissingComparandum"}},
                    std::pair{IncompletenessCategory::OmittedCondition, std::string_view{"OmittedCondition"}},
                    std::pair{IncompletenessCategory::Other, std::string_view{"Other"}});
VERIFACT_ENUM_NAMES(RelationType, std::pair{RelationType::Temporal, std::string_view{"Temporal"}},
                    std::pair{RelationType::Contingency, std::string_view{"Contingency"}});
VERIFACT_ENUM_NAMES(VerificationLabel, std::pair{VerificationLabel::Supported, std::string_view{"Supported"}},
                    std::pair{VerificationLabel::Contradicted, std::string_view{"Contradicted"}},
                    std::pair{VerificationLabel::Undecided, std::string_view{"Undecided"}});
VERIFACT_ENUM_NAMES(ConfidenceLevel, std::pair{ConfidenceLevel::High, std::string_view{"High"}},
                    std::pair{ConfidenceLevel::Low, std::string_view{"Low"}});

template <typename E>
constexpr std::string_view to_string(E value) {
    for (const auto& [v, name] : EnumNames<E>::values)
        if (v == value) return name;
    return "?";
}

/// Exact PascalCase lookup.
template <typename E>
constexpr std::optional<E> enum_from_string(std::string_view name) {
    for (const auto& [v, n] : EnumNames<E>::values)
        if (n == name) return v;
    return std::nullopt;
}

template <typename E>
    requires requires { EnumNames<E>::values; }
void to_json(json& j, E value) {
    j = std::string(to_string(value));
}

template <typename E>
    requires requires { EnumNames<E>::values; }
void from_json(const json& j, E& value) {
    auto parsed = enum_from_string<E>(j.get<std::string>());
    if (!parsed) throw Error("unknown enum value '" + j.get<std::string>() + "'");
    value = *parsed;
}

struct Prompt {
    std::string id;
    std::string text;
    PromptSource source = PromptSource::Custom;
};

struct ModelResponse {
    std::string id;  ///< defaults to "<prompt_id>:<model_id>" when absent on input
    std::string prompt_id;
    std::string model_id;
    std::string text;
};

/// A response segment not covered by any extracted fact.
struct MissingSpan {
    std::string text;
    CharRange range;
    bool operator==(const MissingSpan&) const = default;
};

struct IncompleteIssue {
    IncompletenessCategory category = IncompletenessCategory::Other;
    bool operator==(const IncompleteIssue&) const = default;
};

struct MissingRelationIssue {
    RelationType relation = RelationType::Temporal;
    MissingSpan span;
    bool operator==(const MissingRelationIssue&) const = default;
};

/// A positive detection after the panel verdicts have been merged.
struct MergedIssue {
    std::variant<IncompleteIssue, MissingRelationIssue> kind;
    std::vector<std::string> contributing_judges;  ///< panel order, non-empty
    std::vector<std::string> rationales;

    bool is_incomplete() const noexcept { return std::holds_alternative<IncompleteIssue>(kind); }
    bool is_missing_relation() const noexcept { return std::holds_alternative<MissingRelationIssue>(kind); }
    bool operator==(const MergedIssue&) const = default;
};

struct VerificationOutcome {
    VerificationLabel label = VerificationLabel::Undecided;
    std::string rationale;
    std::string bundle_id;  ///< key of the EvidenceBundle (the fact id)
    bool operator==(const VerificationOutcome&) const = default;
};

struct FactRecord {
    std::string id;
    std::string response_id;
    std::string text;
    FactOrigin origin = FactOrigin::Decomposed;
    std::optional<CharRange> source_span;
    std::vector<MergedIssue> issues;
    std::optional<VerificationOutcome> verification;
    std::vector<std::string> flags;  ///< processing notes such as "refinement-noop"

    bool has_flag(std::string_view flag) const;
    bool operator==(const FactRecord&) const = default;
};

namespace flags {
inline constexpr std::string_view kRefinementNoop = "refinement-noop";
inline constexpr std::string_view kRefinementParseError = "refinement-parse-error";
inline constexpr std::string_view kGatewayError = "gateway-error";
inline constexpr std::string_view kDetectionParseError = "detection-parse-error";
}  // namespace flags

/// Stable content-derived id: hash of response id, fact text and origin.
std::string make_fact_id(std::string_view response_id, std::string_view text, FactOrigin origin);

/// Finds the first canonical label name (priority Supported, Contradicted,
/// Undecided; case-insensitive, whole word) in arbitrary judge output.
std::optional<VerificationLabel> try_parse_verification_label(std::string_view raw);

/// Total variant of try_parse_verification_label: falls back to Undecided
/// and logs a diagnostic.
VerificationLabel parse_verification_label(std::string_view raw);

// JSON mappings.
void to_json(json& j, const CharRange& r);
void from_json(const json& j, CharRange& r);
void to_json(json& j, const Prompt& p);
void from_json(const json& j, Prompt& p);
void to_json(json& j, const ModelResponse& r);
void from_json(const json& j, ModelResponse& r);
void to_json(json& j, const MissingSpan& s);
void from_json(const json& j, MissingSpan& s);
void to_json(json& j, const MergedIssue& m);
void from_json(const json& j, MergedIssue& m);
void to_json(json& j, const VerificationOutcome& o);
void from_json(const json& j, VerificationOutcome& o);
void to_json(json& j, const FactRecord& f);
void from_json(const json& j, FactRecord& f);

/// Checks the FactRecord invariants against the text of its response.
/// Throws Error describing the first violation.
void validate(const FactRecord& fact, std::string_view response_text);

}  // namespace verifact
