#include "verifact/detection.hpp"

#include "verifact/judge_parsing.hpp"
#include "verifact/parallel.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>
#include <regex>

namespace verifact {

namespace {

// Value after "<key>:" on the first line mentioning key, markdown stripped.
std::optional<std::string> field(std::string_view text, std::string_view key) {
    for (const auto& line : split_lines(text)) {
        auto lowered = to_lower_ascii(line);
        auto pos = lowered.find(to_lower_ascii(key));
        if (pos == std::string::npos) continue;
        auto colon = line.find(':', pos + key.size());
        if (colon == std::string::npos) continue;
        std::string value = trim(std::string_view(line).substr(colon + 1));
        std::erase_if(value, [](char c) { return c == '*'; });
        value = trim(value);
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        return value;
    }
    return std::nullopt;
}

std::optional<RelationType> relation_in(std::string_view text, bool* other_level1 = nullptr) {
    // Earliest mention wins.
    std::size_t best = std::string_view::npos;
    std::optional<RelationType> found;
    bool other = false;
    auto lowered = to_lower_ascii(text);
    for (std::string_view name : {"temporal", "contingency", "comparison", "expansion"}) {
        auto pos = lowered.find(name);
        if (pos == std::string::npos || pos >= best) continue;
        best = pos;
        if (name == "temporal") {
            found = RelationType::Temporal;
            other = false;
        } else if (name == "contingency") {
            found = RelationType::Contingency;
            other = false;
        } else {
            found.reset();
            other = true;
        }
    }
    if (other_level1) *other_level1 = other;
    return found;
}

std::string format_statements(std::span<const FactRecord> facts) {
    std::string out;
    for (std::size_t i = 0; i < facts.size(); ++i) {
        out += std::to_string(i + 1) + ". " + facts[i].text;
        if (i + 1 < facts.size()) out += '\n';
    }
    return out;
}

json span_json(const MissingSpan& span) { return json(span); }

}  // namespace

IncompletenessCategory map_dependent_type(std::string_view answer) {
    auto a = to_lower_ascii(answer);
    if (a.find("ambiguous") != std::string::npos || a.find("pronoun") != std::string::npos)
        return IncompletenessCategory::AmbiguousConcept;
    if (a.find("comparison") != std::string::npos || a.find("comparand") != std::string::npos)
        return IncompletenessCategory::MissingComparandum;
    if (a.find("condition") != std::string::npos || a.find("source") != std::string::npos)
        return IncompletenessCategory::OmittedCondition;
    return IncompletenessCategory::Other;
}

IncompletenessJudgment parse_incompleteness(std::string_view completion, std::string fact_id, std::string judge) {
    IncompletenessJudgment j{std::move(fact_id), std::move(judge), false, std::nullopt, "", std::nullopt};
    std::optional<bool> dependent;
    if (auto cls = field(completion, "classification")) {
        if (contains_word(*cls, "independent"))
            dependent = false;
        else if (contains_word(*cls, "dependent"))
            dependent = true;
    }
    if (!dependent) {
        bool dep = contains_word(completion, "dependent");
        bool indep = contains_word(completion, "independent");
        if (dep != indep) dependent = dep;
    }
    if (!dependent) throw ParseError("no Dependent/Independent classification", std::string(completion));

    j.is_incomplete = *dependent;
    if (j.is_incomplete) {
        auto type = field(completion, "dependent type");
        j.category = map_dependent_type(type.value_or(""));
    }
    j.rationale = field(completion, "explanation").value_or(trim(completion));
    return j;
}

RelationJudgment parse_relation(std::string_view completion, MissingSpan span, std::string judge) {
    RelationJudgment j{std::move(span), std::move(judge), false, std::nullopt, trim(completion), std::nullopt};
    auto verdict = parse_yes_no(completion);
    if (!verdict) throw ParseError("no YES/NO verdict", std::string(completion));
    if (!*verdict) return j;

    bool other = false;
    std::optional<RelationType> relation;
    if (auto fenced = extract_fenced(completion)) relation = relation_in(*fenced, &other);
    if (!relation && !other) relation = relation_in(completion, &other);
    if (!relation && !other) throw ParseError("YES without a level-1 relation", std::string(completion));
    if (relation) {
        j.indicates_relation = true;
        j.relation = relation;
    }
    return j;
}

IncompletenessJudgment detect_incomplete(const FactRecord& fact, const ModelResponse& context, Gateway& gateway,
                                         std::size_t judge_index, bool strict) {
    const auto& judge = gateway.judge(judge_index).model;
    PromptRequest request{TemplateId::CompletenessCheck, {{"context", context.text}, {"claim", fact.text}}, judge_index};
    auto completion = gateway.complete(request);
    try {
        return parse_incompleteness(completion, fact.id, judge);
    } catch (const ParseError& e) {
        if (strict) throw;
        spdlog::warn("completeness verdict of {} for fact {} unparseable; treating as complete", judge, fact.id);
        return {fact.id, judge, false, std::nullopt, trim(completion), std::string(e.what())};
    }
}

RelationJudgment classify_missing_span(const MissingSpan& span, const ModelResponse& response, Gateway& gateway,
                                       std::size_t judge_index) {
    const auto& judge = gateway.judge(judge_index).model;
    PromptRequest request{TemplateId::MissingRelationCheck, {{"response", response.text}, {"span", span.text}},
                          judge_index};
    auto completion = gateway.complete(request);
    try {
        return parse_relation(completion, span, judge);
    } catch (const ParseError& e) {
        spdlog::warn("relation verdict of {} for span '{}' unparseable; treating as no relation", judge, span.text);
        return {span, judge, false, std::nullopt, trim(completion), std::string(e.what())};
    }
}

bool reflect_span_covered(const MissingSpan& span, std::span<const FactRecord> facts, Gateway& gateway,
                          std::size_t judge_index) {
    if (facts.empty()) return false;
    auto needle = normalize(span.text);
    for (const auto& fact : facts)
        if (!needle.empty() && normalize(fact.text).find(needle) != std::string::npos) return true;

    PromptRequest request{TemplateId::SelfReflection,
                          {{"statements", format_statements(facts)}, {"span", span.text}},
                          judge_index};
    auto verdict = parse_yes_no(gateway.complete(request));
    if (!verdict) {
        spdlog::warn("reflection verdict for span '{}' unparseable; keeping the candidate", span.text);
        return false;
    }
    return *verdict;
}

namespace {

template <typename Key, typename Judgment, typename Positive>
std::optional<std::pair<Key, std::vector<const Judgment*>>> merge_positives(std::span<const Judgment> per_judge,
                                                                             Positive positive_key) {
    if (per_judge.empty()) throw EmptyInput("ensemble_merge needs at least one judgment");
    std::vector<const Judgment*> positives;
    std::vector<Key> order;
    std::map<Key, std::size_t> votes;
    for (const auto& j : per_judge) {
        auto key = positive_key(j);
        if (!key) continue;
        positives.push_back(&j);
        if (votes[*key]++ == 0) order.push_back(*key);
    }
    if (positives.empty()) return std::nullopt;
    Key best = order.front();
    for (const auto& k : order)
        if (votes[k] > votes[best]) best = k;
    return std::pair{best, std::move(positives)};
}

template <typename Judgment>
MergedIssue issue_from(std::vector<const Judgment*> const& positives) {
    MergedIssue issue;
    for (const auto* j : positives) {
        issue.contributing_judges.push_back(j->judge);
        issue.rationales.push_back(j->rationale);
    }
    return issue;
}

}  // namespace

std::optional<MergedIssue> ensemble_merge(std::span<const IncompletenessJudgment> per_judge) {
    for (const auto& j : per_judge)
        if (j.fact_id != per_judge.front().fact_id)
            throw std::invalid_argument("ensemble_merge over judgments of different facts");
    auto merged = merge_positives<IncompletenessCategory>(
        per_judge, [](const IncompletenessJudgment& j) -> std::optional<IncompletenessCategory> {
            if (!j.is_incomplete) return std::nullopt;
            return j.category.value_or(IncompletenessCategory::Other);
        });
    if (!merged) return std::nullopt;
    auto issue = issue_from(merged->second);
    issue.kind = IncompleteIssue{merged->first};
    return issue;
}

std::optional<MergedIssue> ensemble_merge(std::span<const RelationJudgment> per_judge) {
    for (const auto& j : per_judge)
        if (j.span != per_judge.front().span)
            throw std::invalid_argument("ensemble_merge over judgments of different spans");
    auto merged = merge_positives<RelationType>(per_judge, [](const RelationJudgment& j) -> std::optional<RelationType> {
        if (!j.indicates_relation) return std::nullopt;
        return j.relation;
    });
    if (!merged) return std::nullopt;
    auto issue = issue_from(merged->second);
    issue.kind = MissingRelationIssue{merged->first, per_judge.front().span};
    return issue;
}

bool merge_human_annotations(std::span<const HumanAnnotation> annotations) {
    if (annotations.empty()) throw EmptyInput("merge_human_annotations needs at least one annotation");
    std::size_t positives = 0;
    for (const auto& a : annotations) {
        if (!a.is_incomplete) continue;
        if (a.confidence == ConfidenceLevel::High) return true;
        ++positives;
    }
    return positives >= 2;
}

void to_json(json& j, const DetectionResult& d) {
    j = json{{"response_id", d.response_id},
             {"facts", d.facts},
             {"spans", d.spans},
             {"relation_issues", d.relation_issues},
             {"audit", d.audit}};
}

void from_json(const json& j, DetectionResult& d) {
    d.response_id = j.at("response_id").get<std::string>();
    d.facts = j.at("facts").get<std::vector<FactRecord>>();
    d.spans = j.value("spans", std::vector<MissingSpan>{});
    d.relation_issues = j.value("relation_issues", std::vector<MergedIssue>{});
    d.audit = j.value("audit", std::vector<json>{});
}

DetectionResult detect(const DecompositionResult& decomposition, const ModelResponse& response, Gateway& gateway,
                       const DetectionOptions& options) {
    const auto panel_size = gateway.panel().size();
    DetectionResult result;
    result.response_id = response.id;
    result.facts = decomposition.facts;

    auto on_gateway_error = [](const std::string& judge, const GatewayError& e) {
        spdlog::warn("judge {} unavailable: {}", judge, e.what());
        return std::string("gateway error: ") + e.what();
    };

    // Incompleteness: every fact x every judge.
    const auto& facts = result.facts;
    auto incompleteness = parallel_map(facts.size() * panel_size, options.jobs, [&](std::size_t k) {
        const auto& fact = facts[k / panel_size];
        auto judge_index = k % panel_size;
        try {
            return detect_incomplete(fact, response, gateway, judge_index, options.strict);
        } catch (const GatewayError& e) {
            const auto& judge = gateway.judge(judge_index).model;
            return IncompletenessJudgment{fact.id, judge, false, std::nullopt, "", on_gateway_error(judge, e)};
        }
    });
    for (std::size_t f = 0; f < facts.size(); ++f) {
        std::span<const IncompletenessJudgment> verdicts(incompleteness.data() + f * panel_size, panel_size);
        for (const auto& v : verdicts) {
            json entry = {{"stage", "incompleteness"}, {"judge", v.judge}, {"item", v.fact_id},
                          {"verdict", v.is_incomplete}, {"rationale", v.rationale}};
            if (v.category) entry["category"] = *v.category;
            if (v.diagnostic) entry["diagnostic"] = *v.diagnostic;
            result.audit.push_back(std::move(entry));
        }
        if (auto issue = ensemble_merge(verdicts)) result.facts[f].issues.push_back(std::move(*issue));
    }

    // Missing relations over spans not covered by any fact.
    std::vector<std::string> texts;
    for (const auto& f : decomposition.facts) texts.push_back(f.text);
    result.spans = find_missing_spans(response.text, texts, options.span_filter);
    const auto& spans = result.spans;
    auto relations = parallel_map(spans.size() * panel_size, options.jobs, [&](std::size_t k) {
        const auto& span = spans[k / panel_size];
        auto judge_index = k % panel_size;
        try {
            return classify_missing_span(span, response, gateway, judge_index);
        } catch (const GatewayError& e) {
            const auto& judge = gateway.judge(judge_index).model;
            return RelationJudgment{span, judge, false, std::nullopt, "", on_gateway_error(judge, e)};
        }
    });

    std::vector<MergedIssue> candidates;
    for (std::size_t s = 0; s < spans.size(); ++s) {
        std::span<const RelationJudgment> verdicts(relations.data() + s * panel_size, panel_size);
        for (const auto& v : verdicts) {
            json entry = {{"stage", "relation"}, {"judge", v.judge}, {"item", span_json(v.span)},
                          {"verdict", v.indicates_relation}, {"rationale", v.rationale}};
            if (v.relation) entry["relation"] = *v.relation;
            if (v.diagnostic) entry["diagnostic"] = *v.diagnostic;
            result.audit.push_back(std::move(entry));
        }
        if (auto issue = ensemble_merge(verdicts)) candidates.push_back(std::move(*issue));
    }

    if (!options.reflect) {
        result.relation_issues = std::move(candidates);
        return result;
    }
    auto covered = parallel_map(candidates.size(), options.jobs, [&](std::size_t i) {
        const auto& span = std::get<MissingRelationIssue>(candidates[i].kind).span;
        try {
            return reflect_span_covered(span, decomposition.facts, gateway, options.reflection_judge);
        } catch (const GatewayError& e) {
            on_gateway_error(gateway.judge(options.reflection_judge).model, e);
            return false;
        }
    });
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& span = std::get<MissingRelationIssue>(candidates[i].kind).span;
        result.audit.push_back(json{{"stage", "reflection"},
                                    {"judge", gateway.judge(options.reflection_judge).model},
                                    {"item", span_json(span)},
                                    {"verdict", static_cast<bool>(covered[i])}});
        if (!covered[i]) result.relation_issues.push_back(std::move(candidates[i]));
    }
    return result;
}

}  // namespace verifact
