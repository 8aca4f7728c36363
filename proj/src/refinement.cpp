#include "verifact/refinement.hpp"

#include "verifact/judge_parsing.hpp"
#include "verifact/parallel.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>
#include <set>

namespace verifact {

void to_json(json& j, const RefinementRecord& r) {
    j = json{{"before", r.before ? json(*r.before) : json(nullptr)},
             {"after", r.after},
             {"strategy", r.strategy},
             {"issue", r.issue}};
}

void from_json(const json& j, RefinementRecord& r) {
    r.before.reset();
    if (j.contains("before") && !j.at("before").is_null()) r.before = j.at("before").get<FactRecord>();
    r.after = j.at("after").get<FactRecord>();
    r.strategy = j.at("strategy").get<RefinementStrategy>();
    r.issue = j.at("issue").get<MergedIssue>();
}

std::string_view category_display_name(IncompletenessCategory category) {
    switch (category) {
        case IncompletenessCategory::AmbiguousConcept: return "Ambiguous Concepts/Pronouns";
        case IncompletenessCategory::MissingComparandum: return "Missing Comparison";
        case IncompletenessCategory::OmittedCondition: return "Lack of Condition/Sources";
        case IncompletenessCategory::Other: break;
    }
    return "Other";
}

namespace {

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (const auto& p : parts) {
        if (trim(p).empty()) continue;
        if (!out.empty()) out += sep;
        out += trim(p);
    }
    return out;
}

void add_flag(FactRecord& fact, std::string_view flag) {
    if (!fact.has_flag(flag)) fact.flags.emplace_back(flag);
}

}  // namespace

FactRecord refine_incomplete(const FactRecord& fact, const MergedIssue& issue, const RefineContext& context,
                             Gateway& gateway) {
    const auto* incomplete = std::get_if<IncompleteIssue>(&issue.kind);
    if (!incomplete) throw std::invalid_argument("refine_incomplete needs an Incomplete issue");

    std::string reason = "dependent (" + std::string(category_display_name(incomplete->category)) + ")";
    if (auto why = join(issue.rationales, " "); !why.empty()) reason += ": " + why;

    PromptRequest request{TemplateId::FixIncomplete,
                          {{"question", context.question},
                           {"answer", context.answer},
                           {"claim", fact.text},
                           {"reason", reason}},
                          context.judge_index};
    auto completion = gateway.complete(request);
    auto revised = extract_fenced(completion);

    FactRecord out = fact;
    if (!revised) {
        spdlog::warn("no fenced revision for fact {}; keeping it unrefined", fact.id);
        add_flag(out, flags::kRefinementParseError);
        return out;
    }
    auto text = trim(*revised);
    if (text.empty() || normalize(text) == normalize(fact.text)) {
        add_flag(out, flags::kRefinementNoop);
        return out;
    }
    out.text = std::move(text);
    out.origin = FactOrigin::Refined;
    out.verification.reset();
    return out;
}

std::optional<FactRecord> synthesize_relation_fact(const MergedIssue& issue, const RefineContext& context,
                                                   Gateway& gateway) {
    const auto* missing = std::get_if<MissingRelationIssue>(&issue.kind);
    if (!missing) throw std::invalid_argument("synthesize_relation_fact needs a MissingRelation issue");
    if (trim(missing->span.text).empty()) throw std::invalid_argument("missing span must be non-empty");

    PromptRequest request{TemplateId::AddMissingRelation,
                          {{"question", context.question},
                           {"answer", context.answer},
                           {"span", missing->span.text},
                           {"relation", to_lower_ascii(to_string(missing->relation))}},
                          context.judge_index};
    auto fenced = extract_fenced(gateway.complete(request));
    if (!fenced || trim(*fenced).empty() || trim(*fenced) == "<Refined Relationship>") {
        spdlog::warn("no fenced relationship sentence for span '{}'", missing->span.text);
        return std::nullopt;
    }
    FactRecord fact;
    fact.text = trim(*fenced);
    fact.response_id = context.response_id;
    fact.origin = FactOrigin::SynthesizedRelation;
    fact.id = make_fact_id(context.response_id, fact.text, fact.origin);
    fact.source_span = missing->span.range;
    fact.issues.push_back(issue);
    return fact;
}

RefinementResult refine_all(std::span<const FactRecord> facts, std::span<const MergedIssue> relation_issues,
                            const RefineContext& context, Gateway& gateway, std::size_t jobs) {
    std::vector<std::size_t> to_revise;
    for (std::size_t i = 0; i < facts.size(); ++i)
        if (std::any_of(facts[i].issues.begin(), facts[i].issues.end(),
                        [](const MergedIssue& m) { return m.is_incomplete(); }))
            to_revise.push_back(i);

    // Synthesized facts are appended in span order.
    std::vector<std::size_t> relation_order(relation_issues.size());
    std::iota(relation_order.begin(), relation_order.end(), 0);
    auto span_of = [&](std::size_t k) { return std::get<MissingRelationIssue>(relation_issues[k].kind).span.range; };
    for (const auto& issue : relation_issues)
        if (!issue.is_missing_relation()) throw std::invalid_argument("relation_issues must be MissingRelation issues");
    std::stable_sort(relation_order.begin(), relation_order.end(),
                     [&](std::size_t a, std::size_t b) { return span_of(a) < span_of(b); });

    struct Outcome {
        std::optional<FactRecord> fact;
        std::optional<std::string> error;
    };
    const auto tasks = to_revise.size() + relation_order.size();
    auto outcomes = parallel_map(tasks, jobs, [&](std::size_t t) -> Outcome {
        try {
            if (t < to_revise.size()) {
                const auto& fact = facts[to_revise[t]];
                auto issue = std::find_if(fact.issues.begin(), fact.issues.end(),
                                          [](const MergedIssue& m) { return m.is_incomplete(); });
                return {refine_incomplete(fact, *issue, context, gateway), std::nullopt};
            }
            const auto& issue = relation_issues[relation_order[t - to_revise.size()]];
            auto fact = synthesize_relation_fact(issue, context, gateway);
            if (!fact) return {std::nullopt, "unparseable relationship sentence"};
            return {std::move(fact), std::nullopt};
        } catch (const GatewayError& e) {
            return {std::nullopt, std::string("gateway error: ") + e.what()};
        }
    });

    RefinementResult result;
    result.facts.assign(facts.begin(), facts.end());
    std::set<std::string> ids;
    for (const auto& f : facts) ids.insert(f.id);

    for (std::size_t t = 0; t < to_revise.size(); ++t) {
        auto& slot = result.facts[to_revise[t]];
        auto& outcome = outcomes[t];
        if (!outcome.fact) {
            add_flag(slot, flags::kGatewayError);
            result.errors.push_back("fact " + slot.id + ": " + outcome.error.value_or("unknown error"));
            continue;
        }
        if (outcome.fact->origin == FactOrigin::Refined && outcome.fact->text != slot.text) {
            auto issue = std::find_if(slot.issues.begin(), slot.issues.end(),
                                      [](const MergedIssue& m) { return m.is_incomplete(); });
            result.records.push_back({slot, *outcome.fact, RefinementStrategy::ReviseIncomplete, *issue});
        } else if (outcome.fact->has_flag(flags::kRefinementParseError)) {
            result.errors.push_back("fact " + slot.id + ": no fenced revision");
        }
        slot = std::move(*outcome.fact);
    }

    for (std::size_t r = 0; r < relation_order.size(); ++r) {
        const auto& issue = relation_issues[relation_order[r]];
        const auto& span = std::get<MissingRelationIssue>(issue.kind).span;
        auto& outcome = outcomes[to_revise.size() + r];
        if (!outcome.fact || !ids.insert(outcome.fact->id).second) {
            result.unresolved.push_back(span);
            result.errors.push_back("span '" + span.text + "': " + outcome.error.value_or("duplicate relation fact"));
            continue;
        }
        result.records.push_back({std::nullopt, *outcome.fact, RefinementStrategy::AddRelationFact, issue});
        result.facts.push_back(std::move(*outcome.fact));
        ++result.resolved_relations;
    }
    return result;
}

}  // namespace verifact
