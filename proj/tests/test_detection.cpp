#include <doctest.h>

#include "support/harness.hpp"

#include "verifact/detection.hpp"

#include <algorithm>
#include <random>
#include <set>

using namespace verifact;
using namespace verifact::testing;

namespace {

IncompletenessJudgment inc(std::string judge, std::optional<IncompletenessCategory> cat) {
    return {"f1", std::move(judge), cat.has_value(), cat, "r", std::nullopt};
}

RelationJudgment rel(std::string judge, std::optional<RelationType> r, MissingSpan span = {"because", {3, 10}}) {
    return {std::move(span), std::move(judge), r.has_value(), r, "r", std::nullopt};
}

const std::string kFineTuneContext =
    "Fine-tuning in the context of deep learning refers to the process of taking a pre-trained model and making "
    "small adjustments to its weights. This approach allows the model to achieve better performance on the new "
    "task with less data and training time compared to training a model from scratch.";

}  // namespace

TEST_CASE("dependent type mapping") {
    CHECK(map_dependent_type("Ambiguous Concepts/Pronouns") == IncompletenessCategory::AmbiguousConcept);
    CHECK(map_dependent_type("Missing Comparison") == IncompletenessCategory::MissingComparandum);
    CHECK(map_dependent_type("Lack of Condition/Sources") == IncompletenessCategory::OmittedCondition);
    CHECK(map_dependent_type("something else") == IncompletenessCategory::Other);
}

TEST_CASE("completeness verdict parsing") {
    auto j = parse_incompleteness(
        "* Explanation: \"The claim does not specify the comparison target.\"\n"
        "* Classification: Dependent\n* Dependent Type: Missing Comparison",
        "f1", "judge-a");
    CHECK(j.is_incomplete);
    CHECK(j.category == IncompletenessCategory::MissingComparandum);
    CHECK(j.rationale == "The claim does not specify the comparison target.");

    auto k = parse_incompleteness("**Classification:** Independent\nExplanation: fine", "f1", "judge-a");
    CHECK_FALSE(k.is_incomplete);
    CHECK_FALSE(k.category);

    CHECK(parse_incompleteness("The claim is Dependent (missing condition).", "f1", "j").is_incomplete);
    CHECK_THROWS_AS(parse_incompleteness("I am not sure.", "f1", "j"), ParseError);
}

TEST_CASE("relation verdict parsing") {
    MissingSpan span{"making", {0, 6}};
    auto yes = parse_relation("YES. The span indicates a causal link.\n```\nContingency\n```", span, "j");
    CHECK(yes.indicates_relation);
    CHECK(yes.relation == RelationType::Contingency);
    auto temporal = parse_relation("YES\n```Temporal```", span, "j");
    CHECK(temporal.relation == RelationType::Temporal);
    auto comparison = parse_relation("YES\n```Comparison```", span, "j");
    CHECK_FALSE(comparison.indicates_relation);
    CHECK_FALSE(comparison.relation);
    CHECK_FALSE(parse_relation("NO. It is a function word.", {"the", {0, 3}}, "j").indicates_relation);
    CHECK_THROWS_AS(parse_relation("Maybe?", span, "j"), ParseError);
    CHECK_THROWS_AS(parse_relation("YES, clearly.", span, "j"), ParseError);
}

TEST_CASE("detect_incomplete renders the full response and falls back on bad output") {
    ModelResponse r{"r1", "p1", "m", kFineTuneContext};
    FactRecord fact{"f1", "r1", "Training a model being trained from scratch requires more data."};
    Harness h([](TemplateId id, const Bindings& b, const std::string&) -> std::optional<std::string> {
        if (id != TemplateId::CompletenessCheck) return std::nullopt;
        if (b.at("claim").starts_with("Training"))
            return "* Explanation: no comparison target\n* Classification: Dependent\n* Dependent Type: Missing Comparison";
        if (b.at("claim") == b.at("context")) return "* Classification: Independent";
        return "unclear";
    });
    auto j = detect_incomplete(fact, r, *h, 0);
    CHECK(j.is_incomplete);
    CHECK(j.category == IncompletenessCategory::MissingComparandum);
    CHECK(j.judge == "judge-a");
    CHECK(h.llm->log().at(0).bindings.at("context") == kFineTuneContext);

    ModelResponse single{"r2", "p1", "m", "Water boils at 100 degrees at sea level."};
    CHECK_FALSE(detect_incomplete({"f2", "r2", single.text}, single, *h, 0).is_incomplete);

    FactRecord odd{"f3", "r1", "Something odd."};
    auto lenient = detect_incomplete(odd, r, *h, 0);
    CHECK_FALSE(lenient.is_incomplete);
    CHECK(lenient.diagnostic.has_value());
    CHECK_THROWS_AS(detect_incomplete(odd, r, *h, 0, true), ParseError);
}

TEST_CASE("classify_missing_span") {
    ModelResponse r{"r1", "p1", "m", "Gold is scarce, making it valuable. The sky is blue."};
    Harness h([](TemplateId id, const Bindings& b, const std::string&) -> std::optional<std::string> {
        if (id != TemplateId::MissingRelationCheck) return std::nullopt;
        if (b.at("span") == "making") return "YES, it indicates a causal relation.\n```Contingency```";
        if (b.at("span") == "the") return "NO";
        return "hmm";
    });
    auto making = classify_missing_span({"making", {16, 22}}, r, *h, 0);
    CHECK(making.indicates_relation);
    CHECK(making.relation == RelationType::Contingency);
    CHECK_FALSE(classify_missing_span({"the", {36, 39}}, r, *h, 0).indicates_relation);
    auto bad = classify_missing_span({"sky", {40, 43}}, r, *h, 0);
    CHECK_FALSE(bad.indicates_relation);
    CHECK(bad.diagnostic.has_value());
}

TEST_CASE("reflection") {
    std::size_t calls = 0;
    Harness h([&](TemplateId id, const Bindings& b, const std::string&) -> std::optional<std::string> {
        if (id != TemplateId::SelfReflection) return std::nullopt;
        ++calls;
        CHECK(b.at("statements").starts_with("1. "));
        if (b.at("span") == "making") return "NO. None of the facts capture it.";
        return "garbled";
    });
    std::vector<FactRecord> facts{{"f1", "r", "Prices rose because of inflation."}, {"f2", "r", "Gold is scarce."}};
    CHECK(reflect_span_covered({"because of inflation", {0, 20}}, facts, *h, 0));
    CHECK(calls == 0);
    CHECK_FALSE(reflect_span_covered({"making", {0, 6}}, facts, *h, 0));
    CHECK_FALSE(reflect_span_covered({"other words", {0, 11}}, facts, *h, 0));
    CHECK_FALSE(reflect_span_covered({"making", {0, 6}}, {}, *h, 0));
    CHECK(calls == 2);
}

TEST_CASE("ensemble merge examples") {
    using C = IncompletenessCategory;
    std::vector<IncompletenessJudgment> one{inc("a", C::Other), inc("b", std::nullopt), inc("c", std::nullopt)};
    auto merged = ensemble_merge(std::span<const IncompletenessJudgment>(one));
    REQUIRE(merged);
    CHECK(merged->contributing_judges == std::vector<std::string>{"a"});

    std::vector<IncompletenessJudgment> none{inc("a", std::nullopt), inc("b", std::nullopt)};
    CHECK_FALSE(ensemble_merge(std::span<const IncompletenessJudgment>(none)));

    std::vector<IncompletenessJudgment> majority{inc("a", C::OmittedCondition), inc("b", C::AmbiguousConcept),
                                                 inc("c", C::OmittedCondition)};
    auto m = ensemble_merge(std::span<const IncompletenessJudgment>(majority));
    REQUIRE(m);
    CHECK(std::get<IncompleteIssue>(m->kind).category == C::OmittedCondition);
    CHECK(m->contributing_judges.size() == 3);

    std::vector<IncompletenessJudgment> tie{inc("a", C::AmbiguousConcept), inc("b", C::OmittedCondition)};
    CHECK(std::get<IncompleteIssue>(ensemble_merge(std::span<const IncompletenessJudgment>(tie))->kind).category ==
          C::AmbiguousConcept);

    std::vector<RelationJudgment> rels{rel("a", std::nullopt), rel("b", RelationType::Temporal)};
    auto r = ensemble_merge(std::span<const RelationJudgment>(rels));
    REQUIRE(r);
    CHECK(std::get<MissingRelationIssue>(r->kind).relation == RelationType::Temporal);
    CHECK(std::get<MissingRelationIssue>(r->kind).span.text == "because");

    CHECK_THROWS_AS(ensemble_merge(std::span<const IncompletenessJudgment>()), EmptyInput);
    CHECK_THROWS_AS(ensemble_merge(std::span<const RelationJudgment>()), EmptyInput);
}

TEST_CASE("union merge never loses recall and ignores judge order") {
    std::mt19937 rng(5);
    std::bernoulli_distribution coin(0.3);
    std::uniform_int_distribution<int> cat(0, 3);
    const std::vector<std::string> judges{"a", "b", "c"};
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t items = 20;
        std::vector<bool> truth(items);
        std::vector<std::vector<IncompletenessJudgment>> verdicts(items);
        for (std::size_t i = 0; i < items; ++i) {
            truth[i] = coin(rng);
            for (const auto& j : judges) {
                std::optional<IncompletenessCategory> c;
                if (coin(rng)) c = static_cast<IncompletenessCategory>(cat(rng));
                verdicts[i].push_back(inc(j, c));
                verdicts[i].back().fact_id = "f" + std::to_string(i);
            }
        }
        auto recall = [&](auto positive) {
            std::size_t hit = 0, total = 0;
            for (std::size_t i = 0; i < items; ++i) {
                if (!truth[i]) continue;
                ++total;
                if (positive(i)) ++hit;
            }
            return total == 0 ? 1.0 : static_cast<double>(hit) / total;
        };
        double merged = recall([&](std::size_t i) {
            return ensemble_merge(std::span<const IncompletenessJudgment>(verdicts[i])).has_value();
        });
        for (std::size_t j = 0; j < judges.size(); ++j)
            CHECK(merged >= recall([&](std::size_t i) { return verdicts[i][j].is_incomplete; }));

        for (std::size_t i = 0; i < items; ++i) {
            auto shuffled = verdicts[i];
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
            auto a = ensemble_merge(std::span<const IncompletenessJudgment>(verdicts[i]));
            auto b = ensemble_merge(std::span<const IncompletenessJudgment>(shuffled));
            REQUIRE(a.has_value() == b.has_value());
            if (!a) continue;
            std::set<std::string> ja(a->contributing_judges.begin(), a->contributing_judges.end());
            std::set<std::string> jb(b->contributing_judges.begin(), b->contributing_judges.end());
            CHECK(ja == jb);
            std::map<IncompletenessCategory, int> votes;
            for (const auto& v : verdicts[i])
                if (v.is_incomplete) ++votes[*v.category];
            int top = 0, tied = 0;
            for (auto& [c, n] : votes) top = std::max(top, n);
            for (auto& [c, n] : votes) tied += n == top;
            if (tied == 1)
                CHECK(std::get<IncompleteIssue>(a->kind).category == std::get<IncompleteIssue>(b->kind).category);
        }
    }
}

TEST_CASE("human annotation merge truth table") {
    using L = ConfidenceLevel;
    auto merge = [](std::vector<HumanAnnotation> v) { return merge_human_annotations(std::span<const HumanAnnotation>(v)); };
    CHECK(merge({{true, L::High}, {false, L::Low}, {false, L::Low}, {false, L::Low}}));
    CHECK(merge({{true, L::Low}, {true, L::Low}, {false, L::High}, {false, L::High}}));
    CHECK_FALSE(merge({{true, L::Low}, {false, L::High}, {false, L::High}, {false, L::High}}));
    CHECK_THROWS_AS(merge({}), EmptyInput);

    // Every assignment of four annotators.
    for (int mask = 0; mask < 256; ++mask) {
        std::vector<HumanAnnotation> v;
        int positives = 0;
        bool confident = false;
        for (int a = 0; a < 4; ++a) {
            bool pos = mask >> a & 1;
            bool high = mask >> (a + 4) & 1;
            v.push_back({pos, high ? L::High : L::Low});
            positives += pos;
            confident = confident || (pos && high);
        }
        CHECK(merge(v) == (confident || positives >= 2));
    }
}

TEST_CASE("detect runs the panel, merges and reflects") {
    ModelResponse r{"r1", "p1", "m", "Gold is scarce, making it valuable. It rose in 2023."};
    DecompositionResult d;
    d.response_id = r.id;
    d.facts = {{"f1", "r1", "Gold is scarce."}, {"f2", "r1", "Gold is valuable."}, {"f3", "r1", "It rose in 2023."}};
    Harness h(
        [](TemplateId id, const Bindings& b, const std::string& model) -> std::optional<std::string> {
            switch (id) {
            case TemplateId::CompletenessCheck:
                if (b.at("claim") == "It rose in 2023." && model == "judge-b")
                    return "Classification: Dependent\nDependent Type: Ambiguous Concepts/Pronouns";
                return "Classification: Independent";
            case TemplateId::MissingRelationCheck:
                if (b.at("span").find("making") != std::string::npos && model == "judge-a") return "YES ```Contingency```";
                return "NO";
            case TemplateId::SelfReflection: return "NO";
            default: return std::nullopt;
            }
        },
        {"judge-a", "judge-b"});
    auto result = detect(d, r, *h, {false, true, 0, 2, {}});
    REQUIRE(result.facts.size() == 3);
    CHECK(result.facts[0].issues.empty());
    REQUIRE(result.facts[2].issues.size() == 1);
    CHECK(result.facts[2].issues[0].contributing_judges == std::vector<std::string>{"judge-b"});
    REQUIRE(result.relation_issues.size() == 1);
    const auto& issue = std::get<MissingRelationIssue>(result.relation_issues[0].kind);
    CHECK(issue.span.text == "making it");
    CHECK(issue.relation == RelationType::Contingency);
    CHECK(std::find(result.spans.begin(), result.spans.end(), issue.span) != result.spans.end());
    CHECK(utf8_slice(r.text, issue.span.range) == "making it");
    CHECK(h.llm->calls(TemplateId::CompletenessCheck) == 6);
    CHECK(h.llm->calls(TemplateId::MissingRelationCheck) == 2 * result.spans.size());
    CHECK(h.llm->calls(TemplateId::SelfReflection) == 1);
    CHECK(result.audit.size() == 6 + 2 * result.spans.size() + 1);

    auto round = json(result).get<DetectionResult>();
    CHECK(round.facts == result.facts);
    CHECK(round.relation_issues == result.relation_issues);
}

TEST_CASE("detect tolerates an unavailable judge") {
    ModelResponse r{"r1", "p1", "m", "Gold is scarce."};
    DecompositionResult d;
    d.facts = {{"f1", "r1", "Gold is scarce."}};
    Harness h(
        [](TemplateId, const Bindings&, const std::string& model) -> std::optional<std::string> {
            if (model == "judge-b") return std::nullopt;
            return "Classification: Dependent\nDependent Type: other";
        },
        {"judge-a", "judge-b"});
    auto result = detect(d, r, *h);
    REQUIRE(result.facts[0].issues.size() == 1);
    CHECK(result.facts[0].issues[0].contributing_judges == std::vector<std::string>{"judge-a"});
    bool diagnosed = false;
    for (const auto& a : result.audit) diagnosed = diagnosed || a.contains("diagnostic");
    CHECK(diagnosed);
}
