#include "verifact/core.hpp"

#include "verifact/digest.hpp"

#include <spdlog/spdlog.h>

namespace verifact {

bool FactRecord::has_flag(std::string_view flag) const {
    for (const auto& f : flags)
        if (f == flag) return true;
    return false;
}

std::string make_fact_id(std::string_view response_id, std::string_view text, FactOrigin origin) {
    std::string key;
    key.reserve(response_id.size() + text.size() + 24);
    key.append(response_id).push_back('\x1f');
    key.append(text).push_back('\x1f');
    key.append(to_string(origin));
    return "f-" + sha256_hex(key).substr(0, 16);
}

std::optional<VerificationLabel> try_parse_verification_label(std::string_view raw) {
    for (const auto& [label, name] : EnumNames<VerificationLabel>::values)
        if (contains_word(raw, name)) return label;
    return std::nullopt;
}

VerificationLabel parse_verification_label(std::string_view raw) {
    if (auto label = try_parse_verification_label(raw)) return *label;
    spdlog::warn("no verification label in judge output ({} bytes); defaulting to Undecided", raw.size());
    return VerificationLabel::Undecided;
}

void to_json(json& j, const CharRange& r) { j = json::array({r.start, r.end}); }

void from_json(const json& j, CharRange& r) {
    if (!j.is_array() || j.size() != 2) throw Error("character range must be a [start, end] pair");
    r.start = j.at(0).get<std::size_t>();
    r.end = j.at(1).get<std::size_t>();
    if (r.end < r.start) throw Error("character range end precedes start");
}

void to_json(json& j, const Prompt& p) { j = json{{"id", p.id}, {"text", p.text}, {"source", p.source}}; }

void from_json(const json& j, Prompt& p) {
    p.id = j.at("id").get<std::string>();
    p.text = j.at("text").get<std::string>();
    p.source = j.contains("source") ? j.at("source").get<PromptSource>() : PromptSource::Custom;
    if (p.id.empty()) throw Error("prompt id must be non-empty");
    if (p.text.empty()) throw Error("prompt '" + p.id + "' has empty text");
}

void to_json(json& j, const ModelResponse& r) {
    j = json{{"id", r.id}, {"prompt_id", r.prompt_id}, {"model_id", r.model_id}, {"text", r.text}};
}

void from_json(const json& j, ModelResponse& r) {
    r.prompt_id = j.at("prompt_id").get<std::string>();
    r.model_id = j.value("model_id", std::string{});
    r.text = j.at("text").get<std::string>();
    r.id = j.value("id", r.prompt_id + ":" + r.model_id);
}

void to_json(json& j, const MissingSpan& s) { j = json{{"text", s.text}, {"range", s.range}}; }

void from_json(const json& j, MissingSpan& s) {
    s.text = j.at("text").get<std::string>();
    s.range = j.at("range").get<CharRange>();
}

void to_json(json& j, const MergedIssue& m) {
    if (const auto* inc = std::get_if<IncompleteIssue>(&m.kind)) {
        j = json{{"kind", "Incomplete"}, {"category", inc->category}};
    } else {
        const auto& rel = std::get<MissingRelationIssue>(m.kind);
        j = json{{"kind", "MissingRelation"}, {"relation", rel.relation}, {"span", rel.span}};
    }
    j["contributing_judges"] = m.contributing_judges;
    j["rationales"] = m.rationales;
}

void from_json(const json& j, MergedIssue& m) {
    auto kind = j.at("kind").get<std::string>();
    if (kind == "Incomplete") {
        m.kind = IncompleteIssue{j.at("category").get<IncompletenessCategory>()};
    } else if (kind == "MissingRelation") {
        m.kind = MissingRelationIssue{j.at("relation").get<RelationType>(), j.at("span").get<MissingSpan>()};
    } else {
        throw Error("unknown issue kind '" + kind + "'");
    }
    m.contributing_judges = j.at("contributing_judges").get<std::vector<std::string>>();
    m.rationales = j.value("rationales", std::vector<std::string>{});
    if (m.contributing_judges.empty()) throw Error("merged issue without contributing judges");
}

void to_json(json& j, const VerificationOutcome& o) {
    j = json{{"label", o.label}, {"rationale", o.rationale}, {"bundle_id", o.bundle_id}};
}

void from_json(const json& j, VerificationOutcome& o) {
    o.label = j.at("label").get<VerificationLabel>();
    o.rationale = j.value("rationale", std::string{});
    o.bundle_id = j.value("bundle_id", std::string{});
}

void to_json(json& j, const FactRecord& f) {
    j = json{{"id", f.id}, {"response_id", f.response_id}, {"text", f.text}, {"origin", f.origin}};
    j["source_span"] = f.source_span ? json(*f.source_span) : json(nullptr);
    j["issues"] = f.issues;
    j["verification"] = f.verification ? json(*f.verification) : json(nullptr);
    j["flags"] = f.flags;
}

void from_json(const json& j, FactRecord& f) {
    f.id = j.at("id").get<std::string>();
    f.response_id = j.at("response_id").get<std::string>();
    f.text = j.at("text").get<std::string>();
    f.origin = j.at("origin").get<FactOrigin>();
    f.source_span.reset();
    if (j.contains("source_span") && !j.at("source_span").is_null()) f.source_span = j.at("source_span").get<CharRange>();
    f.issues = j.value("issues", std::vector<MergedIssue>{});
    f.verification.reset();
    if (j.contains("verification") && !j.at("verification").is_null())
        f.verification = j.at("verification").get<VerificationOutcome>();
    f.flags = j.value("flags", std::vector<std::string>{});
    if (f.text.empty()) throw Error("fact '" + f.id + "' has empty text");
}

void validate(const FactRecord& fact, std::string_view response_text) {
    if (fact.id.empty()) throw Error("fact without id");
    if (fact.text.empty()) throw Error("fact '" + fact.id + "' has empty text");
    if (fact.source_span && !fact.source_span->within(utf8_length(response_text)))
        throw Error("fact '" + fact.id + "' source span lies outside the response");
    if (fact.origin == FactOrigin::SynthesizedRelation) {
        bool carries = false;
        for (const auto& issue : fact.issues) carries = carries || issue.is_missing_relation();
        if (!carries) throw Error("synthesized fact '" + fact.id + "' does not carry its MissingRelation issue");
    }
}

}  // namespace verifact
