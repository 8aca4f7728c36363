#include "verifact/benchmark.hpp"

#include "verifact/judge_parsing.hpp"
#include "verifact/parallel.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace verifact {

void to_json(json& j, const ReferenceSet& r) {
    j = json{{"prompt_id", r.prompt_id}, {"facts", r.facts}, {"provenance", r.provenance},
             {"duplicates_dropped", r.duplicates_dropped}};
}

void from_json(const json& j, ReferenceSet& r) {
    r.prompt_id = j.at("prompt_id").get<std::string>();
    r.facts = j.at("facts").get<std::vector<std::string>>();
    r.provenance = j.value("provenance", ReferenceProvenance::ModelUnion);
    r.duplicates_dropped = j.value("duplicates_dropped", std::size_t{0});
}

ReferenceSet build_reference_set(const std::string& prompt_id, std::span<const AnswerFacts> answers,
                                 ReferenceProvenance provenance) {
    if (answers.empty()) throw EmptyInput("answer sources for prompt " + prompt_id);
    ReferenceSet ref{prompt_id, {}, provenance, 0};
    std::set<std::string> seen;
    for (const auto& answer : answers) {
        for (const auto& fact : answer.facts) {
            if (provenance == ReferenceProvenance::ModelUnion &&
                (!fact.verification || fact.verification->label != VerificationLabel::Supported))
                continue;
            if (seen.insert(normalize(fact.text)).second)
                ref.facts.push_back(fact.text);
            else
                ++ref.duplicates_dropped;
        }
    }
    if (ref.facts.empty()) throw EmptyInput("reference set for prompt " + prompt_id);
    return ref;
}

void LabelCounts::add(VerificationLabel label) {
    switch (label) {
        case VerificationLabel::Supported: ++supported; break;
        case VerificationLabel::Contradicted: ++contradicted; break;
        case VerificationLabel::Undecided: ++undecided; break;
    }
}

void to_json(json& j, const LabelCounts& c) {
    j = json{{"Supported", c.supported}, {"Contradicted", c.contradicted}, {"Undecided", c.undecided}};
}

void from_json(const json& j, LabelCounts& c) {
    c.supported = j.value("Supported", std::size_t{0});
    c.contradicted = j.value("Contradicted", std::size_t{0});
    c.undecided = j.value("Undecided", std::size_t{0});
}

LabelCounts count_labels(std::span<const FactRecord> facts) {
    LabelCounts c;
    for (const auto& f : facts)
        if (f.verification) c.add(f.verification->label);
    return c;
}

double compute_precision(std::span<const VerificationLabel> labels) {
    if (labels.empty()) throw EmptyInput("verification outcomes");
    auto supported = std::count(labels.begin(), labels.end(), VerificationLabel::Supported);
    return static_cast<double>(supported) / static_cast<double>(labels.size());
}

double compute_precision(std::span<const FactRecord> facts) {
    std::vector<VerificationLabel> labels;
    for (const auto& f : facts)
        if (f.verification) labels.push_back(f.verification->label);
    return compute_precision(std::span<const VerificationLabel>(labels));
}

RecallResult compute_recall(const ReferenceSet& reference, const ModelResponse& response, Gateway& gateway,
                            std::size_t judge_index, std::size_t jobs) {
    if (reference.facts.empty()) throw EmptyInput("reference set for prompt " + reference.prompt_id);
    RecallResult out;
    out.total = reference.facts.size();
    out.per_fact.assign(out.total, false);
    if (trim(response.text).empty()) return out;

    struct Item {
        bool entailed = false;
        bool flagged = false;
    };
    auto items = parallel_map(out.total, jobs, [&](std::size_t i) {
        PromptRequest req{TemplateId::EntailmentCheck, {{"claim", reference.facts[i]}, {"paragraph", response.text}}, judge_index};
        try {
            auto verdict = parse_yes_no(gateway.complete(req));
            return Item{verdict.value_or(false), !verdict.has_value()};
        } catch (const GatewayError& e) {
            spdlog::warn("entailment check failed for '{}': {}", reference.facts[i], e.what());
            return Item{false, true};
        }
    });
    for (std::size_t i = 0; i < items.size(); ++i) {
        out.per_fact[i] = items[i].entailed;
        if (items[i].entailed) ++out.entailed;
        if (items[i].flagged) out.flagged.push_back(reference.facts[i]);
    }
    out.recall = static_cast<double>(out.entailed) / static_cast<double>(out.total);
    return out;
}

double compute_f1(double precision, double recall) {
    if (!(precision >= 0.0 && precision <= 1.0) || !(recall >= 0.0 && recall <= 1.0))
        throw std::invalid_argument("precision and recall must lie in [0, 1]");
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

std::optional<std::size_t> parse_coverage_answer(std::string_view raw, std::span<const std::string> extracted,
                                                 bool* recognized) {
    if (recognized) *recognized = true;
    auto answer = normalize(raw);
    if (answer.find("none of the above") != std::string::npos) return std::nullopt;
    if (answer.find("combin") != std::string::npos) return std::nullopt;

    // Judges often quote a claim without its final period.
    auto key = [](const std::string& claim) {
        auto k = normalize(claim);
        while (!k.empty() && (k.back() == '.' || k.back() == '!' || k.back() == '?')) k.pop_back();
        return k;
    };
    std::vector<std::size_t> matches;
    for (std::size_t i = 0; i < extracted.size(); ++i) {
        auto claim = key(extracted[i]);
        if (!claim.empty() && answer.find(claim) != std::string::npos) matches.push_back(i);
    }
    // A claim that is part of another matched claim was matched through it.
    std::vector<std::size_t> maximal;
    for (auto i : matches) {
        auto ci = key(extracted[i]);
        bool inside = std::any_of(matches.begin(), matches.end(), [&](std::size_t j) {
            auto cj = key(extracted[j]);
            return j != i && cj.size() > ci.size() && cj.find(ci) != std::string::npos;
        });
        if (!inside) maximal.push_back(i);
    }
    if (maximal.size() == 1) return maximal.front();
    if (maximal.size() > 1) return std::nullopt;

    // Bare list number, e.g. "2" or "Claim 2."
    auto tokens = tokenize(raw);
    if (!tokens.empty()) {
        std::size_t t = tokens[0] == "claim" && tokens.size() > 1 ? 1 : 0;
        const auto& tok = tokens[t];
        if (!tok.empty() && tok.size() <= 4 && std::all_of(tok.begin(), tok.end(), ::isdigit)) {
            auto n = std::stoul(tok);
            if (n >= 1 && n <= extracted.size()) return n - 1;
        }
    }
    if (recognized) *recognized = false;
    return std::nullopt;
}

CoverageResult coverage_of_human_facts(std::span<const std::string> extracted, std::span<const std::string> human,
                                       Gateway& gateway, std::size_t judge_index, std::size_t jobs) {
    if (human.empty()) throw EmptyInput("human reference facts");
    CoverageResult out;
    out.total = human.size();
    out.matched.assign(out.total, std::nullopt);
    if (extracted.empty()) return out;

    std::string list;
    for (std::size_t i = 0; i < extracted.size(); ++i) list += std::to_string(i + 1) + ". " + extracted[i] + "\n";
    list = trim(list);

    struct Item {
        std::optional<std::size_t> match;
        bool flagged = false;
    };
    auto items = parallel_map(out.total, jobs, [&](std::size_t i) {
        PromptRequest req{TemplateId::HumanFactCoverage, {{"claim", human[i]}, {"claim_list", list}}, judge_index};
        try {
            bool recognized = true;
            auto m = parse_coverage_answer(gateway.complete(req), extracted, &recognized);
            return Item{m, !recognized};
        } catch (const GatewayError& e) {
            spdlog::warn("coverage check failed for '{}': {}", human[i], e.what());
            return Item{std::nullopt, true};
        }
    });
    for (std::size_t i = 0; i < items.size(); ++i) {
        out.matched[i] = items[i].match;
        if (items[i].match) ++out.supported;
        if (items[i].flagged) out.flagged.push_back(human[i]);
    }
    out.coverage = static_cast<double>(out.supported) / static_cast<double>(out.total);
    return out;
}

double mean_coverage(std::span<const CoverageResult> results) {
    if (results.empty()) throw EmptyInput("coverage results");
    double sum = 0.0;
    for (const auto& r : results) sum += r.coverage;
    return sum / static_cast<double>(results.size());
}

DivergenceCheck check_divergent(const Prompt& prompt, Gateway& gateway, std::size_t judge_index) {
    DivergenceCheck out;
    try {
        out.raw = gateway.complete(PromptRequest{TemplateId::DivergentFilter, {{"question", prompt.text}}, judge_index});
    } catch (const GatewayError& e) {
        spdlog::warn("divergence check failed for prompt {}: {}", prompt.id, e.what());
        out.flagged = true;
        return out;
    }
    if (auto verdict = parse_yes_no(out.raw))
        out.divergent = *verdict;
    else
        out.flagged = true;
    return out;
}

bool filter_divergent(const Prompt& prompt, Gateway& gateway, std::size_t judge_index) {
    return check_divergent(prompt, gateway, judge_index).divergent;
}

void to_json(json& j, const FlipReport& r) {
    json pairs = json::array();
    for (const auto& [key, count] : r.pairs) pairs.push_back({{"before", key.first}, {"after", key.second}, {"count", count}});
    j = json{{"pairs", pairs}, {"changed", r.changed}, {"total", r.total}, {"rate", r.rate}};
}

FlipReport label_flip_report(const std::map<std::string, VerificationLabel>& before,
                             const std::map<std::string, VerificationLabel>& after) {
    FlipReport report;
    for (const auto& [id, label] : before) {
        auto it = after.find(id);
        if (it == after.end()) throw std::invalid_argument("fact " + id + " has no label after refinement");
        ++report.total;
        if (it->second != label) {
            ++report.changed;
            ++report.pairs[{label, it->second}];
        }
    }
    report.rate = report.total ? static_cast<double>(report.changed) / static_cast<double>(report.total) : 0.0;
    return report;
}

std::string render_flip_report(const FlipReport& report) {
    std::ostringstream out;
    out << "Label changes after refinement: " << report.changed << " of " << report.total;
    char pct[32];
    std::snprintf(pct, sizeof pct, " (%.2f%%)\n", report.rate * 100.0);
    out << pct;
    for (const auto& [key, count] : report.pairs)
        out << "  " << to_string(key.first) << " -> " << to_string(key.second) << ": " << count << "\n";
    return out.str();
}

void to_json(json& j, const ResponseScore& s) {
    j = json{{"response_id", s.response_id}, {"prompt_id", s.prompt_id}, {"model_id", s.model_id},
             {"source", s.source},           {"precision", s.precision}, {"labels", s.labels}};
    j["recall"] = s.recall ? json(*s.recall) : json(nullptr);
    j["f1"] = s.f1 ? json(*s.f1) : json(nullptr);
    if (!s.notes.empty()) j["notes"] = s.notes;
}

void from_json(const json& j, ResponseScore& s) {
    s.response_id = j.at("response_id").get<std::string>();
    s.prompt_id = j.value("prompt_id", std::string{});
    s.model_id = j.value("model_id", std::string{});
    s.source = j.value("source", PromptSource::Custom);
    s.precision = j.at("precision").get<double>();
    s.recall = j.contains("recall") && !j["recall"].is_null() ? std::optional(j["recall"].get<double>()) : std::nullopt;
    s.f1 = j.contains("f1") && !j["f1"].is_null() ? std::optional(j["f1"].get<double>()) : std::nullopt;
    s.labels = j.value("labels", LabelCounts{});
    s.notes = j.value("notes", std::vector<std::string>{});
}

std::string_view block_name(PromptSource source) {
    switch (source) {
        case PromptSource::FactBenchLike: return "FactBench";
        case PromptSource::RedditLike: return "Reddit";
        case PromptSource::Custom: return "Custom";
    }
    return "Custom";
}

namespace {

AggregateRow fold(const std::string& model, std::string block, const std::vector<const ResponseScore*>& rows) {
    AggregateRow agg{model, std::move(block), rows.size(), 0.0, std::nullopt, std::nullopt};
    double p = 0.0, r = 0.0;
    std::size_t with_recall = 0;
    for (const auto* s : rows) {
        p += s->precision;
        if (s->recall) {
            r += *s->recall;
            ++with_recall;
        }
    }
    if (!rows.empty()) agg.precision = p / static_cast<double>(rows.size());
    if (with_recall) {
        agg.recall = r / static_cast<double>(with_recall);
        agg.f1 = compute_f1(agg.precision, *agg.recall);
    }
    return agg;
}

}  // namespace

std::vector<AggregateRow> aggregate(std::span<const ResponseScore> scores) {
    std::vector<std::string> models;
    for (const auto& s : scores)
        if (std::find(models.begin(), models.end(), s.model_id) == models.end()) models.push_back(s.model_id);
    std::vector<AggregateRow> rows;
    for (const auto& model : models) {
        std::vector<const ResponseScore*> all;
        std::map<PromptSource, std::vector<const ResponseScore*>> by_source;
        for (const auto& s : scores) {
            if (s.model_id != model) continue;
            all.push_back(&s);
            by_source[s.source].push_back(&s);
        }
        rows.push_back(fold(model, "Overall", all));
        for (const auto& [source, list] : by_source) rows.push_back(fold(model, std::string(block_name(source)), list));
    }
    return rows;
}

EvaluationReport make_report(std::vector<ResponseScore> scores, std::vector<std::string> notes) {
    EvaluationReport report;
    report.per_response = std::move(scores);
    report.aggregates = aggregate(report.per_response);
    report.notes = std::move(notes);
    return report;
}

void to_json(json& j, const AggregateRow& r) {
    j = json{{"model_id", r.model_id}, {"block", r.block}, {"responses", r.responses}, {"precision", r.precision}};
    j["recall"] = r.recall ? json(*r.recall) : json(nullptr);
    j["f1"] = r.f1 ? json(*r.f1) : json(nullptr);
}

void to_json(json& j, const EvaluationReport& r) {
    j = json{{"per_response", r.per_response}, {"aggregates", r.aggregates}, {"notes", r.notes}};
}

void from_json(const json& j, EvaluationReport& r) {
    r.per_response = j.at("per_response").get<std::vector<ResponseScore>>();
    r.aggregates = aggregate(r.per_response);
    r.notes = j.value("notes", std::vector<std::string>{});
}

namespace {

std::string pct(std::optional<double> v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", std::floor(*v * 10000.0 + 0.5) / 100.0);
    return buf;
}

std::string pad(const std::string& s, std::size_t width, bool right = true) {
    if (s.size() >= width) return s;
    return right ? std::string(width - s.size(), ' ') + s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string render_table(const EvaluationReport& report) {
    std::vector<std::string> blocks{"Overall"};
    std::vector<std::string> models;
    for (const auto& row : report.aggregates) {
        if (std::find(blocks.begin(), blocks.end(), row.block) == blocks.end()) blocks.push_back(row.block);
        if (std::find(models.begin(), models.end(), row.model_id) == models.end()) models.push_back(row.model_id);
    }
    std::size_t name_w = 5;
    for (const auto& m : models) name_w = std::max(name_w, m.size());
    constexpr std::size_t col = 9;
    const std::size_t block_w = 3 * col + 2;

    std::ostringstream out;
    out << pad("", name_w, false);
    for (const auto& b : blocks) out << " | " << pad(b, block_w, false);
    out << "\n" << pad("Model", name_w, false);
    for (std::size_t i = 0; i < blocks.size(); ++i)
        out << " | " << pad("Precision", col) << ' ' << pad("Recall", col) << ' ' << pad("F1", col);
    out << "\n" << std::string(name_w, '-');
    for (std::size_t i = 0; i < blocks.size(); ++i) out << "-+-" << std::string(block_w, '-');
    out << "\n";
    for (const auto& m : models) {
        out << pad(m, name_w, false);
        for (const auto& b : blocks) {
            auto it = std::find_if(report.aggregates.begin(), report.aggregates.end(),
                                   [&](const AggregateRow& r) { return r.model_id == m && r.block == b; });
            if (it == report.aggregates.end()) {
                out << " | " << pad("-", col) << ' ' << pad("-", col) << ' ' << pad("-", col);
            } else {
                out << " | " << pad(pct(it->precision), col) << ' ' << pad(pct(it->recall), col) << ' '
                    << pad(pct(it->f1), col);
            }
        }
        out << "\n";
    }
    // No trailing blanks from left-aligned last columns.
    std::string table;
    for (const auto& line : split_lines(out.str())) {
        auto end = line.find_last_not_of(' ');
        table += line.substr(0, end == std::string::npos ? 0 : end + 1) + "\n";
    }
    return table;
}

}  // namespace verifact
