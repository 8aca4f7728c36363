#include "verifact/extraction.hpp"

#include "verifact/parallel.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

namespace verifact {

namespace {

constexpr std::array<std::u32string_view, 22> kAbbreviations = {
    U"mr", U"mrs", U"ms", U"dr",  U"prof",   U"sr",   U"jr",  U"st",  U"vs",  U"e.g", U"i.e",
    U"fig", U"vol", U"pp", U"cf", U"approx", U"dept", U"gen", U"gov", U"sen", U"rep", U"mt"};

// Abbreviations only when a number follows ("No. 5").
constexpr std::array<std::u32string_view, 3> kNumberAbbreviations = {U"no", U"nos", U"p"};

// Only abbreviations when the next word does not start a new sentence.
constexpr std::array<std::u32string_view, 8> kSoftAbbreviations = {U"etc", U"inc", U"ltd", U"co",
                                                                   U"corp", U"jan", U"feb", U"aug"};

bool is_terminal(char32_t c) { return c == U'.' || c == U'!' || c == U'?' || c == U'…' || c == U'。' || c == U'！' || c == U'？'; }

bool is_closer(char32_t c) {
    return c == U'"' || c == U'\'' || c == U')' || c == U']' || c == U'”' || c == U'’' || c == U'»';
}

bool is_upper_or_digit(char32_t c) {
    if (c < 0x80) return std::isupper(static_cast<int>(c)) || std::isdigit(static_cast<int>(c));
    return fold_case(c) != c;
}

// Lowercased word immediately preceding position `dot` (exclusive).
std::u32string word_before(const std::u32string& text, std::size_t dot) {
    std::size_t b = dot;
    while (b > 0 && !is_space(text[b - 1]) && text[b - 1] != U'(' && text[b - 1] != U'"') --b;
    std::u32string w;
    for (std::size_t i = b; i < dot; ++i) w.push_back(fold_case(text[i]));
    return w;
}

bool is_initialism(const std::u32string& w) {
    // "u.s", "u.k", "a.m"
    if (w.size() < 3) return false;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (i % 2 == 1 ? w[i] != U'.' : !is_alnum(w[i])) return false;
    }
    return true;
}

}  // namespace

std::vector<Sentence> split_sentences(std::string_view response) {
    auto text = utf8_decode(response);
    std::vector<Sentence> out;
    auto emit = [&](std::size_t b, std::size_t e) {
        while (b < e && is_space(text[b])) ++b;
        while (e > b && is_space(text[e - 1])) --e;
        if (e > b) out.push_back({utf8_encode(std::u32string_view(text).substr(b, e - b)), {b, e}});
    };

    std::size_t start = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        char32_t c = text[i];
        if (c == U'\n') {
            emit(start, i);
            start = i + 1;
            ++i;
            continue;
        }
        if (!is_terminal(c)) {
            ++i;
            continue;
        }
        std::size_t end = i;
        while (end < text.size() && is_terminal(text[end])) ++end;
        bool single_dot = c == U'.' && end == i + 1;
        while (end < text.size() && is_closer(text[end])) ++end;
        bool fullwidth = c == U'。' || c == U'！' || c == U'？';
        bool at_gap = fullwidth || end == text.size() || is_space(text[end]);
        if (!at_gap) {
            i = end;
            continue;
        }
        if (single_dot) {
            auto word = word_before(text, i);
            std::size_t next = end;
            while (next < text.size() && is_space(text[next]) && text[next] != U'\n') ++next;
            bool next_starts_sentence = next >= text.size() || text[next] == U'\n' || is_upper_or_digit(text[next]);
            bool next_is_digit = next < text.size() && text[next] < 0x80 && std::isdigit(static_cast<int>(text[next]));
            bool hard = std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end() ||
                        (next_is_digit && std::find(kNumberAbbreviations.begin(), kNumberAbbreviations.end(),
                                                    word) != kNumberAbbreviations.end());
            bool soft = std::find(kSoftAbbreviations.begin(), kSoftAbbreviations.end(), word) !=
                            kSoftAbbreviations.end() ||
                        is_initialism(word);
            if ((hard && next < text.size() && text[next] != U'\n') || (soft && !next_starts_sentence)) {
                i = end;
                continue;
            }
        }
        emit(start, end);
        start = end;
        i = end;
    }
    emit(start, text.size());
    return out;
}

void to_json(json& j, const DecompositionResult& d) {
    json map = json::array();
    for (const auto& s : d.sentence_map) map.push_back(json{{"range", s.range}, {"fact_ids", s.fact_ids}});
    j = json{{"response_id", d.response_id}, {"facts", d.facts}, {"sentence_map", map}};
}

void from_json(const json& j, DecompositionResult& d) {
    d.response_id = j.at("response_id").get<std::string>();
    d.facts = j.at("facts").get<std::vector<FactRecord>>();
    d.sentence_map.clear();
    for (const auto& s : j.value("sentence_map", json::array()))
        d.sentence_map.push_back({s.at("range").get<CharRange>(), s.at("fact_ids").get<std::vector<std::string>>()});
}

std::vector<std::string> parse_fact_list(std::string_view completion) {
    std::vector<std::string> lines;
    for (auto& raw : split_lines(completion)) {
        auto line = trim(raw);
        if (line.empty() || line.starts_with("```")) continue;
        lines.push_back(std::move(line));
    }
    if (lines.empty()) return {};
    if (lines.size() == 1) {
        auto lowered = to_lower_ascii(lines[0]);
        while (!lowered.empty() && (lowered.back() == '.' || lowered.back() == '!')) lowered.pop_back();
        if (lowered == "none" || lowered == "no facts" || lowered == "n/a" || lowered == "- none") return {};
    }

    auto bullet_item = [](const std::string& line) -> std::optional<std::string> {
        std::size_t p = 0;
        if (line.starts_with("- ") || line.starts_with("* ") || line.starts_with("+ ")) {
            p = 2;
        } else if (line.starts_with("• ")) {
            p = std::string_view("• ").size();
        } else {
            while (p < line.size() && std::isdigit(static_cast<unsigned char>(line[p]))) ++p;
            if (p == 0 || p + 1 >= line.size() || (line[p] != '.' && line[p] != ')') || line[p + 1] != ' ')
                return std::nullopt;
            p += 2;
        }
        auto item = trim(std::string_view(line).substr(p));
        if (item.empty()) return std::nullopt;
        return item;
    };

    std::vector<std::string> items;
    std::vector<const std::string*> plain;
    for (const auto& line : lines) {
        if (auto item = bullet_item(line))
            items.push_back(std::move(*item));
        else
            plain.push_back(&line);
    }

    if (!items.empty()) {
        for (const auto* line : plain)
            if (line->back() != ':') throw ParseError("fact list mixes list items with free text", std::string(completion));
        return items;
    }
    for (const auto* line : plain) {
        char last = line->back();
        bool sentence_like = (last == '.' || last == '!' || last == '?' || last == '"' || last == '\'') &&
                             line->find(' ') != std::string::npos;
        if (!sentence_like) throw ParseError("no extractable fact list", std::string(completion));
        items.push_back(*line);
    }
    return items;
}

DecompositionResult decompose(const ModelResponse& response, Gateway& gateway, const ExtractionOptions& options) {
    auto sentences = split_sentences(response.text);
    auto per_sentence = parallel_map(sentences.size(), options.jobs, [&](std::size_t i) {
        PromptRequest request{TemplateId::Decomposition,
                              {{"context", response.text}, {"sentence", sentences[i].text}},
                              options.judge_index};
        return parse_fact_list(gateway.complete(request));
    });

    DecompositionResult result;
    result.response_id = response.id;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        SentenceFacts entry{sentences[i].range, {}};
        for (auto& text : per_sentence[i]) {
            auto key = normalize(text);
            if (key.empty() || !seen.insert(key).second) continue;
            FactRecord fact;
            fact.id = make_fact_id(response.id, text, FactOrigin::Decomposed);
            fact.response_id = response.id;
            fact.text = std::move(text);
            fact.origin = FactOrigin::Decomposed;
            fact.source_span = sentences[i].range;
            entry.fact_ids.push_back(fact.id);
            result.facts.push_back(std::move(fact));
        }
        result.sentence_map.push_back(std::move(entry));
    }
    return result;
}

}  // namespace verifact
