#include "verifact/spanmap.hpp"

#include <algorithm>
#include <array>

namespace verifact {

std::optional<CommonSubstring> longest_common_substring(std::u32string_view a, std::u32string_view b) {
    if (a.empty() || b.empty()) return std::nullopt;
    // run[j] = length of the common suffix ending at a[i-1], b[j-1].
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    std::size_t best_len = 0, best_a = 0, best_b = 0;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : 0;
            std::size_t len = cur[j];
            if (len == 0) continue;
            std::size_t sa = i - len, sb = j - len;
            if (len > best_len || (len == best_len && (sa < best_a || (sa == best_a && sb < best_b)))) {
                best_len = len;
                best_a = sa;
                best_b = sb;
            }
        }
        std::swap(prev, cur);
    }
    if (best_len == 0) return std::nullopt;
    return CommonSubstring{std::u32string(a.substr(best_a, best_len)), best_a, best_a + best_len, best_b};
}

std::optional<Utf8CommonSubstring> longest_common_substring(std::string_view a, std::string_view b) {
    auto ua = utf8_decode(a);
    auto ub = utf8_decode(b);
    auto lcs = longest_common_substring(std::u32string_view(ua), std::u32string_view(ub));
    if (!lcs) return std::nullopt;
    return Utf8CommonSubstring{utf8_encode(lcs->text), lcs->start_in_a, lcs->end_in_a};
}

std::size_t CoverageMask::marked_count() const noexcept {
    return static_cast<std::size_t>(std::count(marked.begin(), marked.end(), true));
}

CoverageMask mark_coverage(std::string_view response, std::span<const std::string> facts) {
    auto original = utf8_decode(response);
    auto view = normalize_with_map(original);
    CoverageMask mask{std::vector<bool>(original.size(), false)};
    for (const auto& fact : facts) {
        auto fact_view = normalize_with_map(utf8_decode(fact));
        auto lcs = longest_common_substring(std::u32string_view(view.text), std::u32string_view(fact_view.text));
        if (!lcs) continue;
        auto from = view.origin[lcs->start_in_a].start;
        auto to = view.origin[lcs->end_in_a - 1].end;
        std::fill(mask.marked.begin() + static_cast<std::ptrdiff_t>(from),
                  mask.marked.begin() + static_cast<std::ptrdiff_t>(to), true);
    }
    return mask;
}

std::vector<MissingSpan> unmarked_segments(std::string_view response, const CoverageMask& mask) {
    auto original = utf8_decode(response);
    std::vector<MissingSpan> spans;
    std::size_t i = 0;
    while (i < mask.marked.size()) {
        if (mask.marked[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < mask.marked.size() && !mask.marked[j]) ++j;
        spans.push_back({utf8_encode(std::u32string_view(original).substr(i, j - i)), {i, j}});
        i = j;
    }
    return spans;
}

bool is_function_words_only(std::string_view text) {
    static constexpr std::array<std::string_view, 72> kFunctionWords = {
        "a",     "an",    "the",   "of",    "in",    "on",    "at",    "to",    "for",   "by",   "with", "from",
        "as",    "into",  "onto",  "upon",  "about", "over",  "under", "and",   "or",    "nor",  "but",  "is",
        "are",   "was",   "were",  "be",    "been",  "being", "am",    "it",    "its",   "this", "that", "these",
        "those", "there", "here",  "which", "who",   "whom",  "whose", "what",  "he",    "she",  "they", "them",
        "his",   "her",   "their", "we",    "our",   "you",   "your",  "i",     "me",    "my",   "has",  "have",
        "had",   "do",    "does",  "did",   "also",  "such",  "very",  "can",   "will",  "may",  "not",  "s"};
    auto tokens = tokenize(text);
    return std::all_of(tokens.begin(), tokens.end(), [](const std::string& t) {
        return std::find(kFunctionWords.begin(), kFunctionWords.end(), t) != kFunctionWords.end();
    });
}

std::optional<MissingSpan> filter_span(const MissingSpan& segment, const SpanFilter& filter) {
    auto cps = utf8_decode(segment.text);
    std::size_t b = 0, e = cps.size();
    auto noise = [](char32_t c) { return is_space(c) || is_punct(c); };
    while (b < e && noise(cps[b])) ++b;
    while (e > b && noise(cps[e - 1])) --e;
    if (e - b < filter.min_length || e == b) return std::nullopt;
    MissingSpan trimmed{utf8_encode(std::u32string_view(cps).substr(b, e - b)),
                        {segment.range.start + b, segment.range.start + e}};
    if (filter.drop_function_words && is_function_words_only(trimmed.text)) return std::nullopt;
    return trimmed;
}

std::vector<MissingSpan> find_unmarked_spans(std::string_view response, std::span<const std::string> facts) {
    return unmarked_segments(response, mark_coverage(response, facts));
}

std::vector<MissingSpan> find_missing_spans(std::string_view response, std::span<const std::string> facts,
                                            const SpanFilter& filter) {
    std::vector<MissingSpan> out;
    for (const auto& segment : find_unmarked_spans(response, facts))
        if (auto kept = filter_span(segment, filter)) out.push_back(std::move(*kept));
    return out;
}

}  // namespace verifact
