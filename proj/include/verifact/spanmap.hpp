#pragma once

#include "verifact/core.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace verifact {

struct CommonSubstring {
    std::u32string text;
    std::size_t start_in_a = 0;
    std::size_t end_in_a = 0;
    std::size_t start_in_b = 0;
    bool operator==(const CommonSubstring&) const = default;
};

/// Longest contiguous run shared by `a` and `b`. Ties go to the smallest
/// start in `a`, then the smallest start in `b`. Empty when no character is shared.
std::optional<CommonSubstring> longest_common_substring(std::u32string_view a, std::u32string_view b);

/// UTF-8 convenience form; positions are scalar-value indices into `a`.
struct Utf8CommonSubstring {
    std::string text;
    std::size_t start_in_a = 0;
    std::size_t end_in_a = 0;
    bool operator==(const Utf8CommonSubstring&) const = default;
};
std::optional<Utf8CommonSubstring> longest_common_substring(std::string_view a, std::string_view b);

/// One flag per response character; true means some fact's longest common
/// substring covers it.
struct CoverageMask {
    std::vector<bool> marked;
    std::size_t response_length() const noexcept { return marked.size(); }
    std::size_t marked_count() const noexcept;
};

/// Marks, for each fact, its single longest common substring with the
/// response. Matching runs on the case-folded, whitespace-collapsed view and
/// is mapped back to original positions.
CoverageMask mark_coverage(std::string_view response, std::span<const std::string> facts);

/// Maximal unmarked runs of the mask, in order, with no filtering.
std::vector<MissingSpan> unmarked_segments(std::string_view response, const CoverageMask& mask);

struct SpanFilter {
    std::size_t min_length = 4;  ///< after trimming whitespace and punctuation
    bool drop_function_words = true;
};

/// True when every word token of `text` is a function word ("the", "of", ...).
bool is_function_words_only(std::string_view text);

/// Trims the segment to its content and applies the noise filter. Returns
/// empty when the segment is discarded.
std::optional<MissingSpan> filter_span(const MissingSpan& segment, const SpanFilter& filter = {});

/// Response spans not covered by any fact, left to right, after the noise filter.
std::vector<MissingSpan> find_missing_spans(std::string_view response, std::span<const std::string> facts,
                                            const SpanFilter& filter = {});

/// Same as find_missing_spans without the noise filter.
std::vector<MissingSpan> find_unmarked_spans(std::string_view response, std::span<const std::string> facts);

}  // namespace verifact
