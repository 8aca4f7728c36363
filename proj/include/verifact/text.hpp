#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace verifact {

/// Half-open interval [start, end) over Unicode scalar values.
struct CharRange {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - start; }
    bool empty() const noexcept { return end <= start; }
    bool within(std::size_t length) const noexcept { return start <= end && end <= length; }
    auto operator<=>(const CharRange&) const = default;
};

// UTF-8 helpers. Invalid sequences decode to U+FFFD, one per offending byte.
std::u32string utf8_decode(std::string_view s);
std::string utf8_encode(std::u32string_view s);
std::string utf8_encode(char32_t c);
std::size_t utf8_length(std::string_view s);
/// Slice by scalar-value indices; throws std::out_of_range if the range exceeds the text.
std::string utf8_slice(std::string_view s, CharRange range);

char32_t fold_case(char32_t c) noexcept;
bool is_space(char32_t c) noexcept;
bool is_alnum(char32_t c) noexcept;
bool is_punct(char32_t c) noexcept;

/// Case-folded, whitespace-collapsed view of a text with a map back to the
/// original scalar positions. `origin[i]` is the original range that
/// normalized position i stands for (a collapsed space covers the whole run).
struct NormalizedText {
    std::u32string text;
    std::vector<CharRange> origin;
};

NormalizedText normalize_with_map(std::u32string_view original);

/// Case-folded, whitespace-collapsed, trimmed UTF-8 text. Used as the
/// identity key for exact-duplicate detection.
std::string normalize(std::string_view s);

/// Lowercased alphanumeric word tokens.
std::vector<std::string> tokenize(std::string_view s);

std::string trim(std::string_view s);
bool iequals(std::string_view a, std::string_view b) noexcept;
std::string to_lower_ascii(std::string_view s);

/// True when `word` occurs in `text` as a whole word (case-insensitive, ASCII word boundaries).
bool contains_word(std::string_view text, std::string_view word) noexcept;

std::vector<std::string> split_lines(std::string_view s);

}  // namespace verifact
