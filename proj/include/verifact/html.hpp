#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace verifact {

/// Decodes named (common subset) and numeric character references.
std::string decode_entities(std::string_view text);

/// Strips markup, drops script/style content, and splits the visible text at
/// block-level elements. Whitespace inside a paragraph is collapsed; paragraphs
/// shorter than `min_chars` characters are dropped.
std::vector<std::string> html_to_paragraphs(std::string_view html, std::size_t min_chars = 20);

/// html_to_paragraphs joined with blank lines.
std::string html_to_text(std::string_view html, std::size_t min_chars = 20);

}  // namespace verifact
