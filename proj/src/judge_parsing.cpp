#include "verifact/judge_parsing.hpp"

#include "verifact/text.hpp"

#include <algorithm>
#include <cctype>

namespace verifact {

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Position of the last case-sensitive whole-word occurrence, or npos.
std::size_t last_word(std::string_view text, std::string_view word) {
    std::size_t found = std::string_view::npos;
    for (auto pos = text.find(word); pos != std::string_view::npos; pos = text.find(word, pos + 1)) {
        bool left = pos == 0 || !is_word_char(text[pos - 1]);
        bool right = pos + word.size() == text.size() || !is_word_char(text[pos + word.size()]);
        if (left && right) found = pos;
    }
    return found;
}

}  // namespace

std::optional<bool> parse_yes_no(std::string_view text) {
    auto yes = last_word(text, "YES");
    auto no = last_word(text, "NO");
    if (yes != std::string_view::npos || no != std::string_view::npos) {
        if (yes == std::string_view::npos) return false;
        if (no == std::string_view::npos) return true;
        return yes > no;
    }
    auto t = trim(text);
    std::size_t i = 0;
    while (i < t.size() && !std::isalpha(static_cast<unsigned char>(t[i]))) ++i;
    std::size_t j = i;
    while (j < t.size() && std::isalpha(static_cast<unsigned char>(t[j]))) ++j;
    auto first = to_lower_ascii(std::string_view(t).substr(i, j - i));
    if (first == "yes") return true;
    if (first == "no") return false;
    return std::nullopt;
}

std::optional<std::string> extract_fenced(std::string_view text) {
    auto open = text.find("```");
    if (open == std::string_view::npos) return std::nullopt;
    auto close = text.find("```", open + 3);
    if (close == std::string_view::npos) {
        // Only a closing fence: the opening one was part of the prompt.
        auto before = trim(text.substr(0, open));
        if (before.empty()) return std::nullopt;
        return before;
    }
    auto inner = text.substr(open + 3, close - open - 3);
    // Drop an info string such as ```text on the opening line.
    auto nl = inner.find('\n');
    if (nl != std::string_view::npos) {
        auto info = trim(inner.substr(0, nl));
        bool info_string = !info.empty() && info.find(' ') == std::string::npos && info.size() <= 12 &&
                           std::all_of(info.begin(), info.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); }) &&
                           !trim(inner.substr(nl + 1)).empty();
        if (info_string) inner = inner.substr(nl + 1);
    }
    return trim(inner);
}

}  // namespace verifact
