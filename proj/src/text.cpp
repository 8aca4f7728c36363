#include "verifact/text.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace verifact {

std::u32string utf8_decode(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        auto b0 = static_cast<unsigned char>(s[i]);
        int extra = 0;
        char32_t cp = 0;
        if (b0 < 0x80) {
            out.push_back(b0);
            ++i;
            continue;
        } else if ((b0 & 0xE0) == 0xC0) {
            extra = 1;
            cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            extra = 2;
            cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            extra = 3;
            cp = b0 & 0x07;
        } else {
            out.push_back(U'�');
            ++i;
            continue;
        }
        if (i + extra >= s.size()) {
            out.push_back(U'�');
            ++i;
            continue;
        }
        bool ok = true;
        for (int k = 1; k <= extra; ++k) {
            auto b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (b & 0x3F);
        }
        static constexpr char32_t min_for_len[] = {0, 0x80, 0x800, 0x10000};
        if (!ok || cp < min_for_len[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            out.push_back(U'�');
            ++i;
            continue;
        }
        out.push_back(cp);
        i += extra + 1;
    }
    return out;
}

std::string utf8_encode(char32_t c) {
    std::string out;
    if (c < 0x80) {
        out.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (c >> 6)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else if (c < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (c >> 12)));
        out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (c >> 18)));
        out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
    return out;
}

std::string utf8_encode(std::u32string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char32_t c : s) out += utf8_encode(c);
    return out;
}

std::size_t utf8_length(std::string_view s) { return utf8_decode(s).size(); }

std::string utf8_slice(std::string_view s, CharRange range) {
    auto cps = utf8_decode(s);
    if (!range.within(cps.size())) throw std::out_of_range("character range outside text");
    return utf8_encode(std::u32string_view(cps).substr(range.start, range.size()));
}

char32_t fold_case(char32_t c) noexcept {
    if (c >= U'A' && c <= U'Z') return c + 32;
    if (c < 0x80) return c;
    // Latin-1 supplement (excluding the multiplication sign).
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
    // Latin Extended-A: alternating upper/lower pairs.
    if (c == 0x178) return 0xFF;
    if (c >= 0x100 && c <= 0x17F) {
        if ((c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E)) return (c % 2 == 1) ? c + 1 : c;
        if (c != 0x130 && c != 0x131 && c != 0x138 && c != 0x149 && c != 0x17F) return (c % 2 == 0) ? c + 1 : c;
        return c;
    }
    // Greek and Cyrillic basic blocks.
    if (c >= 0x391 && c <= 0x3AB && c != 0x3A2) return c + 32;
    if (c >= 0x410 && c <= 0x42F) return c + 32;
    if (c >= 0x400 && c <= 0x40F) return c + 80;
    return c;
}

bool is_space(char32_t c) noexcept {
    return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' ||
           c == 0xA0 || c == 0x1680 || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 ||
           c == 0x202F || c == 0x205F || c == 0x3000;
}

bool is_alnum(char32_t c) noexcept {
    if (c < 0x80) return std::isalnum(static_cast<int>(c)) != 0;
    // Treat letters outside ASCII as word characters unless they are
    // punctuation or whitespace.
    return !is_space(c) && !is_punct(c);
}

bool is_punct(char32_t c) noexcept {
    if (c < 0x80) return std::ispunct(static_cast<int>(c)) != 0;
    return (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) || (c >= 0x3000 && c <= 0x303F) ||
           c == 0xA1 || c == 0xA7 || c == 0xAB || c == 0xB6 || c == 0xB7 || c == 0xBB || c == 0xBF;
}

NormalizedText normalize_with_map(std::u32string_view original) {
    NormalizedText out;
    out.text.reserve(original.size());
    out.origin.reserve(original.size());
    std::size_t i = 0;
    while (i < original.size()) {
        if (is_space(original[i])) {
            std::size_t j = i;
            while (j < original.size() && is_space(original[j])) ++j;
            out.text.push_back(U' ');
            out.origin.push_back({i, j});
            i = j;
        } else {
            out.text.push_back(fold_case(original[i]));
            out.origin.push_back({i, i + 1});
            ++i;
        }
    }
    return out;
}

std::string normalize(std::string_view s) {
    auto norm = normalize_with_map(utf8_decode(s)).text;
    std::size_t b = 0, e = norm.size();
    while (b < e && norm[b] == U' ') ++b;
    while (e > b && norm[e - 1] == U' ') --e;
    return utf8_encode(std::u32string_view(norm).substr(b, e - b));
}

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> tokens;
    std::u32string current;
    for (char32_t c : utf8_decode(s)) {
        if (is_alnum(c)) {
            current.push_back(fold_case(c));
        } else if (!current.empty()) {
            tokens.push_back(utf8_encode(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(utf8_encode(current));
    return tokens;
}

std::string trim(std::string_view s) {
    auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    std::size_t b = 0, e = s.size();
    while (b < e && is_ws(s[b])) ++b;
    while (e > b && is_ws(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

bool iequals(std::string_view a, std::string_view b) noexcept {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool contains_word(std::string_view text, std::string_view word) noexcept {
    if (word.empty() || word.size() > text.size()) return false;
    auto is_word_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
    for (std::size_t i = 0; i + word.size() <= text.size(); ++i) {
        if (!iequals(text.substr(i, word.size()), word)) continue;
        bool left_ok = i == 0 || !is_word_char(text[i - 1]);
        bool right_ok = i + word.size() == text.size() || !is_word_char(text[i + word.size()]);
        if (left_ok && right_ok) return true;
    }
    return false;
}

std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto nl = s.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.emplace_back(s.substr(start));
            break;
        }
        auto line = s.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        start = nl + 1;
    }
    return lines;
}

}  // namespace verifact
