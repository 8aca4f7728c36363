#include "verifact/html.hpp"

#include "verifact/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <utility>

namespace verifact {

namespace {

constexpr std::array<std::pair<std::string_view, char32_t>, 24> kEntities = {{
    {"amp", U'&'},     {"lt", U'<'},      {"gt", U'>'},      {"quot", U'"'},     {"apos", U'\''},   {"nbsp", U' '},
    {"mdash", 0x2014}, {"ndash", 0x2013}, {"hellip", 0x2026}, {"lsquo", 0x2018}, {"rsquo", 0x2019}, {"ldquo", 0x201C},
    {"rdquo", 0x201D}, {"copy", 0xA9},    {"reg", 0xAE},     {"trade", 0x2122},  {"deg", 0xB0},     {"middot", 0xB7},
    {"bull", 0x2022},  {"times", 0xD7},   {"euro", 0x20AC},  {"pound", 0xA3},    {"cent", 0xA2},    {"sect", 0xA7},
}};

constexpr std::array<std::string_view, 6> kSkipContent = {"script", "style", "noscript", "template", "svg", "iframe"};

constexpr std::array<std::string_view, 33> kBlockTags = {
    "p",       "div",    "br",     "li",     "ul",    "ol",      "h1",     "h2",    "h3",    "h4",    "h5",
    "h6",      "tr",     "table",  "section", "article", "header", "footer", "aside", "nav",   "main",  "blockquote",
    "pre",     "hr",     "title",  "dd",     "dt",    "dl",      "figure", "figcaption", "form", "body", "html"};

template <std::size_t N>
bool in(const std::array<std::string_view, N>& set, std::string_view name) {
    return std::find(set.begin(), set.end(), name) != set.end();
}

}  // namespace

std::string decode_entities(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '&') {
            out.push_back(text[i++]);
            continue;
        }
        auto semi = text.find(';', i + 1);
        if (semi == std::string_view::npos || semi - i > 12) {
            out.push_back(text[i++]);
            continue;
        }
        auto name = text.substr(i + 1, semi - i - 1);
        bool decoded = false;
        if (!name.empty() && name[0] == '#') {
            try {
                unsigned long cp = (name.size() > 1 && (name[1] == 'x' || name[1] == 'X'))
                                       ? std::stoul(std::string(name.substr(2)), nullptr, 16)
                                       : std::stoul(std::string(name.substr(1)), nullptr, 10);
                if (cp > 0 && cp <= 0x10FFFF && !(cp >= 0xD800 && cp <= 0xDFFF)) {
                    out += utf8_encode(static_cast<char32_t>(cp));
                    decoded = true;
                }
            } catch (const std::exception&) {
            }
        } else {
            for (const auto& [n, cp] : kEntities) {
                if (n == name) {
                    out += utf8_encode(cp);
                    decoded = true;
                    break;
                }
            }
        }
        if (decoded) {
            i = semi + 1;
        } else {
            out.push_back(text[i++]);
        }
    }
    return out;
}

std::vector<std::string> html_to_paragraphs(std::string_view html, std::size_t min_chars) {
    std::vector<std::string> raw_paragraphs;
    std::string current;
    auto flush = [&] {
        raw_paragraphs.push_back(std::move(current));
        current.clear();
    };

    std::size_t i = 0;
    while (i < html.size()) {
        char c = html[i];
        if (c != '<') {
            current.push_back(c);
            ++i;
            continue;
        }
        if (html.compare(i, 4, "<!--") == 0) {
            auto end = html.find("-->", i + 4);
            i = end == std::string_view::npos ? html.size() : end + 3;
            continue;
        }
        auto close = html.find('>', i + 1);
        if (close == std::string_view::npos) {
            current.append(html.substr(i));
            break;
        }
        auto tag = html.substr(i + 1, close - i - 1);
        bool closing = !tag.empty() && tag[0] == '/';
        if (closing) tag.remove_prefix(1);
        std::size_t n = 0;
        while (n < tag.size() && (std::isalnum(static_cast<unsigned char>(tag[n])) || tag[n] == '-')) ++n;
        auto name = to_lower_ascii(tag.substr(0, n));
        i = close + 1;
        if (name.empty()) continue;  // <!DOCTYPE>, <?xml?>, stray '<'

        if (!closing && in(kSkipContent, name) && (tag.empty() || tag.back() != '/')) {
            std::string end_tag = "</" + name;
            std::size_t search = i;
            std::size_t found = std::string_view::npos;
            while (true) {
                auto pos = html.find('<', search);
                if (pos == std::string_view::npos) break;
                if (iequals(html.substr(pos, end_tag.size()), end_tag)) {
                    found = pos;
                    break;
                }
                search = pos + 1;
            }
            if (found == std::string_view::npos) {
                i = html.size();
            } else {
                auto gt = html.find('>', found);
                i = gt == std::string_view::npos ? html.size() : gt + 1;
            }
            continue;
        }
        if (in(kBlockTags, name)) {
            flush();
        } else if (name == "td" || name == "th") {
            current.push_back(' ');
        }
    }
    flush();

    std::vector<std::string> paragraphs;
    for (auto& p : raw_paragraphs) {
        auto decoded = utf8_decode(decode_entities(p));
        std::u32string collapsed;
        for (char32_t ch : decoded) {
            if (is_space(ch)) {
                if (!collapsed.empty() && collapsed.back() != U' ') collapsed.push_back(U' ');
            } else {
                collapsed.push_back(ch);
            }
        }
        while (!collapsed.empty() && collapsed.back() == U' ') collapsed.pop_back();
        if (collapsed.size() < std::max<std::size_t>(min_chars, 1)) continue;
        paragraphs.push_back(utf8_encode(collapsed));
    }
    return paragraphs;
}

std::string html_to_text(std::string_view html, std::size_t min_chars) {
    std::string out;
    for (const auto& p : html_to_paragraphs(html, min_chars)) {
        if (!out.empty()) out += "\n\n";
        out += p;
    }
    return out;
}

}  // namespace verifact
