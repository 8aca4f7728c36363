#include <doctest.h>

#include "verifact/digest.hpp"
#include "verifact/html.hpp"
#include "verifact/text.hpp"

using namespace verifact;

TEST_CASE("utf8 round trip and lengths") {
    std::string s = "naïve café – 東京";
    auto cps = utf8_decode(s);
    CHECK(cps.size() == 15);
    CHECK(utf8_length(s) == 15);
    CHECK(utf8_encode(cps) == s);
    CHECK(utf8_slice(s, {11, 15}) == "– 東京");
}

TEST_CASE("normalize folds case and collapses whitespace") {
    CHECK(normalize("  Hello \t  WORLD\n") == "hello world");
    CHECK(normalize("ÉCOLE Straße") == "école straße");
    CHECK(normalize("") == "");
}

TEST_CASE("normalized view maps back to original positions") {
    std::u32string original = U"A  b\tC";
    auto view = normalize_with_map(original);
    CHECK(view.text == U"a b c");
    REQUIRE(view.origin.size() == view.text.size());
    CHECK(view.origin[1] == CharRange{1, 3});
    CHECK(view.origin[4] == CharRange{5, 6});
}

TEST_CASE("tokenize and word matching") {
    CHECK(tokenize("It's 330 metres, roughly.") == std::vector<std::string>{"it", "s", "330", "metres", "roughly"});
    CHECK(contains_word("Label: SUPPORTED.", "supported"));
    CHECK_FALSE(contains_word("unsupported", "supported"));
}

TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("html to paragraphs") {
    std::string html =
        "<html><head><title>T</title><style>p{color:red}</style><script>var a = '<p>x</p>';</script></head>"
        "<body><!-- hidden comment --><nav>Home</nav><h1>Boiling point</h1>"
        "<p>Water boils at 100 &deg;C at sea level &amp; standard pressure.</p>"
        "<div>Short</div><p>Salt raises the boiling point&#8212;slightly.\n   Only a little.</p></body></html>";
    auto paras = html_to_paragraphs(html);
    REQUIRE(paras.size() == 2);
    CHECK(paras[0] == "Water boils at 100 °C at sea level & standard pressure.");
    CHECK(paras[1] == "Salt raises the boiling point—slightly. Only a little.");
    CHECK(html_to_text(html) == paras[0] + "\n\n" + paras[1]);
}
