#include <doctest.h>

#include "support/oracles.hpp"

#include "verifact/spanmap.hpp"

#include <random>

using namespace verifact;
namespace oracle = verifact::testing::oracle;

TEST_CASE("longest common substring examples") {
    auto r = longest_common_substring(std::string_view("abcdef"), std::string_view("zzcdez"));
    REQUIRE(r);
    CHECK(r->text == "cde");
    CHECK(r->start_in_a == 2);
    CHECK(r->end_in_a == 5);
    CHECK_FALSE(longest_common_substring(std::string_view("abc"), std::string_view("xyz")));
    auto same = longest_common_substring(std::string_view("aaa"), std::string_view("aaa"));
    REQUIRE(same);
    CHECK(same->text == "aaa");
    CHECK(same->start_in_a == 0);
    CHECK_FALSE(longest_common_substring(std::string_view(""), std::string_view("abc")));
}

TEST_CASE("longest common substring tie breaks") {
    auto r = longest_common_substring(std::u32string_view(U"xyab"), std::u32string_view(U"abxy"));
    REQUIRE(r);
    CHECK(r->text == U"xy");
    CHECK(r->start_in_a == 0);
    CHECK(r->start_in_b == 2);
    auto twice = longest_common_substring(std::u32string_view(U"ab"), std::u32string_view(U"abab"));
    REQUIRE(twice);
    CHECK(twice->start_in_b == 0);
}

TEST_CASE("longest common substring counts scalar values") {
    auto r = longest_common_substring(std::string_view("über café"), std::string_view("le café noir"));
    REQUIRE(r);
    CHECK(r->text == " café");
    CHECK(r->start_in_a == 4);
    CHECK(r->end_in_a == 9);
}

TEST_CASE("longest common substring matches exhaustive search") {
    std::mt19937 rng(7);
    for (int n = 0; n < 2000; ++n) {
        auto a = oracle::random_string(rng, "abc", 12);
        auto b = oracle::random_string(rng, "abc", 12);
        auto got = longest_common_substring(std::u32string_view(utf8_decode(a)), std::u32string_view(utf8_decode(b)));
        auto want = oracle::lcs(a, b);
        REQUIRE(got.has_value() == want.has_value());
        if (!want) continue;
        CAPTURE(a);
        CAPTURE(b);
        CHECK(utf8_encode(got->text) == want->text);
        CHECK(got->start_in_a == want->start_a);
        CHECK(got->start_in_b == want->start_b);
    }
}

TEST_CASE("missing span examples") {
    std::vector<std::string> facts{"A happened", "B happened"};
    auto spans = find_missing_spans("A happened before B happened", facts);
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].text == "before");
    CHECK(spans[0].range == CharRange{11, 17});

    std::string r = "Water boils at 100 degrees.";
    CHECK(find_missing_spans(r, std::vector<std::string>{r}).empty());
    auto all = find_missing_spans(r, std::vector<std::string>{});
    REQUIRE(all.size() == 1);
    CHECK(all[0].text == "Water boils at 100 degrees");
}

TEST_CASE("matching ignores case and whitespace runs but reports original ranges") {
    std::string r = "Gold  PRICES rose,\tthen fell.";
    auto spans = find_missing_spans(r, std::vector<std::string>{"gold prices rose", "Then fell."});
    CHECK(spans.empty());
    auto unmarked = find_unmarked_spans(r, std::vector<std::string>{"gold prices rose"});
    REQUIRE(unmarked.size() == 1);
    CHECK(unmarked[0].range == CharRange{17, 29});
    CHECK(unmarked[0].text == ",\tthen fell.");
}

TEST_CASE("noise filter") {
    CHECK_FALSE(filter_span({" , the ", {0, 7}}).has_value());
    CHECK_FALSE(filter_span({"and", {0, 3}}).has_value());
    auto kept = filter_span({", because ", {5, 15}});
    REQUIRE(kept);
    CHECK(kept->text == "because");
    CHECK(kept->range == CharRange{7, 14});
    CHECK_FALSE(filter_span({"of the", {0, 6}}).has_value());
    SpanFilter keep_all{1, false};
    CHECK(filter_span({"the", {0, 3}}, keep_all).has_value());
}

TEST_CASE("span mapper matches brute force and keeps its invariants") {
    std::mt19937 rng(11);
    for (int n = 0; n < 300; ++n) {
        auto response = oracle::random_string(rng, "abAB \t", 16, 1);
        std::vector<std::string> facts;
        std::uniform_int_distribution<int> count(0, 3);
        for (int k = count(rng); k > 0; --k) facts.push_back(oracle::random_string(rng, "abAB ", 8));

        auto got = find_unmarked_spans(response, facts);
        auto want = oracle::unmarked(response, facts);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].range == CharRange{want[i].first, want[i].second});
            CHECK(got[i].text == response.substr(want[i].first, want[i].second - want[i].first));
        }

        auto mask = mark_coverage(response, facts);
        std::size_t unmarked_total = 0;
        for (const auto& s : got) unmarked_total += s.range.size();
        CHECK(unmarked_total + mask.marked_count() == response.size());

        auto more = facts;
        more.push_back(oracle::random_string(rng, "abAB ", 8));
        CHECK(mark_coverage(response, more).marked_count() >= mask.marked_count());
        CHECK(find_unmarked_spans(response, facts) == got);
    }
}
