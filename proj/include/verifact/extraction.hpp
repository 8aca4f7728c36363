#pragma once

#include "verifact/core.hpp"
#include "verifact/gateway.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace verifact {

struct Sentence {
    std::string text;
    CharRange range;
    bool operator==(const Sentence&) const = default;
};

/// Rule-based sentence segmentation. Segments are maximal, trimmed, and in
/// order; the text between consecutive segments is whitespace only.
std::vector<Sentence> split_sentences(std::string_view response);

struct SentenceFacts {
    CharRange range;
    std::vector<std::string> fact_ids;
};

struct DecompositionResult {
    std::string response_id;
    std::vector<FactRecord> facts;  ///< origin Decomposed, sentence order
    std::vector<SentenceFacts> sentence_map;
};

void to_json(json& j, const DecompositionResult& d);
void from_json(const json& j, DecompositionResult& d);

/// Reads a judge's fact list. Bullet ("- x"), numbered ("1. x") and
/// one-fact-per-line outputs are accepted; "None" means no facts.
/// Throws ParseError for anything else.
std::vector<std::string> parse_fact_list(std::string_view completion);

struct ExtractionOptions {
    std::size_t judge_index = 0;
    std::size_t jobs = 1;
};

/// Per-sentence decomposition with the full response as context.
DecompositionResult decompose(const ModelResponse& response, Gateway& gateway, const ExtractionOptions& options = {});

}  // namespace verifact
