#pragma once

#include "verifact/benchmark.hpp"
#include "verifact/detection.hpp"
#include "verifact/extraction.hpp"
#include "verifact/gateway.hpp"
#include "verifact/refinement.hpp"
#include "verifact/verification.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace verifact {

struct PipelineOptions {
    ExtractionOptions extraction;
    DetectionOptions detection;
    VerifyOptions verify;
    bool run_detection = true;
    bool run_refinement = true;
    /// Also verify the pre-refinement text of every revised fact.
    bool track_flips = false;
    std::size_t jobs = 1;
};

/// Evidence source for a prompt id.
using EvidenceProvider = std::function<EvidenceSource(const std::string& prompt_id)>;

struct RefinedResponse {
    std::string response_id;
    RefinementResult refinement;
};

void to_json(json& j, const RefinedResponse& r);
void from_json(const json& j, RefinedResponse& r);

struct VerifiedResponse {
    std::string response_id;
    std::vector<FactRecord> facts;
    std::vector<EvidenceBundle> bundles;
    /// Labels of the pre-refinement text of revised facts, by fact id.
    std::map<std::string, VerificationLabel> before_refinement;
};

void to_json(json& j, const VerifiedResponse& v);
void from_json(const json& j, VerifiedResponse& v);

struct ResponseRun {
    ModelResponse response;
    DecompositionResult decomposition;
    DetectionResult detection;
    RefinedResponse refined;
    std::optional<VerifiedResponse> verified;
    std::vector<std::string> errors;
};

/// Stage orchestration over one gateway. Stages can be run one at a time
/// (each consumes the previous stage's output) or all at once.
class Pipeline {
  public:
    Pipeline(Gateway& gateway, PipelineOptions options = {});

    DecompositionResult extract(const ModelResponse& response) const;
    DetectionResult detect(const DecompositionResult& decomposition, const ModelResponse& response) const;
    RefinedResponse refine(const DetectionResult& detection, const ModelResponse& response, const Prompt& prompt) const;
    VerifiedResponse verify(const std::string& response_id, const std::vector<FactRecord>& facts,
                            const std::vector<RefinementRecord>& records, const EvidenceSource& source) const;

    /// Extraction through refinement, plus verification when `evidence` is set.
    ResponseRun run(const Prompt& prompt, const ModelResponse& response, const EvidenceProvider* evidence) const;

    /// Reference facts for one prompt. ModelUnion verifies (so `evidence`
    /// is required); HumanAnswers never does. Answers whose processing
    /// fails are reported in `errors` and skipped.
    ReferenceSet build_reference(const Prompt& prompt, const std::vector<ModelResponse>& answers,
                                 ReferenceProvenance provenance, const EvidenceProvider* evidence,
                                 std::vector<std::string>* errors = nullptr) const;

    /// Precision and (when a reference set exists) recall for one finished run.
    ResponseScore score(const ResponseRun& run, const Prompt& prompt, const ReferenceSet* reference) const;

    const PipelineOptions& options() const noexcept { return options_; }
    Gateway& gateway() const noexcept { return gateway_; }

  private:
    Gateway& gateway_;
    PipelineOptions options_;
};

}  // namespace verifact
