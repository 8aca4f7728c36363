#include "verifact/pipeline.hpp"

#include "verifact/parallel.hpp"

#include <spdlog/spdlog.h>

namespace verifact {

void to_json(json& j, const RefinedResponse& r) {
    j = json{{"response_id", r.response_id},
             {"facts", r.refinement.facts},
             {"records", r.refinement.records},
             {"unresolved", r.refinement.unresolved},
             {"errors", r.refinement.errors},
             {"resolved_relations", r.refinement.resolved_relations}};
}

void from_json(const json& j, RefinedResponse& r) {
    r.response_id = j.at("response_id").get<std::string>();
    r.refinement.facts = j.at("facts").get<std::vector<FactRecord>>();
    r.refinement.records = j.value("records", std::vector<RefinementRecord>{});
    r.refinement.unresolved = j.value("unresolved", std::vector<MissingSpan>{});
    r.refinement.errors = j.value("errors", std::vector<std::string>{});
    r.refinement.resolved_relations = j.value("resolved_relations", std::size_t{0});
}

void to_json(json& j, const VerifiedResponse& v) {
    json before = json::object();
    for (const auto& [id, label] : v.before_refinement) before[id] = label;
    j = json{{"response_id", v.response_id}, {"facts", v.facts}, {"bundles", v.bundles}, {"before_refinement", before}};
}

void from_json(const json& j, VerifiedResponse& v) {
    v.response_id = j.at("response_id").get<std::string>();
    v.facts = j.at("facts").get<std::vector<FactRecord>>();
    v.bundles = j.value("bundles", std::vector<EvidenceBundle>{});
    v.before_refinement.clear();
    for (const auto& [id, label] : j.value("before_refinement", json::object()).items())
        v.before_refinement[id] = label.get<VerificationLabel>();
}

Pipeline::Pipeline(Gateway& gateway, PipelineOptions options) : gateway_(gateway), options_(std::move(options)) {}

DecompositionResult Pipeline::extract(const ModelResponse& response) const {
    auto opts = options_.extraction;
    opts.jobs = std::max(opts.jobs, options_.jobs);
    return decompose(response, gateway_, opts);
}

DetectionResult Pipeline::detect(const DecompositionResult& decomposition, const ModelResponse& response) const {
    if (!options_.run_detection) {
        DetectionResult passthrough;
        passthrough.response_id = response.id;
        passthrough.facts = decomposition.facts;
        return passthrough;
    }
    auto opts = options_.detection;
    opts.jobs = std::max(opts.jobs, options_.jobs);
    return verifact::detect(decomposition, response, gateway_, opts);
}

RefinedResponse Pipeline::refine(const DetectionResult& detection, const ModelResponse& response,
                                 const Prompt& prompt) const {
    RefinedResponse out;
    out.response_id = response.id;
    if (!options_.run_refinement) {
        out.refinement.facts = detection.facts;
        return out;
    }
    RefineContext ctx{prompt.text, response.text, response.id, 0};
    out.refinement = refine_all(detection.facts, detection.relation_issues, ctx, gateway_, options_.jobs);
    return out;
}

VerifiedResponse Pipeline::verify(const std::string& response_id, const std::vector<FactRecord>& facts,
                                  const std::vector<RefinementRecord>& records, const EvidenceSource& source) const {
    VerifiedResponse out;
    out.response_id = response_id;
    auto results = parallel_map(facts.size(), options_.jobs,
                                [&](std::size_t i) { return verify_fact(facts[i], source, gateway_, options_.verify); });
    out.facts = facts;
    for (std::size_t i = 0; i < facts.size(); ++i) {
        out.facts[i].verification = results[i].outcome;
        out.bundles.push_back(std::move(results[i].bundle));
    }

    if (options_.track_flips) {
        std::vector<const FactRecord*> originals;
        for (const auto& r : records)
            if (r.strategy == RefinementStrategy::ReviseIncomplete && r.before && r.before->text != r.after.text)
                originals.push_back(&*r.before);
        auto before = parallel_map(originals.size(), options_.jobs, [&](std::size_t i) {
            return verify_fact(*originals[i], source, gateway_, options_.verify).outcome.label;
        });
        for (std::size_t i = 0; i < originals.size(); ++i) out.before_refinement[originals[i]->id] = before[i];
    }
    return out;
}

ResponseRun Pipeline::run(const Prompt& prompt, const ModelResponse& response, const EvidenceProvider* evidence) const {
    ResponseRun run;
    run.response = response;
    run.decomposition = extract(response);
    run.detection = detect(run.decomposition, response);
    run.refined = refine(run.detection, response, prompt);
    for (const auto& e : run.refined.refinement.errors) run.errors.push_back("refinement: " + e);
    if (evidence) {
        run.verified = verify(response.id, run.refined.refinement.facts, run.refined.refinement.records,
                              (*evidence)(prompt.id));
    }
    return run;
}

ReferenceSet Pipeline::build_reference(const Prompt& prompt, const std::vector<ModelResponse>& answers,
                                       ReferenceProvenance provenance, const EvidenceProvider* evidence,
                                       std::vector<std::string>* errors) const {
    if (provenance == ReferenceProvenance::ModelUnion && !evidence)
        throw ConfigError("model-union reference sets need an evidence source");
    std::vector<AnswerFacts> facts;
    for (const auto& answer : answers) {
        try {
            auto r = run(prompt, answer, provenance == ReferenceProvenance::ModelUnion ? evidence : nullptr);
            facts.push_back({answer.id, r.verified ? r.verified->facts : r.refined.refinement.facts});
        } catch (const Error& e) {
            spdlog::warn("reference answer {} skipped: {}", answer.id, e.what());
            if (errors) errors->push_back(answer.id + ": " + e.what());
        }
    }
    return build_reference_set(prompt.id, facts, provenance);
}

ResponseScore Pipeline::score(const ResponseRun& run, const Prompt& prompt, const ReferenceSet* reference) const {
    ResponseScore s;
    s.response_id = run.response.id;
    s.prompt_id = run.response.prompt_id;
    s.model_id = run.response.model_id;
    s.source = prompt.source;
    s.notes = run.errors;
    if (!run.verified) throw Error("response " + run.response.id + " was not verified");
    s.labels = count_labels(run.verified->facts);
    s.precision = compute_precision(run.verified->facts);
    if (reference && !reference->facts.empty()) {
        auto recall = compute_recall(*reference, run.response, gateway_, options_.verify.judge_index, options_.jobs);
        s.recall = recall.recall;
        s.f1 = compute_f1(s.precision, recall.recall);
        for (const auto& f : recall.flagged) s.notes.push_back("recall fallback: " + f);
    } else {
        s.notes.push_back("no reference set; recall skipped");
    }
    return s;
}

}  // namespace verifact
