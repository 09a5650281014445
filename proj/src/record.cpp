#include "ovce/record.hpp"

#include "ovce/error.hpp"

namespace ovce {

std::string ExplanationRecord::key() const {
    return std::to_string(neuron_id) + "/" + std::to_string(range_id) + "/" + granularity;
}

namespace {

nlohmann::json counts_json(const AlignmentCounts& c) {
    return {{"intersection", c.intersection},       {"formula_size", c.formula_size},
            {"activation_size", c.activation_size}, {"samples_overlap", c.samples_overlap},
            {"samples_formula", c.samples_formula}, {"samples_active", c.samples_active}};
}

AlignmentCounts counts_from_json(const nlohmann::json& j) {
    AlignmentCounts c;
    c.intersection = j.at("intersection").get<std::uint64_t>();
    c.formula_size = j.at("formula_size").get<std::uint64_t>();
    c.activation_size = j.at("activation_size").get<std::uint64_t>();
    c.samples_overlap = j.at("samples_overlap").get<std::uint64_t>();
    c.samples_formula = j.at("samples_formula").get<std::uint64_t>();
    c.samples_active = j.at("samples_active").get<std::uint64_t>();
    return c;
}

} // namespace

nlohmann::json to_json(const ExplanationRecord& r) {
    nlohmann::json j;
    j["neuron_id"] = r.neuron_id;
    j["range_id"] = r.range_id;
    j["granularity"] = r.granularity;
    j["formula"] = r.formula_text;
    j["formula_struct"] = r.formula.to_json();
    j["canonical_key"] = r.canonical_key;
    j["iou_exact"] = {r.iou_exact.num, r.iou_exact.den};
    j["metrics"] = to_json(r.metrics);
    j["counts"] = counts_json(r.counts);
    j["range"] = to_json(r.range);
    j["registry_hash"] = r.registry_hash;
    j["archive_hash"] = r.archive_hash;
    j["timestamp"] = r.timestamp;
    j["parent_run"] = r.parent_run ? nlohmann::json(*r.parent_run) : nlohmann::json(nullptr);
    return j;
}

ExplanationRecord record_from_json(const nlohmann::json& j) {
    try {
        ExplanationRecord r;
        r.neuron_id = j.at("neuron_id").get<std::size_t>();
        r.range_id = j.at("range_id").get<int>();
        r.granularity = j.value("granularity", "all");
        r.formula_text = j.at("formula").get<std::string>();
        r.formula = Formula::from_json(j.at("formula_struct"));
        r.canonical_key = j.at("canonical_key").get<std::string>();
        r.iou_exact = {j.at("iou_exact").at(0).get<std::uint64_t>(), j.at("iou_exact").at(1).get<std::uint64_t>()};
        r.metrics = metrics_from_json(j.at("metrics"));
        r.counts = counts_from_json(j.at("counts"));
        r.range = range_from_json(j.at("range"));
        r.registry_hash = j.value("registry_hash", "");
        r.archive_hash = j.value("archive_hash", "");
        r.timestamp = j.value("timestamp", "");
        if (j.contains("parent_run") && !j["parent_run"].is_null()) r.parent_run = j["parent_run"].get<std::string>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad explanation record: ") + e.what());
    }
}

ExplanationRecord make_record(const ScoredLabel& best, const BinarizedActivations& acts, const MaskArchive& archive,
                              std::string granularity) {
    ExplanationRecord r;
    r.neuron_id = acts.neuron_id;
    r.range_id = acts.range_id();
    r.granularity = std::move(granularity);
    r.formula = best.formula;
    r.formula_text = best.formula.render(archive.manifest());
    r.canonical_key = best.key;
    r.counts = alignment_counts(best.formula, acts, archive);
    r.metrics = metrics_from_counts(r.counts);
    r.iou_exact = {r.counts.intersection, r.counts.union_size()};
    r.range = acts.range;
    r.registry_hash = archive.manifest().version_hash();
    return r;
}

} // namespace ovce
