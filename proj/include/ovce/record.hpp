#pragma once

#include "ovce/activation_store.hpp"
#include "ovce/formula.hpp"
#include "ovce/metrics.hpp"
#include "ovce/search.hpp"

#include <json.hpp>

#include <optional>
#include <string>

namespace ovce {

/// Best explanation of one neuron range under one concept granularity.
struct ExplanationRecord {
    std::size_t neuron_id = 0;
    int range_id = 0;
    /// "all", or the label of the single subset searched.
    std::string granularity = "all";
    std::string formula_text;
    Formula formula;
    CanonicalKey canonical_key;
    Ratio iou_exact;
    MetricReport metrics;
    AlignmentCounts counts;
    ActivationRange range;
    std::string registry_hash;
    std::string archive_hash;
    std::string timestamp;
    std::optional<std::string> parent_run;

    /// (neuron, range, granularity) as "n/r/g".
    std::string key() const;
};

nlohmann::json to_json(const ExplanationRecord& r);
ExplanationRecord record_from_json(const nlohmann::json& j);

/// Metrics and counts filled from the formula's alignment with `acts`.
ExplanationRecord make_record(const ScoredLabel& best, const BinarizedActivations& acts, const MaskArchive& archive,
                              std::string granularity);

} // namespace ovce
