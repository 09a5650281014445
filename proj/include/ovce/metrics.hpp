#pragma once

#include "ovce/activation_store.hpp"
#include "ovce/formula.hpp"
#include "ovce/mask_store.hpp"

#include <json.hpp>

#include <cstdint>

namespace ovce {

/// Raw counts behind every metric of one (formula, binarized activations) pair.
struct AlignmentCounts {
    std::uint64_t intersection = 0;   // |A ∩ θ|
    std::uint64_t formula_size = 0;   // |θ|
    std::uint64_t activation_size = 0; // |A|
    std::uint64_t samples_overlap = 0; // #{x : |A^x ∩ θ^x| > 0}
    std::uint64_t samples_formula = 0; // #{x : |θ^x| > 0}
    std::uint64_t samples_active = 0;  // #{x : |A^x| > 0}

    std::uint64_t union_size() const { return activation_size + formula_size - intersection; }
    friend bool operator==(const AlignmentCounts&, const AlignmentCounts&) = default;
};

/// All five scores; every 0/0 is reported as 0.
struct MetricReport {
    double iou = 0;
    double det_acc = 0;
    double act_cov = 0;
    double sample_cov = 0;
    double expl_cov = 0;

    friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

nlohmann::json to_json(const MetricReport& m);
MetricReport metrics_from_json(const nlohmann::json& j);

/// Throws ShapeMismatch.
AlignmentCounts alignment_counts(const MaskPlane& formula_mask, const BinarizedActivations& acts);
AlignmentCounts alignment_counts(const Formula& f, const BinarizedActivations& acts, const MaskArchive& archive);

MetricReport metrics_from_counts(const AlignmentCounts& c);

double iou(const Formula& f, const BinarizedActivations& acts, const MaskArchive& archive);
double det_acc(const Formula& f, const BinarizedActivations& acts, const MaskArchive& archive);
double act_cov(const Formula& f, const BinarizedActivations& acts, const MaskArchive& archive);
double sample_cov(const Formula& f, const BinarizedActivations& acts, const MaskArchive& archive);
double expl_cov(const Formula& f, const BinarizedActivations& acts, const MaskArchive& archive);
MetricReport compute_metrics(const Formula& f, const BinarizedActivations& acts, const MaskArchive& archive);

} // namespace ovce
