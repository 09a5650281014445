#include "ovce/metrics.hpp"

#include "ovce/error.hpp"

namespace ovce {

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

} // namespace

nlohmann::json to_json(const MetricReport& m) {
    return {{"iou", m.iou},
            {"det_acc", m.det_acc},
            {"act_cov", m.act_cov},
            {"sample_cov", m.sample_cov},
            {"expl_cov", m.expl_cov}};
}

MetricReport metrics_from_json(const nlohmann::json& j) {
    return {j.at("iou").get<double>(), j.at("det_acc").get<double>(), j.at("act_cov").get<double>(),
            j.at("sample_cov").get<double>(), j.at("expl_cov").get<double>()};
}

AlignmentCounts alignment_counts(const MaskPlane& formula_mask, const BinarizedActivations& acts) {
    if (!formula_mask.same_shape(acts.mask)) throw ShapeMismatch("formula mask and activations differ in shape");
    AlignmentCounts c;
    for (std::size_t s = 0; s < formula_mask.samples(); ++s) {
        auto f = formula_mask.sample_words(s);
        auto a = acts.mask.sample_words(s);
        const auto inter = kernels::serial::count_and(f, a);
        const auto fsize = kernels::serial::popcount(f);
        const auto asize = kernels::serial::popcount(a);
        c.intersection += inter;
        c.formula_size += fsize;
        c.activation_size += asize;
        c.samples_overlap += inter > 0;
        c.samples_formula += fsize > 0;
        c.samples_active += asize > 0;
    }
    return c;
}

AlignmentCounts alignment_counts(const Formula& f, const BinarizedActivations& acts, const MaskArchive& archive) {
    return alignment_counts(evaluate_plane(f, archive), acts);
}

MetricReport metrics_from_counts(const AlignmentCounts& c) {
    return {ratio(c.intersection, c.union_size()), ratio(c.intersection, c.formula_size),
            ratio(c.intersection, c.activation_size), ratio(c.samples_overlap, c.samples_formula),
            ratio(c.samples_overlap, c.samples_active)};
}

double iou(const Formula& f, const BinarizedActivations& acts, const MaskArchive& archive) {
    return compute_metrics(f, acts, archive).iou;
}

double det_acc(const Formula& f, const BinarizedActivations& acts, const MaskArchive& archive) {
    return compute_metrics(f, acts, archive).det_acc;
}

double act_cov(const Formula& f, const BinarizedActivations& acts, const MaskArchive& archive) {
    return compute_metrics(f, acts, archive).act_cov;
}

double sample_cov(const Formula& f, const BinarizedActivations& acts, const MaskArchive& archive) {
    return compute_metrics(f, acts, archive).sample_cov;
}

double expl_cov(const Formula& f, const BinarizedActivations& acts, const MaskArchive& archive) {
    return compute_metrics(f, acts, archive).expl_cov;
}

MetricReport compute_metrics(const Formula& f, const BinarizedActivations& acts, const MaskArchive& archive) {
    return metrics_from_counts(alignment_counts(f, acts, archive));
}

} // namespace ovce
