#pragma once

#include "ovce/activation_store.hpp"
#include "ovce/formula.hpp"
#include "ovce/mask_store.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace ovce {

/// Exact non-negative fraction. A zero denominator reads as 0.
struct Ratio {
    std::uint64_t num = 0;
    std::uint64_t den = 0;

    double value() const { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }
};

/// Exact three-way comparison of a/b values.
int compare(const Ratio& a, const Ratio& b);
inline bool operator<(const Ratio& a, const Ratio& b) { return compare(a, b) < 0; }
inline bool operator==(const Ratio& a, const Ratio& b) { return compare(a, b) == 0; }

struct ScoredLabel {
    Formula formula;
    CanonicalKey key;
    Ratio iou_exact;
    double iou = 0;
    std::optional<Ratio> est_iou;
};

/// True when `a` ranks above `b`: higher IoU, then the formula tie-break.
bool ranks_before(const ScoredLabel& a, const ScoredLabel& b);

enum class PoolPolicy {
    /// AND/OR operands limited to concepts overlapping the activations.
    OverlapFiltered,
    /// Every searchable concept for every operator.
    All,
};

struct SearchConfig {
    int beam_size = 5;
    int max_length = 3;
    PoolPolicy pool = PoolPolicy::OverlapFiltered;
    /// Upper bound on formulas the exhaustive search may enumerate.
    std::uint64_t exhaustive_cap = 100'000;
};

/// What one search explains: a neuron range over the masks of `concepts`
/// (non-ignored ones only). Empty `concepts` means every concept in the archive.
struct SearchProblem {
    const MaskArchive* archive = nullptr;
    const BinarizedActivations* acts = nullptr;
    std::vector<ConceptId> concepts;
};

/// Per-sample facts about one mask, exact for atoms and materialized beam
/// formulas.
struct SampleInfo {
    std::uint32_t ims = 0;  // |mask ∩ A^x|
    std::uint32_t size = 0; // |mask|
    OptRect bbox;
    OptRect inscribed;
};

struct HeuristicInfo {
    std::map<ConceptId, std::vector<SampleInfo>> atoms;
    std::map<CanonicalKey, std::vector<SampleInfo>> formulas;
    std::map<CanonicalKey, MaskPlane> planes;
};

/// Atom info from the archive geometry plus per-sample IMS for `acts`.
HeuristicInfo build_atom_info(const SearchProblem& problem);

/// Materializes every beam formula and stores its exact info and mask.
void update_info(HeuristicInfo& info, const std::vector<Formula>& beam, const SearchProblem& problem);

/// Exact IoU over all samples.
Ratio exact_iou(const Formula& f, const BinarizedActivations& acts, const MaskArchive& archive);
double compute_iou(const Formula& f, const BinarizedActivations& acts, const MaskArchive& archive);

/// Optimistic IoU of a compound from its left side's info and its right atom's
/// info. Never below the exact IoU. Throws MissingInfo.
Ratio estimate_iou(const Formula& f, const HeuristicInfo& info, const BinarizedActivations& acts);

struct SearchStats {
    std::uint64_t expanded = 0;
    std::uint64_t evaluated = 0;
    std::uint64_t pruned = 0;
};

/// One expanded candidate as seen by the heuristic search.
struct CandidateTrace {
    Formula formula;
    Ratio estimate;
    Ratio exact;
    bool evaluated = false;
};

struct SearchResult {
    ScoredLabel best;
    SearchStats stats;
};

/// Beam search guided by the per-sample box heuristic. With `trace`, every
/// expanded candidate is recorded together with its exact IoU (computed for
/// verification even when pruned). Throws EmptyCandidatePool.
SearchResult beam_search(const SearchProblem& problem, const SearchConfig& cfg,
                         std::vector<CandidateTrace>* trace = nullptr);

/// Same search without pruning: exact IoU for every candidate.
SearchResult naive_beam_search(const SearchProblem& problem, const SearchConfig& cfg);

/// True argmax over all left-deep formulas of length <= max_length with
/// distinct atoms. Throws SearchSpaceTooLarge, EmptyCandidatePool.
SearchResult exhaustive_search(const SearchProblem& problem, const SearchConfig& cfg);

/// Number of formulas exhaustive_search would enumerate (before dedup).
std::uint64_t exhaustive_space_size(std::size_t concepts, int max_length);

} // namespace ovce
