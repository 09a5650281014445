#pragma once

#include "ovce/activation_store.hpp"
#include "ovce/concept_registry.hpp"
#include "ovce/formula.hpp"
#include "ovce/mask_store.hpp"
#include "ovce/record.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ovce {

// ---- explanation overlap ----

/// Share of neurons per range whose positive concepts match, comparing `a`
/// (explained over `reg_a`) with `b` (over `reg_b`). Concepts match by name or
/// a shared synonym. Throws KeyMismatch when the record keys differ.
std::map<int, double> explanation_overlap(const std::vector<ExplanationRecord>& a, const ConceptRegistry& reg_a,
                                          const std::vector<ExplanationRecord>& b, const ConceptRegistry& reg_b);

/// Groups names that are equal after normalization or linked through a
/// concept's synonym list.
class ConceptEquivalence {
public:
    void add(const ConceptRegistry& reg);
    void add(const Concept& c);
    /// Representative of the class holding `name` (the normalized name itself
    /// when unseen).
    std::string class_of(std::string_view name);
    bool equivalent(std::string_view a, std::string_view b) { return class_of(a) == class_of(b); }

private:
    std::string find(const std::string& n);
    void unite(const std::string& a, const std::string& b);
    std::map<std::string, std::string> parent_;
};

/// Sorted class representatives of the non-negated atoms.
std::vector<std::string> positive_classes(const Formula& f, const ConceptRegistry& reg, ConceptEquivalence& eq);

// ---- hypernyms ----

/// Edges child -> hypernym over normalized node names.
class HypernymGraph {
public:
    HypernymGraph();

    /// `child<TAB>parent` per line; blank lines and lines starting with '#'
    /// are skipped. Throws ParseError.
    static HypernymGraph from_tsv(std::istream& in);
    static HypernymGraph load(const std::filesystem::path& path);

    void add_edge(std::string_view child, std::string_view parent);
    bool contains(std::string_view node) const;
    const std::set<std::string>& parents(std::string_view node) const;
    std::size_t size() const { return nodes_.size(); }

    /// Nodes never returned as a common ancestor. Defaults to the shipped
    /// general-node list.
    std::set<std::string> excluded;

    /// Throws CyclicGraph.
    void check_acyclic() const;

    /// Hop distance to every ancestor, `node` itself at 0.
    std::map<std::string, int> ancestors(std::string_view node) const;

    /// Common ancestor with the least total hops, not excluded; ties go to
    /// the lexicographically smallest name. A node paired with itself is its
    /// own answer. Throws CyclicGraph.
    std::optional<std::string> lowest_common_ancestor(std::string_view a, std::string_view b) const;

private:
    std::set<std::string> nodes_;
    std::map<std::string, std::set<std::string>> up_;
};

/// The general nodes excluded by default.
const std::set<std::string>& default_excluded_hypernyms();
/// Newline-delimited node names; '#' comments allowed.
std::set<std::string> load_exclusion_list(const std::filesystem::path& path);

/// Graph node for a concept: its name when present, else the first synonym
/// present.
std::optional<std::string> graph_node(const Concept& c, const HypernymGraph& g);

struct ConceptPair {
    ConceptId first = 0;
    ConceptId second = 0;
};

struct UnifyResult {
    /// concept -> ancestor node
    std::map<ConceptId, std::string> mapping;
    /// pairs with no acceptable ancestor
    std::vector<ConceptPair> unresolved;
    std::vector<std::string> warnings;
};

/// Lowest acceptable common hypernym for every pair. The first pair naming a
/// concept decides its target. Concepts without a graph node are skipped with
/// a warning. Throws CyclicGraph.
UnifyResult unify_concepts(const ConceptRegistry& reg, const HypernymGraph& graph,
                           const std::vector<ConceptPair>& misaligned);

struct RemapResult {
    ConceptRegistry registry;
    MaskArchive archive;
    /// old id -> surviving id, for every concept
    std::map<ConceptId, ConceptId> ids;
    std::set<SubsetId> affected;
    /// mappings left alone: cross-subset, single-concept, or name clashes
    std::vector<std::string> skipped;
};

/// Merges concepts of one subset that map to the same node into a single
/// concept named after it (lowest id kept, old names become synonyms) and
/// rewrites the label maps. Each merge removes at least one concept.
RemapResult apply_unification(const ConceptRegistry& reg, const MaskArchive& archive,
                              const std::map<ConceptId, std::string>& mapping);

// ---- co-occurrence ----

enum class Cooccurrence { HyperRelated, HighlyRelated, Low };
std::string_view cooccurrence_name(Cooccurrence c);
/// Strict thresholds: > 0.75 hyper, > 0.50 highly, else low.
Cooccurrence categorize_rate(double rate);

struct CooccurrenceEntry {
    ConceptId first = 0;
    ConceptId second = 0;
    double rate = 0;
    Cooccurrence category = Cooccurrence::Low;
};

/// Among samples where `f` overlaps the activations, the share where both
/// concepts have a non-empty mask (0 when there are no such samples).
CooccurrenceEntry cooccurrence_category(ConceptId c1, ConceptId c2, const BinarizedActivations& acts,
                                        const MaskArchive& archive, const Formula& f);

// ---- misalignment loop ----

struct MisalignmentEntry {
    std::string record_key;
    std::string missing;  // reference concept name
    ConceptId ours = 0;
    std::optional<std::string> ancestor;
    double rate = 0;
    std::optional<Cooccurrence> category;  // set when no ancestor was found
};

struct MisalignmentRound {
    int round = 0;
    std::vector<MisalignmentEntry> entries;
    std::map<ConceptId, std::string> mapping;
    std::size_t concepts_before = 0;
    std::size_t concepts_after = 0;
    std::vector<std::string> skipped;
    std::vector<std::string> warnings;
};

struct MisalignmentResult {
    ConceptRegistry registry;
    MaskArchive archive;
    std::vector<ExplanationRecord> records;
    std::vector<MisalignmentRound> rounds;
    bool fixpoint = false;
};

using ExplainFn = std::function<std::vector<ExplanationRecord>(const MaskArchive&)>;
using ActsFn = std::function<const BinarizedActivations&(std::size_t neuron, int range_id)>;

/// Compare against reference explanations, unify missing concepts with ours
/// through the hypernym graph, remap, re-explain; repeat until a round
/// changes nothing or `max_rounds` rounds ran.
MisalignmentResult misalignment_loop(const std::vector<ExplanationRecord>& reference, const ConceptRegistry& ref_reg,
                                     const MaskArchive& archive, const HypernymGraph& graph, const ExplainFn& explain,
                                     const ActsFn& acts, int max_rounds);

nlohmann::json to_json(const MisalignmentResult& r);

// ---- concept isolation ----

struct IsolationResult {
    std::vector<std::size_t> supporting;
    std::vector<std::size_t> unexplained;
};

/// `supporting`: samples where f holds, c is present and the neuron fires,
/// largest c mask first. `unexplained`: samples where the neuron fires but the
/// sub-explanation (f without `drop`, default {c}) does not hold, largest
/// activation first. Sample id breaks ties; at most m of each. Throws
/// ConceptNotInFormula.
IsolationResult isolate_concept(const Formula& f, ConceptId c, const BinarizedActivations& acts,
                                const MaskArchive& archive, std::size_t m,
                                const std::vector<ConceptId>& drop = {});

/// Per-sample mask of f with the atoms in `drop` removed: a removed head
/// starts from the identity of the next operator. Empty when every atom is
/// dropped.
MaskPlane sub_explanation_plane(const Formula& f, const std::vector<ConceptId>& drop, const MaskArchive& archive);

} // namespace ovce
