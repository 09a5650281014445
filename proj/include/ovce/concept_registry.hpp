#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ovce {

using ConceptId = std::uint16_t;
using SubsetId = int;

struct Concept {
    ConceptId id = 0;
    std::string name;
    SubsetId subset_id = 0;
    std::vector<std::string> synonyms;
    /// Generic placeholder ("background", "other"): gets pixels in the label
    /// maps but never enters an explanation.
    bool ignored = false;
};

struct ConceptSubset {
    SubsetId id = 0;
    std::string label;
    int granularity_tier = 0;
    std::vector<ConceptId> concept_ids;
};

/// Lowercase, trimmed, runs of whitespace/underscores collapsed to one space.
std::string normalize_name(std::string_view name);

/// The concept set: disjoint named subsets, names unique across the whole
/// registry under `normalize_name`. Immutable once built.
class ConceptRegistry {
public:
    ConceptRegistry() = default;

    /// Validates and builds. Throws DuplicateConceptName, EmptySubset,
    /// ParseError (inconsistent ids).
    ConceptRegistry(std::vector<ConceptSubset> subsets, std::vector<Concept> concepts);

    static ConceptRegistry from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    const std::vector<ConceptSubset>& subsets() const { return subsets_; }
    /// Concepts ordered by id.
    const std::vector<Concept>& concepts() const { return concepts_; }
    std::size_t size() const { return concepts_.size(); }

    bool contains(ConceptId id) const { return index_.count(id) != 0; }
    const Concept& concept_by_id(ConceptId id) const;
    std::optional<ConceptId> find(std::string_view name) const;
    /// Throws UnknownConceptId.
    ConceptId id_of(std::string_view name) const;

    const ConceptSubset& subset(SubsetId id) const;
    std::optional<SubsetId> find_subset(std::string_view label) const;

    /// Concepts that can appear in explanations.
    std::vector<ConceptId> searchable_ids() const;
    /// Largest id in use plus one.
    ConceptId next_id() const;

    /// Content hash of the canonical JSON form.
    std::string version_hash() const;

    friend bool operator==(const ConceptRegistry& a, const ConceptRegistry& b) {
        return a.to_json() == b.to_json();
    }

private:
    std::vector<ConceptSubset> subsets_;
    std::vector<Concept> concepts_;
    std::map<ConceptId, std::size_t> index_;
    std::map<std::string, ConceptId> by_name_;
};

ConceptRegistry load_registry(const std::filesystem::path& path);
void save_registry(const std::filesystem::path& path, const ConceptRegistry& reg);

struct ConceptAddition {
    SubsetId subset_id = 0;
    std::string name;
    std::vector<std::string> synonyms;
    bool ignored = false;
};

struct RefineResult {
    ConceptRegistry registry;
    std::set<SubsetId> affected;
};

/// Adds and removes concepts. Untouched subsets keep their ids; new concepts
/// get fresh ids above every id in use. Throws DuplicateConceptName,
/// UnknownConceptId, EmptySubset.
RefineResult refine_registry(const ConceptRegistry& reg, const std::vector<ConceptAddition>& add,
                             const std::vector<ConceptId>& remove);

} // namespace ovce
