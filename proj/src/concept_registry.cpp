#include "ovce/concept_registry.hpp"

#include "ovce/error.hpp"
#include "ovce/hash.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <sstream>

namespace ovce {

std::string normalize_name(std::string_view name) {
    std::string out;
    bool gap = false;
    for (char ch : name) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c) || c == '_') {
            gap = !out.empty();
            continue;
        }
        if (gap) out.push_back(' ');
        gap = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

ConceptRegistry::ConceptRegistry(std::vector<ConceptSubset> subsets, std::vector<Concept> concepts)
    : subsets_(std::move(subsets)), concepts_(std::move(concepts)) {
    std::sort(concepts_.begin(), concepts_.end(),
              [](const Concept& a, const Concept& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < concepts_.size(); ++i) {
        const Concept& c = concepts_[i];
        if (!index_.emplace(c.id, i).second)
            throw ParseError("concept id " + std::to_string(c.id) + " used twice");
        const std::string key = normalize_name(c.name);
        if (key.empty()) throw ParseError("concept with empty name");
        if (auto [it, fresh] = by_name_.emplace(key, c.id); !fresh)
            throw DuplicateConceptName("'" + c.name + "' collides with '" +
                                       concepts_[index_.at(it->second)].name + "'");
    }
    std::set<SubsetId> subset_ids;
    std::set<ConceptId> seen;
    for (const auto& s : subsets_) {
        if (!subset_ids.insert(s.id).second)
            throw ParseError("subset id " + std::to_string(s.id) + " used twice");
        if (s.concept_ids.empty()) throw EmptySubset("subset '" + s.label + "' has no concepts");
        for (ConceptId id : s.concept_ids) {
            auto it = index_.find(id);
            if (it == index_.end() || concepts_[it->second].subset_id != s.id)
                throw ParseError("subset '" + s.label + "' lists foreign concept id " + std::to_string(id));
            if (!seen.insert(id).second)
                throw ParseError("concept id " + std::to_string(id) + " listed twice");
        }
    }
    if (seen.size() != concepts_.size()) throw ParseError("concept not listed in any subset");
}

ConceptRegistry ConceptRegistry::from_json(const nlohmann::json& j) {
    try {
        if (!j.is_object() || !j.contains("subsets") || !j.at("subsets").is_array())
            throw ParseError("expected an object with a \"subsets\" array");

        // Ids are optional in hand-written files; explicit ids (as written by
        // to_json) are kept so refined registries round-trip.
        ConceptId fallback = 0;
        for (const auto& sj : j.at("subsets"))
            for (const auto& cj : sj.value("concepts", nlohmann::json::array()))
                if (cj.contains("id"))
                    fallback = std::max<ConceptId>(fallback, cj.at("id").get<ConceptId>() + 1);

        std::vector<ConceptSubset> subsets;
        std::vector<Concept> concepts;
        SubsetId next_subset = 0;
        for (const auto& sj : j.at("subsets")) {
            ConceptSubset s;
            s.id = sj.value("id", next_subset);
            next_subset = std::max(next_subset, s.id) + 1;
            s.label = sj.at("label").get<std::string>();
            s.granularity_tier = sj.value("granularity_tier", 0);
            for (const auto& cj : sj.value("concepts", nlohmann::json::array())) {
                Concept c;
                c.id = cj.contains("id") ? cj.at("id").get<ConceptId>() : fallback++;
                c.name = cj.at("name").get<std::string>();
                c.subset_id = s.id;
                c.synonyms = cj.value("synonyms", std::vector<std::string>{});
                c.ignored = cj.value("ignored", false);
                s.concept_ids.push_back(c.id);
                concepts.push_back(std::move(c));
            }
            subsets.push_back(std::move(s));
        }
        return ConceptRegistry(std::move(subsets), std::move(concepts));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(e.what());
    }
}

nlohmann::json ConceptRegistry::to_json() const {
    nlohmann::json subsets = nlohmann::json::array();
    for (const auto& s : subsets_) {
        nlohmann::json cs = nlohmann::json::array();
        for (ConceptId id : s.concept_ids) {
            const Concept& c = concept_by_id(id);
            cs.push_back({{"id", c.id}, {"name", c.name}, {"synonyms", c.synonyms}, {"ignored", c.ignored}});
        }
        subsets.push_back({{"id", s.id},
                           {"label", s.label},
                           {"granularity_tier", s.granularity_tier},
                           {"concepts", std::move(cs)}});
    }
    return {{"subsets", std::move(subsets)}};
}

const Concept& ConceptRegistry::concept_by_id(ConceptId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw UnknownConceptId("concept id " + std::to_string(id));
    return concepts_[it->second];
}

std::optional<ConceptId> ConceptRegistry::find(std::string_view name) const {
    auto it = by_name_.find(normalize_name(name));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
}

ConceptId ConceptRegistry::id_of(std::string_view name) const {
    if (auto id = find(name)) return *id;
    throw UnknownConceptId("no concept named '" + std::string(name) + "'");
}

const ConceptSubset& ConceptRegistry::subset(SubsetId id) const {
    for (const auto& s : subsets_)
        if (s.id == id) return s;
    throw UnknownConceptId("no subset with id " + std::to_string(id));
}

std::optional<SubsetId> ConceptRegistry::find_subset(std::string_view label) const {
    const std::string key = normalize_name(label);
    for (const auto& s : subsets_)
        if (normalize_name(s.label) == key) return s.id;
    return std::nullopt;
}

std::vector<ConceptId> ConceptRegistry::searchable_ids() const {
    std::vector<ConceptId> out;
    for (const auto& c : concepts_)
        if (!c.ignored) out.push_back(c.id);
    return out;
}

ConceptId ConceptRegistry::next_id() const {
    return concepts_.empty() ? 0 : static_cast<ConceptId>(concepts_.back().id + 1);
}

std::string ConceptRegistry::version_hash() const { return content_hash(to_json().dump()); }

ConceptRegistry load_registry(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open concept set " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return ConceptRegistry::from_json(j);
}

void save_registry(const std::filesystem::path& path, const ConceptRegistry& reg) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << reg.to_json().dump(2) << '\n';
}

RefineResult refine_registry(const ConceptRegistry& reg, const std::vector<ConceptAddition>& add,
                             const std::vector<ConceptId>& remove) {
    std::set<ConceptId> doomed;
    for (ConceptId id : remove) {
        if (!reg.contains(id)) throw UnknownConceptId("cannot remove unknown concept id " + std::to_string(id));
        doomed.insert(id);
    }

    std::vector<ConceptSubset> subsets = reg.subsets();
    std::vector<Concept> concepts;
    std::set<SubsetId> affected;
    for (const auto& c : reg.concepts()) {
        if (doomed.count(c.id))
            affected.insert(c.subset_id);
        else
            concepts.push_back(c);
    }
    for (auto& s : subsets)
        std::erase_if(s.concept_ids, [&](ConceptId id) { return doomed.count(id) != 0; });

    std::size_t next = reg.next_id();
    for (const auto& a : add) {
        auto it = std::find_if(subsets.begin(), subsets.end(),
                               [&](const ConceptSubset& s) { return s.id == a.subset_id; });
        if (it == subsets.end()) throw UnknownConceptId("no subset with id " + std::to_string(a.subset_id));
        if (next > std::numeric_limits<ConceptId>::max()) throw ParseError("concept id space exhausted");
        Concept c;
        c.id = static_cast<ConceptId>(next++);
        c.name = a.name;
        c.subset_id = a.subset_id;
        c.synonyms = a.synonyms;
        c.ignored = a.ignored;
        it->concept_ids.push_back(c.id);
        concepts.push_back(std::move(c));
        affected.insert(a.subset_id);
    }
    return {ConceptRegistry(std::move(subsets), std::move(concepts)), std::move(affected)};
}

} // namespace ovce
