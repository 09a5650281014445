#include <doctest.h>

#include "oracles.hpp"
#include "ovce/concept_registry.hpp"
#include "ovce/error.hpp"

using namespace ovce;
using nlohmann::json;

namespace {

json colors_parts() {
    return json::parse(R"({"subsets":[
        {"label":"colors","concepts":[{"name":"red"},{"name":"blue"}]},
        {"label":"parts","concepts":[{"name":"wing"}]}]})");
}

} // namespace

TEST_CASE("load a two-subset concept file") {
    const auto reg = ConceptRegistry::from_json(colors_parts());
    CHECK(reg.size() == 3);
    CHECK(reg.subsets().size() == 2);
    CHECK(reg.id_of("red") == 0);
    CHECK(reg.id_of("blue") == 1);
    CHECK(reg.id_of("wing") == 2);
    CHECK(reg.concept_by_id(2).subset_id == 1);
    CHECK(reg.find_subset("parts") == 1);
    CHECK_FALSE(reg.find_subset("shapes"));
    CHECK(reg.next_id() == 3);
}

TEST_CASE("names are unique across subsets after normalization") {
    CHECK_THROWS_AS(ConceptRegistry::from_json(json::parse(R"({"subsets":[
        {"label":"a","concepts":[{"name":"red"}]},{"label":"b","concepts":[{"name":"red"}]}]})")),
                    DuplicateConceptName);
    CHECK_THROWS_AS(ConceptRegistry::from_json(json::parse(R"({"subsets":[
        {"label":"a","concepts":[{"name":"Window  Shop"},{"name":"window_shop"}]}]})")),
                    DuplicateConceptName);
}

TEST_CASE("empty subset is rejected") {
    CHECK_THROWS_AS(ConceptRegistry::from_json(json::parse(R"({"subsets":[
        {"label":"colors","concepts":[{"name":"red"}]},{"label":"parts","concepts":[]}]})")),
                    EmptySubset);
}

TEST_CASE("malformed files") {
    CHECK_THROWS_AS(ConceptRegistry::from_json(json::parse("[]")), ParseError);
    CHECK_THROWS_AS(ConceptRegistry::from_json(json::parse(R"({"subsets":[{"concepts":[]}]})")), ParseError);
}

TEST_CASE("normalize_name") {
    CHECK(normalize_name("  Window_Shop ") == "window shop");
    CHECK(normalize_name("motor\tvehicle") == "motor vehicle");
    CHECK(normalize_name("a__ _b") == "a b");
}

TEST_CASE("lookup is by normalized name and unknown names throw") {
    const auto reg = ConceptRegistry::from_json(colors_parts());
    CHECK(reg.find("RED") == reg.find("red"));
    CHECK_THROWS_AS(reg.id_of("green"), UnknownConceptId);
    CHECK_THROWS_AS(reg.concept_by_id(99), UnknownConceptId);
}

TEST_CASE("json and file round trip keep ids and hash") {
    const auto reg = ConceptRegistry::from_json(colors_parts());
    const auto back = ConceptRegistry::from_json(reg.to_json());
    CHECK(back == reg);
    CHECK(back.version_hash() == reg.version_hash());
    const auto dir = oracle::temp_dir("registry");
    save_registry(dir / "c.json", reg);
    CHECK(load_registry(dir / "c.json") == reg);
    std::filesystem::remove_all(dir);
}

TEST_CASE("searchable ids skip ignored concepts") {
    const auto reg = ConceptRegistry::from_json(json::parse(R"({"subsets":[
        {"label":"a","concepts":[{"name":"background","ignored":true},{"name":"cat"}]}]})"));
    CHECK(reg.searchable_ids() == std::vector<ConceptId>{1});
}

TEST_CASE("refine_registry") {
    const auto reg = ConceptRegistry::from_json(colors_parts());
    SUBCASE("adding to parts affects only parts") {
        const auto r = refine_registry(reg, {{1, "window shop", {}, false}}, {});
        CHECK(r.affected == std::set<SubsetId>{1});
        CHECK(r.registry.size() == 4);
        CHECK(r.registry.id_of("window shop") == 3);
        CHECK(r.registry.subset(0).concept_ids == reg.subset(0).concept_ids);
    }
    SUBCASE("no edits is the identity") {
        const auto r = refine_registry(reg, {}, {});
        CHECK(r.affected.empty());
        CHECK(r.registry == reg);
        CHECK(r.registry.version_hash() == reg.version_hash());
    }
    SUBCASE("removing a concept others still reference") {
        const ConceptId red = reg.id_of("red");
        const auto r = refine_registry(reg, {}, {red});
        CHECK(r.affected == std::set<SubsetId>{0});
        CHECK_FALSE(r.registry.contains(red));
        // a stored explanation naming red now fails on lookup
        CHECK_THROWS_AS(r.registry.concept_by_id(red), UnknownConceptId);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(refine_registry(reg, {{0, "wing", {}, false}}, {}), DuplicateConceptName);
        CHECK_THROWS_AS(refine_registry(reg, {}, {42}), UnknownConceptId);
        CHECK_THROWS_AS(refine_registry(reg, {{9, "x", {}, false}}, {}), UnknownConceptId);
        CHECK_THROWS_AS(refine_registry(reg, {}, {reg.id_of("wing")}), EmptySubset);
    }
    SUBCASE("new ids never reuse removed ones") {
        const auto r = refine_registry(reg, {{0, "green", {}, false}}, {reg.id_of("blue")});
        CHECK(r.registry.id_of("green") == 3);
    }
}
