#pragma once

// Scripted scenarios shared by the unit tests and the acceptance binary.

#include "ovce/analysis.hpp"
#include "ovce/service.hpp"
#include "ovce/synth.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fixture {

// A small hypernym tree. Vehicles meet at "motor vehicle"; plants and
// vehicles only meet at excluded general nodes.
inline const char* kHypernyms =
    "# child\tparent\n"
    "truck\tmotor vehicle\n"
    "car\tmotor vehicle\n"
    "motor vehicle\tself-propelled vehicle\n"
    "self-propelled vehicle\twheeled vehicle\n"
    "wheeled vehicle\tconveyance\n"
    "conveyance\tinstrumentality\n"
    "wheel\tsimple machine\n"
    "simple machine\tmachine\n"
    "machine\tdevice\n"
    "device\tinstrumentality\n"
    "instrumentality\tartefact\n"
    "artefact\twhole\n"
    "tree\twoody plant\n"
    "woody plant\tvascular plant\n"
    "vascular plant\tplant\n"
    "leaf\tplant organ\n"
    "plant organ\tplant part\n"
    "plant part\tnatural object\n"
    "natural object\twhole\n"
    "plant\torganism\n"
    "organism\tliving thing\n"
    "living thing\twhole\n"
    "whole\tobject\n"
    "object\tphysical entity\n"
    "physical entity\tentity\n";

inline ovce::HypernymGraph hypernym_graph() {
    std::istringstream in(kHypernyms);
    return ovce::HypernymGraph::from_tsv(in);
}

/// Our world names trucks and cars apart; neuron 0 fires on either.
inline ovce::SynthSpec misalignment_spec(std::uint64_t seed) {
    ovce::SynthSpec s;
    s.seed = seed;
    s.samples = 12;
    s.subsets = {{"objects", 0, 0, {"truck", "car", "tree"}, {}}, {"parts", 1, 0, {"wheel", "leaf"}, {}}};
    s.planted = "(truck OR car)";
    s.neurons = 3;
    s.presence = 0.6;
    return s;
}

/// The reference pipeline only knows "motor vehicle".
inline ovce::ConceptRegistry reference_registry() {
    return ovce::ConceptRegistry::from_json(nlohmann::json::parse(R"({"subsets":[
        {"label":"objects","concepts":[{"name":"bg_objects","ignored":true},{"name":"motor vehicle"},{"name":"tree"}]},
        {"label":"parts","concepts":[{"name":"bg_parts","ignored":true},{"name":"wheel"},{"name":"leaf"}]}]})"));
}

inline ovce::ExplanationRecord reference_record(std::size_t neuron, int range, const ovce::Formula& f) {
    ovce::ExplanationRecord r;
    r.neuron_id = neuron;
    r.range_id = range;
    r.formula = f;
    r.canonical_key = ovce::canonicalize(f);
    return r;
}

/// Reference explanations: neuron 0 top range is "motor vehicle", neuron 1
/// top range is "tree" and its lower ranges "leaf". Leaf meets nothing else
/// below the excluded nodes, so those ranges end up categorized.
inline std::vector<ovce::ExplanationRecord> reference_records(const ovce::ConceptRegistry& ref) {
    std::vector<ovce::ExplanationRecord> out{reference_record(0, 5, ovce::Formula::atom(ref.id_of("motor vehicle")))};
    for (int r = 1; r <= 4; ++r) out.push_back(reference_record(1, r, ovce::Formula::atom(ref.id_of("leaf"))));
    out.push_back(reference_record(1, 5, ovce::Formula::atom(ref.id_of("tree"))));
    return out;
}

/// Planted (objects_0 OR L) where L is a part the initial concept set lacks.
/// Adding L to "parts" lets the search reach IoU 1.
inline ovce::SynthSpec refinement_spec(std::uint64_t seed = 3) {
    ovce::SynthSpec s;
    s.seed = seed;
    s.samples = 12;
    s.subsets = {{"objects", 0, 3, {}, {}}, {"parts", 1, 3, {}, {"window shop"}}};
    s.planted = "(objects_0 OR window shop)";
    s.neurons = 4;
    s.presence = 0.6;
    return s;
}

/// Probe settings that keep the scenarios quick.
inline ovce::ProbeSettings quick_settings() {
    ovce::ProbeSettings s;
    s.cluster.n_init = 3;
    return s;
}

/// Writes the world and a run config next to it; returns the config path.
inline std::filesystem::path write_probe_inputs(const std::filesystem::path& dir, const ovce::SynthWorld& w,
                                                const std::string& run_name,
                                                const ovce::ProbeSettings& settings = quick_settings()) {
    ovce::write_world(dir / "world", w);
    nlohmann::json cfg{{"concepts", "world/concepts.json"},
                       {"masks", "world/masks.ovcemsk"},
                       {"activations", "world/activations.ovceact"},
                       {"output", run_name},
                       {"settings", ovce::to_json(settings)},
                       {"annotator", {{"type", "synth"}, {"world", "world/world.json"}}}};
    const auto p = dir / (run_name + ".config.json");
    std::ofstream(p) << cfg.dump(2);
    return p;
}

} // namespace fixture
