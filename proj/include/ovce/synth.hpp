#pragma once

#include "ovce/activation_store.hpp"
#include "ovce/bitmask.hpp"
#include "ovce/concept_registry.hpp"
#include "ovce/formula.hpp"
#include "ovce/mask_store.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ovce {

struct SynthSubsetSpec {
    std::string label;
    int tier = 0;
    /// Concepts named `<label>_<i>` when `names` is empty.
    int concepts = 4;
    std::vector<std::string> names;
    /// Concepts drawn into the scene but left out of the initial registry.
    std::vector<std::string> latent;
};

struct SynthSpec {
    std::uint64_t seed = 1;
    std::size_t samples = 10;
    int width = 16;
    int height = 16;
    std::vector<SynthSubsetSpec> subsets;
    /// Ground truth for neuron 0, by concept name (latent names allowed).
    std::optional<std::string> planted;
    double noise = 0;
    std::size_t neurons = 1;
    /// The last neurons fire only where every subset shows background.
    std::size_t zero_overlap_neurons = 0;
    /// Chance that a concept appears in a sample.
    double presence = 0.7;
    int min_rect = 2;
    /// 0 means half the image side.
    int max_rect = 0;
};

/// Throws InvalidSpec.
SynthSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthSpec& s);
void validate(const SynthSpec& s);

/// One painted rectangle; samples paint their items in order, later on top.
struct SceneItem {
    std::string subset;
    std::string concept_name;
    Rect rect;
};

/// Ground-truth layout of every sample, independent of any registry.
struct SynthScene {
    int width = 0;
    int height = 0;
    std::size_t samples = 0;
    /// subset label -> name of its background concept
    std::vector<std::pair<std::string, std::string>> backgrounds;
    std::vector<std::vector<SceneItem>> items;
};

nlohmann::json to_json(const SynthScene& s);
SynthScene scene_from_json(const nlohmann::json& j);

/// Label maps of the registry's subsets drawn from the scene: the subset's
/// ignored concept (else its first) fills the image, then every item whose
/// concept is in the registry is painted in order. Concepts the scene never
/// draws get empty masks. `only` restricts the subsets drawn. Sealed.
MaskArchive paint_scene(const SynthScene& scene, const ConceptRegistry& reg,
                        const std::vector<SubsetId>& only = {});

struct SynthWorld {
    SynthSpec spec;
    SynthScene scene;
    /// Registry with every concept, latent ones included.
    ConceptRegistry full_registry;
    /// Registry without latent concepts, and its archive.
    ConceptRegistry registry;
    MaskArchive archive;
    ActivationTensor activations;
    /// Formula each neuron was built from (by full_registry ids); none for
    /// zero-overlap neurons.
    std::vector<std::optional<Formula>> truth;
    /// Mask the top level was placed on, before noise.
    std::vector<MaskPlane> truth_masks;
};

/// Deterministic in the spec. Throws InvalidSpec.
SynthWorld generate(const SynthSpec& spec);

/// Writes concepts.json, masks.ovcemsk, activations.ovceact (+ sidecar),
/// world.json and truth.json into `dir`.
void write_world(const std::filesystem::path& dir, const SynthWorld& w);

} // namespace ovce
