#pragma once

#include "ovce/activation_store.hpp"
#include "ovce/concept_registry.hpp"
#include "ovce/mask_store.hpp"
#include "ovce/record.hpp"
#include "ovce/search.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ovce {

// ---- annotators ----

/// Produces label maps for chosen subsets of a registry.
class Annotator {
public:
    virtual ~Annotator() = default;
    /// Sealed archive holding exactly `subsets` of `reg`, `samples` samples.
    virtual MaskArchive annotate(const ConceptRegistry& reg, const std::vector<SubsetId>& subsets,
                                 std::size_t samples) = 0;
    /// Config that recreates this annotator (stored with a run).
    virtual nlohmann::json describe() const = 0;
};

/// Draws masks from a synth scene file (world.json).
class SynthAnnotator : public Annotator {
public:
    explicit SynthAnnotator(std::filesystem::path world);
    MaskArchive annotate(const ConceptRegistry& reg, const std::vector<SubsetId>& subsets,
                         std::size_t samples) override;
    nlohmann::json describe() const override;

private:
    std::filesystem::path world_;
};

/// Runs `command... export-masks --config <file>`. The config file is
/// `base` plus {"concepts": <registry path>, "subsets": [labels],
/// "output_dir": <dir>}. Exit status 0 and the archive path as the last
/// stdout line is success.
class ExternalAnnotator : public Annotator {
public:
    ExternalAnnotator(std::vector<std::string> command, nlohmann::json base);
    MaskArchive annotate(const ConceptRegistry& reg, const std::vector<SubsetId>& subsets,
                         std::size_t samples) override;
    nlohmann::json describe() const override;

private:
    std::vector<std::string> command_;
    nlohmann::json base_;
};

/// {"type":"synth","world":path} or {"type":"external","command":[...],"config":{...}}.
/// Relative paths resolve against `base_dir`. Throws ConfigError.
std::unique_ptr<Annotator> make_annotator(const nlohmann::json& j, const std::filesystem::path& base_dir);

// ---- runs ----

struct ProbeSettings {
    SearchConfig search;
    ClusterConfig cluster;
    /// Working (width, height); the mask resolution when unset.
    std::optional<std::pair<int, int>> resolution;
    /// "all" and/or subset labels, one search each.
    std::vector<std::string> granularities{"all"};
    /// Every neuron when unset.
    std::optional<std::vector<std::size_t>> neurons;
    int workers = 0;
};

nlohmann::json to_json(const ProbeSettings& s);
ProbeSettings settings_from_json(const nlohmann::json& j);

struct RunConfig {
    std::filesystem::path concepts;
    std::filesystem::path masks;
    std::filesystem::path activations;
    std::optional<std::filesystem::path> hypernyms;
    std::filesystem::path output;
    ProbeSettings settings;
    nlohmann::json annotator;  // null when none
};

/// Paths resolve against `base_dir`. Throws ConfigError (including for
/// missing files).
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// A run directory loaded into memory.
struct Run {
    std::filesystem::path dir;
    std::string id;
    std::optional<std::string> parent;
    ProbeSettings settings;
    ConceptRegistry registry;
    /// Every subset, at the working resolution.
    MaskArchive archive;
    ActivationTensor activations;
    std::vector<ExplanationRecord> records;
    nlohmann::json annotator;
    nlohmann::json manifest;
};

Run load_run(const std::filesystem::path& dir);
/// Just the records and run.json; no masks or activations.
std::vector<ExplanationRecord> load_records(const std::filesystem::path& dir);
/// Same subsets and concepts, ignoring subset order.
bool same_concept_sets(const ConceptRegistry& a, const ConceptRegistry& b);
std::filesystem::path subset_archive_path(const std::filesystem::path& run_dir, SubsetId id);

// ---- probing ----

/// Ranges and binarized masks for the selected neurons at (width, height).
std::vector<NeuronActivations> binarize_all(const ActivationTensor& t, int width, int height,
                                            const ProbeSettings& s);

/// One record per (neuron, range, granularity), sorted by that key. Runs the
/// searches on a bounded worker pool.
std::vector<ExplanationRecord> explain_all(const MaskArchive& archive, const std::vector<NeuronActivations>& acts,
                                           const ProbeSettings& s);

/// Writes a new run directory. Fails before creating anything when inputs
/// are missing; no partial directory is left behind on errors.
std::filesystem::path run_probe(const RunConfig& cfg);

struct RegistryEdits {
    std::vector<ConceptAddition> add;
    std::vector<ConceptId> remove;
};

/// {"add":[{"subset": label|id, "name", "synonyms", "ignored"}], "remove":[name|id]}.
RegistryEdits edits_from_json(const nlohmann::json& j, const ConceptRegistry& reg);

/// New sibling run `<dir>-r<k>` (or `out`) with the edited registry. Only
/// affected subsets are re-annotated; other archive files are copied as-is.
/// Throws AnnotatorUnavailable when regeneration is needed but no annotator
/// is configured.
std::filesystem::path run_refine(const std::filesystem::path& run_dir, const RegistryEdits& edits,
                                 const std::optional<std::filesystem::path>& out = std::nullopt,
                                 Annotator* annotator = nullptr);

/// First free `<dir>-r<k>`, k >= 1.
std::filesystem::path next_child_dir(const std::filesystem::path& run_dir);

std::string utc_timestamp();

} // namespace ovce
