#include "ovce/service.hpp"

#include "binary_io.hpp"
#include "ovce/error.hpp"
#include "ovce/hash.hpp"

#include <omp.h>

#include <cctype>
#include <exception>
#include <fstream>

namespace ovce {

namespace fs = std::filesystem;

std::vector<NeuronActivations> binarize_all(const ActivationTensor& t, int width, int height,
                                            const ProbeSettings& s) {
    std::vector<std::size_t> neurons;
    if (s.neurons) {
        neurons = *s.neurons;
        for (std::size_t n : neurons)
            if (n >= t.neurons()) throw ConfigError("neuron " + std::to_string(n) + " is not in the activation file");
    } else {
        for (std::size_t n = 0; n < t.neurons(); ++n) neurons.push_back(n);
    }
    std::vector<NeuronActivations> out(neurons.size());
    std::vector<std::exception_ptr> errors(neurons.size());
    const int workers = s.workers > 0 ? s.workers : kernels::worker_count();
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (std::size_t i = 0; i < neurons.size(); ++i) {
        try {
            out[i] = binarize_neuron(t, neurons[i], width, height, s.cluster);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!errors[i]) continue;
        try {
            std::rethrow_exception(errors[i]);
        } catch (const Error& e) {
            throw Error(e.kind(), "neuron " + std::to_string(neurons[i]) + ": " + e.message());
        }
    }
    return out;
}

std::vector<ExplanationRecord> explain_all(const MaskArchive& archive, const std::vector<NeuronActivations>& acts,
                                           const ProbeSettings& s) {
    // granularity -> concepts searched (empty: everything)
    std::vector<std::pair<std::string, std::vector<ConceptId>>> grans;
    for (const auto& g : s.granularities) {
        if (g == "all") {
            grans.emplace_back(g, std::vector<ConceptId>{});
            continue;
        }
        auto sid = archive.manifest().find_subset(g);
        if (!sid) throw ConfigError("granularity '" + g + "' names no concept subset");
        grans.emplace_back(g, archive.manifest().subset(*sid).concept_ids);
    }

    struct Task {
        const BinarizedActivations* acts;
        std::size_t gran;
    };
    std::vector<Task> tasks;
    for (const auto& n : acts)
        for (const auto& b : n.binarized)
            for (std::size_t g = 0; g < grans.size(); ++g) tasks.push_back({&b, g});

    std::vector<ExplanationRecord> out(tasks.size());
    std::vector<std::exception_ptr> errors(tasks.size());
    const int workers = s.workers > 0 ? s.workers : kernels::worker_count();
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        try {
            const Task& t = tasks[i];
            SearchProblem p{&archive, t.acts, grans[t.gran].second};
            if (!grans[t.gran].second.empty() && p.concepts.empty()) throw EmptyCandidatePool("empty subset");
            const SearchResult r = beam_search(p, s.search);
            out[i] = make_record(r.best, *t.acts, archive, grans[t.gran].first);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!errors[i]) continue;
        try {
            std::rethrow_exception(errors[i]);
        } catch (const Error& e) {
            throw Error(e.kind(), "neuron " + std::to_string(tasks[i].acts->neuron_id) + " range " +
                                      std::to_string(tasks[i].acts->range_id()) + " (" + grans[tasks[i].gran].first +
                                      "): " + e.message());
        }
    }
    return out;
}

namespace {

std::string record_file_name(const ExplanationRecord& r) {
    std::string g;
    for (char c : r.granularity) g += std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_';
    return "n" + std::to_string(r.neuron_id) + "_r" + std::to_string(r.range_id) + "_" + g + ".json";
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out) throw IoError("cannot write " + p.string());
}

struct RunOutput {
    std::string id;
    std::optional<std::string> parent;
    ProbeSettings settings;
    ConceptRegistry registry;
    const MaskArchive* archive = nullptr;
    /// subsets whose archive file is copied from an earlier run
    std::map<SubsetId, fs::path> reuse;
    fs::path activations;
    std::vector<ExplanationRecord> records;
    nlohmann::json annotator;
};

/// Builds the run next to `dir` and renames it into place at the end.
void write_run(const fs::path& dir, RunOutput o) {
    if (fs::exists(dir)) throw ConfigError("run directory already exists: " + dir.string());
    const fs::path parent_dir = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
    fs::create_directories(parent_dir);
    const fs::path tmp = parent_dir / ("." + dir.filename().string() + ".partial");
    fs::remove_all(tmp);
    try {
        fs::create_directories(tmp / "masks");
        fs::create_directories(tmp / "records");
        save_registry(tmp / "concepts.json", o.registry);

        nlohmann::json hashes = nlohmann::json::object();
        for (const auto& s : o.registry.subsets()) {
            const fs::path dst = subset_archive_path(tmp, s.id);
            auto reuse = o.reuse.find(s.id);
            if (reuse != o.reuse.end()) fs::copy_file(reuse->second, dst);
            else write_archive(dst, o.archive->subset_archive(s.id));
            hashes[std::to_string(s.id)] = content_hash(detail::read_file(dst));
        }
        fs::copy_file(o.activations, tmp / "activations.ovceact");
        fs::path sidecar = o.activations;
        sidecar += ".json";
        if (fs::exists(sidecar)) fs::copy_file(sidecar, tmp / "activations.ovceact.json");

        const std::string stamp = utc_timestamp();
        const std::string archive_hash = o.archive->content_hash();
        for (auto& r : o.records) {
            r.timestamp = stamp;
            r.parent_run = o.parent;
            r.archive_hash = archive_hash;
            r.registry_hash = o.registry.version_hash();
            write_text(tmp / "records" / record_file_name(r), to_json(r).dump(1) + "\n");
        }
        nlohmann::json run{{"id", o.id},
                           {"parent", o.parent ? nlohmann::json(*o.parent) : nlohmann::json(nullptr)},
                           {"created", stamp},
                           {"settings", to_json(o.settings)},
                           {"registry_hash", o.registry.version_hash()},
                           {"archive_hash", archive_hash},
                           {"subset_archive_hashes", std::move(hashes)},
                           {"activations_hash", content_hash(detail::read_file(tmp / "activations.ovceact"))},
                           {"record_count", o.records.size()},
                           {"width", o.archive->width()},
                           {"height", o.archive->height()},
                           {"samples", o.archive->samples()},
                           {"annotator", o.annotator}};
        write_text(tmp / "run.json", run.dump(1) + "\n");
        fs::rename(tmp, dir);
    } catch (...) {
        std::error_code ec;
        fs::remove_all(tmp, ec);
        throw;
    }
}

} // namespace

fs::path run_probe(const RunConfig& cfg) {
    for (const auto& [p, what] : {std::pair{cfg.concepts, "concepts"}, std::pair{cfg.masks, "masks"},
                                  std::pair{cfg.activations, "activations"}})
        if (!fs::exists(p)) throw ConfigError(std::string(what) + " file not found: " + p.string());
    if (fs::exists(cfg.output)) throw ConfigError("run directory already exists: " + cfg.output.string());

    const ConceptRegistry reg = load_registry(cfg.concepts);
    MaskArchive archive = read_archive(cfg.masks);
    if (!same_concept_sets(archive.manifest(), reg))
        throw ConfigError("mask archive " + cfg.masks.string() + " was made for a different concept set");
    const auto [w, h] = cfg.settings.resolution.value_or(std::pair{archive.width(), archive.height()});
    if (w != archive.width() || h != archive.height()) archive = archive.resampled(w, h);

    const ActivationTensor t = read_activations(cfg.activations);
    if (t.samples() != archive.samples())
        throw ShapeMismatch("activations cover " + std::to_string(t.samples()) + " samples, masks " +
                            std::to_string(archive.samples()));

    RunOutput o;
    o.id = fs::absolute(cfg.output).lexically_normal().filename().string();
    o.settings = cfg.settings;
    o.registry = reg;
    o.archive = &archive;
    o.activations = cfg.activations;
    o.records = explain_all(archive, binarize_all(t, w, h, cfg.settings), cfg.settings);
    o.annotator = cfg.annotator;
    write_run(cfg.output, std::move(o));
    return cfg.output;
}

RegistryEdits edits_from_json(const nlohmann::json& j, const ConceptRegistry& reg) {
    try {
        RegistryEdits e;
        for (const auto& a : j.value("add", nlohmann::json::array())) {
            ConceptAddition add;
            const auto& s = a.at("subset");
            if (s.is_number_integer()) {
                add.subset_id = s.get<SubsetId>();
            } else {
                auto id = reg.find_subset(s.get<std::string>());
                if (!id) throw UnknownConceptId("no subset labelled '" + s.get<std::string>() + "'");
                add.subset_id = *id;
            }
            add.name = a.at("name").get<std::string>();
            add.synonyms = a.value("synonyms", std::vector<std::string>{});
            add.ignored = a.value("ignored", false);
            e.add.push_back(std::move(add));
        }
        for (const auto& r : j.value("remove", nlohmann::json::array()))
            e.remove.push_back(r.is_number_integer() ? r.get<ConceptId>() : reg.id_of(r.get<std::string>()));
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("bad edit list: ") + ex.what());
    }
}

fs::path run_refine(const fs::path& run_dir, const RegistryEdits& edits, const std::optional<fs::path>& out,
                    Annotator* annotator) {
    const Run parent = load_run(run_dir);
    const RefineResult rr = refine_registry(parent.registry, edits.add, edits.remove);
    const fs::path child = out ? *out : next_child_dir(run_dir);
    if (fs::exists(child)) throw ConfigError("run directory already exists: " + child.string());

    std::vector<MaskArchive> parts;
    std::map<SubsetId, fs::path> reuse;
    std::unique_ptr<Annotator> owned;
    if (!rr.affected.empty()) {
        if (!annotator) {
            if (parent.annotator.is_null())
                throw AnnotatorUnavailable("edits touch " + std::to_string(rr.affected.size()) +
                                           " subset(s) but run " + parent.id + " has no annotator");
            owned = make_annotator(parent.annotator, run_dir);
            annotator = owned.get();
        }
        const std::vector<SubsetId> affected(rr.affected.begin(), rr.affected.end());
        MaskArchive fresh = annotator->annotate(rr.registry, affected, parent.archive.samples());
        if (fresh.width() != parent.archive.width() || fresh.height() != parent.archive.height())
            fresh = fresh.resampled(parent.archive.width(), parent.archive.height());
        for (SubsetId id : affected) parts.push_back(fresh.subset_archive(id));
    }
    for (const auto& s : rr.registry.subsets()) {
        if (rr.affected.count(s.id)) continue;
        parts.push_back(parent.archive.subset_archive(s.id));
        reuse[s.id] = subset_archive_path(run_dir, s.id);
    }
    std::vector<const MaskArchive*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    const MaskArchive merged = MaskArchive::merge(ptrs);

    RunOutput o;
    o.id = fs::absolute(child).lexically_normal().filename().string();
    o.parent = parent.id;
    o.settings = parent.settings;
    o.registry = rr.registry;
    o.archive = &merged;
    o.reuse = std::move(reuse);
    o.activations = run_dir / "activations.ovceact";
    o.records = explain_all(
        merged, binarize_all(parent.activations, merged.width(), merged.height(), parent.settings), parent.settings);
    o.annotator = annotator ? annotator->describe() : parent.annotator;
    write_run(child, std::move(o));
    return child;
}

} // namespace ovce
