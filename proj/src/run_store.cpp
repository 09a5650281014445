#include "ovce/service.hpp"

#include "binary_io.hpp"
#include "ovce/error.hpp"
#include "ovce/hash.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

namespace ovce {

namespace fs = std::filesystem;

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

nlohmann::json to_json(const ProbeSettings& s) {
    nlohmann::json j;
    j["search"] = {{"beam_size", s.search.beam_size},
                   {"max_length", s.search.max_length},
                   {"pool", s.search.pool == PoolPolicy::All ? "all" : "overlap_filtered"},
                   {"exhaustive_cap", s.search.exhaustive_cap}};
    j["k"] = s.cluster.k;
    j["cluster_seed"] = s.cluster.seed;
    j["n_init"] = s.cluster.n_init;
    j["max_iter"] = s.cluster.max_iter;
    j["tol"] = s.cluster.tol;
    j["sample_cap"] = s.cluster.sample_cap;
    j["nonzero_only"] = s.cluster.nonzero_only;
    j["resolution"] = s.resolution ? nlohmann::json{s.resolution->first, s.resolution->second} : nlohmann::json(nullptr);
    j["granularities"] = s.granularities;
    j["neurons"] = s.neurons ? nlohmann::json(*s.neurons) : nlohmann::json(nullptr);
    j["workers"] = s.workers;
    return j;
}

ProbeSettings settings_from_json(const nlohmann::json& j) {
    try {
        ProbeSettings s;
        if (j.contains("search")) {
            const auto& sj = j["search"];
            s.search.beam_size = sj.value("beam_size", s.search.beam_size);
            s.search.max_length = sj.value("max_length", s.search.max_length);
            const std::string pool = sj.value("pool", "overlap_filtered");
            if (pool == "all") s.search.pool = PoolPolicy::All;
            else if (pool == "overlap_filtered") s.search.pool = PoolPolicy::OverlapFiltered;
            else throw ConfigError("unknown candidate pool '" + pool + "'");
            s.search.exhaustive_cap = sj.value("exhaustive_cap", s.search.exhaustive_cap);
        }
        s.cluster.k = j.value("k", s.cluster.k);
        s.cluster.seed = j.value("cluster_seed", s.cluster.seed);
        s.cluster.n_init = j.value("n_init", s.cluster.n_init);
        s.cluster.max_iter = j.value("max_iter", s.cluster.max_iter);
        s.cluster.tol = j.value("tol", s.cluster.tol);
        s.cluster.sample_cap = j.value("sample_cap", s.cluster.sample_cap);
        s.cluster.nonzero_only = j.value("nonzero_only", s.cluster.nonzero_only);
        if (j.contains("resolution") && !j["resolution"].is_null())
            s.resolution = std::pair{j["resolution"].at(0).get<int>(), j["resolution"].at(1).get<int>()};
        if (j.contains("granularities")) s.granularities = j["granularities"].get<std::vector<std::string>>();
        if (j.contains("neurons") && !j["neurons"].is_null())
            s.neurons = j["neurons"].get<std::vector<std::size_t>>();
        s.workers = j.value("workers", 0);
        if (s.search.beam_size < 1 || s.search.max_length < 1) throw ConfigError("beam size and length must be >= 1");
        if (s.cluster.k < 1) throw ConfigError("k must be >= 1");
        if (s.granularities.empty()) throw ConfigError("no granularities to probe");
        if (s.resolution && (s.resolution->first < 1 || s.resolution->second < 1))
            throw ConfigError("resolution must be positive");
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad probe settings: ") + e.what());
    }
}

RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
    RunConfig c;
    auto path_of = [&](const char* key) {
        if (!j.contains(key) || !j[key].is_string()) throw ConfigError(std::string("config needs \"") + key + "\"");
        fs::path p = j[key].get<std::string>();
        return p.is_absolute() ? p : base_dir / p;
    };
    auto must_exist = [](const fs::path& p, const char* what) {
        if (!fs::exists(p)) throw ConfigError(std::string(what) + " file not found: " + p.string());
    };
    c.concepts = path_of("concepts");
    c.masks = path_of("masks");
    c.activations = path_of("activations");
    c.output = path_of("output");
    must_exist(c.concepts, "concepts");
    must_exist(c.masks, "masks");
    must_exist(c.activations, "activations");
    if (j.contains("hypernyms") && !j["hypernyms"].is_null()) {
        c.hypernyms = path_of("hypernyms");
        must_exist(*c.hypernyms, "hypernyms");
    }
    // settings may sit at the top level or under "settings" (as in run.json)
    c.settings = settings_from_json(j.contains("settings") && j["settings"].is_object() ? j["settings"] : j);
    c.annotator = j.value("annotator", nlohmann::json(nullptr));
    if (!c.annotator.is_null()) {
        // validate now and pin paths so the stored config works from the run dir
        auto a = make_annotator(c.annotator, base_dir);
        c.annotator = a->describe();
    }
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j, fs::absolute(path).parent_path());
}

fs::path subset_archive_path(const fs::path& run_dir, SubsetId id) {
    return run_dir / "masks" / ("subset-" + std::to_string(id) + ".ovcemsk");
}

fs::path next_child_dir(const fs::path& run_dir) {
    fs::path dir = fs::absolute(run_dir).lexically_normal();
    if (!dir.has_filename()) dir = dir.parent_path();
    for (int k = 1;; ++k) {
        fs::path c = dir.parent_path() / (dir.filename().string() + "-r" + std::to_string(k));
        if (!fs::exists(c)) return c;
    }
}

namespace {

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(p.string() + ": " + e.what());
    }
}

} // namespace

bool same_concept_sets(const ConceptRegistry& a, const ConceptRegistry& b) {
    auto sorted = [](const ConceptRegistry& r) {
        auto j = r.to_json();
        auto& subsets = j.at("subsets");
        std::sort(subsets.begin(), subsets.end(),
                  [](const nlohmann::json& x, const nlohmann::json& y) { return x.at("id") < y.at("id"); });
        return j;
    };
    return sorted(a) == sorted(b);
}

std::vector<ExplanationRecord> load_records(const fs::path& dir) {
    std::vector<ExplanationRecord> out;
    const fs::path rdir = dir / "records";
    if (!fs::is_directory(rdir)) throw IoError("run has no records directory: " + dir.string());
    for (const auto& e : fs::directory_iterator(rdir))
        if (e.path().extension() == ".json") out.push_back(record_from_json(read_json(e.path())));
    std::sort(out.begin(), out.end(), [](const ExplanationRecord& a, const ExplanationRecord& b) {
        return std::tie(a.neuron_id, a.range_id, a.granularity) < std::tie(b.neuron_id, b.range_id, b.granularity);
    });
    return out;
}

Run load_run(const fs::path& dir) {
    Run r;
    r.dir = dir;
    r.manifest = read_json(dir / "run.json");
    r.id = r.manifest.at("id").get<std::string>();
    if (!r.manifest["parent"].is_null()) r.parent = r.manifest["parent"].get<std::string>();
    r.settings = settings_from_json(r.manifest.at("settings"));
    r.annotator = r.manifest.value("annotator", nlohmann::json(nullptr));
    r.registry = load_registry(dir / "concepts.json");

    std::vector<MaskArchive> parts;
    for (const auto& s : r.registry.subsets()) parts.push_back(read_archive(subset_archive_path(dir, s.id)));
    std::vector<const MaskArchive*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    r.archive = MaskArchive::merge(ptrs);
    if (!same_concept_sets(r.archive.manifest(), r.registry))
        throw CorruptArchive("mask archives of run " + r.id + " disagree with its concept set");
    r.activations = read_activations(dir / "activations.ovceact");
    r.records = load_records(dir);
    return r;
}

} // namespace ovce
