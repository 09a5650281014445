// ovce command-line front end.

#include "ovce/analysis.hpp"
#include "ovce/error.hpp"
#include "ovce/server.hpp"
#include "ovce/service.hpp"
#include "ovce/synth.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace ovce;

namespace {

nlohmann::json read_json_file(const fs::path& p) {
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

void emit(const nlohmann::json& j, const std::string& out) {
    if (out.empty()) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream f(out);
    f << j.dump(2) << '\n';
    if (!f) throw IoError("cannot write " + out);
}

std::vector<ExplanationRecord> all_granularity(std::vector<ExplanationRecord> recs) {
    std::erase_if(recs, [](const ExplanationRecord& r) { return r.granularity != "all"; });
    return recs;
}

const ExplanationRecord& find_record(const Run& r, std::size_t neuron, int range, const std::string& gran) {
    for (const auto& rec : r.records)
        if (rec.neuron_id == neuron && rec.range_id == range && rec.granularity == gran) return rec;
    throw UnknownConceptId("run " + r.id + " has no record for neuron " + std::to_string(neuron) + " range " +
                           std::to_string(range) + " (" + gran + ")");
}

const BinarizedActivations& find_acts(const std::vector<NeuronActivations>& acts, std::size_t neuron, int range) {
    for (const auto& n : acts)
        if (n.neuron_id == neuron)
            for (const auto& b : n.binarized)
                if (b.range_id() == range) return b;
    throw UnknownConceptId("no activations for neuron " + std::to_string(neuron) + " range " + std::to_string(range));
}

Server* g_server = nullptr;

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Compositional explanations for neurons"};
    app.require_subcommand(1);
    int workers = 0;
    app.add_option("--workers", workers, "Worker threads (default: OVCE_WORKERS or all cores)");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic world");
    std::string spec_path, synth_out;
    synth->add_option("--spec", spec_path, "SynthSpec JSON")->required();
    synth->add_option("--out", synth_out, "Output directory")->required();

    auto* probe = app.add_subcommand("probe", "Explain every neuron range");
    std::string config_path;
    probe->add_option("--config", config_path, "Run config JSON")->required();

    auto* refine = app.add_subcommand("refine", "Edit the concept set and re-explain");
    std::string run_dir, edits_path, refine_out, annotator_path;
    refine->add_option("--run", run_dir, "Parent run directory")->required();
    refine->add_option("--edits", edits_path, "Edit list JSON")->required();
    refine->add_option("--out", refine_out, "Child run directory (default <run>-r<k>)");
    refine->add_option("--annotator", annotator_path, "Annotator config JSON overriding the run's");

    auto* serve = app.add_subcommand("serve", "Serve a run over HTTP");
    std::string host = "127.0.0.1";
    int port = 8080;
    serve->add_option("--run", run_dir, "Run directory")->required();
    serve->add_option("--port", port, "Port");
    serve->add_option("--host", host, "Bind address");

    auto* analyze = app.add_subcommand("analyze", "Explanation analytics");
    analyze->require_subcommand(1);
    std::string out_path;
    analyze->add_option("--out", out_path, "Write the JSON report here instead of stdout");

    auto* overlap = analyze->add_subcommand("overlap", "Share of matching explanations per range");
    std::string run_a, run_b;
    overlap->add_option("--a", run_a, "First run")->required();
    overlap->add_option("--b", run_b, "Second run")->required();

    auto* misalign = analyze->add_subcommand("misalign", "Hypernym unification loop against a reference run");
    std::string ref_dir, hypernyms, exclude;
    int max_rounds = 3;
    misalign->add_option("--run", run_dir, "Our run")->required();
    misalign->add_option("--reference", ref_dir, "Reference run")->required();
    misalign->add_option("--hypernyms", hypernyms, "child<TAB>parent edge file")->required();
    misalign->add_option("--exclude", exclude, "Excluded-node list (default: built-in list)");
    misalign->add_option("--max-rounds", max_rounds, "Round limit");

    auto* isolate = analyze->add_subcommand("isolate", "Samples supporting and unexplained by a concept");
    std::size_t neuron = 0, m = 5;
    int range = 0;
    std::string concept_name, granularity = "all";
    std::vector<std::string> drop;
    isolate->add_option("--run", run_dir, "Run directory")->required();
    isolate->add_option("--neuron", neuron, "Neuron id")->required();
    isolate->add_option("--range", range, "Range id")->required();
    isolate->add_option("--concept", concept_name, "Concept name")->required();
    isolate->add_option("--drop", drop, "Literals removed from the sub-explanation (default: the concept)");
    isolate->add_option("-m", m, "Samples per list");
    isolate->add_option("--granularity", granularity, "Record granularity");

    auto* cooccur = analyze->add_subcommand("cooccur", "Co-occurrence category of two concepts");
    std::string concept_a, concept_b;
    cooccur->add_option("--run", run_dir, "Run directory")->required();
    cooccur->add_option("--neuron", neuron, "Neuron id")->required();
    cooccur->add_option("--range", range, "Range id")->required();
    cooccur->add_option("--first", concept_a, "Concept name")->required();
    cooccur->add_option("--second", concept_b, "Concept name")->required();
    cooccur->add_option("--granularity", granularity, "Record granularity");

    CLI11_PARSE(app, argc, argv);

    try {
        if (workers > 0) kernels::set_worker_count(workers);

        if (*synth) {
            const SynthWorld w = generate(synth_spec_from_json(read_json_file(spec_path)));
            write_world(synth_out, w);
            std::cout << fs::path(synth_out).string() << '\n';
        } else if (*probe) {
            RunConfig cfg = load_run_config(config_path);
            if (workers > 0) cfg.settings.workers = workers;
            std::cout << run_probe(cfg).string() << '\n';
        } else if (*refine) {
            const Run parent = load_run(run_dir);
            const RegistryEdits edits = edits_from_json(read_json_file(edits_path), parent.registry);
            std::unique_ptr<Annotator> a;
            if (!annotator_path.empty())
                a = make_annotator(read_json_file(annotator_path), fs::absolute(annotator_path).parent_path());
            const auto out = refine_out.empty() ? std::nullopt : std::optional<fs::path>(refine_out);
            std::cout << run_refine(run_dir, edits, out, a.get()).string() << '\n';
        } else if (*serve) {
            Server server(run_dir);
            g_server = &server;
            std::signal(SIGINT, [](int) {
                if (g_server) g_server->stop();
            });
            std::signal(SIGTERM, [](int) {
                if (g_server) g_server->stop();
            });
            std::cerr << "serving " << run_dir << " on http://" << host << ":" << port << '\n';
            server.serve(host, port);
            g_server = nullptr;
        } else if (*overlap) {
            const Run a = load_run(run_a), b = load_run(run_b);
            const auto shares = explanation_overlap(all_granularity(a.records), a.registry,
                                                    all_granularity(b.records), b.registry);
            nlohmann::json j = nlohmann::json::object();
            for (const auto& [r, share] : shares) j[std::to_string(r)] = share;
            emit({{"a", a.id}, {"b", b.id}, {"share_by_range", j}}, out_path);
        } else if (*misalign) {
            const Run ours = load_run(run_dir), ref = load_run(ref_dir);
            HypernymGraph graph = HypernymGraph::load(hypernyms);
            if (!exclude.empty()) graph.excluded = load_exclusion_list(exclude);
            ProbeSettings settings = ours.settings;
            settings.granularities = {"all"};
            const auto acts =
                binarize_all(ours.activations, ours.archive.width(), ours.archive.height(), settings);
            const auto result = misalignment_loop(
                all_granularity(ref.records), ref.registry, ours.archive, graph,
                [&](const MaskArchive& a) { return explain_all(a, acts, settings); },
                [&](std::size_t n, int r) -> const BinarizedActivations& { return find_acts(acts, n, r); },
                max_rounds);
            emit(to_json(result), out_path);
        } else if (*isolate) {
            const Run r = load_run(run_dir);
            const ExplanationRecord& rec = find_record(r, neuron, range, granularity);
            ProbeSettings settings = r.settings;
            settings.neurons = std::vector<std::size_t>{neuron};
            const auto acts = binarize_all(r.activations, r.archive.width(), r.archive.height(), settings);
            std::vector<ConceptId> drop_ids;
            for (const auto& d : drop) drop_ids.push_back(r.registry.id_of(d));
            const auto res = isolate_concept(rec.formula, r.registry.id_of(concept_name), find_acts(acts, neuron, range),
                                             r.archive, m, drop_ids);
            emit({{"formula", rec.formula_text},
                  {"concept", concept_name},
                  {"supporting", res.supporting},
                  {"unexplained", res.unexplained}},
                 out_path);
        } else if (*cooccur) {
            const Run r = load_run(run_dir);
            const ExplanationRecord& rec = find_record(r, neuron, range, granularity);
            ProbeSettings settings = r.settings;
            settings.neurons = std::vector<std::size_t>{neuron};
            const auto acts = binarize_all(r.activations, r.archive.width(), r.archive.height(), settings);
            const auto e = cooccurrence_category(r.registry.id_of(concept_a), r.registry.id_of(concept_b),
                                                 find_acts(acts, neuron, range), r.archive, rec.formula);
            emit({{"first", concept_a},
                  {"second", concept_b},
                  {"rate", e.rate},
                  {"category", cooccurrence_name(e.category)}},
                 out_path);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
