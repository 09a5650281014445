#include "ovce/synth.hpp"

#include "ovce/error.hpp"

#include <algorithm>
#include <fstream>
#include <random>

namespace ovce {

namespace {

constexpr float kLevels[] = {0.0f, 2.0f, 4.0f, 6.0f};
constexpr float kTopLevel = 10.0f;
constexpr float kJitter = 0.05f;
constexpr int kSceneAttempts = 64;

std::mt19937_64 rng_for(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return std::mt19937_64(seq);
}

std::vector<std::string> concept_names(const SynthSubsetSpec& s) {
    if (!s.names.empty()) return s.names;
    std::vector<std::string> out;
    for (int i = 0; i < s.concepts; ++i) out.push_back(s.label + "_" + std::to_string(i));
    return out;
}

std::string background_name(const SynthSubsetSpec& s) { return "bg_" + s.label; }

SynthScene make_scene(const SynthSpec& spec, std::uint64_t attempt) {
    SynthScene scene;
    scene.width = spec.width;
    scene.height = spec.height;
    scene.samples = spec.samples;
    for (const auto& s : spec.subsets) scene.backgrounds.emplace_back(s.label, background_name(s));
    scene.items.resize(spec.samples);
    const int max_w = spec.max_rect > 0 ? std::min(spec.max_rect, spec.width) : std::max(1, spec.width / 2);
    const int max_h = spec.max_rect > 0 ? std::min(spec.max_rect, spec.height) : std::max(1, spec.height / 2);
    const int min_w = std::min(spec.min_rect, max_w), min_h = std::min(spec.min_rect, max_h);

#pragma omp parallel for schedule(static)
    for (std::size_t x = 0; x < spec.samples; ++x) {
        auto rng = rng_for(spec.seed, 0x5ce9e000 + attempt, x);
        std::bernoulli_distribution present(spec.presence);
        std::uniform_int_distribution<int> dw(min_w, max_w), dh(min_h, max_h);
        auto& items = scene.items[x];
        for (const auto& s : spec.subsets) {
            auto names = concept_names(s);
            names.insert(names.end(), s.latent.begin(), s.latent.end());
            for (const auto& n : names) {
                if (!present(rng)) continue;
                const int w = dw(rng), h = dh(rng);
                const int x0 = std::uniform_int_distribution<int>(0, spec.width - w)(rng);
                const int y0 = std::uniform_int_distribution<int>(0, spec.height - h)(rng);
                items.push_back({s.label, n, Rect{x0, y0, x0 + w, y0 + h}});
            }
        }
    }
    return scene;
}

ConceptRegistry make_registry(const SynthSpec& spec, bool with_latent) {
    std::vector<ConceptSubset> subsets;
    std::vector<Concept> concepts;
    ConceptId next = 0;
    for (std::size_t i = 0; i < spec.subsets.size(); ++i) {
        const auto& s = spec.subsets[i];
        ConceptSubset sub{static_cast<SubsetId>(i), s.label, s.tier, {}};
        concepts.push_back({next, background_name(s), sub.id, {}, true});
        sub.concept_ids.push_back(next++);
        for (const auto& n : concept_names(s)) {
            concepts.push_back({next, n, sub.id, {}, false});
            sub.concept_ids.push_back(next++);
        }
        subsets.push_back(std::move(sub));
    }
    // latent concepts take the highest ids so the visible ones match across registries
    for (std::size_t i = 0; i < spec.subsets.size(); ++i) {
        for (const auto& n : spec.subsets[i].latent) {
            if (with_latent) {
                concepts.push_back({next, n, static_cast<SubsetId>(i), {}, false});
                subsets[i].concept_ids.push_back(next);
            }
            ++next;
        }
    }
    return ConceptRegistry(std::move(subsets), std::move(concepts));
}

Formula random_formula(std::mt19937_64& rng, const std::vector<ConceptId>& pool) {
    std::vector<ConceptId> atoms = pool;
    std::shuffle(atoms.begin(), atoms.end(), rng);
    const int len = std::uniform_int_distribution<int>(1, std::min<int>(3, static_cast<int>(atoms.size())))(rng);
    Formula f = Formula::atom(atoms[0]);
    for (int i = 1; i < len; ++i) {
        const Op op = static_cast<Op>(std::uniform_int_distribution<int>(0, 2)(rng));
        f = f.extend(op, atoms[static_cast<std::size_t>(i)]);
    }
    return f;
}

void fill_neuron(ActivationTensor& t, std::size_t neuron, const MaskPlane& target, double noise,
                 std::uint64_t seed) {
    std::uint64_t on = kernels::popcount(target.words());
    const std::uint64_t total = static_cast<std::uint64_t>(target.samples()) * t.width() * t.height();
    const double drop_p = noise;
    const double add_p = noise > 0 && total > on ? noise * static_cast<double>(on) / static_cast<double>(total - on) : 0.0;

#pragma omp parallel for schedule(static)
    for (std::size_t x = 0; x < target.samples(); ++x) {
        auto rng = rng_for(seed, 0xac7000 + neuron, x);
        std::uniform_int_distribution<int> level(0, 3);
        std::uniform_real_distribution<float> jitter(-kJitter, kJitter);
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        auto values = t.map_values(neuron, x);
        const MaskView m = target.sample(x);
        for (int y = 0; y < t.height(); ++y) {
            for (int c = 0; c < t.width(); ++c) {
                bool top = m.get(c, y);
                const double r = coin(rng);
                if (top ? r < drop_p : r < add_p) top = !top;
                const float base = top ? kTopLevel : kLevels[level(rng)];
                values[static_cast<std::size_t>(y) * t.width() + c] = base + jitter(rng);
            }
        }
    }
}

} // namespace

void validate(const SynthSpec& s) {
    if (s.samples == 0) throw InvalidSpec("samples must be positive");
    if (s.width < 1 || s.height < 1) throw InvalidSpec("image size must be positive");
    if (s.subsets.empty()) throw InvalidSpec("at least one subset is required");
    if (!(s.noise >= 0 && s.noise <= 1)) throw InvalidSpec("noise must lie in [0, 1]");
    if (!(s.presence >= 0 && s.presence <= 1)) throw InvalidSpec("presence must lie in [0, 1]");
    if (s.min_rect < 1 || s.max_rect < 0) throw InvalidSpec("rectangle sizes must be positive");
    if (s.neurons == 0) throw InvalidSpec("at least one neuron is required");
    if (s.zero_overlap_neurons > s.neurons) throw InvalidSpec("more zero-overlap neurons than neurons");
    std::size_t visible = 0;
    for (const auto& sub : s.subsets) {
        if (sub.label.empty()) throw InvalidSpec("subset label must be non-empty");
        if (sub.names.empty() && sub.concepts < 1) throw InvalidSpec("subset '" + sub.label + "' has no concepts");
        visible += concept_names(sub).size();
    }
    if (visible == 0) throw InvalidSpec("no visible concepts");
    try {
        const ConceptRegistry reg = make_registry(s, true);
        if (s.planted) parse_formula(*s.planted, reg);
    } catch (const InvalidSpec&) {
        throw;
    } catch (const Error& e) {
        throw InvalidSpec(e.what());
    }
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    try {
        SynthSpec s;
        s.seed = j.value("seed", s.seed);
        s.samples = j.value("samples", s.samples);
        s.width = j.value("width", s.width);
        s.height = j.value("height", s.height);
        for (const auto& sj : j.at("subsets")) {
            SynthSubsetSpec sub;
            sub.label = sj.at("label").get<std::string>();
            sub.tier = sj.value("tier", 0);
            sub.concepts = sj.value("concepts", sub.concepts);
            sub.names = sj.value("names", std::vector<std::string>{});
            sub.latent = sj.value("latent", std::vector<std::string>{});
            s.subsets.push_back(std::move(sub));
        }
        if (j.contains("planted") && !j["planted"].is_null()) s.planted = j["planted"].get<std::string>();
        s.noise = j.value("noise", s.noise);
        s.neurons = j.value("neurons", s.neurons);
        s.zero_overlap_neurons = j.value("zero_overlap_neurons", s.zero_overlap_neurons);
        s.presence = j.value("presence", s.presence);
        s.min_rect = j.value("min_rect", s.min_rect);
        s.max_rect = j.value("max_rect", s.max_rect);
        validate(s);
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidSpec(std::string("bad synth spec: ") + e.what());
    }
}

nlohmann::json to_json(const SynthSpec& s) {
    nlohmann::json subsets = nlohmann::json::array();
    for (const auto& sub : s.subsets)
        subsets.push_back({{"label", sub.label},
                           {"tier", sub.tier},
                           {"concepts", sub.concepts},
                           {"names", sub.names},
                           {"latent", sub.latent}});
    return {{"seed", s.seed},
            {"samples", s.samples},
            {"width", s.width},
            {"height", s.height},
            {"subsets", std::move(subsets)},
            {"planted", s.planted ? nlohmann::json(*s.planted) : nlohmann::json(nullptr)},
            {"noise", s.noise},
            {"neurons", s.neurons},
            {"zero_overlap_neurons", s.zero_overlap_neurons},
            {"presence", s.presence},
            {"min_rect", s.min_rect},
            {"max_rect", s.max_rect}};
}

nlohmann::json to_json(const SynthScene& s) {
    nlohmann::json bgs = nlohmann::json::object();
    for (const auto& [label, bg] : s.backgrounds) bgs[label] = bg;
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& items : s.items) {
        nlohmann::json js = nlohmann::json::array();
        for (const auto& it : items)
            js.push_back({{"subset", it.subset},
                          {"concept", it.concept_name},
                          {"rect", {it.rect.x0, it.rect.y0, it.rect.x1, it.rect.y1}}});
        samples.push_back(std::move(js));
    }
    // background order matters for nothing, but keep the subset order anyway
    nlohmann::json order = nlohmann::json::array();
    for (const auto& [label, bg] : s.backgrounds) order.push_back(label);
    return {{"width", s.width},   {"height", s.height},        {"samples", s.samples},
            {"subsets", order},   {"backgrounds", std::move(bgs)}, {"scene", std::move(samples)}};
}

SynthScene scene_from_json(const nlohmann::json& j) {
    try {
        SynthScene s;
        s.width = j.at("width").get<int>();
        s.height = j.at("height").get<int>();
        s.samples = j.at("samples").get<std::size_t>();
        for (const auto& label : j.at("subsets"))
            s.backgrounds.emplace_back(label.get<std::string>(), j.at("backgrounds").at(label.get<std::string>()));
        for (const auto& js : j.at("scene")) {
            std::vector<SceneItem> items;
            for (const auto& it : js) {
                const auto& r = it.at("rect");
                items.push_back({it.at("subset").get<std::string>(), it.at("concept").get<std::string>(),
                                 Rect{r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>(), r.at(3).get<int>()}});
            }
            s.items.push_back(std::move(items));
        }
        if (s.items.size() != s.samples) throw ParseError("scene lists " + std::to_string(s.items.size()) +
                                                          " samples, header says " + std::to_string(s.samples));
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad scene: ") + e.what());
    }
}

MaskArchive paint_scene(const SynthScene& scene, const ConceptRegistry& reg, const std::vector<SubsetId>& only) {
    std::vector<ConceptSubset> subsets;
    std::vector<Concept> concepts;
    for (const auto& s : reg.subsets()) {
        if (!only.empty() && std::find(only.begin(), only.end(), s.id) == only.end()) continue;
        subsets.push_back(s);
        for (ConceptId id : s.concept_ids) concepts.push_back(reg.concept_by_id(id));
    }
    MaskArchive archive(ConceptRegistry(subsets, concepts), scene.width, scene.height, scene.samples);
    const ConceptRegistry& manifest = archive.manifest();

    for (const auto& s : manifest.subsets()) {
        ConceptId fill = s.concept_ids.front();
        auto bg = std::find_if(scene.backgrounds.begin(), scene.backgrounds.end(),
                               [&](const auto& p) { return p.first == s.label; });
        std::optional<ConceptId> named;
        if (bg != scene.backgrounds.end()) named = manifest.find(bg->second);
        if (named && manifest.concept_by_id(*named).subset_id == s.id) {
            fill = *named;
        } else {
            for (ConceptId id : s.concept_ids)
                if (manifest.concept_by_id(id).ignored) {
                    fill = id;
                    break;
                }
        }
        // scene concept name -> id in this subset
        std::map<std::string, ConceptId> ids;
        for (ConceptId id : s.concept_ids) ids[normalize_name(manifest.concept_by_id(id).name)] = id;

        for (std::size_t x = 0; x < scene.samples; ++x) {
            auto lab = archive.labels(s.id, x);
            std::fill(lab.begin(), lab.end(), fill);
            for (const auto& it : scene.items[x]) {
                if (it.subset != s.label) continue;
                auto c = ids.find(normalize_name(it.concept_name));
                if (c == ids.end()) continue;
                const Rect r{std::max(0, it.rect.x0), std::max(0, it.rect.y0), std::min(scene.width, it.rect.x1),
                             std::min(scene.height, it.rect.y1)};
                for (int y = r.y0; y < r.y1; ++y)
                    for (int col = r.x0; col < r.x1; ++col)
                        lab[static_cast<std::size_t>(y) * scene.width + col] = c->second;
            }
        }
    }
    archive.seal();
    return archive;
}

SynthWorld generate(const SynthSpec& spec) {
    validate(spec);
    SynthWorld w;
    w.spec = spec;
    w.full_registry = make_registry(spec, true);
    w.registry = make_registry(spec, false);
    const std::optional<Formula> planted =
        spec.planted ? std::optional<Formula>(parse_formula(*spec.planted, w.full_registry)) : std::nullopt;

    MaskArchive full;
    for (int attempt = 0;; ++attempt) {
        w.scene = make_scene(spec, static_cast<std::uint64_t>(attempt));
        full = paint_scene(w.scene, w.full_registry);
        if (!planted || kernels::popcount(evaluate_plane(*planted, full).words()) > 0) break;
        if (attempt + 1 == kSceneAttempts)
            throw InvalidSpec("planted formula '" + *spec.planted + "' is empty in every generated scene");
    }
    w.archive = paint_scene(w.scene, w.registry);

    const auto visible = w.registry.searchable_ids();
    w.activations = ActivationTensor(spec.neurons, spec.samples, spec.width, spec.height);
    for (std::size_t x = 0; x < spec.samples; ++x) w.activations.sample_ids.push_back("synth_" + std::to_string(x));

    // pixels where every subset shows its background
    MaskPlane background(spec.samples, spec.width, spec.height);
    {
        BinaryMask all = BinaryMask::filled(spec.width, spec.height);
        for (std::size_t x = 0; x < spec.samples; ++x) background.set_sample(x, all);
        for (const auto& c : w.full_registry.concepts())
            if (!c.ignored) kernels::andnot_into(background.words(), full.plane(c.id).words());
    }

    auto rng = rng_for(spec.seed, 0xf0f0, 0);
    for (std::size_t n = 0; n < spec.neurons; ++n) {
        std::optional<Formula> f;
        if (n >= spec.neurons - spec.zero_overlap_neurons) {
            f = std::nullopt;
        } else if (n == 0 && planted) {
            f = planted;
        } else {
            f = random_formula(rng, visible);
        }
        MaskPlane target = f ? evaluate_plane(*f, full) : background;
        fill_neuron(w.activations, n, target, spec.noise, spec.seed);
        w.truth.push_back(f);
        w.truth_masks.push_back(std::move(target));
    }
    return w;
}

void write_world(const std::filesystem::path& dir, const SynthWorld& w) {
    std::filesystem::create_directories(dir);
    save_registry(dir / "concepts.json", w.registry);
    write_archive(dir / "masks.ovcemsk", w.archive);
    write_activations(dir / "activations.ovceact", w.activations);
    nlohmann::json world = to_json(w.scene);
    world["spec"] = to_json(w.spec);
    world["registry"] = w.full_registry.to_json();
    std::ofstream(dir / "world.json") << world.dump(1) << '\n';

    nlohmann::json truth = nlohmann::json::array();
    for (std::size_t n = 0; n < w.truth.size(); ++n) {
        const auto& f = w.truth[n];
        truth.push_back({{"neuron", n},
                         {"formula", f ? nlohmann::json(f->render(w.full_registry)) : nlohmann::json(nullptr)},
                         {"canonical_key", f ? nlohmann::json(canonicalize(*f)) : nlohmann::json(nullptr)}});
    }
    std::ofstream out(dir / "truth.json");
    out << truth.dump(1) << '\n';
    if (!out) throw IoError("cannot write " + (dir / "truth.json").string());
}

} // namespace ovce
