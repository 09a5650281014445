#include "ovce/analysis.hpp"

#include "ovce/error.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <queue>
#include <sstream>

namespace ovce {

// ---- explanation overlap ----

std::string ConceptEquivalence::find(const std::string& n) {
    auto it = parent_.find(n);
    if (it == parent_.end()) {
        parent_.emplace(n, n);
        return n;
    }
    if (it->second == n) return n;
    std::string root = find(it->second);
    parent_[n] = root;
    return root;
}

void ConceptEquivalence::unite(const std::string& a, const std::string& b) {
    std::string ra = find(a), rb = find(b);
    if (ra == rb) return;
    // smallest name represents the class so results do not depend on order
    if (rb < ra) std::swap(ra, rb);
    parent_[rb] = ra;
}

void ConceptEquivalence::add(const Concept& c) {
    const std::string name = normalize_name(c.name);
    find(name);
    for (const auto& s : c.synonyms) unite(name, normalize_name(s));
}

void ConceptEquivalence::add(const ConceptRegistry& reg) {
    for (const auto& c : reg.concepts()) add(c);
}

std::string ConceptEquivalence::class_of(std::string_view name) { return find(normalize_name(name)); }

std::vector<std::string> positive_classes(const Formula& f, const ConceptRegistry& reg, ConceptEquivalence& eq) {
    std::vector<std::string> out;
    for (ConceptId id : f.positive_atoms()) out.push_back(eq.class_of(reg.concept_by_id(id).name));
    std::sort(out.begin(), out.end());
    return out;
}

std::map<int, double> explanation_overlap(const std::vector<ExplanationRecord>& a, const ConceptRegistry& reg_a,
                                          const std::vector<ExplanationRecord>& b, const ConceptRegistry& reg_b) {
    std::map<std::string, const ExplanationRecord*> ka, kb;
    for (const auto& r : a) ka[r.key()] = &r;
    for (const auto& r : b) kb[r.key()] = &r;
    if (ka.size() != kb.size() ||
        !std::equal(ka.begin(), ka.end(), kb.begin(), [](const auto& x, const auto& y) { return x.first == y.first; }))
        throw KeyMismatch("explanation sets cover different (neuron, range) keys");

    ConceptEquivalence eq;
    eq.add(reg_a);
    eq.add(reg_b);
    std::map<int, std::pair<std::size_t, std::size_t>> tally;  // range -> (shared, total)
    for (const auto& [key, ra] : ka) {
        const ExplanationRecord* rb = kb.at(key);
        auto& t = tally[ra->range_id];
        ++t.second;
        if (positive_classes(ra->formula, reg_a, eq) == positive_classes(rb->formula, reg_b, eq)) ++t.first;
    }
    std::map<int, double> out;
    for (const auto& [range, t] : tally)
        out[range] = static_cast<double>(t.first) / static_cast<double>(t.second);
    return out;
}

// ---- hypernyms ----

HypernymGraph::HypernymGraph() : excluded(default_excluded_hypernyms()) {}

HypernymGraph HypernymGraph::from_tsv(std::istream& in) {
    HypernymGraph g;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError("hypernym line " + std::to_string(lineno) + ": expected child<TAB>parent");
        const std::string child = line.substr(0, tab), parent = line.substr(tab + 1);
        if (normalize_name(child).empty() || normalize_name(parent).empty())
            throw ParseError("hypernym line " + std::to_string(lineno) + ": empty node name");
        g.add_edge(child, parent);
    }
    return g;
}

HypernymGraph HypernymGraph::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open hypernym file " + path.string());
    return from_tsv(in);
}

void HypernymGraph::add_edge(std::string_view child, std::string_view parent) {
    const std::string c = normalize_name(child), p = normalize_name(parent);
    nodes_.insert(c);
    nodes_.insert(p);
    up_[c].insert(p);
}

bool HypernymGraph::contains(std::string_view node) const { return nodes_.count(normalize_name(node)) != 0; }

const std::set<std::string>& HypernymGraph::parents(std::string_view node) const {
    static const std::set<std::string> none;
    auto it = up_.find(normalize_name(node));
    return it == up_.end() ? none : it->second;
}

void HypernymGraph::check_acyclic() const {
    // iterative three-colour DFS
    std::map<std::string, int> colour;
    for (const auto& start : nodes_) {
        if (colour[start] != 0) continue;
        std::vector<std::pair<std::string, std::set<std::string>::const_iterator>> stack;
        colour[start] = 1;
        stack.emplace_back(start, parents(start).begin());
        while (!stack.empty()) {
            auto& [node, it] = stack.back();
            if (it == parents(node).end()) {
                colour[node] = 2;
                stack.pop_back();
                continue;
            }
            const std::string next = *it++;
            const int c = colour[next];
            if (c == 1) throw CyclicGraph("hypernym cycle through '" + next + "'");
            if (c == 0) {
                colour[next] = 1;
                stack.emplace_back(next, parents(next).begin());
            }
        }
    }
}

std::map<std::string, int> HypernymGraph::ancestors(std::string_view node) const {
    const std::string start = normalize_name(node);
    std::map<std::string, int> dist{{start, 0}};
    std::queue<std::string> q;
    q.push(start);
    while (!q.empty()) {
        const std::string n = q.front();
        q.pop();
        for (const auto& p : parents(n)) {
            if (p == start) throw CyclicGraph("hypernym cycle through '" + start + "'");
            if (dist.emplace(p, dist[n] + 1).second) q.push(p);
        }
    }
    return dist;
}

std::optional<std::string> HypernymGraph::lowest_common_ancestor(std::string_view a, std::string_view b) const {
    check_acyclic();
    const std::string na = normalize_name(a), nb = normalize_name(b);
    if (na == nb) return na;
    const auto da = ancestors(na), db = ancestors(nb);
    std::optional<std::string> best;
    int best_hops = 0;
    for (const auto& [node, ha] : da) {  // map order gives the lexicographic tie-break
        auto it = db.find(node);
        if (it == db.end() || excluded.count(node)) continue;
        const int hops = ha + it->second;
        if (!best || hops < best_hops) {
            best = node;
            best_hops = hops;
        }
    }
    return best;
}

const std::set<std::string>& default_excluded_hypernyms() {
    static const std::set<std::string> list = [] {
        std::set<std::string> s;
        for (const char* n :
             {"equipment", "substance", "tracheophyte", "piece of furniture", "furnishing", "barrier", "art",
              "surface", "vessel", "container", "covering", "device", "way", "path", "craft", "transport",
              "conveyance", "natural object", "object", "attribute", "form", "relation", "impediment", "structure",
              "entity", "matter", "creation", "grouping", "artefact", "physical entity", "whole", "means",
              "abstraction", "measure", "being", "language unit", "consumer goods", "durable goods",
              "animate thing", "causal agency", "part"})
            s.insert(n);
        return s;
    }();
    return list;
}

std::set<std::string> load_exclusion_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open exclusion list " + path.string());
    std::set<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] == '#') continue;
        auto n = normalize_name(line);
        if (!n.empty()) out.insert(std::move(n));
    }
    return out;
}

std::optional<std::string> graph_node(const Concept& c, const HypernymGraph& g) {
    if (g.contains(c.name)) return normalize_name(c.name);
    for (const auto& s : c.synonyms)
        if (g.contains(s)) return normalize_name(s);
    return std::nullopt;
}

UnifyResult unify_concepts(const ConceptRegistry& reg, const HypernymGraph& graph,
                           const std::vector<ConceptPair>& misaligned) {
    graph.check_acyclic();
    UnifyResult out;
    std::set<ConceptId> warned;
    auto node_of = [&](ConceptId id) {
        const Concept& c = reg.concept_by_id(id);
        auto n = graph_node(c, graph);
        if (!n && warned.insert(id).second) out.warnings.push_back("concept '" + c.name + "' has no hypernym node");
        return n;
    };
    for (const auto& p : misaligned) {
        const auto a = node_of(p.first), b = node_of(p.second);
        if (!a || !b) continue;
        const auto anc = graph.lowest_common_ancestor(*a, *b);
        if (!anc) {
            out.unresolved.push_back(p);
            continue;
        }
        out.mapping.emplace(p.first, *anc);
        out.mapping.emplace(p.second, *anc);
    }
    return out;
}

RemapResult apply_unification(const ConceptRegistry& reg, const MaskArchive& archive,
                              const std::map<ConceptId, std::string>& mapping) {
    for (const auto& [id, target] : mapping)
        if (!reg.contains(id)) throw UnknownConceptId("mapping names unknown concept " + std::to_string(id));

    RemapResult out;
    std::map<ConceptId, Concept> merged;  // surviving id -> new concept
    std::set<ConceptId> gone;
    std::set<std::string> cross_reported;
    std::set<std::string> claimed;

    for (const auto& subset : reg.subsets()) {
        std::map<std::string, std::vector<ConceptId>> groups;
        for (ConceptId id : subset.concept_ids) {
            auto it = mapping.find(id);
            if (it != mapping.end()) groups[normalize_name(it->second)].push_back(id);
        }
        for (auto& [target, members] : groups) {
            // an unmapped concept already named like the target joins its group
            if (auto existing = reg.find(target)) {
                const Concept& ec = reg.concept_by_id(*existing);
                if (ec.subset_id != subset.id) {
                    if (cross_reported.insert(target).second)
                        out.skipped.push_back("'" + target + "' names a concept of another subset");
                    continue;
                }
                auto em = mapping.find(*existing);
                if (em != mapping.end() && normalize_name(em->second) != target) {
                    out.skipped.push_back("'" + target + "' is itself mapped to '" + em->second + "'");
                    continue;
                }
                if (std::find(members.begin(), members.end(), *existing) == members.end())
                    members.push_back(*existing);
            }
            if (claimed.count(target)) {
                if (cross_reported.insert(target).second)
                    out.skipped.push_back("'" + target + "' already merged in another subset");
                continue;
            }
            if (members.size() < 2) {
                out.skipped.push_back("'" + reg.concept_by_id(members.front()).name + "' -> '" + target +
                                      "' merges nothing in subset '" + subset.label + "'");
                continue;
            }
            std::sort(members.begin(), members.end());
            Concept c;
            c.id = members.front();
            c.name = target;
            c.subset_id = subset.id;
            c.ignored = true;
            std::set<std::string> syn;
            for (ConceptId m : members) {
                const Concept& old = reg.concept_by_id(m);
                c.ignored = c.ignored && old.ignored;
                syn.insert(normalize_name(old.name));
                for (const auto& s : old.synonyms) syn.insert(normalize_name(s));
                out.ids[m] = c.id;
                if (m != c.id) gone.insert(m);
            }
            syn.erase(target);
            c.synonyms.assign(syn.begin(), syn.end());
            claimed.insert(target);
            merged[c.id] = std::move(c);
            out.affected.insert(subset.id);
        }
    }
    for (const auto& [id, target] : mapping)
        for (const auto& [other, t2] : mapping)
            if (id < other && normalize_name(target) == normalize_name(t2) &&
                reg.concept_by_id(id).subset_id != reg.concept_by_id(other).subset_id &&
                cross_reported.insert(normalize_name(target) + "#cross").second)
                out.skipped.push_back("'" + normalize_name(target) + "' spans several subsets; merged per subset only");

    std::vector<ConceptSubset> subsets;
    std::vector<Concept> concepts;
    for (const auto& s : reg.subsets()) {
        ConceptSubset ns = s;
        ns.concept_ids.clear();
        for (ConceptId id : s.concept_ids) {
            if (gone.count(id)) continue;
            ns.concept_ids.push_back(id);
            auto it = merged.find(id);
            concepts.push_back(it != merged.end() ? it->second : reg.concept_by_id(id));
        }
        subsets.push_back(std::move(ns));
    }
    for (const auto& c : reg.concepts())
        if (!out.ids.count(c.id)) out.ids[c.id] = c.id;
    out.registry = ConceptRegistry(std::move(subsets), std::move(concepts));

    // the archive may hold only some subsets of the registry
    std::vector<ConceptSubset> held;
    std::vector<Concept> held_concepts;
    for (const auto& s : out.registry.subsets()) {
        if (!archive.has_subset(s.id)) continue;
        held.push_back(s);
        for (ConceptId id : s.concept_ids) held_concepts.push_back(out.registry.concept_by_id(id));
    }
    MaskArchive remapped(ConceptRegistry(held, held_concepts), archive.width(), archive.height(), archive.samples());
    for (const auto& s : held) {
        for (std::size_t x = 0; x < archive.samples(); ++x) {
            auto src = archive.labels(s.id, x);
            auto dst = remapped.labels(s.id, x);
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = out.ids.at(src[i]);
        }
    }
    remapped.seal();
    out.archive = std::move(remapped);
    return out;
}

// ---- co-occurrence ----

std::string_view cooccurrence_name(Cooccurrence c) {
    switch (c) {
    case Cooccurrence::HyperRelated: return "hyper_related";
    case Cooccurrence::HighlyRelated: return "highly_related";
    case Cooccurrence::Low: return "low_cooccurrence";
    }
    return "?";
}

Cooccurrence categorize_rate(double rate) {
    if (rate > 0.75) return Cooccurrence::HyperRelated;
    if (rate > 0.50) return Cooccurrence::HighlyRelated;
    return Cooccurrence::Low;
}

CooccurrenceEntry cooccurrence_category(ConceptId c1, ConceptId c2, const BinarizedActivations& acts,
                                        const MaskArchive& archive, const Formula& f) {
    const MaskPlane theta = evaluate_plane(f, archive);
    if (!theta.same_shape(acts.mask)) throw ShapeMismatch("formula mask and activations differ in shape");
    const auto& g1 = archive.geometry(c1);
    const auto& g2 = archive.geometry(c2);
    std::size_t activating = 0, both = 0;
    for (std::size_t x = 0; x < theta.samples(); ++x) {
        if (kernels::serial::count_and(theta.sample_words(x), acts.mask.sample_words(x)) == 0) continue;
        ++activating;
        both += g1[x].size > 0 && g2[x].size > 0;
    }
    CooccurrenceEntry e;
    e.first = c1;
    e.second = c2;
    e.rate = activating == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(activating);
    e.category = categorize_rate(e.rate);
    return e;
}

// ---- misalignment loop ----

MisalignmentResult misalignment_loop(const std::vector<ExplanationRecord>& reference, const ConceptRegistry& ref_reg,
                                     const MaskArchive& archive, const HypernymGraph& graph, const ExplainFn& explain,
                                     const ActsFn& acts, int max_rounds) {
    graph.check_acyclic();
    MisalignmentResult res;
    res.archive = archive;
    res.registry = archive.manifest();
    res.records = explain(res.archive);

    for (int round = 1; round <= max_rounds; ++round) {
        const ConceptRegistry& reg = res.registry;
        ConceptEquivalence eq;
        eq.add(ref_reg);
        eq.add(reg);
        std::map<std::string, const ExplanationRecord*> ours;
        for (const auto& r : res.records) ours[r.key()] = &r;

        MisalignmentRound rd;
        rd.round = round;
        rd.concepts_before = reg.size();
        std::set<ConceptId> warned;
        auto our_node = [&](ConceptId id) {
            auto n = graph_node(reg.concept_by_id(id), graph);
            if (!n && warned.insert(id).second)
                rd.warnings.push_back("concept '" + reg.concept_by_id(id).name + "' has no hypernym node");
            return n;
        };
        // our concept equivalent to a reference concept, if any
        auto counterpart = [&](const Concept& rc) -> std::optional<ConceptId> {
            const std::string cls = eq.class_of(rc.name);
            for (const auto& c : reg.concepts())
                if (!c.ignored && eq.class_of(c.name) == cls) return c.id;
            return std::nullopt;
        };

        for (const auto& ref : reference) {
            auto it = ours.find(ref.key());
            if (it == ours.end()) continue;
            const ExplanationRecord& mine = *it->second;
            const auto mine_pos = mine.formula.positive_atoms();
            std::set<std::string> mine_classes;
            for (ConceptId id : mine_pos) mine_classes.insert(eq.class_of(reg.concept_by_id(id).name));
            std::set<ConceptId> seen_missing;
            for (ConceptId rid : ref.formula.positive_atoms()) {
                const Concept& rc = ref_reg.concept_by_id(rid);
                if (mine_classes.count(eq.class_of(rc.name)) || !seen_missing.insert(rid).second) continue;
                const auto rnode = graph_node(rc, graph);
                const auto twin = counterpart(rc);
                for (ConceptId oid : mine_pos) {
                    MisalignmentEntry e;
                    e.record_key = ref.key();
                    e.missing = rc.name;
                    e.ours = oid;
                    const auto onode = our_node(oid);
                    if (rnode && onode) e.ancestor = graph.lowest_common_ancestor(*rnode, *onode);
                    if (e.ancestor) {
                        rd.mapping.emplace(oid, *e.ancestor);
                        if (twin) rd.mapping.emplace(*twin, *e.ancestor);
                    } else {
                        if (twin) {
                            const auto& a = acts(mine.neuron_id, mine.range_id);
                            e.rate = cooccurrence_category(*twin, oid, a, res.archive, mine.formula).rate;
                        }
                        e.category = categorize_rate(e.rate);
                    }
                    rd.entries.push_back(std::move(e));
                }
            }
        }

        RemapResult remap = apply_unification(reg, res.archive, rd.mapping);
        rd.skipped = remap.skipped;
        rd.concepts_after = remap.registry.size();
        const bool changed = rd.concepts_after < rd.concepts_before;
        res.rounds.push_back(std::move(rd));
        if (!changed) {
            res.fixpoint = true;
            break;
        }
        res.registry = std::move(remap.registry);
        res.archive = std::move(remap.archive);
        res.records = explain(res.archive);
    }
    return res;
}

nlohmann::json to_json(const MisalignmentResult& r) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& rd : r.rounds) {
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& e : rd.entries) {
            nlohmann::json j{{"record", e.record_key}, {"missing", e.missing}, {"ours", e.ours}};
            if (e.ancestor) {
                j["status"] = "unifiable";
                j["ancestor"] = *e.ancestor;
            } else {
                j["status"] = cooccurrence_name(e.category.value_or(Cooccurrence::Low));
                j["rate"] = e.rate;
            }
            entries.push_back(std::move(j));
        }
        nlohmann::json mapping = nlohmann::json::object();
        for (const auto& [id, anc] : rd.mapping) mapping[std::to_string(id)] = anc;
        rounds.push_back({{"round", rd.round},
                          {"entries", std::move(entries)},
                          {"mapping", std::move(mapping)},
                          {"concepts_before", rd.concepts_before},
                          {"concepts_after", rd.concepts_after},
                          {"skipped", rd.skipped},
                          {"warnings", rd.warnings}});
    }
    return {{"fixpoint", r.fixpoint}, {"rounds", std::move(rounds)}, {"registry", r.registry.to_json()}};
}

// ---- concept isolation ----

MaskPlane sub_explanation_plane(const Formula& f, const std::vector<ConceptId>& drop, const MaskArchive& archive) {
    auto dropped = [&](ConceptId id) { return std::find(drop.begin(), drop.end(), id) != drop.end(); };
    const MaskPlane& head = archive.plane(f.head());
    MaskPlane out(head.samples(), head.width(), head.height());
    bool defined = false;
    if (!dropped(f.head())) {
        out = head;
        defined = true;
    }
    for (const auto& s : f.steps()) {
        if (dropped(s.atom)) continue;
        const auto src = archive.plane(s.atom).words();
        if (!defined) {
            if (s.op == Op::Or) {
                out = archive.plane(s.atom);
            } else {
                const BinaryMask full = BinaryMask::filled(head.width(), head.height());
                for (std::size_t x = 0; x < out.samples(); ++x) out.set_sample(x, full);
                if (s.op == Op::And) kernels::serial::and_into(out.words(), src);
                else kernels::serial::andnot_into(out.words(), src);
            }
            defined = true;
            continue;
        }
        switch (s.op) {
        case Op::And: kernels::serial::and_into(out.words(), src); break;
        case Op::Or: kernels::serial::or_into(out.words(), src); break;
        case Op::AndNot: kernels::serial::andnot_into(out.words(), src); break;
        }
    }
    return out;
}

IsolationResult isolate_concept(const Formula& f, ConceptId c, const BinarizedActivations& acts,
                                const MaskArchive& archive, std::size_t m, const std::vector<ConceptId>& drop) {
    if (!f.contains(c)) throw ConceptNotInFormula("concept " + std::to_string(c) + " is not in " + f.render_ids());
    const MaskPlane theta = evaluate_plane(f, archive);
    if (!theta.same_shape(acts.mask)) throw ShapeMismatch("formula mask and activations differ in shape");
    const MaskPlane se = sub_explanation_plane(f, drop.empty() ? std::vector<ConceptId>{c} : drop, archive);
    const auto& geo = archive.geometry(c);

    std::vector<std::pair<std::uint64_t, std::size_t>> sup, unex;
    for (std::size_t x = 0; x < theta.samples(); ++x) {
        const bool active = acts.sample_sizes[x] > 0;
        if (!active) continue;
        const bool holds = kernels::serial::popcount(theta.sample_words(x)) > 0;
        if (holds && geo[x].size > 0) sup.emplace_back(geo[x].size, x);
        if (kernels::serial::popcount(se.sample_words(x)) == 0) unex.emplace_back(acts.sample_sizes[x], x);
    }
    auto pick = [m](std::vector<std::pair<std::uint64_t, std::size_t>>& v) {
        std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        std::vector<std::size_t> ids;
        for (std::size_t i = 0; i < v.size() && i < m; ++i) ids.push_back(v[i].second);
        return ids;
    };
    return {pick(sup), pick(unex)};
}

} // namespace ovce
