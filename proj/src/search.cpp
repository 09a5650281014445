#include "ovce/search.hpp"

#include "ovce/error.hpp"

#include <algorithm>
#include <set>

namespace ovce {

int compare(const Ratio& a, const Ratio& b) {
    // a zero denominator means the value 0
    const unsigned __int128 an = a.den == 0 ? 0 : a.num;
    const unsigned __int128 ad = a.den == 0 ? 1 : a.den;
    const unsigned __int128 bn = b.den == 0 ? 0 : b.num;
    const unsigned __int128 bd = b.den == 0 ? 1 : b.den;
    const unsigned __int128 l = an * bd, r = bn * ad;
    return l < r ? -1 : l > r ? 1 : 0;
}

bool ranks_before(const ScoredLabel& a, const ScoredLabel& b) {
    if (const int c = compare(a.iou_exact, b.iou_exact); c != 0) return c > 0;
    return tie_break_less(a.formula, a.key, b.formula, b.key);
}

namespace {

kernels::Combine combine_of(Op op) {
    switch (op) {
    case Op::And: return kernels::Combine::And;
    case Op::Or: return kernels::Combine::Or;
    case Op::AndNot: return kernels::Combine::AndNot;
    }
    return kernels::Combine::And;
}

Ratio iou_ratio(std::uint64_t inter, std::uint64_t mask_size, std::uint64_t act_size) {
    return {inter, act_size + mask_size - inter};
}

ScoredLabel make_label(Formula f, Ratio iou) {
    ScoredLabel s;
    s.key = canonicalize(f);
    s.formula = std::move(f);
    s.iou_exact = iou;
    s.iou = iou.value();
    return s;
}

void check_config(const SearchConfig& cfg) {
    if (cfg.beam_size < 1) throw ConfigError("beam size must be at least 1");
    if (cfg.max_length < 1) throw ConfigError("maximum explanation length must be at least 1");
}

void check_problem(const SearchProblem& p) {
    if (!p.archive || !p.acts) throw MissingInfo("search problem needs an archive and activations");
    if (!p.acts->mask.same_shape(p.archive->plane(p.archive->manifest().concepts().front().id)))
        throw ShapeMismatch("activations and masks differ in shape or sample count");
}

std::vector<ConceptId> universe(const SearchProblem& p) {
    const ConceptRegistry& reg = p.archive->manifest();
    std::vector<ConceptId> ids = p.concepts;
    if (ids.empty())
        for (const auto& c : reg.concepts()) ids.push_back(c.id);
    std::vector<ConceptId> out;
    for (ConceptId id : ids) {
        if (!reg.concept_by_id(id).ignored) out.push_back(id);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    if (out.empty()) throw EmptyCandidatePool("no searchable concepts");
    return out;
}

std::vector<SampleInfo> materialized_info(const MaskPlane& plane, const BinarizedActivations& acts) {
    std::vector<SampleInfo> out(plane.samples());
    for (std::size_t s = 0; s < plane.samples(); ++s) {
        auto w = plane.sample_words(s);
        out[s].ims = static_cast<std::uint32_t>(kernels::serial::count_and(w, acts.mask.sample_words(s)));
        const auto g = compute_geometry(plane.sample(s));
        out[s].size = g.size;
        out[s].bbox = g.bbox;
        out[s].inscribed = g.inscribed;
    }
    return out;
}

class BeamRunner {
public:
    BeamRunner(const SearchProblem& p, const SearchConfig& cfg)
        : p_(p), cfg_(cfg), archive_(*p.archive), acts_(*p.acts), reg_(p.archive->manifest()) {
        check_config(cfg);
        check_problem(p);
        universe_ = universe(p);
        SearchProblem restricted = p;
        restricted.concepts = universe_;
        info_ = build_atom_info(restricted);
    }

    SearchResult run(bool heuristic, std::vector<CandidateTrace>* trace) {
        SearchResult result;
        std::vector<ScoredLabel> beam;
        for (ConceptId c : universe_) {
            std::uint64_t inter = 0, size = 0;
            for (const auto& si : info_.atoms.at(c)) {
                inter += si.ims;
                size += si.size;
            }
            beam.push_back(make_label(Formula::atom(c), iou_ratio(inter, size, acts_.total)));
        }
        result.stats.evaluated += beam.size();
        sort_and_trim(beam);
        result.best = beam.front();

        ExpansionPool pool;
        pool.negative = universe_;
        for (ConceptId c : universe_) {
            if (cfg_.pool == PoolPolicy::All) {
                pool.positive.push_back(c);
                continue;
            }
            std::uint64_t inter = 0;
            for (const auto& si : info_.atoms.at(c)) inter += si.ims;
            if (inter > 0) pool.positive.push_back(c);
        }

        for (int len = 2; len <= cfg_.max_length; ++len) {
            std::vector<Formula> beam_formulas;
            std::set<CanonicalKey> in_beam;
            for (const auto& s : beam) {
                beam_formulas.push_back(s.formula);
                in_beam.insert(s.key);
            }
            update_info(info_, beam_formulas, p_);

            std::vector<ScoredLabel> candidates;
            for (Formula& f : expand(beam_formulas, reg_, pool)) {
                ScoredLabel s;
                s.key = canonicalize(f);
                if (in_beam.count(s.key)) continue;
                s.formula = std::move(f);
                candidates.push_back(std::move(s));
            }
            result.stats.expanded += candidates.size();

            std::vector<ScoredLabel> accepted;
            if (heuristic) {
                for (auto& c : candidates) c.est_iou = estimate_iou(c.formula, info_, acts_);
                std::sort(candidates.begin(), candidates.end(), [](const ScoredLabel& a, const ScoredLabel& b) {
                    if (const int c = compare(*a.est_iou, *b.est_iou); c != 0) return c > 0;
                    return tie_break_less(a.formula, a.key, b.formula, b.key);
                });
                const bool full = static_cast<int>(beam.size()) >= cfg_.beam_size;
                const std::optional<Ratio> min_iou =
                    full ? std::optional<Ratio>(beam.back().iou_exact) : std::nullopt;
                std::size_t i = 0;
                for (; i < candidates.size(); ++i) {
                    auto& c = candidates[i];
                    if (min_iou && *c.est_iou < *min_iou) break;
                    score(c);
                    if (trace) trace->push_back({c.formula, *c.est_iou, c.iou_exact, true});
                    accepted.push_back(std::move(c));
                }
                result.stats.pruned += candidates.size() - i;
                if (trace)
                    for (; i < candidates.size(); ++i) {
                        auto& c = candidates[i];
                        trace->push_back({c.formula, *c.est_iou, exact(c.formula), false});
                    }
            } else {
                for (auto& c : candidates) {
                    score(c);
                    accepted.push_back(std::move(c));
                }
            }
            result.stats.evaluated += accepted.size();

            for (auto& a : accepted) beam.push_back(std::move(a));
            sort_and_trim(beam);
            if (ranks_before(beam.front(), result.best)) result.best = beam.front();
        }
        return result;
    }

private:
    void sort_and_trim(std::vector<ScoredLabel>& beam) const {
        std::sort(beam.begin(), beam.end(), ranks_before);
        if (static_cast<int>(beam.size()) > cfg_.beam_size) beam.resize(static_cast<std::size_t>(cfg_.beam_size));
    }

    const MaskPlane& plane_of(const Formula& f, const CanonicalKey& key) const {
        if (f.is_atom()) return archive_.plane(f.head());
        auto it = info_.planes.find(key);
        if (it == info_.planes.end()) throw MissingInfo("no materialized mask for " + key);
        return it->second;
    }

    Ratio exact(const Formula& f) const {
        const Formula left = f.left();
        const auto r = kernels::count_combined(combine_of(f.last_op()),
                                                       plane_of(left, canonicalize(left)).words(),
                                                       archive_.plane(f.right_atom()).words(), acts_.mask.words());
        return iou_ratio(r.inter, r.mask, acts_.total);
    }

    void score(ScoredLabel& s) const {
        s.iou_exact = exact(s.formula);
        s.iou = s.iou_exact.value();
    }

    const SearchProblem& p_;
    const SearchConfig& cfg_;
    const MaskArchive& archive_;
    const BinarizedActivations& acts_;
    const ConceptRegistry& reg_;
    std::vector<ConceptId> universe_;
    HeuristicInfo info_;
};

} // namespace

HeuristicInfo build_atom_info(const SearchProblem& problem) {
    check_problem(problem);
    HeuristicInfo info;
    const MaskArchive& archive = *problem.archive;
    const BinarizedActivations& acts = *problem.acts;
    std::vector<ConceptId> ids = problem.concepts;
    if (ids.empty())
        for (const auto& c : archive.manifest().concepts()) ids.push_back(c.id);
    for (ConceptId id : ids) {
        const MaskPlane& plane = archive.plane(id);
        const auto& geo = archive.geometry(id);
        std::vector<std::uint32_t> ims(plane.samples());
        kernels::per_sample_count_and(plane.words(), acts.mask.words(), plane.stride(), ims);
        std::vector<SampleInfo> si(plane.samples());
        for (std::size_t s = 0; s < si.size(); ++s) si[s] = {ims[s], geo[s].size, geo[s].bbox, geo[s].inscribed};
        info.atoms.emplace(id, std::move(si));
    }
    return info;
}

void update_info(HeuristicInfo& info, const std::vector<Formula>& beam, const SearchProblem& problem) {
    std::map<CanonicalKey, std::vector<SampleInfo>> formulas;
    std::map<CanonicalKey, MaskPlane> planes;
    for (const Formula& f : beam) {
        const CanonicalKey key = canonicalize(f);
        if (f.is_atom()) {
            auto it = info.atoms.find(f.head());
            if (it == info.atoms.end()) throw MissingInfo("no atom info for concept " + std::to_string(f.head()));
            formulas[key] = it->second;
            continue;
        }
        auto old = info.planes.find(key);
        MaskPlane plane = old != info.planes.end() ? std::move(old->second) : evaluate_plane(f, *problem.archive);
        auto old_info = info.formulas.find(key);
        formulas[key] = old_info != info.formulas.end() ? std::move(old_info->second)
                                                         : materialized_info(plane, *problem.acts);
        planes.emplace(key, std::move(plane));
    }
    info.formulas = std::move(formulas);
    info.planes = std::move(planes);
}

Ratio exact_iou(const Formula& f, const BinarizedActivations& acts, const MaskArchive& archive) {
    const MaskPlane plane = evaluate_plane(f, archive);
    if (!plane.same_shape(acts.mask)) throw ShapeMismatch("formula mask and activations differ in shape");
    const auto inter = kernels::count_and(plane.words(), acts.mask.words());
    const auto size = kernels::popcount(plane.words());
    return iou_ratio(inter, size, acts.total);
}

double compute_iou(const Formula& f, const BinarizedActivations& acts, const MaskArchive& archive) {
    return exact_iou(f, acts, archive).value();
}

Ratio estimate_iou(const Formula& f, const HeuristicInfo& info, const BinarizedActivations& acts) {
    if (f.is_atom()) throw MissingInfo("estimates apply to compound formulas only");
    const CanonicalKey left_key = canonicalize(f.left());
    const auto lit = info.formulas.find(left_key);
    if (lit == info.formulas.end()) throw MissingInfo("no beam info for " + left_key);
    const auto rit = info.atoms.find(f.right_atom());
    if (rit == info.atoms.end()) throw MissingInfo("no atom info for concept " + std::to_string(f.right_atom()));
    const auto& left = lit->second;
    const auto& right = rit->second;
    if (left.size() != acts.sample_sizes.size() || right.size() != left.size())
        throw MissingInfo("heuristic info does not cover every sample");

    // Per sample: est_inter >= true intersection, est_mask <= true mask size.
    std::uint64_t est_inter = 0, est_mask = 0;
    for (std::size_t x = 0; x < left.size(); ++x) {
        const SampleInfo& l = left[x];
        const SampleInfo& r = right[x];
        const std::int64_t act = acts.sample_sizes[x];
        std::int64_t inter = 0, mask = 0;
        switch (f.last_op()) {
        case Op::Or:
            inter = std::min<std::int64_t>(std::int64_t{l.ims} + r.ims, act);
            mask = std::max<std::int64_t>(l.size, r.size);
            break;
        case Op::And:
            inter = std::min<std::int64_t>(l.ims, r.ims);
            mask = std::max<std::int64_t>(overlap_area(l.inscribed, r.inscribed), inter);
            break;
        case Op::AndNot:
            inter = std::min<std::int64_t>(l.ims, act - r.ims);
            mask = std::max<std::int64_t>(std::int64_t{l.size} - overlap_area(l.bbox, r.bbox), inter);
            break;
        }
        est_inter += static_cast<std::uint64_t>(inter);
        est_mask += static_cast<std::uint64_t>(mask);
    }
    // est_inter <= total activation size, so the union stays non-negative
    return {est_inter, acts.total + est_mask - est_inter};
}

SearchResult beam_search(const SearchProblem& problem, const SearchConfig& cfg, std::vector<CandidateTrace>* trace) {
    return BeamRunner(problem, cfg).run(true, trace);
}

SearchResult naive_beam_search(const SearchProblem& problem, const SearchConfig& cfg) {
    return BeamRunner(problem, cfg).run(false, nullptr);
}

std::uint64_t exhaustive_space_size(std::size_t concepts, int max_length) {
    std::uint64_t total = 0, level = 0;
    for (int len = 1; len <= max_length; ++len) {
        if (static_cast<std::size_t>(len) > concepts) break;
        level = len == 1 ? concepts : level * (concepts - static_cast<std::size_t>(len) + 1) * 3;
        total += level;
        if (total > (std::uint64_t{1} << 62)) return total;
    }
    return total;
}

SearchResult exhaustive_search(const SearchProblem& problem, const SearchConfig& cfg) {
    check_config(cfg);
    check_problem(problem);
    const auto ids = universe(problem);
    const auto space = exhaustive_space_size(ids.size(), cfg.max_length);
    if (space > cfg.exhaustive_cap)
        throw SearchSpaceTooLarge(std::to_string(space) + " formulas exceed the cap of " +
                                  std::to_string(cfg.exhaustive_cap));

    const MaskArchive& archive = *problem.archive;
    const BinarizedActivations& acts = *problem.acts;
    SearchResult result;
    bool have = false;
    std::set<CanonicalKey> seen;

    auto offer = [&](const Formula& f, Ratio iou) {
        ScoredLabel s = make_label(f, iou);
        if (!seen.insert(s.key).second) return;
        ++result.stats.evaluated;
        if (!have || ranks_before(s, result.best)) {
            result.best = std::move(s);
            have = true;
        }
    };

    // depth-first; `plane` is the materialized mask of `f`
    auto visit = [&](auto&& self, const Formula& f, const MaskPlane& plane) -> void {
        if (static_cast<int>(f.length()) >= cfg.max_length) return;
        for (Op op : {Op::And, Op::Or, Op::AndNot}) {
            for (ConceptId c : ids) {
                if (f.contains(c)) continue;
                const Formula g = f.extend(op, c);
                ++result.stats.expanded;
                const auto r = kernels::serial::count_combined(combine_of(op), plane.words(),
                                                               archive.plane(c).words(), acts.mask.words());
                offer(g, iou_ratio(r.inter, r.mask, acts.total));
                if (static_cast<int>(g.length()) < cfg.max_length) {
                    MaskPlane child = plane;
                    switch (op) {
                    case Op::And: kernels::serial::and_into(child.words(), archive.plane(c).words()); break;
                    case Op::Or: kernels::serial::or_into(child.words(), archive.plane(c).words()); break;
                    case Op::AndNot: kernels::serial::andnot_into(child.words(), archive.plane(c).words()); break;
                    }
                    self(self, g, child);
                }
            }
        }
    };

    for (ConceptId c : ids) {
        const Formula f = Formula::atom(c);
        const MaskPlane& plane = archive.plane(c);
        offer(f, iou_ratio(kernels::serial::count_and(plane.words(), acts.mask.words()),
                           kernels::serial::popcount(plane.words()), acts.total));
        visit(visit, f, plane);
    }
    return result;
}

} // namespace ovce
