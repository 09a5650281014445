#include "ovce/formula.hpp"

#include "ovce/error.hpp"
#include "ovce/mask_store.hpp"

#include <algorithm>
#include <set>

namespace ovce {

std::string_view op_name(Op op) {
    switch (op) {
    case Op::And: return "AND";
    case Op::Or: return "OR";
    case Op::AndNot: return "AND NOT";
    }
    return "?";
}

Formula Formula::extend(Op op, ConceptId atom) const {
    Formula f = *this;
    f.steps_.push_back({op, atom});
    return f;
}

Formula Formula::left() const {
    Formula f = *this;
    f.steps_.pop_back();
    return f;
}

std::vector<ConceptId> Formula::atoms() const {
    std::vector<ConceptId> out{head_};
    for (const auto& s : steps_) out.push_back(s.atom);
    return out;
}

bool Formula::contains(ConceptId id) const {
    if (head_ == id) return true;
    return std::any_of(steps_.begin(), steps_.end(), [&](const Step& s) { return s.atom == id; });
}

std::vector<ConceptId> Formula::positive_atoms() const {
    std::vector<ConceptId> out{head_};
    for (const auto& s : steps_)
        if (s.op != Op::AndNot) out.push_back(s.atom);
    return out;
}

namespace {

template <class AtomText>
std::string render_with(const Formula& f, AtomText&& atom_text) {
    std::string out(f.steps().size(), '(');
    out += atom_text(f.head());
    for (const auto& s : f.steps()) {
        out += ' ';
        out += op_name(s.op);
        out += ' ';
        out += atom_text(s.atom);
        out += ')';
    }
    return out;
}

} // namespace

std::string Formula::render(const ConceptRegistry& reg) const {
    return render_with(*this, [&](ConceptId id) { return reg.concept_by_id(id).name; });
}

std::string Formula::render_ids() const {
    return render_with(*this, [](ConceptId id) { return std::to_string(id); });
}

nlohmann::json Formula::to_json() const {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : steps_) steps.push_back({{"op", op_name(s.op)}, {"atom", s.atom}});
    return {{"head", head_}, {"steps", std::move(steps)}};
}

Formula Formula::from_json(const nlohmann::json& j) {
    Formula f(j.at("head").get<ConceptId>());
    for (const auto& s : j.at("steps")) {
        const auto op = s.at("op").get<std::string>();
        Op o = op == "AND" ? Op::And : op == "OR" ? Op::Or : op == "AND NOT" ? Op::AndNot : throw ParseError("bad op " + op);
        f = f.extend(o, s.at("atom").get<ConceptId>());
    }
    return f;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    return s;
}

Formula parse_rec(std::string_view text, const ConceptRegistry& reg) {
    text = trim(text);
    if (text.empty()) throw ParseError("empty formula");
    if (text.front() != '(') {
        if (text.find_first_of("()") != std::string_view::npos)
            throw ParseError("unbalanced parentheses in '" + std::string(text) + "'");
        return Formula::atom(reg.id_of(text));
    }
    if (text.back() != ')') throw ParseError("expected ')' at end of '" + std::string(text) + "'");
    const std::string_view inner = text.substr(1, text.size() - 2);

    // the right operand is an atom, so split at the last top-level operator
    int depth = 0;
    std::size_t split = std::string_view::npos, op_len = 0;
    Op op = Op::And;
    for (std::size_t i = 0; i < inner.size(); ++i) {
        const char c = inner[i];
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (depth < 0) throw ParseError("unbalanced parentheses in '" + std::string(text) + "'");
        if (depth != 0 || c != ' ') continue;
        const std::string_view rest = inner.substr(i);
        if (rest.starts_with(" AND NOT ")) {
            split = i, op_len = 9, op = Op::AndNot;
            i += 8;
        } else if (rest.starts_with(" AND ")) {
            split = i, op_len = 5, op = Op::And;
        } else if (rest.starts_with(" OR ")) {
            split = i, op_len = 4, op = Op::Or;
        }
    }
    if (depth != 0) throw ParseError("unbalanced parentheses in '" + std::string(text) + "'");
    if (split == std::string_view::npos) throw ParseError("no operator in '" + std::string(text) + "'");
    const std::string_view right = trim(inner.substr(split + op_len));
    if (right.empty() || right.find_first_of("()") != std::string_view::npos)
        throw ParseError("right operand must be a concept name in '" + std::string(text) + "'");
    return parse_rec(inner.substr(0, split), reg).extend(op, reg.id_of(right));
}

} // namespace

Formula parse_formula(std::string_view text, const ConceptRegistry& reg) { return parse_rec(text, reg); }

Formula canonical_form(const Formula& f) {
    std::vector<ConceptId> atoms = f.atoms();
    const auto& steps = f.steps();
    std::size_t i = 0;
    while (i < steps.size()) {
        std::size_t j = i;
        while (j + 1 < steps.size() && steps[j + 1].op == steps[i].op) ++j;
        // steps i..j share an operator; atoms[i+1..j+1] are their operands
        const bool with_head = i == 0 && steps[i].op != Op::AndNot;
        auto first = atoms.begin() + static_cast<std::ptrdiff_t>(with_head ? 0 : i + 1);
        std::sort(first, atoms.begin() + static_cast<std::ptrdiff_t>(j + 2));
        i = j + 1;
    }
    Formula out = Formula::atom(atoms[0]);
    for (std::size_t k = 0; k < steps.size(); ++k) out = out.extend(steps[k].op, atoms[k + 1]);
    return out;
}

CanonicalKey canonicalize(const Formula& f) { return canonical_form(f).render_ids(); }

bool tie_break_less(const Formula& a, const CanonicalKey& ka, const Formula& b, const CanonicalKey& kb) {
    if (a.length() != b.length()) return a.length() < b.length();
    return ka < kb;
}

BinaryMask evaluate(const Formula& f, const MaskArchive& archive, std::size_t sample) {
    BinaryMask out = archive.plane(f.head()).sample_mask(sample);
    for (const auto& s : f.steps()) {
        auto src = archive.plane(s.atom).sample_words(sample);
        switch (s.op) {
        case Op::And: kernels::serial::and_into(out.words(), src); break;
        case Op::Or: kernels::serial::or_into(out.words(), src); break;
        case Op::AndNot: kernels::serial::andnot_into(out.words(), src); break;
        }
    }
    return out;
}

void evaluate_plane_into(const Formula& f, const MaskArchive& archive, MaskPlane& out) {
    const MaskPlane& head = archive.plane(f.head());
    if (!out.same_shape(head)) out = MaskPlane(head.samples(), head.width(), head.height());
    std::copy(head.words().begin(), head.words().end(), out.words().begin());
    for (const auto& s : f.steps()) {
        auto src = archive.plane(s.atom).words();
        switch (s.op) {
        case Op::And: kernels::serial::and_into(out.words(), src); break;
        case Op::Or: kernels::serial::or_into(out.words(), src); break;
        case Op::AndNot: kernels::serial::andnot_into(out.words(), src); break;
        }
    }
}

MaskPlane evaluate_plane(const Formula& f, const MaskArchive& archive) {
    const MaskPlane& head = archive.plane(f.head());
    MaskPlane out = head;
    for (const auto& s : f.steps()) {
        auto src = archive.plane(s.atom).words();
        switch (s.op) {
        case Op::And: kernels::and_into(out.words(), src); break;
        case Op::Or: kernels::or_into(out.words(), src); break;
        case Op::AndNot: kernels::andnot_into(out.words(), src); break;
        }
    }
    return out;
}

std::vector<Formula> expand(const std::vector<Formula>& beam, const ConceptRegistry& reg, const ExpansionPool& pool) {
    std::vector<Formula> out;
    std::set<CanonicalKey> seen;
    auto usable = [&](const Formula& f, ConceptId c) {
        return !f.contains(c) && reg.contains(c) && !reg.concept_by_id(c).ignored;
    };
    for (const Formula& f : beam) {
        for (Op op : {Op::And, Op::Or, Op::AndNot}) {
            const auto& atoms = op == Op::AndNot ? pool.negative : pool.positive;
            for (ConceptId c : atoms) {
                if (!usable(f, c)) continue;
                Formula g = f.extend(op, c);
                if (seen.insert(canonicalize(g)).second) out.push_back(std::move(g));
            }
        }
    }
    return out;
}

std::vector<Formula> expand(const std::vector<Formula>& beam, const ConceptRegistry& reg,
                            const std::vector<ConceptId>& pool) {
    return expand(beam, reg, ExpansionPool{pool, pool});
}

} // namespace ovce
