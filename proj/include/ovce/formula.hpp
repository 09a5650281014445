#pragma once

#include "ovce/bitmask.hpp"
#include "ovce/concept_registry.hpp"

#include <json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace ovce {

class MaskArchive;

enum class Op { And, Or, AndNot };

std::string_view op_name(Op op);

/// A left-deep propositional label: a head atom followed by (op, atom) steps,
/// i.e. (((head op1 a1) op2 a2) ...). Every right operand is an atom.
class Formula {
public:
    struct Step {
        Op op;
        ConceptId atom;
        friend bool operator==(const Step&, const Step&) = default;
    };

    Formula() = default;
    static Formula atom(ConceptId id) { return Formula(id); }

    /// (this op atom)
    Formula extend(Op op, ConceptId atom) const;

    bool is_atom() const { return steps_.empty(); }
    std::size_t length() const { return steps_.size() + 1; }
    ConceptId head() const { return head_; }
    const std::vector<Step>& steps() const { return steps_; }

    /// Left operand of a compound.
    Formula left() const;
    Op last_op() const { return steps_.back().op; }
    ConceptId right_atom() const { return steps_.back().atom; }

    /// Atoms in order of appearance.
    std::vector<ConceptId> atoms() const;
    bool contains(ConceptId id) const;
    /// Atoms not used as the right operand of AND NOT.
    std::vector<ConceptId> positive_atoms() const;

    /// "(left OP right)" with concept names.
    std::string render(const ConceptRegistry& reg) const;
    /// Same grammar with numeric ids; the basis of CanonicalKey.
    std::string render_ids() const;

    nlohmann::json to_json() const;
    static Formula from_json(const nlohmann::json& j);

    friend bool operator==(const Formula&, const Formula&) = default;

private:
    explicit Formula(ConceptId head) : head_(head) {}

    ConceptId head_ = 0;
    std::vector<Step> steps_;
};

/// Parses the rendering grammar back against `reg`. Throws ParseError,
/// UnknownConceptId.
Formula parse_formula(std::string_view text, const ConceptRegistry& reg);

/// Formula with every run of the same operator put in ascending atom order
/// (the head joins a leading AND or OR run). Mask-equivalent to the input.
Formula canonical_form(const Formula& f);

using CanonicalKey = std::string;
CanonicalKey canonicalize(const Formula& f);

/// Total order used for every tie-break: shorter first, then ascending key.
bool tie_break_less(const Formula& a, const CanonicalKey& ka, const Formula& b, const CanonicalKey& kb);

/// Mask of the formula on one sample. Throws UnknownConceptId.
BinaryMask evaluate(const Formula& f, const MaskArchive& archive, std::size_t sample);
/// Mask of the formula on every sample.
MaskPlane evaluate_plane(const Formula& f, const MaskArchive& archive);
/// Serial reference of evaluate_plane; writes into `out` (resized as needed).
void evaluate_plane_into(const Formula& f, const MaskArchive& archive, MaskPlane& out);

/// Candidate concepts for expansion. AND / OR take atoms from `positive`,
/// AND NOT from `negative`.
struct ExpansionPool {
    std::vector<ConceptId> positive;
    std::vector<ConceptId> negative;
};

/// Every (formula op atom) over the pool, skipping ignored concepts and atoms
/// already in the formula, deduplicated by canonical key. Order: beam order,
/// then operator, then pool order.
std::vector<Formula> expand(const std::vector<Formula>& beam, const ConceptRegistry& reg, const ExpansionPool& pool);
std::vector<Formula> expand(const std::vector<Formula>& beam, const ConceptRegistry& reg,
                            const std::vector<ConceptId>& pool);

} // namespace ovce
