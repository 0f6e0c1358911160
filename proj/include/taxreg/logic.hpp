#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "taxreg/taxonomy.hpp"

namespace taxreg {

// ---------------------------------------------------------------------------
// Formula AST: arbitrary propositional constraints for the generic circuit
// path. The taxonomy itself only ever needs ExactlyOneRestricted sentences.
// ---------------------------------------------------------------------------

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Formula {
    enum class Kind { Lit, Not, And, Or, True, False };
    Kind kind;
    int var = -1;        // Lit
    bool positive = true;  // Lit
    std::vector<FormulaPtr> kids;

    static FormulaPtr lit(int var, bool positive = true) {
        auto f = std::make_shared<Formula>();
        f->kind = Kind::Lit;
        f->var = var;
        f->positive = positive;
        return f;
    }
    static FormulaPtr lnot(FormulaPtr a) {
        auto f = std::make_shared<Formula>();
        f->kind = Kind::Not;
        f->kids = {std::move(a)};
        return f;
    }
    static FormulaPtr land(std::vector<FormulaPtr> kids) {
        auto f = std::make_shared<Formula>();
        f->kind = Kind::And;
        f->kids = std::move(kids);
        return f;
    }
    static FormulaPtr lor(std::vector<FormulaPtr> kids) {
        auto f = std::make_shared<Formula>();
        f->kind = Kind::Or;
        f->kids = std::move(kids);
        return f;
    }
    static FormulaPtr ltrue() {
        auto f = std::make_shared<Formula>();
        f->kind = Kind::True;
        return f;
    }
    static FormulaPtr lfalse() {
        auto f = std::make_shared<Formula>();
        f->kind = Kind::False;
        return f;
    }
};

inline bool formula_eval(const Formula& f, const std::vector<bool>& x) {
    switch (f.kind) {
        case Formula::Kind::Lit: return f.positive == x[static_cast<size_t>(f.var)];
        case Formula::Kind::Not: return !formula_eval(*f.kids[0], x);
        case Formula::Kind::And:
            for (const auto& k : f.kids)
                if (!formula_eval(*k, x)) return false;
            return true;
        case Formula::Kind::Or:
            for (const auto& k : f.kids)
                if (formula_eval(*k, x)) return true;
            return false;
        case Formula::Kind::True: return true;
        case Formula::Kind::False: return false;
    }
    return false;
}

inline void formula_var_range(const Formula& f, int& lo, int& hi) {
    switch (f.kind) {
        case Formula::Kind::Lit:
            lo = std::min(lo, f.var);
            hi = std::max(hi, f.var);
            break;
        case Formula::Kind::Not:
        case Formula::Kind::And:
        case Formula::Kind::Or:
            for (const auto& k : f.kids) formula_var_range(*k, lo, hi);
            break;
        default: break;
    }
}

/// Substitutes var := val and simplifies constants away. The result never
/// mentions var.
inline FormulaPtr formula_cofactor(const FormulaPtr& f, int var, bool val) {
    switch (f->kind) {
        case Formula::Kind::True:
        case Formula::Kind::False:
            return f;
        case Formula::Kind::Lit:
            if (f->var != var) return f;
            return (f->positive == val) ? Formula::ltrue() : Formula::lfalse();
        case Formula::Kind::Not: {
            FormulaPtr c = formula_cofactor(f->kids[0], var, val);
            if (c->kind == Formula::Kind::True) return Formula::lfalse();
            if (c->kind == Formula::Kind::False) return Formula::ltrue();
            if (c == f->kids[0]) return f;
            return Formula::lnot(c);
        }
        case Formula::Kind::And: {
            std::vector<FormulaPtr> kids;
            kids.reserve(f->kids.size());
            for (const auto& k : f->kids) {
                FormulaPtr c = formula_cofactor(k, var, val);
                if (c->kind == Formula::Kind::False) return Formula::lfalse();
                if (c->kind == Formula::Kind::True) continue;
                kids.push_back(std::move(c));
            }
            if (kids.empty()) return Formula::ltrue();
            if (kids.size() == 1) return kids[0];
            return Formula::land(std::move(kids));
        }
        case Formula::Kind::Or: {
            std::vector<FormulaPtr> kids;
            kids.reserve(f->kids.size());
            for (const auto& k : f->kids) {
                FormulaPtr c = formula_cofactor(k, var, val);
                if (c->kind == Formula::Kind::True) return Formula::ltrue();
                if (c->kind == Formula::Kind::False) continue;
                kids.push_back(std::move(c));
            }
            if (kids.empty()) return Formula::lfalse();
            if (kids.size() == 1) return kids[0];
            return Formula::lor(std::move(kids));
        }
    }
    return f;
}

/// Canonical string form, used as the sub-formula cache key during Shannon
/// expansion. Children of And/Or are sorted so syntactic permutations share.
inline std::string formula_key(const Formula& f) {
    switch (f.kind) {
        case Formula::Kind::Lit: return (f.positive ? "+" : "-") + std::to_string(f.var);
        case Formula::Kind::True: return "T";
        case Formula::Kind::False: return "F";
        case Formula::Kind::Not: return "!(" + formula_key(*f.kids[0]) + ")";
        case Formula::Kind::And:
        case Formula::Kind::Or: {
            std::vector<std::string> ks;
            ks.reserve(f.kids.size());
            for (const auto& k : f.kids) ks.push_back(formula_key(*k));
            std::sort(ks.begin(), ks.end());
            std::string out = f.kind == Formula::Kind::And ? "&(" : "|(";
            for (const auto& k : ks) {
                out += k;
                out += ',';
            }
            out += ')';
            return out;
        }
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Sentence: a propositional constraint over the class indicator variables.
// ---------------------------------------------------------------------------

/// Either the taxonomy-specialized ExactlyOneRestricted form (exactly one
/// variable of the scope true, every variable outside the scope false) or a
/// general formula AST over the same universe.
class Sentence {
public:
    enum class Kind { ExactlyOneRestricted, FormulaAst };

    /// Exactly-one over scope S within a universe of n variables.
    static Sentence exactly_one(std::vector<int> scope, int universe_size) {
        if (scope.empty()) throw Error("exactly_one: empty scope");
        std::sort(scope.begin(), scope.end());
        scope.erase(std::unique(scope.begin(), scope.end()), scope.end());
        if (scope.front() < 0 || scope.back() >= universe_size)
            throw Error("exactly_one: scope not contained in universe");
        Sentence s;
        s.kind_ = Kind::ExactlyOneRestricted;
        s.universe_ = universe_size;
        s.scope_ = std::move(scope);
        return s;
    }

    static Sentence formula(FormulaPtr ast, int universe_size) {
        if (!ast) throw Error("formula sentence: null AST");
        int lo = 0, hi = -1;
        formula_var_range(*ast, lo, hi);
        if (lo < 0 || hi >= universe_size)
            throw Error("formula sentence: variable outside universe");
        Sentence s;
        s.kind_ = Kind::FormulaAst;
        s.universe_ = universe_size;
        s.ast_ = std::move(ast);
        return s;
    }

    Kind kind() const { return kind_; }
    int universe_size() const { return universe_; }
    const std::vector<int>& scope() const { return scope_; }
    const FormulaPtr& ast() const { return ast_; }

    /// The model-checking predicate: does assignment x satisfy this sentence?
    bool satisfied_by(const std::vector<bool>& x) const {
        if (static_cast<int>(x.size()) != universe_)
            throw Error("assignment size mismatch");
        if (kind_ == Kind::FormulaAst) return formula_eval(*ast_, x);
        int in_scope_true = 0;
        size_t si = 0;
        for (int v = 0; v < universe_; ++v) {
            bool in_scope = si < scope_.size() && scope_[si] == v;
            if (in_scope) {
                ++si;
                in_scope_true += x[static_cast<size_t>(v)] ? 1 : 0;
            } else if (x[static_cast<size_t>(v)]) {
                return false;  // variable outside the scope must be false
            }
        }
        return in_scope_true == 1;
    }

    /// One-line textual form for `compile --dump`.
    std::string debug_string() const {
        std::ostringstream os;
        if (kind_ == Kind::ExactlyOneRestricted) {
            os << "EXACTLY_ONE scope=[";
            for (size_t i = 0; i < scope_.size(); ++i) os << (i ? "," : "") << scope_[i];
            os << "] universe_size=" << universe_;
        } else {
            os << "FORMULA " << formula_key(*ast_) << " universe_size=" << universe_;
        }
        return os.str();
    }

private:
    Kind kind_ = Kind::ExactlyOneRestricted;
    int universe_ = 0;
    std::vector<int> scope_;
    FormulaPtr ast_;
};

/// The node sentence delta: exactly one of the node's descendant leaves is
/// true and every other class variable is false. Defined for internal nodes
/// and the root (whose sentence is the flat one-hot constraint).
inline Sentence node_sentence(const Taxonomy& tax, int node_id) {
    if (tax.node(node_id).is_leaf())
        throw Error("node_sentence: '" + tax.node(node_id).name + "' is a leaf");
    return Sentence::exactly_one(tax.leaves_under(node_id), tax.num_classes());
}

/// Which taxonomy nodes an example selects per level: a root-to-node path
/// prefix, plus the leaf class when fully labeled.
struct AncestorAssignment {
    std::vector<int> path;          // node ids at levels 1..k, top-down
    std::optional<int> leaf_class;  // set iff the full chain is known

    static AncestorAssignment from_leaf(const Taxonomy& tax, int class_index) {
        AncestorAssignment a;
        a.path = tax.ancestor_chain(class_index);
        a.leaf_class = class_index;
        return a;
    }

    /// From the deepest known node (internal, root, or leaf).
    static AncestorAssignment from_node(const Taxonomy& tax, int node_id) {
        const TaxNode& n = tax.node(node_id);
        if (n.is_leaf()) return from_leaf(tax, tax.class_index(node_id));
        AncestorAssignment a;
        for (int cur = node_id; cur != -1 && tax.node(cur).level >= 1; cur = tax.node(cur).parent)
            a.path.push_back(cur);
        std::reverse(a.path.begin(), a.path.end());
        return a;
    }

    int deepest_or_root(const Taxonomy& tax) const {
        return path.empty() ? tax.root() : path.back();
    }
};

/// Sentences the semantic loss evaluates for one example. Fully labeled:
/// one sentence per non-leaf level 1..L-1 (the beta-selected delta of each
/// ancestor). Partially labeled: the single sentence of the deepest known
/// node; root-only knowledge reduces to the flat one-hot constraint.
inline std::vector<Sentence> sentences_for_example(const Taxonomy& tax, const AncestorAssignment& a) {
    std::vector<Sentence> out;
    if (a.leaf_class.has_value()) {
        for (int node : tax.ancestor_chain(*a.leaf_class))
            out.push_back(node_sentence(tax, node));
    } else {
        out.push_back(node_sentence(tax, a.deepest_or_root(tax)));
    }
    return out;
}

/// All satisfying assignments, by exhaustive enumeration against the
/// model-checking predicate. Test oracle; guarded against blowup.
inline std::vector<std::vector<bool>> enumerate_models(const Sentence& s) {
    int n = s.universe_size();
    if (n > 20) throw Error("enumerate_models: universe too large (" + std::to_string(n) + " > 20)");
    std::vector<std::vector<bool>> out;
    for (uint32_t bits = 0; bits < (1u << n); ++bits) {
        std::vector<bool> x(static_cast<size_t>(n));
        for (int v = 0; v < n; ++v) x[static_cast<size_t>(v)] = (bits >> v) & 1u;
        if (s.satisfied_by(x)) out.push_back(std::move(x));
    }
    return out;
}

}  // namespace taxreg
