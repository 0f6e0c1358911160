#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "taxreg/logic.hpp"

namespace taxreg {

// ---------------------------------------------------------------------------
// Arithmetic circuits over literal leaves. Nodes are stored kids-before-
// parents, so a single forward sweep evaluates the circuit and a single
// reverse sweep yields all partial derivatives.
// ---------------------------------------------------------------------------

struct Circuit {
    enum class Op { PosLit, NegLit, Zero, One, Sum, Product };

    struct Node {
        Op op;
        int var = -1;  // PosLit/NegLit only
        std::vector<int> kids;
    };

    std::vector<Node> nodes;  // topological: kids precede parents
    int root = -1;
    int universe = 0;  // number of input variables
    // Both build paths emit sums whose children disagree on a decision
    // variable, so determinism holds without enumeration.
    bool det_by_construction = false;

    size_t node_count() const { return nodes.size(); }
    size_t edge_count() const {
        size_t e = 0;
        for (const auto& n : nodes) e += n.kids.size();
        return e;
    }
};

struct CompileOptions {
    size_t max_nodes = 1u << 20;
};

namespace detail {

class CircuitBuilder {
public:
    CircuitBuilder(int universe, size_t max_nodes) : max_nodes_(max_nodes) {
        c_.universe = universe;
        pos_.assign(static_cast<size_t>(universe), -1);
        neg_.assign(static_cast<size_t>(universe), -1);
    }

    int pos(int v) {
        int& id = pos_[static_cast<size_t>(v)];
        if (id < 0) id = add({Circuit::Op::PosLit, v, {}});
        return id;
    }
    int neg(int v) {
        int& id = neg_[static_cast<size_t>(v)];
        if (id < 0) id = add({Circuit::Op::NegLit, v, {}});
        return id;
    }
    int one() {
        if (one_ < 0) one_ = add({Circuit::Op::One, -1, {}});
        return one_;
    }
    int zero() {
        if (zero_ < 0) zero_ = add({Circuit::Op::Zero, -1, {}});
        return zero_;
    }
    int product(std::vector<int> kids) {
        if (kids.size() == 1) return kids[0];
        return add({Circuit::Op::Product, -1, std::move(kids)});
    }
    int sum(std::vector<int> kids) {
        if (kids.size() == 1) return kids[0];
        return add({Circuit::Op::Sum, -1, std::move(kids)});
    }

    Circuit finish(int root) {
        c_.root = root;
        c_.det_by_construction = true;
        return std::move(c_);
    }

    Circuit& circuit() { return c_; }

private:
    int add(Circuit::Node n) {
        if (c_.nodes.size() >= max_nodes_)
            throw Error("circuit exceeds node limit (" + std::to_string(max_nodes_) + ")");
        c_.nodes.push_back(std::move(n));
        return static_cast<int>(c_.nodes.size()) - 1;
    }

    Circuit c_;
    size_t max_nodes_;
    std::vector<int> pos_, neg_;
    int one_ = -1, zero_ = -1;
};

/// Variable support of each node as bitmasks.
inline std::vector<std::vector<uint64_t>> varsets(const Circuit& c) {
    size_t words = (static_cast<size_t>(c.universe) + 63) / 64;
    std::vector<std::vector<uint64_t>> vs(c.nodes.size(), std::vector<uint64_t>(words, 0));
    for (size_t i = 0; i < c.nodes.size(); ++i) {
        const auto& n = c.nodes[i];
        if (n.op == Circuit::Op::PosLit || n.op == Circuit::Op::NegLit) {
            vs[i][static_cast<size_t>(n.var) / 64] |= uint64_t{1} << (n.var % 64);
        } else {
            for (int k : n.kids)
                for (size_t w = 0; w < words; ++w) vs[i][w] |= vs[static_cast<size_t>(k)][w];
        }
    }
    return vs;
}

}  // namespace detail

/// Compiles a sentence into a smooth, deterministic, decomposable circuit.
///
/// ExactlyOneRestricted gets the direct form: one product term per scope
/// variable (that literal positive, the rest of the scope negative), a sum
/// over the terms, and a final product with the negated out-of-scope
/// literals. Literal leaves are shared, so the node count is at most
/// 3*universe + 2.
///
/// Formula ASTs go through Shannon expansion on the lowest mentioned
/// variable with sub-formula memoization, then a smoothing pass.
inline Circuit compile(const Sentence& s, const CompileOptions& opts = {}) {
    int n = s.universe_size();
    detail::CircuitBuilder b(n, opts.max_nodes);

    if (s.kind() == Sentence::Kind::ExactlyOneRestricted) {
        const std::vector<int>& scope = s.scope();
        std::vector<bool> in_scope(static_cast<size_t>(n), false);
        for (int v : scope) in_scope[static_cast<size_t>(v)] = true;

        int body;
        if (scope.size() == 1) {
            body = b.pos(scope[0]);
        } else {
            std::vector<int> terms;
            terms.reserve(scope.size());
            for (int k : scope) {
                std::vector<int> kids;
                kids.reserve(scope.size());
                kids.push_back(b.pos(k));
                for (int v : scope)
                    if (v != k) kids.push_back(b.neg(v));
                terms.push_back(b.product(std::move(kids)));
            }
            body = b.sum(std::move(terms));
        }

        std::vector<int> outer;
        outer.push_back(body);
        for (int v = 0; v < n; ++v)
            if (!in_scope[static_cast<size_t>(v)]) outer.push_back(b.neg(v));
        return b.finish(b.product(std::move(outer)));
    }

    // --- Shannon expansion with memoization ---
    std::map<std::string, int> memo;
    struct Rec {
        detail::CircuitBuilder& b;
        std::map<std::string, int>& memo;
        int operator()(const FormulaPtr& f) {
            if (f->kind == Formula::Kind::True) return b.one();
            if (f->kind == Formula::Kind::False) return b.zero();
            std::string key = formula_key(*f);
            auto it = memo.find(key);
            if (it != memo.end()) return it->second;

            int lo = std::numeric_limits<int>::max(), hi = -1;
            formula_var_range(*f, lo, hi);
            int v = lo;
            FormulaPtr f1 = formula_cofactor(f, v, true);
            FormulaPtr f0 = formula_cofactor(f, v, false);

            std::vector<int> branches;
            if (f1->kind != Formula::Kind::False) {
                branches.push_back(f1->kind == Formula::Kind::True
                                       ? b.pos(v)
                                       : b.product({b.pos(v), (*this)(f1)}));
            }
            if (f0->kind != Formula::Kind::False) {
                branches.push_back(f0->kind == Formula::Kind::True
                                       ? b.neg(v)
                                       : b.product({b.neg(v), (*this)(f0)}));
            }
            int id = branches.empty() ? b.zero() : b.sum(std::move(branches));
            memo.emplace(std::move(key), id);
            return id;
        }
    } rec{b, memo};

    int root = rec(s.ast());

    // --- Smoothing: every child of a sum must mention the sum's full
    // support, and the root must mention the whole universe. Missing
    // variables are multiplied in via (x_v + !x_v) gadgets. ---
    Circuit& c = b.circuit();
    size_t words = (static_cast<size_t>(n) + 63) / 64;
    auto vs = detail::varsets(c);
    std::vector<int> gadget(static_cast<size_t>(n), -1);
    auto get_gadget = [&](int v) {
        int& g = gadget[static_cast<size_t>(v)];
        if (g < 0) {
            g = b.sum({b.pos(v), b.neg(v)});
            vs.resize(c.nodes.size(), std::vector<uint64_t>(words, 0));
            vs[static_cast<size_t>(g)][static_cast<size_t>(v) / 64] |= uint64_t{1} << (v % 64);
        }
        return g;
    };
    // Takes the target mask by value: get_gadget may grow vs, so a reference
    // into it would dangle.
    auto pad = [&](int id, const std::vector<uint64_t> target) {
        std::vector<int> kids{id};
        for (int v = 0; v < n; ++v) {
            size_t w = static_cast<size_t>(v) / 64;
            uint64_t bit = uint64_t{1} << (v % 64);
            if ((target[w] & bit) && !(vs[static_cast<size_t>(id)][w] & bit))
                kids.push_back(get_gadget(v));
        }
        if (kids.size() == 1) return id;
        int p = b.product(std::move(kids));
        vs.resize(c.nodes.size(), std::vector<uint64_t>(words, 0));
        vs[static_cast<size_t>(p)] = target;
        return p;
    };

    size_t original = c.nodes.size();
    for (size_t i = 0; i < original; ++i) {
        if (c.nodes[i].op != Circuit::Op::Sum) continue;
        for (int& k : c.nodes[i].kids) k = pad(k, vs[i]);
    }
    std::vector<uint64_t> full(words, 0);
    for (int v = 0; v < n; ++v) full[static_cast<size_t>(v) / 64] |= uint64_t{1} << (v % 64);
    root = pad(root, full);

    // --- Renumber into topological order, dropping unreachable nodes. ---
    Circuit out;
    out.universe = n;
    out.det_by_construction = true;
    std::vector<int> remap(c.nodes.size(), -1);
    std::vector<std::pair<int, size_t>> stack{{root, 0}};
    while (!stack.empty()) {
        auto& [id, next] = stack.back();
        if (remap[static_cast<size_t>(id)] >= 0) {
            stack.pop_back();
            continue;
        }
        const auto& kids = c.nodes[static_cast<size_t>(id)].kids;
        if (next < kids.size()) {
            int k = kids[next++];
            if (remap[static_cast<size_t>(k)] < 0) stack.push_back({k, 0});
        } else {
            Circuit::Node copy = c.nodes[static_cast<size_t>(id)];
            for (int& k : copy.kids) k = remap[static_cast<size_t>(k)];
            remap[static_cast<size_t>(id)] = static_cast<int>(out.nodes.size());
            out.nodes.push_back(std::move(copy));
            stack.pop_back();
        }
    }
    out.root = remap[static_cast<size_t>(root)];
    return out;
}

/// Compiles the exactly-one sentence of a taxonomy node.
inline Circuit compile_node(const Taxonomy& tax, int node_id, const CompileOptions& opts = {}) {
    return compile(node_sentence(tax, node_id), opts);
}

namespace detail {

inline void check_weights(const Circuit& c, const std::vector<double>& p) {
    if (static_cast<int>(p.size()) != c.universe)
        throw Error("weight vector size " + std::to_string(p.size()) + " != universe " +
                    std::to_string(c.universe));
    for (double x : p)
        if (!(x >= 0.0 && x <= 1.0)) throw Error("weight outside [0,1]");
}

inline std::vector<double> forward(const Circuit& c, const std::vector<double>& p) {
    std::vector<double> val(c.nodes.size());
    for (size_t i = 0; i < c.nodes.size(); ++i) {
        const auto& n = c.nodes[i];
        switch (n.op) {
            case Circuit::Op::PosLit: val[i] = p[static_cast<size_t>(n.var)]; break;
            case Circuit::Op::NegLit: val[i] = 1.0 - p[static_cast<size_t>(n.var)]; break;
            case Circuit::Op::One: val[i] = 1.0; break;
            case Circuit::Op::Zero: val[i] = 0.0; break;
            case Circuit::Op::Sum: {
                double s = 0.0;
                for (int k : n.kids) s += val[static_cast<size_t>(k)];
                val[i] = s;
                break;
            }
            case Circuit::Op::Product: {
                double s = 1.0;
                for (int k : n.kids) s *= val[static_cast<size_t>(k)];
                val[i] = s;
                break;
            }
        }
    }
    return val;
}

}  // namespace detail

/// Weighted model count with leaf weights p_v / (1 - p_v).
inline double wmc(const Circuit& c, const std::vector<double>& p) {
    detail::check_weights(c, p);
    return detail::forward(c, p)[static_cast<size_t>(c.root)];
}

struct WmcResult {
    double value = 0.0;
    std::vector<double> grad;  // d value / d p_v
};

/// Value and full gradient in one forward plus one reverse sweep. Product
/// backprop uses prefix/suffix partial products, so zero-valued children
/// are handled without division.
inline WmcResult wmc_gradient(const Circuit& c, const std::vector<double>& p) {
    detail::check_weights(c, p);
    std::vector<double> val = detail::forward(c, p);

    std::vector<double> adj(c.nodes.size(), 0.0);
    adj[static_cast<size_t>(c.root)] = 1.0;
    std::vector<double> pre, suf;
    for (size_t i = c.nodes.size(); i-- > 0;) {
        const auto& n = c.nodes[i];
        double d = adj[i];
        if (d == 0.0) continue;
        if (n.op == Circuit::Op::Sum) {
            for (int k : n.kids) adj[static_cast<size_t>(k)] += d;
        } else if (n.op == Circuit::Op::Product) {
            size_t m = n.kids.size();
            pre.assign(m + 1, 1.0);
            suf.assign(m + 1, 1.0);
            for (size_t j = 0; j < m; ++j)
                pre[j + 1] = pre[j] * val[static_cast<size_t>(n.kids[j])];
            for (size_t j = m; j-- > 0;)
                suf[j] = suf[j + 1] * val[static_cast<size_t>(n.kids[j])];
            for (size_t j = 0; j < m; ++j)
                adj[static_cast<size_t>(n.kids[j])] += d * pre[j] * suf[j + 1];
        }
    }

    WmcResult r;
    r.value = val[static_cast<size_t>(c.root)];
    r.grad.assign(static_cast<size_t>(c.universe), 0.0);
    for (size_t i = 0; i < c.nodes.size(); ++i) {
        const auto& n = c.nodes[i];
        if (n.op == Circuit::Op::PosLit)
            r.grad[static_cast<size_t>(n.var)] += adj[i];
        else if (n.op == Circuit::Op::NegLit)
            r.grad[static_cast<size_t>(n.var)] -= adj[i];
    }
    return r;
}

/// Number of satisfying assignments: evaluate with every literal weighted 1.
inline double model_count(const Circuit& c) {
    std::vector<double> val(c.nodes.size());
    for (size_t i = 0; i < c.nodes.size(); ++i) {
        const auto& n = c.nodes[i];
        switch (n.op) {
            case Circuit::Op::PosLit:
            case Circuit::Op::NegLit:
            case Circuit::Op::One: val[i] = 1.0; break;
            case Circuit::Op::Zero: val[i] = 0.0; break;
            case Circuit::Op::Sum: {
                double s = 0.0;
                for (int k : n.kids) s += val[static_cast<size_t>(k)];
                val[i] = s;
                break;
            }
            case Circuit::Op::Product: {
                double s = 1.0;
                for (int k : n.kids) s *= val[static_cast<size_t>(k)];
                val[i] = s;
                break;
            }
        }
    }
    return val[static_cast<size_t>(c.root)];
}

/// Reference evaluator: enumerate assignments, test against the sentence
/// predicate, accumulate literal-weight products. Exponential; small
/// universes only.
inline double brute_force_wmc(const Sentence& s, const std::vector<double>& p) {
    int n = s.universe_size();
    if (n > 20) throw Error("brute_force_wmc: universe too large");
    if (static_cast<int>(p.size()) != n) throw Error("brute_force_wmc: weight size mismatch");
    double total = 0.0;
    std::vector<bool> x(static_cast<size_t>(n));
    for (uint32_t bits = 0; bits < (1u << n); ++bits) {
        double w = 1.0;
        for (int v = 0; v < n; ++v) {
            bool on = (bits >> v) & 1u;
            x[static_cast<size_t>(v)] = on;
            w *= on ? p[static_cast<size_t>(v)] : 1.0 - p[static_cast<size_t>(v)];
        }
        if (s.satisfied_by(x)) total += w;
    }
    return total;
}

// ---------------------------------------------------------------------------
// Structural validation
// ---------------------------------------------------------------------------

struct StructureReport {
    bool smooth = false;
    bool decomposable = false;
    bool deterministic = false;
    std::string determinism_method;  // "enumeration" or "certificate"
    std::vector<std::string> violations;
    size_t node_count = 0;
    size_t edge_count = 0;
    int depth = 0;

    bool ok() const { return smooth && decomposable && deterministic; }
};

/// Verifies smoothness and decomposability from per-node variable supports,
/// and determinism by exhaustive boolean evaluation when the universe is
/// small enough to enumerate (<= 16 variables). Larger circuits fall back
/// to the builder's certificate.
inline StructureReport check_structure(const Circuit& c) {
    StructureReport r;
    r.node_count = c.node_count();
    r.edge_count = c.edge_count();
    if (c.root < 0 || c.root >= static_cast<int>(c.nodes.size()))
        throw Error("check_structure: bad root");

    auto vs = detail::varsets(c);
    size_t words = (static_cast<size_t>(c.universe) + 63) / 64;

    r.smooth = true;
    r.decomposable = true;
    std::vector<int> depth(c.nodes.size(), 0);
    for (size_t i = 0; i < c.nodes.size(); ++i) {
        const auto& n = c.nodes[i];
        for (int k : n.kids) {
            if (k < 0 || k >= static_cast<int>(i))
                throw Error("check_structure: node order is not topological");
            depth[i] = std::max(depth[i], depth[static_cast<size_t>(k)] + 1);
        }
        if (n.op == Circuit::Op::Sum) {
            for (int k : n.kids) {
                if (vs[static_cast<size_t>(k)] != vs[i]) {
                    r.smooth = false;
                    r.violations.push_back("sum node " + std::to_string(i) +
                                           ": child " + std::to_string(k) +
                                           " mentions a different variable set");
                    break;
                }
            }
        } else if (n.op == Circuit::Op::Product) {
            std::vector<uint64_t> acc(words, 0);
            for (int k : n.kids) {
                bool overlap = false;
                for (size_t w = 0; w < words; ++w)
                    if (acc[w] & vs[static_cast<size_t>(k)][w]) overlap = true;
                if (overlap) {
                    r.decomposable = false;
                    r.violations.push_back("product node " + std::to_string(i) +
                                           ": children share variables");
                    break;
                }
                for (size_t w = 0; w < words; ++w) acc[w] |= vs[static_cast<size_t>(k)][w];
            }
        }
    }
    r.depth = depth[static_cast<size_t>(c.root)];

    if (c.universe <= 16) {
        r.determinism_method = "enumeration";
        r.deterministic = true;
        std::vector<bool> truth(c.nodes.size());
        for (uint32_t bits = 0; bits < (1u << c.universe) && r.deterministic; ++bits) {
            for (size_t i = 0; i < c.nodes.size(); ++i) {
                const auto& n = c.nodes[i];
                switch (n.op) {
                    case Circuit::Op::PosLit: truth[i] = (bits >> n.var) & 1u; break;
                    case Circuit::Op::NegLit: truth[i] = !((bits >> n.var) & 1u); break;
                    case Circuit::Op::One: truth[i] = true; break;
                    case Circuit::Op::Zero: truth[i] = false; break;
                    case Circuit::Op::Sum: {
                        int live = 0;
                        for (int k : n.kids) live += truth[static_cast<size_t>(k)] ? 1 : 0;
                        if (live > 1) {
                            r.deterministic = false;
                            r.violations.push_back("sum node " + std::to_string(i) +
                                                   ": " + std::to_string(live) +
                                                   " children true under one assignment");
                        }
                        truth[i] = live > 0;
                        break;
                    }
                    case Circuit::Op::Product: {
                        bool all = true;
                        for (int k : n.kids) all = all && truth[static_cast<size_t>(k)];
                        truth[i] = all;
                        break;
                    }
                }
            }
        }
    } else {
        r.determinism_method = "certificate";
        r.deterministic = c.det_by_construction;
        if (!r.deterministic)
            r.violations.push_back("no determinism certificate and universe too large to enumerate");
    }
    return r;
}

/// Line-per-node listing for `compile --dump`.
inline std::string dump(const Circuit& c) {
    std::ostringstream os;
    os << "circuit nodes=" << c.node_count() << " edges=" << c.edge_count()
       << " root=" << c.root << " universe=" << c.universe << "\n";
    for (size_t i = 0; i < c.nodes.size(); ++i) {
        const auto& n = c.nodes[i];
        os << i << ": ";
        switch (n.op) {
            case Circuit::Op::PosLit: os << "pos x" << n.var; break;
            case Circuit::Op::NegLit: os << "neg x" << n.var; break;
            case Circuit::Op::One: os << "const 1"; break;
            case Circuit::Op::Zero: os << "const 0"; break;
            case Circuit::Op::Sum: os << "sum"; break;
            case Circuit::Op::Product: os << "prod"; break;
        }
        if (!n.kids.empty()) {
            os << " (";
            for (size_t j = 0; j < n.kids.size(); ++j) os << (j ? " " : "") << n.kids[j];
            os << ")";
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace taxreg
