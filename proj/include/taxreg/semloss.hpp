#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "taxreg/circuit.hpp"
#include "taxreg/logic.hpp"
#include "taxreg/taxonomy.hpp"

namespace taxreg {

enum class SemanticMode { Supervised, SemiSupervised, L1Only };

/// Per-level constraint satisfaction values (WMCs in [0,1]) for one example.
using SatisfactionVector = std::vector<double>;

struct SemLossResult {
    double loss = 0.0;
    SatisfactionVector sat;
};

/// Immutable per-taxonomy context: one compiled circuit per non-leaf node
/// (the root's circuit is the flat one-hot constraint). Built once, shared
/// read-only across examples and batches.
class SemanticLossContext {
public:
    SemanticLossContext(const Taxonomy& tax, SemanticMode mode, double epsilon = 1e-12,
                        bool semi_sum_levels = false)
        : tax_(&tax), mode_(mode), epsilon_(epsilon), semi_sum_levels_(semi_sum_levels) {
        if (!(epsilon > 0.0 && epsilon <= 1e-6))
            throw Error("epsilon must lie in (0, 1e-6]");
        for (const TaxNode& n : tax.nodes())
            if (!n.is_leaf()) circuits_.emplace(n.id, compile_node(tax, n.id));
    }

    const Taxonomy& tax() const { return *tax_; }
    SemanticMode mode() const { return mode_; }
    double epsilon() const { return epsilon_; }
    bool semi_sum_levels() const { return semi_sum_levels_; }

    const Circuit& circuit_for(int node_id) const {
        auto it = circuits_.find(node_id);
        if (it == circuits_.end())
            throw Error("no circuit for node " + std::to_string(node_id) + " (leaf?)");
        return it->second;
    }

private:
    const Taxonomy* tax_;
    SemanticMode mode_;
    double epsilon_;
    bool semi_sum_levels_;
    std::map<int, Circuit> circuits_;
};

namespace detail {

inline void check_probs(const SemanticLossContext& ctx, const std::vector<double>& p) {
    if (static_cast<int>(p.size()) != ctx.tax().num_classes())
        throw Error("probability vector size mismatch");
}

/// The nodes whose sentences a semi-supervised example evaluates: just the
/// deepest known node by default, or its whole chain (plus root when
/// nothing is known) under the sum-over-levels variant.
inline std::vector<int> semi_nodes(const SemanticLossContext& ctx, int known_node) {
    const Taxonomy& tax = ctx.tax();
    if (tax.node(known_node).is_leaf())
        throw Error("semi-supervised target '" + tax.node(known_node).name +
                    "' is a leaf; leaf-labeled examples take the cross-entropy path");
    if (!ctx.semi_sum_levels() || known_node == tax.root()) return {known_node};
    std::vector<int> chain;
    for (int cur = known_node; cur != -1 && tax.node(cur).level >= 1; cur = tax.node(cur).parent)
        chain.push_back(cur);
    std::reverse(chain.begin(), chain.end());
    return chain;
}

}  // namespace detail

/// Baseline loss: -log(max(p_leaf, eps)).
inline double cross_entropy(const std::vector<double>& p, int leaf, double epsilon = 1e-12) {
    if (leaf < 0 || leaf >= static_cast<int>(p.size())) throw Error("class index out of range");
    double sum = 0.0;
    for (double x : p) sum += x;
    if (std::abs(sum - 1.0) > 1e-6) throw Error("probabilities do not sum to 1");
    return -std::log(std::max(p[static_cast<size_t>(leaf)], epsilon));
}

/// Fully-labeled path: sum over non-leaf levels of -log(max(WMC of the
/// level's selected ancestor sentence, eps)). The satisfaction vector
/// carries the raw per-level WMCs.
inline SemLossResult semantic_loss_supervised(const SemanticLossContext& ctx,
                                              const std::vector<double>& p, int leaf) {
    if (ctx.mode() != SemanticMode::Supervised) throw Error("context mode is not Supervised");
    detail::check_probs(ctx, p);
    SemLossResult r;
    for (int node : ctx.tax().ancestor_chain(leaf)) {
        double v = wmc(ctx.circuit_for(node), p);
        r.sat.push_back(v);
        r.loss += -std::log(std::max(v, ctx.epsilon()));
    }
    return r;
}

/// Partially-labeled path: the deepest known node's sentence only (root
/// reduces to the flat one-hot constraint).
inline SemLossResult semantic_loss_semi(const SemanticLossContext& ctx,
                                        const std::vector<double>& p, int known_node) {
    if (ctx.mode() != SemanticMode::SemiSupervised) throw Error("context mode is not SemiSupervised");
    detail::check_probs(ctx, p);
    SemLossResult r;
    for (int node : detail::semi_nodes(ctx, known_node)) {
        double v = wmc(ctx.circuit_for(node), p);
        r.sat.push_back(v);
        r.loss += -std::log(std::max(v, ctx.epsilon()));
    }
    return r;
}

/// Ablation path: the flat one-hot constraint for every example, labeled or
/// not. Identical to the root sentence loss; label-free.
inline SemLossResult semantic_loss_l1(const SemanticLossContext& ctx, const std::vector<double>& p) {
    if (ctx.mode() != SemanticMode::L1Only) throw Error("context mode is not L1Only");
    detail::check_probs(ctx, p);
    double v = wmc(ctx.circuit_for(ctx.tax().root()), p);
    return {-std::log(std::max(v, ctx.epsilon())), {v}};
}

/// What the semantic loss knows about one example.
struct SemTarget {
    std::optional<int> leaf_class;  // Supervised
    int known_node = -1;            // SemiSupervised (internal or root)
};

/// d loss / d p_i, summed over the applicable sentences:
/// -(d WMC_j / d p_i) / max(WMC_j, eps) per level j. The clip keeps the
/// gradient finite where WMC underflows to 0.
inline std::vector<double> semantic_loss_grad(const SemanticLossContext& ctx,
                                              const std::vector<double>& p,
                                              const SemTarget& target) {
    detail::check_probs(ctx, p);
    std::vector<int> nodes;
    switch (ctx.mode()) {
        case SemanticMode::Supervised:
            if (!target.leaf_class) throw Error("supervised gradient needs a leaf label");
            nodes = ctx.tax().ancestor_chain(*target.leaf_class);
            break;
        case SemanticMode::SemiSupervised:
            nodes = detail::semi_nodes(ctx, target.known_node);
            break;
        case SemanticMode::L1Only:
            nodes = {ctx.tax().root()};
            break;
    }
    std::vector<double> g(p.size(), 0.0);
    for (int node : nodes) {
        WmcResult w = wmc_gradient(ctx.circuit_for(node), p);
        double denom = std::max(w.value, ctx.epsilon());
        for (size_t i = 0; i < g.size(); ++i) g[i] -= w.grad[i] / denom;
    }
    return g;
}

/// existing + w * semantic.
inline double combine_loss(double existing, double semantic, double w) {
    if (w < 0.0) throw Error("regularizer weight must be non-negative");
    return existing + w * semantic;
}

}  // namespace taxreg
