#pragma once

// Shared fixtures for the test suites: small hand-built taxonomies, random
// tree/formula generators for property tests, and finite-difference probes.

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "taxreg/logic.hpp"
#include "taxreg/rng.hpp"
#include "taxreg/taxonomy.hpp"

namespace th {

// Two-level tree with an uneven fanout: a1 -> {X1,X2}, a2 -> {X3,X4,X5},
// a3 -> {X6}. Used throughout as the canonical small example.
inline const char* kDemoTax =
    "root\n"
    "  a1\n"
    "    X1\n"
    "    X2\n"
    "  a2\n"
    "    X3\n"
    "    X4\n"
    "    X5\n"
    "  a3\n"
    "    X6\n";

inline taxreg::Taxonomy demo_tax() { return taxreg::Taxonomy::parse(kDemoTax); }

// Three-level tree, 2/4/8 nodes per level, uniform binary fanout.
inline taxreg::Taxonomy three_level() {
    return taxreg::Taxonomy::parse(
        "r\n"
        "  b1\n"
        "    m1\n"
        "      l1\n"
        "      l2\n"
        "    m2\n"
        "      l3\n"
        "      l4\n"
        "  b2\n"
        "    m3\n"
        "      l5\n"
        "      l6\n"
        "    m4\n"
        "      l7\n"
        "      l8\n");
}

/// Random taxonomy with exactly `levels` levels below the root, every leaf at
/// the same depth, fanout drawn from [lo, hi] per internal node.
inline taxreg::Taxonomy random_taxonomy(taxreg::Rng& rng, int levels, int lo = 1, int hi = 3) {
    std::vector<std::pair<std::string, int>> edges;
    edges.emplace_back("n0", -1);
    std::vector<int> frontier{0};
    for (int level = 1; level <= levels; ++level) {
        std::vector<int> next;
        for (int parent : frontier) {
            int fan = lo + static_cast<int>(rng.below(static_cast<uint64_t>(hi - lo + 1)));
            for (int k = 0; k < fan; ++k) {
                int id = static_cast<int>(edges.size());
                edges.emplace_back("n" + std::to_string(id), parent);
                next.push_back(id);
            }
        }
        frontier = std::move(next);
    }
    return taxreg::Taxonomy::from_edges(edges);
}

/// Random formula over variables [0, n_vars); max_depth bounds the AST.
inline taxreg::FormulaPtr random_formula(taxreg::Rng& rng, int n_vars, int max_depth) {
    using taxreg::Formula;
    if (max_depth == 0 || rng.below(4) == 0) {
        int v = static_cast<int>(rng.below(static_cast<uint64_t>(n_vars)));
        return Formula::lit(v, rng.below(2) == 0);
    }
    switch (rng.below(3)) {
        case 0: return Formula::lnot(random_formula(rng, n_vars, max_depth - 1));
        default: {
            size_t k = 2 + rng.below(2);
            std::vector<taxreg::FormulaPtr> kids;
            for (size_t i = 0; i < k; ++i) kids.push_back(random_formula(rng, n_vars, max_depth - 1));
            return rng.below(2) == 0 ? Formula::land(std::move(kids)) : Formula::lor(std::move(kids));
        }
    }
}

/// Central finite difference of a scalar function at x along coordinate i.
inline double central_diff(const std::function<double(const std::vector<double>&)>& f,
                           std::vector<double> x, size_t i, double h = 1e-6) {
    double xi = x[i];
    x[i] = xi + h;
    double up = f(x);
    x[i] = xi - h;
    double dn = f(x);
    return (up - dn) / (2.0 * h);
}

inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}

/// Random probability vector that sums to 1 with all entries positive.
inline std::vector<double> random_simplex(taxreg::Rng& rng, size_t n) {
    std::vector<double> p(n);
    double sum = 0.0;
    for (auto& v : p) {
        v = 0.05 + rng.uniform();
        sum += v;
    }
    for (auto& v : p) v /= sum;
    return p;
}

}  // namespace th
