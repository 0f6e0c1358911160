#pragma once

#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "taxreg/format.hpp"
#include "taxreg/rng.hpp"
#include "taxreg/taxonomy.hpp"

namespace taxreg {

struct SupervisionRecord {
    std::string id;
    std::vector<double> features;
    std::optional<int> leaf_label;  // class index when fully labeled
    int known_node = -1;            // deepest known taxonomy node; root = nothing known

    bool operator==(const SupervisionRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Dataset file: `dim=<d>` header, then `id<TAB>label-or-node-name<TAB>f1,...`
// per line. Masked records carry an internal-node name in the label field.
// ---------------------------------------------------------------------------

inline std::vector<SupervisionRecord> load_dataset(const std::string& text, const Taxonomy& tax) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) -> Error {
        return Error("dataset line " + std::to_string(lineno) + ": " + msg);
    };

    if (!std::getline(in, line)) throw Error("dataset: empty file");
    ++lineno;
    if (line.rfind("dim=", 0) != 0) throw fail("expected `dim=<d>` header");
    char* end = nullptr;
    long dim = std::strtol(line.c_str() + 4, &end, 10);
    if (*end != '\0' || dim <= 0) throw fail("bad dimension `" + line.substr(4) + "`");

    std::vector<SupervisionRecord> out;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        size_t t1 = line.find('\t');
        size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos) throw fail("expected id<TAB>label<TAB>features");

        SupervisionRecord r;
        r.id = line.substr(0, t1);
        std::string label = line.substr(t1 + 1, t2 - t1 - 1);
        int node = tax.find(label);
        if (node < 0) throw fail("unknown label `" + label + "`");
        r.known_node = node;
        if (tax.node(node).is_leaf()) r.leaf_label = tax.class_index(node);

        const char* p = line.c_str() + t2 + 1;
        while (true) {
            char* stop = nullptr;
            double v = std::strtod(p, &stop);
            if (stop == p) throw fail("bad feature value");
            r.features.push_back(v);
            p = stop;
            if (*p == ',') {
                ++p;
            } else if (*p == '\0') {
                break;
            } else {
                throw fail("bad feature separator");
            }
        }
        if (static_cast<long>(r.features.size()) != dim)
            throw fail("expected " + std::to_string(dim) + " features, got " +
                       std::to_string(r.features.size()));
        out.push_back(std::move(r));
    }
    return out;
}

inline std::string serialize_dataset(const std::vector<SupervisionRecord>& records,
                                     const Taxonomy& tax) {
    std::ostringstream os;
    size_t dim = records.empty() ? 0 : records.front().features.size();
    os << "dim=" << dim << "\n";
    for (const auto& r : records) {
        if (r.features.size() != dim) throw Error("serialize_dataset: ragged feature dimensions");
        int node = r.leaf_label ? tax.leaf_id(*r.leaf_label) : r.known_node;
        os << r.id << '\t' << tax.node(node).name << '\t';
        for (size_t i = 0; i < r.features.size(); ++i)
            os << (i ? "," : "") << format_double(r.features[i]);
        os << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Masking: per-level removal rates, nested by construction.
// ---------------------------------------------------------------------------

struct MaskingPolicy {
    std::vector<double> rates;  // one per level 1..L, non-decreasing
    uint64_t seed = 0;
};

/// Hides label knowledge below a per-record depth. One seeded permutation
/// orders the records; the first round(rate_j * N) positions lose level j
/// (round-half-up). Because rates never decrease, the masked sets nest:
/// losing a level always means losing everything deeper, so each record is
/// left knowing exactly the ancestors above its shallowest masked level.
inline std::vector<SupervisionRecord> apply_masking(const std::vector<SupervisionRecord>& records,
                                                    const Taxonomy& tax,
                                                    const MaskingPolicy& policy) {
    int L = tax.depth();
    if (static_cast<int>(policy.rates.size()) != L)
        throw Error("masking rates: expected " + std::to_string(L) + " levels");
    for (size_t j = 0; j < policy.rates.size(); ++j) {
        if (policy.rates[j] < 0.0 || policy.rates[j] > 1.0)
            throw Error("masking rate outside [0,1]");
        if (j > 0 && policy.rates[j] < policy.rates[j - 1])
            throw Error("masking rates must be non-decreasing with level");
    }
    for (const auto& r : records)
        if (!r.leaf_label) throw Error("apply_masking: record `" + r.id + "` is not leaf-labeled");

    size_t N = records.size();
    std::vector<size_t> K(policy.rates.size());
    for (size_t j = 0; j < K.size(); ++j)
        K[j] = static_cast<size_t>(std::floor(policy.rates[j] * static_cast<double>(N) + 0.5));

    std::vector<size_t> perm(N);
    for (size_t i = 0; i < N; ++i) perm[i] = i;
    Rng rng(policy.seed);
    rng.shuffle(perm);

    std::vector<SupervisionRecord> out = records;
    for (size_t t = 0; t < N; ++t) {
        int shallowest_masked = 0;  // 1-based level; 0 = none
        for (size_t j = 0; j < K.size(); ++j) {
            if (t < K[j]) {
                shallowest_masked = static_cast<int>(j) + 1;
                break;
            }
        }
        if (shallowest_masked == 0) continue;  // keeps the leaf
        SupervisionRecord& r = out[perm[t]];
        r.known_node = tax.ancestor_at_level(*r.leaf_label, shallowest_masked - 1);
        r.leaf_label.reset();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic long-tailed hierarchical data.
// ---------------------------------------------------------------------------

struct PowerLaw {
    int head = 400;       // count of the largest class
    double alpha = 1.0;   // decay exponent over class rank
    int min_count = 2;
};

struct SynthSpec {
    int dim = 2;
    std::vector<int> counts;           // explicit per-leaf counts, or
    std::optional<PowerLaw> power_law; // rank-based counts
    double spread = 1.0;               // within-leaf feature noise
    std::vector<double> level_scales;  // mean separation per level 1..L
    uint64_t seed = 0;
};

inline std::vector<int> leaf_counts(const SynthSpec& spec, int n_classes) {
    if (!spec.counts.empty()) {
        if (static_cast<int>(spec.counts.size()) != n_classes)
            throw Error("synth counts: expected one count per leaf");
        for (int c : spec.counts)
            if (c <= 0) throw Error("synth counts must be positive");
        return spec.counts;
    }
    if (!spec.power_law) throw Error("synth spec: need counts or power_law");
    const PowerLaw& pl = *spec.power_law;
    if (pl.head <= 0 || pl.min_count <= 0 || pl.alpha < 0.0) throw Error("bad power_law spec");
    std::vector<int> out(static_cast<size_t>(n_classes));
    for (int i = 0; i < n_classes; ++i) {
        double c = pl.head * std::pow(static_cast<double>(i + 1), -pl.alpha);
        out[static_cast<size_t>(i)] = std::max(pl.min_count, static_cast<int>(std::llround(c)));
    }
    return out;
}

/// Hierarchical Gaussian mixture: level-1 nodes get means drawn at the
/// level-1 scale, every deeper node offsets its parent's mean at its own
/// level's scale, and records scatter around their leaf's mean. Deeper
/// scales should shrink so sibling leaves stay harder to separate than
/// top-level branches.
inline std::vector<SupervisionRecord> synth_generate(const Taxonomy& tax, const SynthSpec& spec) {
    if (spec.dim < 2) throw Error("synth: feature dim must be >= 2");
    if (spec.spread < 0.0) throw Error("synth: spread must be non-negative");
    int L = tax.depth();
    if (static_cast<int>(spec.level_scales.size()) != L)
        throw Error("synth: expected " + std::to_string(L) + " level scales");
    std::vector<int> counts = leaf_counts(spec, tax.num_classes());

    Rng rng(spec.seed);
    size_t d = static_cast<size_t>(spec.dim);
    std::map<int, std::vector<double>> mean;
    mean[tax.root()] = std::vector<double>(d, 0.0);
    for (int level = 1; level <= L; ++level) {
        double scale = spec.level_scales[static_cast<size_t>(level - 1)];
        for (int id : tax.level_nodes(level)) {
            std::vector<double> m = mean.at(tax.node(id).parent);
            for (size_t k = 0; k < d; ++k) m[k] += scale * rng.gauss();
            mean.emplace(id, std::move(m));
        }
    }

    std::vector<SupervisionRecord> out;
    size_t serial = 0;
    for (int c = 0; c < tax.num_classes(); ++c) {
        int leaf = tax.leaf_id(c);
        const std::vector<double>& m = mean.at(leaf);
        for (int k = 0; k < counts[static_cast<size_t>(c)]; ++k) {
            SupervisionRecord r;
            char buf[16];
            std::snprintf(buf, sizeof buf, "r%06zu", serial++);
            r.id = buf;
            r.features.resize(d);
            for (size_t i = 0; i < d; ++i) r.features[i] = m[i] + spec.spread * rng.gauss();
            r.leaf_label = c;
            r.known_node = leaf;
            out.push_back(std::move(r));
        }
    }
    return out;
}

/// Striped per-class split: the first of every `round(1/fraction)` records
/// of a class goes to test, so every class keeps test support and the
/// long-tail shape survives in both halves. Deterministic, no RNG.
inline std::pair<std::vector<SupervisionRecord>, std::vector<SupervisionRecord>>
split_train_test(const std::vector<SupervisionRecord>& records, double test_fraction) {
    if (test_fraction < 0.0 || test_fraction >= 1.0)
        throw Error("test fraction must lie in [0,1)");
    std::pair<std::vector<SupervisionRecord>, std::vector<SupervisionRecord>> out;
    if (test_fraction == 0.0) {
        out.first = records;
        return out;
    }
    size_t stride = static_cast<size_t>(std::llround(1.0 / test_fraction));
    if (stride < 2) stride = 2;
    std::map<int, size_t> seen;
    for (const auto& r : records) {
        if (!r.leaf_label) throw Error("split_train_test: record `" + r.id + "` is not labeled");
        size_t t = seen[*r.leaf_label]++;
        (t % stride == 0 ? out.second : out.first).push_back(r);
    }
    return out;
}

}  // namespace taxreg
