#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "taxreg/data.hpp"
#include "taxreg/format.hpp"
#include "taxreg/gcnreg.hpp"
#include "taxreg/rng.hpp"
#include "taxreg/semloss.hpp"
#include "taxreg/taxonomy.hpp"

namespace taxreg {

// ---------------------------------------------------------------------------
// Linear softmax classifier
// ---------------------------------------------------------------------------

struct ClassifierParams {
    Eigen::MatrixXd W;  // dim x classes
    Eigen::VectorXd b;  // classes
    uint64_t seed = 0;
};

inline ClassifierParams init_classifier(int dim, int n_classes, uint64_t seed) {
    Rng rng(seed);
    ClassifierParams p;
    p.seed = seed;
    p.W.resize(dim, n_classes);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < n_classes; ++j) p.W(i, j) = 0.01 * rng.gauss();
    p.b = Eigen::VectorXd::Zero(n_classes);
    return p;
}

inline std::vector<double> forward(const ClassifierParams& params, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != params.W.rows())
        throw Error("forward: feature dim " + std::to_string(x.size()) + " != " +
                    std::to_string(params.W.rows()));
    Eigen::Map<const Eigen::VectorXd> xv(x.data(), params.W.rows());
    Eigen::VectorXd z = params.W.transpose() * xv + params.b;
    double mx = z.maxCoeff();
    Eigen::ArrayXd e = (z.array() - mx).exp();
    e /= e.sum();
    return std::vector<double>(e.data(), e.data() + e.size());
}

/// Argmax with lowest-index tie-breaking.
inline int predict(const ClassifierParams& params, const std::vector<double>& x) {
    std::vector<double> p = forward(params, x);
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class TrainMethod { Baseline, Symbolic, Gcn, L1Only };

inline std::string method_name(TrainMethod m) {
    switch (m) {
        case TrainMethod::Baseline: return "baseline";
        case TrainMethod::Symbolic: return "symbolic";
        case TrainMethod::Gcn: return "gcn";
        case TrainMethod::L1Only: return "l1only";
    }
    return "?";
}

inline TrainMethod method_from_name(const std::string& s) {
    if (s == "baseline") return TrainMethod::Baseline;
    if (s == "symbolic") return TrainMethod::Symbolic;
    if (s == "gcn") return TrainMethod::Gcn;
    if (s == "l1only") return TrainMethod::L1Only;
    throw Error("unknown method `" + s + "`");
}

struct TrainConfig {
    TrainMethod method = TrainMethod::Baseline;
    double w = 0.1;
    int epochs = 10;
    int batch_size = 32;
    double learning_rate = 0.1;
    double epsilon = 1e-12;
    bool semi_sum_levels = false;
    int gcn_layers = 1;
    int gcn_hidden = 16;
    double gcn_init_scale = 0.1;
};

/// Derived RNG streams. Classifier init, GCN init, and batch shuffling each
/// get an independent stream so method choice never perturbs the others.
inline uint64_t shuffle_stream(uint64_t seed) { return seed ^ 0x165667b19e3779f9ULL; }
inline uint64_t gcn_stream(uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }
inline uint64_t embedding_stream(uint64_t seed) { return seed ^ 0xc2b2ae3d27d4eb4fULL; }

/// Everything a method can update.
struct TrainState {
    ClassifierParams clf;
    GcnParams gcn;        // Gcn method only
    Eigen::MatrixXd emb;  // Gcn taxonomy embedding rows
};

/// One batch's loss decomposition and exact parameter gradients. Pure in
/// (config, batch, state), which is what the finite-difference suite leans
/// on: nudge a parameter, call again, compare.
struct BatchTerms {
    double loss = 0.0;
    double l0 = 0.0;    // mean cross-entropy over labeled examples
    double lsem = 0.0;  // mean semantic loss over its contributors
    double lreg = 0.0;  // GCN regularizer (batch sum, per its definition)
    double acc = 0.0;   // batch accuracy over labeled examples
    std::optional<double> wmc_sat;  // mean constraint satisfaction
    Eigen::MatrixXd dW;
    Eigen::VectorXd db;
    std::vector<Eigen::MatrixXd> dGw;
    Eigen::MatrixXd dEmb;
};

/// `sem` must be non-null for Symbolic/L1Only and carries the mode:
/// Supervised evaluates constraint losses on labeled examples, SemiSupervised
/// on unlabeled ones, L1Only on every example.
inline BatchTerms evaluate_batch(const TrainConfig& cfg, const Taxonomy& tax,
                                 const SemanticLossContext* sem,
                                 const std::vector<SupervisionRecord>& batch,
                                 const TrainState& st) {
    if (batch.empty()) throw Error("evaluate_batch: empty batch");
    int n = tax.num_classes();
    int d = static_cast<int>(st.clf.W.rows());
    size_t B = batch.size();

    BatchTerms t;
    t.dW = Eigen::MatrixXd::Zero(d, n);
    t.db = Eigen::VectorXd::Zero(n);

    std::vector<std::vector<double>> P(B);
    size_t labeled = 0, correct = 0;
    for (size_t i = 0; i < B; ++i) {
        P[i] = forward(st.clf, batch[i].features);
        if (batch[i].leaf_label) {
            ++labeled;
            int arg = static_cast<int>(std::max_element(P[i].begin(), P[i].end()) - P[i].begin());
            if (arg == *batch[i].leaf_label) ++correct;
        }
    }
    t.acc = labeled ? static_cast<double>(correct) / static_cast<double>(labeled) : 0.0;

    std::vector<std::vector<double>> g(B, std::vector<double>(static_cast<size_t>(n), 0.0));

    // Cross-entropy over labeled examples (mean).
    if (labeled) {
        double scale = 1.0 / static_cast<double>(labeled);
        for (size_t i = 0; i < B; ++i) {
            if (!batch[i].leaf_label) continue;
            int y = *batch[i].leaf_label;
            t.l0 += scale * cross_entropy(P[i], y, cfg.epsilon);
            double py = P[i][static_cast<size_t>(y)];
            if (py >= cfg.epsilon) g[i][static_cast<size_t>(y)] -= scale / py;
        }
    }
    t.loss = t.l0;

    // Semantic term: mean over its contributing examples, weighted by w.
    if (cfg.method == TrainMethod::Symbolic || cfg.method == TrainMethod::L1Only) {
        if (!sem) throw Error("evaluate_batch: semantic method without a context");
        auto contributes = [&](const SupervisionRecord& r) {
            switch (sem->mode()) {
                case SemanticMode::Supervised: return r.leaf_label.has_value();
                case SemanticMode::SemiSupervised: return !r.leaf_label.has_value();
                case SemanticMode::L1Only: return true;
            }
            return false;
        };
        size_t contributors = 0;
        for (const auto& r : batch) contributors += contributes(r) ? 1 : 0;

        if (contributors) {
            double inv = 1.0 / static_cast<double>(contributors);
            double sem_sum = 0.0, sat_sum = 0.0;
            for (size_t i = 0; i < B; ++i) {
                if (!contributes(batch[i])) continue;
                SemLossResult r;
                SemTarget target;
                switch (sem->mode()) {
                    case SemanticMode::Supervised:
                        target.leaf_class = *batch[i].leaf_label;
                        r = semantic_loss_supervised(*sem, P[i], *target.leaf_class);
                        break;
                    case SemanticMode::SemiSupervised:
                        target.known_node = batch[i].known_node;
                        r = semantic_loss_semi(*sem, P[i], target.known_node);
                        break;
                    case SemanticMode::L1Only:
                        r = semantic_loss_l1(*sem, P[i]);
                        break;
                }
                sem_sum += r.loss;
                if (!r.sat.empty())
                    sat_sum += std::accumulate(r.sat.begin(), r.sat.end(), 0.0) /
                               static_cast<double>(r.sat.size());
                if (cfg.w != 0.0) {
                    std::vector<double> sg = semantic_loss_grad(*sem, P[i], target);
                    for (size_t c = 0; c < sg.size(); ++c) g[i][c] += cfg.w * inv * sg[c];
                }
            }
            t.lsem = sem_sum * inv;
            t.wmc_sat = sat_sum * inv;
        }
        t.loss = combine_loss(t.l0, t.lsem, cfg.w);
    }

    // GCN term.
    if (cfg.method == TrainMethod::Gcn) {
        BackboneGraph bg = build_backbone(tax, batch);
        Eigen::MatrixXd X = assemble_features(bg, st.emb, batch);
        Eigen::MatrixXd Pm(static_cast<int>(B), n);
        for (size_t i = 0; i < B; ++i)
            for (int c = 0; c < n; ++c) Pm(static_cast<int>(i), c) = P[i][static_cast<size_t>(c)];
        RegGradients rg = reg_gradients(bg, X, st.gcn, Pm);
        t.lreg = rg.lreg;
        t.loss = combined_loss(t.l0, t.lreg, cfg.w);
        if (cfg.w != 0.0) {
            for (size_t i = 0; i < B; ++i)
                for (int c = 0; c < n; ++c)
                    g[i][static_cast<size_t>(c)] += cfg.w * rg.dP(static_cast<int>(i), c);
        }
        t.dGw.clear();
        for (const auto& dw : rg.dW) t.dGw.push_back(cfg.w * dw);
        t.dEmb = cfg.w * rg.dX_tax;
    }

    // Chain through each example's softmax into the classifier parameters.
    for (size_t i = 0; i < B; ++i) {
        const std::vector<double>& p = P[i];
        double dot = 0.0;
        for (size_t c = 0; c < p.size(); ++c) dot += p[c] * g[i][c];
        Eigen::VectorXd dz(n);
        for (int c = 0; c < n; ++c)
            dz(c) = p[static_cast<size_t>(c)] * (g[i][static_cast<size_t>(c)] - dot);
        Eigen::Map<const Eigen::VectorXd> xv(batch[i].features.data(), d);
        t.dW.noalias() += xv * dz.transpose();
        t.db += dz;
    }
    return t;
}

struct HistoryRow {
    int iter = 0;  // 1-based
    double loss = 0.0;
    double acc = 0.0;
    std::optional<double> wmc_sat;
};

struct TrainResult {
    TrainState state;
    std::vector<HistoryRow> history;
    SemanticMode sem_mode = SemanticMode::Supervised;  // mode Symbolic resolved to
};

/// Mini-batch gradient descent with a seeded shuffle per epoch. Three
/// independent RNG streams (classifier init, GCN init, shuffling) keep the
/// classifier's trajectory identical across methods when w = 0.
inline TrainResult train_one(const TrainConfig& cfg, const std::vector<SupervisionRecord>& records,
                             const Taxonomy& tax, uint64_t seed) {
    if (records.empty()) throw Error("train: empty dataset");
    if (cfg.epochs <= 0 || cfg.batch_size <= 0 || cfg.learning_rate <= 0.0)
        throw Error("train: epochs, batch size, and learning rate must be positive");
    int d = static_cast<int>(records.front().features.size());
    for (const auto& r : records)
        if (static_cast<int>(r.features.size()) != d)
            throw Error("train: ragged feature dimensions at record `" + r.id + "`");
    size_t labeled = 0, unlabeled = 0;
    for (const auto& r : records) (r.leaf_label ? labeled : unlabeled)++;
    if (labeled == 0) throw Error("train: no leaf-labeled examples");

    std::optional<SemanticLossContext> sem;
    SemanticMode mode = SemanticMode::Supervised;
    if (cfg.method == TrainMethod::Symbolic) {
        mode = unlabeled ? SemanticMode::SemiSupervised : SemanticMode::Supervised;
        sem.emplace(tax, mode, cfg.epsilon, cfg.semi_sum_levels);
    } else if (cfg.method == TrainMethod::L1Only) {
        mode = SemanticMode::L1Only;
        sem.emplace(tax, mode, cfg.epsilon);
    }

    TrainResult res;
    res.sem_mode = mode;
    res.state.clf = init_classifier(d, tax.num_classes(), seed);
    if (cfg.method == TrainMethod::Gcn) {
        res.state.gcn = init_gcn_params(d, tax.num_classes(), cfg.gcn_layers, gcn_stream(seed),
                                        cfg.gcn_hidden, cfg.gcn_init_scale);
        res.state.emb = init_tax_embedding(tax, d, embedding_stream(seed));
    }

    Rng shuffle_rng(shuffle_stream(seed));
    std::vector<size_t> order(records.size());
    std::iota(order.begin(), order.end(), size_t{0});

    int iter = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<SupervisionRecord> batch;
            batch.reserve(stop - start);
            for (size_t k = start; k < stop; ++k) batch.push_back(records[order[k]]);

            BatchTerms t = evaluate_batch(cfg, tax, sem ? &*sem : nullptr, batch, res.state);
            res.state.clf.W -= cfg.learning_rate * t.dW;
            res.state.clf.b -= cfg.learning_rate * t.db;
            for (size_t l = 0; l < t.dGw.size(); ++l)
                res.state.gcn.W[l] -= cfg.learning_rate * t.dGw[l];
            if (t.dEmb.size()) res.state.emb -= cfg.learning_rate * t.dEmb;

            res.history.push_back({++iter, t.loss, t.acc, t.wmc_sat});
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct ClassMetrics {
    std::string name;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    int support = 0;
};

struct MetricsReport {
    double accuracy = 0.0;
    double macro_avg_f1 = 0.0;     // unweighted mean over ALL classes
    double weighted_avg_f1 = 0.0;  // support-weighted mean
    std::vector<ClassMetrics> per_class;
};

/// Argmax predictions against leaf truth. Classes with zero support and no
/// predictions score F1 = 0 and still count toward the macro average.
inline MetricsReport evaluate(const ClassifierParams& params,
                              const std::vector<SupervisionRecord>& test, const Taxonomy& tax) {
    if (test.empty()) throw Error("evaluate: empty test set");
    int n = tax.num_classes();
    std::vector<int> tp(static_cast<size_t>(n), 0), fp = tp, fn = tp, support = tp;
    size_t correct = 0;
    for (const auto& r : test) {
        if (!r.leaf_label) throw Error("evaluate: record `" + r.id + "` is not leaf-labeled");
        int y = *r.leaf_label;
        int yhat = predict(params, r.features);
        ++support[static_cast<size_t>(y)];
        if (yhat == y) {
            ++tp[static_cast<size_t>(y)];
            ++correct;
        } else {
            ++fp[static_cast<size_t>(yhat)];
            ++fn[static_cast<size_t>(y)];
        }
    }

    MetricsReport rep;
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
    double weighted = 0.0, macro = 0.0;
    for (int c = 0; c < n; ++c) {
        size_t ci = static_cast<size_t>(c);
        ClassMetrics m;
        m.name = tax.node(tax.leaf_id(c)).name;
        m.support = support[ci];
        int pred = tp[ci] + fp[ci], truth = tp[ci] + fn[ci];
        m.precision = pred ? static_cast<double>(tp[ci]) / pred : 0.0;
        m.recall = truth ? static_cast<double>(tp[ci]) / truth : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        macro += m.f1;
        weighted += m.f1 * m.support;
        rep.per_class.push_back(std::move(m));
    }
    rep.macro_avg_f1 = macro / n;
    rep.weighted_avg_f1 = weighted / static_cast<double>(test.size());
    return rep;
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

inline std::string history_csv(const std::vector<HistoryRow>& rows) {
    std::string out = "iter,loss,acc,wmc_sat\n";
    for (const auto& r : rows) {
        out += std::to_string(r.iter);
        out += ',';
        out += format_double(r.loss);
        out += ',';
        out += format_double(r.acc);
        out += ',';
        if (r.wmc_sat) out += format_double(*r.wmc_sat);
        out += '\n';
    }
    return out;
}

inline nlohmann::ordered_json metrics_to_json(const MetricsReport& m) {
    nlohmann::ordered_json j;
    j["accuracy"] = m.accuracy;
    j["macro_avg_f1"] = m.macro_avg_f1;
    j["weighted_avg_f1"] = m.weighted_avg_f1;
    j["per_class"] = nlohmann::ordered_json::array();
    for (const auto& c : m.per_class) {
        nlohmann::ordered_json e;
        e["class"] = c.name;
        e["precision"] = c.precision;
        e["recall"] = c.recall;
        e["f1"] = c.f1;
        e["support"] = c.support;
        j["per_class"].push_back(std::move(e));
    }
    return j;
}

inline constexpr int kSchemaVersion = 1;

inline std::string save_model(const ClassifierParams& params, const Taxonomy& tax) {
    nlohmann::ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["dim"] = params.W.rows();
    nlohmann::ordered_json classes = nlohmann::ordered_json::array();
    for (int c = 0; c < tax.num_classes(); ++c) classes.push_back(tax.node(tax.leaf_id(c)).name);
    j["classes"] = std::move(classes);
    j["taxonomy"] = tax.serialize();
    j["taxonomy_hash"] = tax.hash();
    nlohmann::ordered_json w = nlohmann::ordered_json::array();
    for (int i = 0; i < params.W.rows(); ++i) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (int c = 0; c < params.W.cols(); ++c) row.push_back(params.W(i, c));
        w.push_back(std::move(row));
    }
    j["weights"] = std::move(w);
    nlohmann::ordered_json b = nlohmann::ordered_json::array();
    for (int c = 0; c < params.b.size(); ++c) b.push_back(params.b(c));
    j["bias"] = std::move(b);
    j["seed"] = params.seed;
    return j.dump(2) + "\n";
}

struct LoadedModel {
    ClassifierParams params;
    Taxonomy tax;
};

inline LoadedModel load_model(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("model artifact: ") + e.what());
    }
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != kSchemaVersion)
        throw Error("model artifact: unsupported schema version");
    LoadedModel m{ClassifierParams{}, Taxonomy::parse(j.at("taxonomy").get<std::string>())};
    if (m.tax.hash() != j.at("taxonomy_hash").get<std::string>())
        throw Error("model artifact: taxonomy hash mismatch");
    auto classes = j.at("classes");
    if (static_cast<int>(classes.size()) != m.tax.num_classes())
        throw Error("model artifact: class count mismatch");
    for (int c = 0; c < m.tax.num_classes(); ++c)
        if (classes[static_cast<size_t>(c)].get<std::string>() != m.tax.node(m.tax.leaf_id(c)).name)
            throw Error("model artifact: class order mismatch");

    int d = j.at("dim").get<int>();
    int n = m.tax.num_classes();
    auto w = j.at("weights");
    if (static_cast<int>(w.size()) != d) throw Error("model artifact: weight row count mismatch");
    m.params.W.resize(d, n);
    for (int i = 0; i < d; ++i) {
        if (static_cast<int>(w[static_cast<size_t>(i)].size()) != n)
            throw Error("model artifact: weight column count mismatch");
        for (int c = 0; c < n; ++c)
            m.params.W(i, c) = w[static_cast<size_t>(i)][static_cast<size_t>(c)].get<double>();
    }
    auto b = j.at("bias");
    if (static_cast<int>(b.size()) != n) throw Error("model artifact: bias size mismatch");
    m.params.b.resize(n);
    for (int c = 0; c < n; ++c) m.params.b(c) = b[static_cast<size_t>(c)].get<double>();
    m.params.seed = j.value("seed", uint64_t{0});
    return m;
}

}  // namespace taxreg
