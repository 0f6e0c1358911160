#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <vector>

#include "taxreg/data.hpp"
#include "taxreg/rng.hpp"
#include "taxreg/taxonomy.hpp"

namespace taxreg {

// ---------------------------------------------------------------------------
// Per-batch backbone graph: taxonomy tree nodes first (level order, root
// first), then one row per batch document, each attached to its deepest
// known node.
// ---------------------------------------------------------------------------

struct BackboneGraph {
    std::vector<int> tax_row_ids;  // taxonomy node id of each leading row
    std::map<int, int> row_of;     // node id -> row
    int n_tax = 0;
    int n_doc = 0;                 // doc rows are [n_tax, n_tax + n_doc)
    Eigen::MatrixXd A;             // symmetric 0/1, zero diagonal
    Eigen::MatrixXd A_tilde;       // A + I
    Eigen::MatrixXd A_hat;         // D^-1/2 (A+I) D^-1/2

    int rows() const { return n_tax + n_doc; }
    int doc_row(int i) const { return n_tax + i; }
};

/// Symmetric degree normalization. Input must already carry self-loops
/// (positive diagonal), so no row can have zero degree.
inline Eigen::MatrixXd normalize(const Eigen::MatrixXd& a_tilde) {
    if (a_tilde.rows() != a_tilde.cols()) throw Error("normalize: matrix is not square");
    int n = static_cast<int>(a_tilde.rows());
    Eigen::VectorXd deg(n);
    for (int i = 0; i < n; ++i) {
        if (a_tilde(i, i) <= 0.0) throw Error("normalize: diagonal must be positive (self-loops)");
        double d = 0.0;
        for (int j = 0; j < n; ++j) {
            double v = a_tilde(i, j);
            if (v < 0.0) throw Error("normalize: negative adjacency entry");
            if (v != a_tilde(j, i)) throw Error("normalize: adjacency is not symmetric");
            d += v;
        }
        deg(i) = d;
    }
    Eigen::VectorXd inv_sqrt = deg.array().rsqrt();
    return inv_sqrt.asDiagonal() * a_tilde * inv_sqrt.asDiagonal();
}

inline BackboneGraph build_backbone(const Taxonomy& tax, const std::vector<SupervisionRecord>& batch) {
    if (batch.empty()) throw Error("build_backbone: empty batch");
    BackboneGraph g;
    for (int level = 0; level <= tax.depth(); ++level)
        for (int id : tax.level_nodes(level)) {
            g.row_of[id] = static_cast<int>(g.tax_row_ids.size());
            g.tax_row_ids.push_back(id);
        }
    g.n_tax = static_cast<int>(g.tax_row_ids.size());
    g.n_doc = static_cast<int>(batch.size());

    int n = g.rows();
    g.A = Eigen::MatrixXd::Zero(n, n);
    for (int id : g.tax_row_ids) {
        int parent = tax.node(id).parent;
        if (parent < 0) continue;
        int i = g.row_of.at(parent), j = g.row_of.at(id);
        g.A(i, j) = g.A(j, i) = 1.0;
    }
    for (int b = 0; b < g.n_doc; ++b) {
        auto it = g.row_of.find(batch[static_cast<size_t>(b)].known_node);
        if (it == g.row_of.end()) throw Error("build_backbone: record `" +
                                              batch[static_cast<size_t>(b)].id +
                                              "` references an unknown node");
        int i = it->second, j = g.doc_row(b);
        g.A(i, j) = g.A(j, i) = 1.0;
    }
    g.A_tilde = g.A + Eigen::MatrixXd::Identity(n, n);
    g.A_hat = normalize(g.A_tilde);
    return g;
}

// ---------------------------------------------------------------------------
// Graph convolution: H = row-softmax(ReLU(... ReLU(A_hat X W0) ...)).
// Default is a single convolution; extra layers apply ReLU between.
// ---------------------------------------------------------------------------

struct GcnParams {
    std::vector<Eigen::MatrixXd> W;  // W[l]: cols of layer l-1 -> cols of layer l
};

/// Seeded Gaussian init; last layer maps to the class count.
inline GcnParams init_gcn_params(int in_dim, int n_classes, int layers, uint64_t seed,
                                 int hidden = 0, double scale = 0.1) {
    if (layers < 1 || layers > 2) throw Error("gcn: 1 or 2 layers supported");
    if (layers == 2 && hidden <= 0) throw Error("gcn: 2-layer net needs a hidden width");
    Rng rng(seed);
    GcnParams p;
    auto mat = [&](int r, int c) {
        Eigen::MatrixXd m(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) m(i, j) = scale * rng.gauss();
        return m;
    };
    if (layers == 1) {
        p.W.push_back(mat(in_dim, n_classes));
    } else {
        p.W.push_back(mat(in_dim, hidden));
        p.W.push_back(mat(hidden, n_classes));
    }
    return p;
}

/// Trainable feature rows for taxonomy nodes, in backbone row order:
/// one-hot by row index when the node count fits the feature dim,
/// otherwise a seeded Gaussian projection of that basis.
inline Eigen::MatrixXd init_tax_embedding(const Taxonomy& tax, int dim, uint64_t seed) {
    int n_tax = static_cast<int>(tax.nodes().size());
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n_tax, dim);
    if (n_tax <= dim) {
        for (int i = 0; i < n_tax; ++i) e(i, i) = 1.0;
    } else {
        Rng rng(seed);
        double s = 1.0 / std::sqrt(static_cast<double>(dim));
        for (int i = 0; i < n_tax; ++i)
            for (int j = 0; j < dim; ++j) e(i, j) = s * rng.gauss();
    }
    return e;
}

/// Stacks the taxonomy embedding over the batch documents' features.
inline Eigen::MatrixXd assemble_features(const BackboneGraph& g, const Eigen::MatrixXd& tax_emb,
                                         const std::vector<SupervisionRecord>& batch) {
    if (tax_emb.rows() != g.n_tax) throw Error("assemble_features: embedding row count mismatch");
    if (static_cast<int>(batch.size()) != g.n_doc)
        throw Error("assemble_features: batch size mismatch");
    Eigen::MatrixXd x(g.rows(), tax_emb.cols());
    x.topRows(g.n_tax) = tax_emb;
    for (int b = 0; b < g.n_doc; ++b) {
        const auto& f = batch[static_cast<size_t>(b)].features;
        if (static_cast<int>(f.size()) != tax_emb.cols())
            throw Error("assemble_features: feature dim mismatch");
        for (int j = 0; j < tax_emb.cols(); ++j) x(g.doc_row(b), j) = f[static_cast<size_t>(j)];
    }
    return x;
}

struct GcnForward {
    std::vector<Eigen::MatrixXd> pre;   // pre-activation per layer (A_hat H W)
    std::vector<Eigen::MatrixXd> post;  // ReLU(pre) per layer
    Eigen::MatrixXd H;                  // row-softmax of the last post

    Eigen::MatrixXd doc_rows(const BackboneGraph& g) const {
        return H.bottomRows(g.n_doc);
    }
};

inline GcnForward gcn_forward(const BackboneGraph& g, const Eigen::MatrixXd& X,
                              const GcnParams& params) {
    if (X.rows() != g.rows()) throw Error("gcn_forward: feature row count mismatch");
    GcnForward f;
    Eigen::MatrixXd h = X;
    for (const auto& w : params.W) {
        if (h.cols() != w.rows()) throw Error("gcn_forward: weight shape mismatch");
        f.pre.push_back(g.A_hat * h * w);
        f.post.push_back(f.pre.back().cwiseMax(0.0));
        h = f.post.back();
    }
    f.H = h;
    for (int i = 0; i < f.H.rows(); ++i) {
        double mx = f.H.row(i).maxCoeff();
        Eigen::ArrayXd e = (f.H.row(i).array() - mx).exp();
        f.H.row(i) = (e / e.sum()).matrix();
    }
    return f;
}

/// Squared Frobenius distance between classifier and GCN distributions
/// over the batch documents.
inline double l_reg(const Eigen::MatrixXd& P, const Eigen::MatrixXd& H_docs) {
    if (P.rows() != H_docs.rows() || P.cols() != H_docs.cols())
        throw Error("l_reg: shape mismatch");
    return (P - H_docs).squaredNorm();
}

inline double combined_loss(double l0, double lreg, double w) {
    if (w < 0.0) throw Error("regularizer weight must be non-negative");
    return l0 + w * lreg;
}

struct RegGradients {
    std::vector<Eigen::MatrixXd> dW;
    Eigen::MatrixXd dP;      // 2 (P - H_docs)
    Eigen::MatrixXd dX_tax;  // gradient into the taxonomy embedding rows
    Eigen::MatrixXd H_docs;  // forward result, saved for the caller
    double lreg = 0.0;
};

/// Exact gradients of l_reg through the softmax rows, the ReLU stack
/// (subgradient 0 at 0), and each A_hat H W product.
inline RegGradients reg_gradients(const BackboneGraph& g, const Eigen::MatrixXd& X,
                                  const GcnParams& params, const Eigen::MatrixXd& P) {
    GcnForward f = gcn_forward(g, X, params);
    Eigen::MatrixXd H_docs = f.doc_rows(g);
    if (P.rows() != H_docs.rows() || P.cols() != H_docs.cols())
        throw Error("reg_gradients: P shape mismatch");

    RegGradients out;
    out.H_docs = H_docs;
    out.lreg = (P - H_docs).squaredNorm();
    out.dP = 2.0 * (P - H_docs);

    // dL/dH, zero on taxonomy rows, then back through the row softmax.
    Eigen::MatrixXd dH = Eigen::MatrixXd::Zero(f.H.rows(), f.H.cols());
    dH.bottomRows(g.n_doc) = 2.0 * (H_docs - P);
    Eigen::MatrixXd d_post = Eigen::MatrixXd::Zero(f.H.rows(), f.H.cols());
    for (int i = 0; i < f.H.rows(); ++i) {
        double dot = f.H.row(i).dot(dH.row(i));
        d_post.row(i) = f.H.row(i).array() * (dH.row(i).array() - dot);
    }

    out.dW.resize(params.W.size());
    for (size_t l = params.W.size(); l-- > 0;) {
        Eigen::MatrixXd d_pre =
            d_post.cwiseProduct((f.pre[l].array() > 0.0).cast<double>().matrix());
        const Eigen::MatrixXd& input = l == 0 ? X : f.post[l - 1];
        out.dW[l] = (g.A_hat * input).transpose() * d_pre;
        d_post = g.A_hat * d_pre * params.W[l].transpose();  // A_hat is symmetric
    }
    out.dX_tax = d_post.topRows(g.n_tax);
    return out;
}

}  // namespace taxreg
