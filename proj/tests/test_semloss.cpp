#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "taxreg/semloss.hpp"

using namespace taxreg;
using Catch::Matchers::WithinAbs;

namespace {

Taxonomy flat3() { return Taxonomy::parse("r\n  A\n  B\n  C\n"); }

}  // namespace

TEST_CASE("cross entropy closed forms") {
    CHECK(cross_entropy({1.0, 0.0, 0.0}, 0) == 0.0);
    CHECK_THAT(cross_entropy({0.2, 0.8}, 0), WithinAbs(-std::log(0.2), 1e-15));
    CHECK_THAT(cross_entropy({0.2, 0.8}, 0), WithinAbs(1.6094379124341003, 1e-15));
    std::vector<double> u(6, 1.0 / 6.0);
    CHECK_THAT(cross_entropy(u, 3), WithinAbs(std::log(6.0), 1e-15));
    CHECK_THAT(cross_entropy(u, 3), WithinAbs(1.791759469228055, 1e-14));
}

TEST_CASE("cross entropy validates its input") {
    REQUIRE_THROWS_AS(cross_entropy({0.5, 0.5}, 2), Error);
    REQUIRE_THROWS_AS(cross_entropy({0.5, 0.5}, -1), Error);
    REQUIRE_THROWS_AS(cross_entropy({0.5, 0.4}, 0), Error);  // does not sum to 1
    // The clip keeps a zero-probability label finite.
    CHECK_THAT(cross_entropy({1.0, 0.0}, 1, 1e-12), WithinAbs(-std::log(1e-12), 1e-9));
}

TEST_CASE("supervised loss scores each internal ancestor constraint") {
    Taxonomy t = th::demo_tax();
    SemanticLossContext ctx(t, SemanticMode::Supervised);
    std::vector<double> u(6, 1.0 / 6.0);

    int x3 = t.class_index(t.find("X3"));
    SemLossResult r = semantic_loss_supervised(ctx, u, x3);
    REQUIRE(r.sat.size() == 1);  // one internal level
    // Ancestor a2 covers classes {2,3,4}: 3 * (1/6) * (5/6)^5.
    double want = 3.0 * (1.0 / 6.0) * std::pow(5.0 / 6.0, 5);
    CHECK_THAT(r.sat[0], WithinAbs(want, 1e-15));
    CHECK_THAT(r.loss, WithinAbs(-std::log(want), 1e-12));
}

TEST_CASE("a hard assignment inside the ancestor block satisfies it exactly") {
    Taxonomy t = th::demo_tax();
    SemanticLossContext ctx(t, SemanticMode::Supervised);
    int x3 = t.class_index(t.find("X3"));

    std::vector<double> hard(6, 0.0);
    hard[static_cast<size_t>(x3)] = 1.0;
    CHECK(semantic_loss_supervised(ctx, hard, x3).loss == 0.0);

    // A sibling leaf under the same ancestor also satisfies the constraint,
    // even though cross entropy would punish it maximally.
    std::vector<double> sibling(6, 0.0);
    sibling[static_cast<size_t>(t.class_index(t.find("X4")))] = 1.0;
    CHECK(semantic_loss_supervised(ctx, sibling, x3).loss == 0.0);

    // A leaf outside the block violates it; the clip bounds the loss.
    std::vector<double> outside(6, 0.0);
    outside[static_cast<size_t>(t.class_index(t.find("X1")))] = 1.0;
    SemLossResult r = semantic_loss_supervised(ctx, outside, x3);
    CHECK(r.sat[0] == 0.0);
    CHECK_THAT(r.loss, WithinAbs(-std::log(1e-12), 1e-6));
}

TEST_CASE("supervised loss sums the levels of a deeper chain") {
    Taxonomy t = th::three_level();
    SemanticLossContext ctx(t, SemanticMode::Supervised);
    Rng rng(3);
    std::vector<double> p = th::random_simplex(rng, 8);

    int leaf = t.class_index(t.find("l6"));
    SemLossResult r = semantic_loss_supervised(ctx, p, leaf);
    REQUIRE(r.sat.size() == 2);  // levels 1 and 2

    double w1 = brute_force_wmc(node_sentence(t, t.find("b2")), p);
    double w2 = brute_force_wmc(node_sentence(t, t.find("m3")), p);
    CHECK_THAT(r.sat[0], WithinAbs(w1, 1e-12));
    CHECK_THAT(r.sat[1], WithinAbs(w2, 1e-12));
    CHECK_THAT(r.loss, WithinAbs(-std::log(w1) - std::log(w2), 1e-10));

    // The deeper constraint only removes models, so it can never be easier
    // to satisfy than its parent.
    CHECK(r.sat[1] <= r.sat[0] + 1e-15);
}

TEST_CASE("deeper constraints are never easier to satisfy") {
    Rng rng(59);
    for (int rep = 0; rep < 20; ++rep) {
        Taxonomy t = th::random_taxonomy(rng, 3, 1, 3);
        SemanticLossContext ctx(t, SemanticMode::Supervised);
        std::vector<double> p = th::random_simplex(rng, static_cast<size_t>(t.num_classes()));
        for (int c = 0; c < t.num_classes(); ++c) {
            SemLossResult r = semantic_loss_supervised(ctx, p, c);
            for (size_t j = 1; j < r.sat.size(); ++j) CHECK(r.sat[j] <= r.sat[j - 1] + 1e-15);
        }
    }
}

TEST_CASE("semi-supervised loss evaluates the deepest known node only") {
    Taxonomy t = th::demo_tax();
    SemanticLossContext ctx(t, SemanticMode::SemiSupervised);
    std::vector<double> u(6, 1.0 / 6.0);

    SECTION("root knowledge reduces to the flat one-hot constraint") {
        SemLossResult r = semantic_loss_semi(ctx, u, t.root());
        REQUIRE(r.sat.size() == 1);
        // 6 * (1/6) * (5/6)^5 = (5/6)^5.
        CHECK_THAT(r.sat[0], WithinAbs(std::pow(5.0 / 6.0, 5), 1e-15));
        CHECK_THAT(r.loss, WithinAbs(-std::log(std::pow(5.0 / 6.0, 5)), 1e-12));
    }
    SECTION("an internal node scores its own block") {
        std::vector<double> hard(6, 0.0);
        hard[5] = 1.0;  // X6 under a3
        CHECK(semantic_loss_semi(ctx, hard, t.find("a3")).loss == 0.0);
        SemLossResult miss = semantic_loss_semi(ctx, hard, t.find("a2"));
        CHECK(miss.sat[0] == 0.0);
        CHECK_THAT(miss.loss, WithinAbs(-std::log(1e-12), 1e-6));
    }
    SECTION("leaf-labeled examples do not take this path") {
        REQUIRE_THROWS_AS(semantic_loss_semi(ctx, u, t.find("X2")), Error);
    }
}

TEST_CASE("sum-over-levels variant scores the whole known chain") {
    Taxonomy t = th::three_level();
    SemanticLossContext deepest(t, SemanticMode::SemiSupervised);
    SemanticLossContext chain(t, SemanticMode::SemiSupervised, 1e-12, true);
    Rng rng(7);
    std::vector<double> p = th::random_simplex(rng, 8);

    int m3 = t.find("m3"), b2 = t.find("b2");
    SemLossResult one = semantic_loss_semi(deepest, p, m3);
    SemLossResult two = semantic_loss_semi(chain, p, m3);
    REQUIRE(one.sat.size() == 1);
    REQUIRE(two.sat.size() == 2);
    CHECK_THAT(two.sat[1], WithinAbs(one.sat[0], 1e-15));
    double parent = brute_force_wmc(node_sentence(t, b2), p);
    CHECK_THAT(two.sat[0], WithinAbs(parent, 1e-12));
    CHECK(two.loss >= one.loss - 1e-12);

    // Root knowledge is a single sentence under both variants.
    CHECK(semantic_loss_semi(chain, p, t.root()).sat.size() == 1);
}

TEST_CASE("label-free variant applies the one-hot constraint to everyone") {
    Taxonomy t = th::demo_tax();
    SemanticLossContext l1(t, SemanticMode::L1Only);
    SemanticLossContext semi(t, SemanticMode::SemiSupervised);
    Rng rng(13);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> p = th::random_simplex(rng, 6);
        SemLossResult a = semantic_loss_l1(l1, p);
        SemLossResult b = semantic_loss_semi(semi, p, t.root());
        CHECK_THAT(a.loss, WithinAbs(b.loss, 1e-15));
        CHECK_THAT(a.sat[0], WithinAbs(b.sat[0], 1e-15));
    }
}

TEST_CASE("satisfaction values live in the unit interval") {
    Rng rng(97);
    Taxonomy t = th::three_level();
    SemanticLossContext ctx(t, SemanticMode::Supervised);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> p = th::random_simplex(rng, 8);
        for (int c = 0; c < 8; ++c)
            for (double s : semantic_loss_supervised(ctx, p, c).sat) {
                CHECK(s >= 0.0);
                CHECK(s <= 1.0 + 1e-12);
            }
    }
}

TEST_CASE("modes are enforced") {
    Taxonomy t = th::demo_tax();
    SemanticLossContext sup(t, SemanticMode::Supervised);
    SemanticLossContext semi(t, SemanticMode::SemiSupervised);
    std::vector<double> u(6, 1.0 / 6.0);
    REQUIRE_THROWS_AS(semantic_loss_semi(sup, u, t.find("a2")), Error);
    REQUIRE_THROWS_AS(semantic_loss_supervised(semi, u, 0), Error);
    REQUIRE_THROWS_AS(semantic_loss_l1(sup, u), Error);
    REQUIRE_THROWS_AS(semantic_loss_supervised(sup, {0.5, 0.5}, 0), Error);
}

TEST_CASE("epsilon must be positive and tiny") {
    Taxonomy t = th::demo_tax();
    REQUIRE_THROWS_AS(SemanticLossContext(t, SemanticMode::Supervised, 0.0), Error);
    REQUIRE_THROWS_AS(SemanticLossContext(t, SemanticMode::Supervised, 1e-5), Error);
    CHECK_NOTHROW(SemanticLossContext(t, SemanticMode::Supervised, 1e-6));
}

TEST_CASE("gradient of the flat constraint at half weights") {
    Taxonomy t = flat3();
    SemanticLossContext ctx(t, SemanticMode::L1Only);
    std::vector<double> p{0.5, 0.5, 0.5};
    std::vector<double> g = semantic_loss_grad(ctx, p, SemTarget{});
    // WMC = 0.375, each dWMC/dp_i = -0.25, so dL/dp_i = 0.25/0.375 = 2/3.
    for (double gi : g) CHECK_THAT(gi, WithinAbs(2.0 / 3.0, 1e-14));
}

TEST_CASE("gradients match finite differences in every mode") {
    Taxonomy t = th::three_level();
    Rng rng(71);

    SECTION("supervised") {
        SemanticLossContext ctx(t, SemanticMode::Supervised);
        std::vector<double> p = th::random_simplex(rng, 8);
        int leaf = 5;
        SemTarget target;
        target.leaf_class = leaf;
        std::vector<double> g = semantic_loss_grad(ctx, p, target);
        auto loss = [&](const std::vector<double>& q) {
            return semantic_loss_supervised(ctx, q, leaf).loss;
        };
        for (size_t i = 0; i < p.size(); ++i)
            CHECK(th::rel_err(g[i], th::central_diff(loss, p, i)) < 1e-5);
    }
    SECTION("semi-supervised, deepest node") {
        SemanticLossContext ctx(t, SemanticMode::SemiSupervised);
        std::vector<double> p = th::random_simplex(rng, 8);
        SemTarget target;
        target.known_node = t.find("m2");
        std::vector<double> g = semantic_loss_grad(ctx, p, target);
        auto loss = [&](const std::vector<double>& q) {
            return semantic_loss_semi(ctx, q, t.find("m2")).loss;
        };
        for (size_t i = 0; i < p.size(); ++i)
            CHECK(th::rel_err(g[i], th::central_diff(loss, p, i)) < 1e-5);
    }
    SECTION("semi-supervised, sum over levels") {
        SemanticLossContext ctx(t, SemanticMode::SemiSupervised, 1e-12, true);
        std::vector<double> p = th::random_simplex(rng, 8);
        SemTarget target;
        target.known_node = t.find("m4");
        std::vector<double> g = semantic_loss_grad(ctx, p, target);
        auto loss = [&](const std::vector<double>& q) {
            return semantic_loss_semi(ctx, q, t.find("m4")).loss;
        };
        for (size_t i = 0; i < p.size(); ++i)
            CHECK(th::rel_err(g[i], th::central_diff(loss, p, i)) < 1e-5);
    }
    SECTION("label-free") {
        SemanticLossContext ctx(t, SemanticMode::L1Only);
        std::vector<double> p = th::random_simplex(rng, 8);
        std::vector<double> g = semantic_loss_grad(ctx, p, SemTarget{});
        auto loss = [&](const std::vector<double>& q) { return semantic_loss_l1(ctx, q).loss; };
        for (size_t i = 0; i < p.size(); ++i)
            CHECK(th::rel_err(g[i], th::central_diff(loss, p, i)) < 1e-5);
    }
}

TEST_CASE("gradient stays finite at a violated hard assignment") {
    Taxonomy t = th::demo_tax();
    SemanticLossContext ctx(t, SemanticMode::SemiSupervised);
    std::vector<double> hard(6, 0.0);
    hard[0] = 1.0;  // X1, outside a2's block
    SemTarget target;
    target.known_node = t.find("a2");
    for (double g : semantic_loss_grad(ctx, hard, target)) CHECK(std::isfinite(g));
}

TEST_CASE("combine_loss is an affine blend") {
    CHECK_THAT(combine_loss(1.0, 0.5, 0.1), WithinAbs(1.05, 1e-15));
    CHECK(combine_loss(2.0, 123.0, 0.0) == 2.0);
    CHECK(combine_loss(0.0, 0.7, 1.0) == 0.7);
    REQUIRE_THROWS_AS(combine_loss(1.0, 1.0, -0.1), Error);
}
