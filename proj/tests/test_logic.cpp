#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <vector>

#include "helpers.hpp"
#include "taxreg/logic.hpp"

using namespace taxreg;

TEST_CASE("exactly_one over the full universe enumerates one-hot vectors") {
    Sentence s = Sentence::exactly_one({0, 1, 2}, 3);
    auto models = enumerate_models(s);
    REQUIRE(models.size() == 3);
    for (const auto& m : models) CHECK(std::count(m.begin(), m.end(), true) == 1);
}

TEST_CASE("exactly_one on a single variable") {
    Sentence s = Sentence::exactly_one({0}, 1);
    auto models = enumerate_models(s);
    REQUIRE(models.size() == 1);
    CHECK(models[0] == std::vector<bool>{true});
}

TEST_CASE("exactly_one pins out-of-scope variables false") {
    Sentence s = Sentence::exactly_one({2, 3, 4}, 6);
    auto models = enumerate_models(s);
    REQUIRE(models.size() == 3);
    for (const auto& m : models) {
        CHECK_FALSE(m[0]);
        CHECK_FALSE(m[1]);
        CHECK_FALSE(m[5]);
        CHECK(static_cast<int>(m[2]) + static_cast<int>(m[3]) + static_cast<int>(m[4]) == 1);
    }
}

TEST_CASE("exactly_one normalizes and validates its scope") {
    Sentence s = Sentence::exactly_one({4, 2, 3, 2}, 6);
    CHECK(s.scope() == std::vector<int>{2, 3, 4});
    CHECK(s.debug_string() == "EXACTLY_ONE scope=[2,3,4] universe_size=6");
    REQUIRE_THROWS_AS(Sentence::exactly_one({}, 4), Error);
    REQUIRE_THROWS_AS(Sentence::exactly_one({0, 4}, 4), Error);
    REQUIRE_THROWS_AS(Sentence::exactly_one({-1}, 4), Error);
}

TEST_CASE("model count equals scope size") {
    Rng rng(11);
    for (int rep = 0; rep < 40; ++rep) {
        int n = 2 + static_cast<int>(rng.below(8));
        std::vector<int> scope;
        for (int v = 0; v < n; ++v)
            if (rng.below(2) == 0) scope.push_back(v);
        if (scope.empty()) scope.push_back(0);
        Sentence s = Sentence::exactly_one(scope, n);
        CHECK(enumerate_models(s).size() == scope.size());
    }
}

TEST_CASE("nested scopes give nested model sets") {
    Sentence narrow = Sentence::exactly_one({2, 3}, 6);
    Sentence wide = Sentence::exactly_one({2, 3, 4}, 6);
    for (const auto& m : enumerate_models(narrow)) CHECK(wide.satisfied_by(m));
}

TEST_CASE("node_sentence maps internal nodes to their leaf block") {
    Taxonomy t = th::demo_tax();
    Sentence a2 = node_sentence(t, t.find("a2"));
    CHECK(a2.scope() == std::vector<int>{2, 3, 4});
    CHECK(a2.universe_size() == 6);

    Sentence root = node_sentence(t, t.root());
    CHECK(root.scope() == std::vector<int>{0, 1, 2, 3, 4, 5});

    Sentence a3 = node_sentence(t, t.find("a3"));
    CHECK(a3.scope() == std::vector<int>{5});
    CHECK(enumerate_models(a3).size() == 1);

    REQUIRE_THROWS_AS(node_sentence(t, t.find("X1")), Error);
}

TEST_CASE("sentences_for_example covers each known internal level") {
    Taxonomy deep = th::three_level();

    SECTION("fully labeled: one sentence per internal level, scopes nest") {
        int leaf = deep.class_index(deep.find("l6"));
        auto sents = sentences_for_example(deep, AncestorAssignment::from_leaf(deep, leaf));
        REQUIRE(sents.size() == 2);
        CHECK(sents[0].scope() == std::vector<int>{4, 5, 6, 7});  // b2 block
        CHECK(sents[1].scope() == std::vector<int>{4, 5});        // m3 block
        for (const auto& m : enumerate_models(sents[1])) CHECK(sents[0].satisfied_by(m));
    }
    SECTION("known to level 1 only") {
        auto sents =
            sentences_for_example(deep, AncestorAssignment::from_node(deep, deep.find("b1")));
        REQUIRE(sents.size() == 1);
        CHECK(sents[0].scope() == std::vector<int>{0, 1, 2, 3});
    }
    SECTION("nothing known: the flat one-hot constraint") {
        auto sents =
            sentences_for_example(deep, AncestorAssignment::from_node(deep, deep.root()));
        REQUIRE(sents.size() == 1);
        CHECK(sents[0].scope().size() == 8);
    }
}

TEST_CASE("ancestor assignments expose the deepest known node") {
    Taxonomy t = th::demo_tax();
    AncestorAssignment full = AncestorAssignment::from_leaf(t, 3);
    CHECK(full.leaf_class == 3);
    REQUIRE(full.path.size() == 1);
    CHECK(t.node(full.path[0]).name == "a2");

    AncestorAssignment part = AncestorAssignment::from_node(t, t.find("a2"));
    CHECK_FALSE(part.leaf_class.has_value());
    CHECK(part.deepest_or_root(t) == t.find("a2"));

    AncestorAssignment none = AncestorAssignment::from_node(t, t.root());
    CHECK(none.path.empty());
    CHECK(none.deepest_or_root(t) == t.root());
}

TEST_CASE("formula sentences evaluate an arbitrary AST") {
    // X0 or X1 over two variables: three models.
    Sentence s = Sentence::formula(Formula::lor({Formula::lit(0), Formula::lit(1)}), 2);
    auto models = enumerate_models(s);
    CHECK(models.size() == 3);

    Sentence contradiction =
        Sentence::formula(Formula::land({Formula::lit(0), Formula::lit(0, false)}), 1);
    CHECK(enumerate_models(contradiction).empty());

    REQUIRE_THROWS_AS(Sentence::formula(Formula::lit(5), 3), Error);
}

TEST_CASE("enumerate_models orders assignments by ascending bit pattern") {
    Sentence s = Sentence::exactly_one({0, 1}, 2);
    auto models = enumerate_models(s);
    REQUIRE(models.size() == 2);
    CHECK(models[0] == std::vector<bool>{true, false});
    CHECK(models[1] == std::vector<bool>{false, true});
}

TEST_CASE("enumerate_models refuses a large universe") {
    REQUIRE_THROWS_AS(enumerate_models(Sentence::exactly_one({0}, 21)), Error);
}

TEST_CASE("cofactor fixes one variable and preserves evaluation") {
    Rng rng(23);
    for (int rep = 0; rep < 60; ++rep) {
        int n = 3 + static_cast<int>(rng.below(4));
        FormulaPtr f = th::random_formula(rng, n, 3);
        int v = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
        bool val = rng.below(2) == 0;
        FormulaPtr g = formula_cofactor(f, v, val);

        std::vector<bool> x(static_cast<size_t>(n));
        for (uint32_t bits = 0; bits < (1u << n); ++bits) {
            for (int k = 0; k < n; ++k) x[static_cast<size_t>(k)] = (bits >> k) & 1u;
            bool orig = x[static_cast<size_t>(v)];
            x[static_cast<size_t>(v)] = val;
            bool want = formula_eval(*f, x);
            // The cofactor agrees and no longer reads v.
            x[static_cast<size_t>(v)] = orig;
            CHECK(formula_eval(*g, x) == want);
        }
    }
}

TEST_CASE("formula_key is stable under child reordering") {
    FormulaPtr a = Formula::land({Formula::lit(0), Formula::lit(1)});
    FormulaPtr b = Formula::land({Formula::lit(1), Formula::lit(0)});
    CHECK(formula_key(*a) == formula_key(*b));
    CHECK(formula_key(*a) != formula_key(*Formula::lor({Formula::lit(0), Formula::lit(1)})));
}
