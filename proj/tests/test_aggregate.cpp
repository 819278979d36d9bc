#include "treemed/aggregate.hpp"
#include "treemed/rng.hpp"
#include "treemed/simulate.hpp"
#include "treemed/tree.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

using namespace treemed;

namespace {

CountTable make_table(std::vector<std::string> taxa,
                      std::vector<std::vector<std::int64_t>> counts) {
    CountTable t;
    t.taxa = std::move(taxa);
    t.counts = std::move(counts);
    for (std::size_t i = 0; i < t.counts.size(); ++i)
        t.sample_ids.push_back("S" + std::to_string(i + 1));
    t.recompute_depths();
    return t;
}

}  // namespace

TEST_CASE("aggregate on ((A,B),C) with one sample") {
    PhyloTree tree = binarize(parse_newick("((A,B),C);"));
    CountTable table = make_table({"A", "B", "C"}, {{2, 3, 5}});

    auto subs = aggregate(tree, table, 0.0);
    REQUIRE(subs.size() == 2);
    // internal_order is preorder: root first, AB ancestor second
    CHECK(subs[0].m1[0] == 5);  // A+B under the left child of the root
    CHECK(subs[0].m2[0] == 5);  // C
    CHECK(subs[0].logratio[0] == Catch::Approx(0.0));
    CHECK(subs[1].m1[0] == 2);
    CHECK(subs[1].m2[0] == 3);
    CHECK(subs[1].logratio[0] == Catch::Approx(std::log(2.0 / 3.0)));

    auto with_c = aggregate(tree, table, 0.5);
    CHECK(with_c[1].logratio[0] == Catch::Approx(std::log(2.5 / 3.5)));
    // pseudocount enters only the log-ratio
    CHECK(with_c[1].m1[0] == 2);
    CHECK(with_c[1].n_node[0] == 5);
}

TEST_CASE("all-zero sample gives zero logratios and zero n_node") {
    PhyloTree tree = binarize(parse_newick("((A,B),C);"));
    CountTable table = make_table({"A", "B", "C"}, {{0, 0, 0}});
    auto subs = aggregate(tree, table, 0.5);
    for (const auto& sub : subs) {
        CHECK(sub.n_node[0] == 0);
        CHECK(sub.logratio[0] == Catch::Approx(0.0));
    }
}

TEST_CASE("aggregate rejects misaligned taxa listing offenders") {
    PhyloTree tree = binarize(parse_newick("((A,B),C);"));
    CountTable table = make_table({"A", "B", "D"}, {{1, 1, 1}});
    try {
        aggregate(tree, table, 0.5);
        FAIL("expected alignment error");
    } catch (const InputError& e) {
        std::string msg = e.what();
        CHECK(msg.find("D") != std::string::npos);
        CHECK(msg.find("C") != std::string::npos);
    }
}

TEST_CASE("conservation: root n_node equals sample depth, parents sum children") {
    SplitMix64 rng(41);
    for (int rep = 0; rep < 10; ++rep) {
        int leaves = 4 + static_cast<int>(rng() % 30);
        PhyloTree tree = detail::random_binary_tree(leaves, rng);
        int n = 6;
        CountTable table;
        table.taxa = tree.leaf_labels();
        for (int i = 0; i < n; ++i) {
            table.sample_ids.push_back("S" + std::to_string(i));
            std::vector<std::int64_t> row(leaves);
            for (auto& c : row) c = static_cast<std::int64_t>(rng() % 50);
            table.counts.push_back(row);
        }
        table.recompute_depths();

        auto subs = aggregate(tree, table, 0.5);
        REQUIRE(static_cast<int>(subs.size()) == leaves - 1);
        CHECK(subs[0].node == tree.root);
        for (int i = 0; i < n; ++i) {
            CHECK(subs[0].n_node[i] == table.depths[i]);
            for (const auto& sub : subs) CHECK(sub.m1[i] + sub.m2[i] == sub.n_node[i]);
        }
    }
}

TEST_CASE("subcomposition locality: counts outside the subtree do not matter") {
    PhyloTree tree = binarize(parse_newick("(((A,B),(C,D)),(E,F));"));
    CountTable t1 = make_table({"A", "B", "C", "D", "E", "F"}, {{3, 7, 2, 9, 5, 1}});
    CountTable t2 = make_table({"A", "B", "C", "D", "E", "F"}, {{3, 7, 2, 9, 100, 250}});
    auto s1 = aggregate(tree, t1, 0.5);
    auto s2 = aggregate(tree, t2, 0.5);
    // find the AB node: m1 should be the A count
    for (std::size_t j = 0; j < s1.size(); ++j) {
        if (s1[j].m1[0] == 3 && s1[j].m2[0] == 7) {
            CHECK(s1[j].logratio[0] == s2[j].logratio[0]);  // bit-identical
        }
    }
}

TEST_CASE("flag_degenerate_nodes") {
    NodeSubcomposition zero;
    zero.node = 0;
    zero.m1.assign(50, 0);
    zero.m2.assign(50, 0);
    zero.n_node.assign(50, 0);
    zero.logratio.assign(50, 0.0);

    NodeSubcomposition live;
    live.node = 1;
    live.m1.assign(48, 3);
    live.m2.assign(48, 5);
    live.n_node.assign(48, 8);
    live.logratio.resize(48);
    SplitMix64 rng(3);
    std::normal_distribution<double> gauss(0.0, 0.9);  // variance ~0.8
    for (auto& x : live.logratio) x = gauss(rng);

    NodeSubcomposition sparse;
    sparse.node = 2;
    sparse.m1.assign(50, 0);
    sparse.m2.assign(50, 0);
    sparse.n_node.assign(50, 0);
    sparse.logratio.assign(50, 0.0);
    sparse.n_node[0] = 10;
    sparse.n_node[1] = 4;
    sparse.logratio[0] = 1.0;
    sparse.logratio[1] = -1.0;

    auto status = flag_degenerate_nodes({zero, live, sparse}, 1e-8, 5);
    CHECK(status[0] == NodeStatus::Skipped);
    CHECK(status[1] == NodeStatus::Tested);
    CHECK(status[2] == NodeStatus::Skipped);  // present in only 2 of 50 samples
}
