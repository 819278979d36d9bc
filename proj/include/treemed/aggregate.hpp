#pragma once

#include "treemed/count_table.hpp"
#include "treemed/error.hpp"
#include "treemed/tree.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace treemed {

// Two-part split of counts at one internal node: m1 under the left child,
// m2 under the right child, logratio = log((m1+c)/(m2+c)).
struct NodeSubcomposition {
    int node = -1;
    std::vector<std::int64_t> m1;
    std::vector<std::int64_t> m2;
    std::vector<std::int64_t> n_node;
    std::vector<double> logratio;
};

enum class NodeStatus { Tested, Skipped };

// Maps table columns onto tree leaves; errors list every offending taxon.
inline std::vector<int> align_taxa(const PhyloTree& tree, const CountTable& table) {
    auto leaves = tree.leaves_in_order();
    std::map<std::string, int> leaf_of;
    for (int v : leaves) leaf_of[tree.nodes[v].label] = v;

    std::map<std::string, int> col_of;
    for (std::size_t k = 0; k < table.taxa.size(); ++k)
        col_of[table.taxa[k]] = static_cast<int>(k);

    std::string missing_in_tree, missing_in_table;
    for (const auto& t : table.taxa)
        if (!leaf_of.count(t)) missing_in_tree += (missing_in_tree.empty() ? "" : ", ") + t;
    for (int v : leaves)
        if (!col_of.count(tree.nodes[v].label))
            missing_in_table +=
                (missing_in_table.empty() ? "" : ", ") + tree.nodes[v].label;
    if (!missing_in_tree.empty() || !missing_in_table.empty()) {
        std::string msg = "taxa alignment failed";
        if (!missing_in_tree.empty()) msg += "; not in tree: " + missing_in_tree;
        if (!missing_in_table.empty()) msg += "; not in counts: " + missing_in_table;
        throw InputError(msg);
    }

    // column index per node-local leaf position (by leaf node index)
    std::vector<int> col(tree.nodes.size(), -1);
    for (int v : leaves) col[v] = col_of[tree.nodes[v].label];
    return col;
}

// One subcomposition per internal node, in internal_order. The pseudocount
// enters only the log-ratio; m1/m2 stay raw so m1+m2 equals the counts
// assigned to the node.
inline std::vector<NodeSubcomposition> aggregate(const PhyloTree& tree, const CountTable& table,
                                                 double pseudocount = 0.5) {
    if (pseudocount < 0) throw InputError("pseudocount must be >= 0");
    std::vector<int> col = align_taxa(tree, table);
    const std::size_t n = table.n_samples();

    // per-node subtree totals, bottom-up
    std::vector<std::vector<std::int64_t>> subtotal(tree.nodes.size(),
                                                    std::vector<std::int64_t>(n, 0));
    // process children before parents: reverse preorder works since preorder
    // lists parents first
    std::vector<int> order = tree.internal_order.empty() ? order_internal_nodes(tree)
                                                         : tree.internal_order;
    for (std::size_t v = 0; v < tree.nodes.size(); ++v) {
        if (!tree.nodes[v].is_leaf()) continue;
        for (std::size_t i = 0; i < n; ++i)
            subtotal[v][i] = table.counts[i][col[v]];
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        int v = *it;
        for (int c : tree.nodes[v].children)
            for (std::size_t i = 0; i < n; ++i) subtotal[v][i] += subtotal[c][i];
    }

    std::vector<NodeSubcomposition> out;
    out.reserve(order.size());
    for (int v : order) {
        const auto& ch = tree.nodes[v].children;
        if (ch.size() != 2) throw InputError("aggregate requires a binarized tree");
        NodeSubcomposition sub;
        sub.node = v;
        sub.m1 = subtotal[ch[0]];
        sub.m2 = subtotal[ch[1]];
        sub.n_node.resize(n);
        sub.logratio.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            sub.n_node[i] = sub.m1[i] + sub.m2[i];
            sub.logratio[i] = std::log((static_cast<double>(sub.m1[i]) + pseudocount) /
                                       (static_cast<double>(sub.m2[i]) + pseudocount));
        }
        out.push_back(std::move(sub));
    }
    return out;
}

// Nodes whose log-ratio carries no information are excluded from testing
// and from every downstream estimator.
inline std::vector<NodeStatus> flag_degenerate_nodes(const std::vector<NodeSubcomposition>& subs,
                                                     double min_var = 1e-8,
                                                     int min_nonzero = 5) {
    std::vector<NodeStatus> out(subs.size(), NodeStatus::Tested);
    for (std::size_t j = 0; j < subs.size(); ++j) {
        const auto& sub = subs[j];
        const std::size_t n = sub.logratio.size();
        int nonzero = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (sub.n_node[i] > 0) ++nonzero;
        double mean = 0.0;
        for (double x : sub.logratio) mean += x;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double x : sub.logratio) var += (x - mean) * (x - mean);
        var /= n > 1 ? static_cast<double>(n - 1) : 1.0;
        if (var < min_var || nonzero < min_nonzero) out[j] = NodeStatus::Skipped;
    }
    return out;
}

}  // namespace treemed
