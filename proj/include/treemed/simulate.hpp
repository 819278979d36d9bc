#pragma once

#include "treemed/aggregate.hpp"
#include "treemed/count_table.hpp"
#include "treemed/error.hpp"
#include "treemed/pipeline.hpp"
#include "treemed/rng.hpp"
#include "treemed/score_test.hpp"
#include "treemed/tree.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace treemed {

enum class Overlap { Complete, Partial, Disjoint };

// Synthetic re-creation of the clustered / scattered planted-mediation
// designs: treatment-associated taxa get a binomial abundance bump, the
// outcome follows a zero-sum log-contrast model over the outcome-associated
// taxa.
struct SimDesign {
    int n = 200;
    int n_taxa = 100;
    int n_alpha = 3;  // |S_alpha|
    int n_beta = 3;   // |S_beta|
    Overlap overlap = Overlap::Complete;
    bool clustered = true;
    double treatment_scale = 1.0;  // A
    double outcome_scale = 1.0;    // B
    OutcomeKind outcome_kind = OutcomeKind::Continuous;
    int replicates = 500;
    std::uint64_t seed = 0;

    long depth_min = 10000;
    long depth_max = 100000;
    double profile_sigma = 2.0;  // log-normal spread of mean taxa proportions
    double sample_sigma = 1.0;   // per-sample compositional noise

    PvalueMode pvalue_mode = PvalueMode::Auto;
    long max_perms = 10000;
    double fdr_q = 0.05;
    double alpha_level = 0.05;
};

// Fixed per-design basis: a random binary tree and a heavy-tailed mean
// proportion profile (stands in for resampling a reference cohort).
struct SimBasis {
    PhyloTree tree;
    std::vector<double> profile;  // mean proportion per leaf column, sums to 1
};

struct SelectedTaxa {
    std::vector<int> s_alpha;     // column indices (leaf order)
    std::vector<int> s_beta;
    std::vector<int> mediators;
    std::vector<std::vector<int>> clades;  // mediator groups for MRCA lookup
};

namespace detail {

inline PhyloTree random_binary_tree(int n_leaves, SplitMix64& rng) {
    if (n_leaves < 2) throw InputError("random tree needs at least 2 leaves");
    PhyloTree tree;
    std::vector<int> roots;
    for (int k = 0; k < n_leaves; ++k) {
        TreeNode leaf;
        leaf.label = "T" + std::to_string(k + 1);
        tree.nodes.push_back(leaf);
        roots.push_back(k);
    }
    while (roots.size() > 1) {
        std::size_t a = rng() % roots.size();
        std::size_t b = rng() % (roots.size() - 1);
        if (b >= a) ++b;
        std::size_t lo = std::min(a, b), hi = std::max(a, b);
        int left = roots[lo];
        int right = roots[hi];
        int idx = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[idx].children = {left, right};
        tree.nodes[left].parent = idx;
        tree.nodes[right].parent = idx;
        roots.erase(roots.begin() + static_cast<long>(hi));
        roots[lo] = idx;
    }
    tree.root = roots[0];
    tree.internal_order = order_internal_nodes(tree);
    return tree;
}

}  // namespace detail

inline SimBasis make_basis(const SimDesign& design) {
    SimBasis basis;
    SplitMix64 rng = substream(design.seed, 0xba515u, 0, 0);
    basis.tree = detail::random_binary_tree(design.n_taxa, rng);
    std::normal_distribution<double> gauss(0.0, design.profile_sigma);
    basis.profile.resize(design.n_taxa);
    double total = 0.0;
    for (auto& g : basis.profile) {
        g = std::exp(gauss(rng));
        total += g;
    }
    for (auto& g : basis.profile) g /= total;
    return basis;
}

// One replicate's count table: per-sample proportions are the profile with
// multiplicative log-normal noise, counts multinomial at a uniform depth.
inline CountTable sample_counts(const SimBasis& basis, int n, long depth_min, long depth_max,
                                double sample_sigma, SplitMix64& rng) {
    const int k_taxa = static_cast<int>(basis.profile.size());
    CountTable table;
    table.taxa = basis.tree.leaf_labels();
    std::normal_distribution<double> gauss(0.0, sample_sigma);
    for (int i = 0; i < n; ++i) {
        table.sample_ids.push_back("S" + std::to_string(i + 1));
        std::vector<double> p(k_taxa);
        double total = 0.0;
        for (int k = 0; k < k_taxa; ++k) {
            p[k] = basis.profile[k] * std::exp(gauss(rng));
            total += p[k];
        }
        long depth = depth_min +
                     static_cast<long>(rng() % static_cast<std::uint64_t>(depth_max - depth_min + 1));
        std::vector<std::int64_t> row(k_taxa, 0);
        long remaining = depth;
        double mass = total;
        for (int k = 0; k < k_taxa && remaining > 0; ++k) {
            double prob = std::min(p[k] / mass, 1.0);
            std::int64_t c;
            if (k == k_taxa - 1) {
                c = remaining;
            } else {
                std::binomial_distribution<long> bin(remaining, prob);
                c = bin(rng);
            }
            row[k] = c;
            remaining -= c;
            mass -= p[k];
            if (mass <= 0) break;
        }
        table.counts.push_back(std::move(row));
    }
    table.recompute_depths();
    return table;
}

// Clustered signal lives on whole 3-leaf clades; scattered signal on
// uniformly drawn leaves. Partial overlap keeps one mediating descendant
// per clade.
inline SelectedTaxa select_taxa(const PhyloTree& tree, const SimDesign& design,
                                SplitMix64& rng) {
    SelectedTaxa out;
    auto leaves = tree.leaves_in_order();
    std::vector<int> col_of(tree.nodes.size(), -1);
    for (std::size_t c = 0; c < leaves.size(); ++c) col_of[leaves[c]] = static_cast<int>(c);

    auto leaves_under = [&](int v) {
        std::vector<int> cols;
        std::vector<int> stack{v};
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            if (tree.nodes[u].is_leaf())
                cols.push_back(col_of[u]);
            else
                for (int c : tree.nodes[u].children) stack.push_back(c);
        }
        return cols;
    };

    if (design.clustered) {
        std::vector<std::vector<int>> clades3;
        for (int v : tree.internal_order) {
            auto cols = leaves_under(v);
            if (cols.size() == 3) clades3.push_back(cols);
        }
        auto draw_clades = [&](int taxa_needed) {
            if (taxa_needed % 3 != 0)
                throw InputError("clustered mode: taxa count must be a multiple of 3");
            std::vector<std::vector<int>> picked;
            std::set<int> used;
            std::vector<std::size_t> order(clades3.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[rng() % i]);
            for (std::size_t i = 0; i < order.size() &&
                                    static_cast<int>(picked.size()) < taxa_needed / 3;
                 ++i) {
                const auto& cols = clades3[order[i]];
                bool clash = false;
                for (int c : cols)
                    if (used.count(c)) clash = true;
                if (clash) continue;
                picked.push_back(cols);
                for (int c : cols) used.insert(c);
            }
            if (static_cast<int>(picked.size()) < taxa_needed / 3)
                throw InputError("not enough disjoint 3-leaf clades on this tree");
            return picked;
        };

        if (design.overlap == Overlap::Disjoint) {
            auto both = draw_clades(design.n_alpha + design.n_beta);
            int na = design.n_alpha / 3;
            for (int c = 0; c < static_cast<int>(both.size()); ++c)
                for (int col : both[c])
                    (c < na ? out.s_alpha : out.s_beta).push_back(col);
        } else {
            if (design.n_alpha != design.n_beta)
                throw InputError("overlapping designs need |S_alpha| == |S_beta|");
            auto clades = draw_clades(design.n_alpha);
            for (auto cols : clades) {
                for (std::size_t i = cols.size(); i > 1; --i)
                    std::swap(cols[i - 1], cols[rng() % i]);
                if (design.overlap == Overlap::Complete) {
                    for (int c : cols) {
                        out.s_alpha.push_back(c);
                        out.s_beta.push_back(c);
                        out.mediators.push_back(c);
                    }
                    out.clades.push_back(cols);
                } else {  // Partial: shared mediator plus one private taxon per side
                    out.s_alpha.push_back(cols[0]);
                    out.s_alpha.push_back(cols[1]);
                    out.s_beta.push_back(cols[0]);
                    out.s_beta.push_back(cols[2]);
                    out.mediators.push_back(cols[0]);
                    out.clades.push_back({cols[0]});
                }
            }
        }
    } else {
        if (design.overlap == Overlap::Partial)
            throw InputError("partial overlap requires clustered mode");
        int total = design.overlap == Overlap::Disjoint ? design.n_alpha + design.n_beta
                                                        : design.n_alpha;
        std::vector<int> cols(leaves.size());
        for (std::size_t i = 0; i < cols.size(); ++i) cols[i] = static_cast<int>(i);
        for (std::size_t i = cols.size(); i > 1; --i)
            std::swap(cols[i - 1], cols[rng() % i]);
        if (total > static_cast<int>(cols.size()))
            throw InputError("not enough taxa to select");
        if (design.overlap == Overlap::Disjoint) {
            for (int i = 0; i < design.n_alpha; ++i) out.s_alpha.push_back(cols[i]);
            for (int i = 0; i < design.n_beta; ++i)
                out.s_beta.push_back(cols[design.n_alpha + i]);
        } else {
            if (design.n_alpha != design.n_beta)
                throw InputError("overlapping designs need |S_alpha| == |S_beta|");
            for (int i = 0; i < design.n_alpha; ++i) {
                out.s_alpha.push_back(cols[i]);
                out.s_beta.push_back(cols[i]);
                out.mediators.push_back(cols[i]);
            }
            if (!out.mediators.empty()) out.clades.push_back(out.mediators);
        }
    }
    std::sort(out.s_alpha.begin(), out.s_alpha.end());
    std::sort(out.s_beta.begin(), out.s_beta.end());
    std::sort(out.mediators.begin(), out.mediators.end());
    return out;
}

// Treated samples get Binomial(N_i, A * f_k) extra counts for each
// treatment-associated taxon; f_k is the mean observed proportion in the
// unperturbed table. Controls are untouched.
inline CountTable perturb_counts(const CountTable& table, const std::vector<int>& s_alpha,
                                 const std::vector<int>& treatment, double a_scale,
                                 SplitMix64& rng) {
    CountTable out = table;
    const std::size_t n = table.n_samples();
    for (int k : s_alpha) {
        double fk = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            fk += static_cast<double>(table.counts[i][k]) /
                  std::max<double>(table.depths[i], 1.0);
        fk /= static_cast<double>(n);
        double prob = a_scale * fk;
        if (prob > 1.0)
            throw InputError("perturb_counts: A * f_k exceeds 1 for taxon column " +
                             std::to_string(k));
        for (std::size_t i = 0; i < n; ++i) {
            if (treatment[i] == 0 || prob <= 0.0) continue;
            std::binomial_distribution<std::int64_t> bin(table.depths[i], prob);
            out.counts[i][k] += bin(rng);
        }
    }
    out.recompute_depths();
    return out;
}

// Zero-sum log-contrast outcome over the post-perturbation proportions;
// zeros handled by the same 0.5 pseudocount rule as the analysis path.
inline Eigen::VectorXd gen_outcome(const CountTable& table, const std::vector<int>& s_beta,
                                   const std::vector<int>& treatment, double b_scale,
                                   OutcomeKind kind, SplitMix64& rng,
                                   double pseudocount = 0.5) {
    const std::size_t n = table.n_samples();
    if (s_beta.size() == 1)
        throw InputError("gen_outcome: |S_beta| = 1 centers to a zero effect; use >= 2");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double beta_t = unif(rng);
    std::vector<double> beta_k(s_beta.size());
    double mean_b = 0.0;
    for (auto& b : beta_k) {
        b = b_scale * unif(rng);
        mean_b += b;
    }
    if (!beta_k.empty()) {
        mean_b /= static_cast<double>(beta_k.size());
        for (auto& b : beta_k) b -= mean_b;  // zero-sum constraint
    }

    Eigen::VectorXd eta(n);
    for (std::size_t i = 0; i < n; ++i) {
        double denom = static_cast<double>(table.depths[i]) +
                       pseudocount * static_cast<double>(table.n_taxa());
        double acc = beta_t * treatment[i];
        for (std::size_t s = 0; s < s_beta.size(); ++s) {
            double f = (static_cast<double>(table.counts[i][s_beta[s]]) + pseudocount) / denom;
            acc += beta_k[s] * std::log(f);
        }
        eta[i] = acc;
    }

    Eigen::VectorXd y(n);
    if (kind == OutcomeKind::Continuous) {
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (std::size_t i = 0; i < n; ++i) y[i] = eta[i] + gauss(rng);
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            double p = 1.0 / (1.0 + std::exp(-eta[i]));
            y[i] = unif(rng) < p ? 1.0 : 0.0;
        }
    }
    return y;
}

// ---------------------------------------------------------------------------
// Evaluation harness
// ---------------------------------------------------------------------------

struct ReplicateOutcome {
    double global_p = 1.0;
    int n_mrca = 0;
    int mrca_hits_phylomed = 0;
    int mrca_hits_sobel = 0;
    int mrca_hits_joint = 0;
    int selected_phylomed = 0, false_phylomed = 0;
    int selected_sobel = 0, false_sobel = 0;
    int selected_joint = 0, false_joint = 0;
};

struct SimSummary {
    SimDesign design;
    std::vector<ReplicateOutcome> reps;

    double rejection_rate(double level) const {
        int hits = 0;
        for (const auto& r : reps) hits += r.global_p <= level ? 1 : 0;
        return reps.empty() ? 0.0 : static_cast<double>(hits) / reps.size();
    }
    double mean_fdr_phylomed() const {
        double acc = 0.0;
        for (const auto& r : reps)
            acc += r.selected_phylomed > 0
                       ? static_cast<double>(r.false_phylomed) / r.selected_phylomed
                       : 0.0;
        return reps.empty() ? 0.0 : acc / reps.size();
    }
    double discovery_rate(int ReplicateOutcome::* hits) const {
        long num = 0, den = 0;
        for (const auto& r : reps) {
            num += r.*hits;
            den += r.n_mrca;
        }
        return den > 0 ? static_cast<double>(num) / den : 0.0;
    }
};

namespace detail {

// internal nodes whose subtree contains at least one of the given leaf columns
inline std::set<int> ancestor_nodes(const PhyloTree& tree, const std::vector<int>& cols) {
    auto leaves = tree.leaves_in_order();
    std::set<int> out;
    for (int c : cols) {
        int v = tree.nodes[leaves[c]].parent;
        while (v >= 0) {
            out.insert(v);
            v = tree.nodes[v].parent;
        }
    }
    return out;
}

// MRCA of the given leaf columns; a single leaf maps to its parent so the
// result is always an internal node.
inline int mrca_node(const PhyloTree& tree, const std::vector<int>& cols) {
    auto leaves = tree.leaves_in_order();
    std::vector<int> path;  // leaf -> root
    for (int v = leaves[cols[0]]; v >= 0; v = tree.nodes[v].parent) path.push_back(v);
    std::size_t cut = 0;  // deepest index in path that is an ancestor of every leaf
    std::set<int> suffix(path.begin(), path.end());
    for (std::size_t c = 1; c < cols.size(); ++c) {
        int u = leaves[cols[c]];
        while (u >= 0 && !suffix.count(u)) u = tree.nodes[u].parent;
        while (path[cut] != u) {
            suffix.erase(path[cut]);
            ++cut;
        }
    }
    int anc = path[cut];
    if (tree.nodes[anc].is_leaf()) anc = tree.nodes[anc].parent;
    return anc;
}

}  // namespace detail

inline SimSummary evaluate(const SimDesign& design) {
    SimBasis basis = make_basis(design);
    SimSummary summary;
    summary.design = design;
    summary.reps.resize(design.replicates);

    AnalyzeOptions opts;
    opts.pvalue_mode = design.pvalue_mode;
    opts.fdr_q = design.fdr_q;
    opts.max_perms = design.max_perms;
    opts.seed = design.seed;

    const bool alternative =
        design.overlap != Overlap::Disjoint && design.n_alpha > 0 && design.n_beta > 0;

    parallel_for(static_cast<std::size_t>(design.replicates), [&](std::size_t rep) {
        SplitMix64 rng = substream(design.seed, 0x4e911cau, rep, 0);
        CountTable base = sample_counts(basis, design.n, design.depth_min, design.depth_max,
                                        design.sample_sigma, rng);
        std::vector<int> treatment(design.n, 0);
        for (int i = design.n / 2; i < design.n; ++i) treatment[i] = 1;

        SelectedTaxa sel = select_taxa(basis.tree, design, rng);
        CountTable table = design.n_alpha > 0
                               ? perturb_counts(base, sel.s_alpha, treatment,
                                                design.treatment_scale, rng)
                               : base;
        Eigen::VectorXd y = gen_outcome(table, sel.s_beta, treatment, design.outcome_scale,
                                        design.outcome_kind, rng);
        if (design.outcome_kind == OutcomeKind::Binary) {
            // logistic fits need both classes; redraw a few times if needed
            for (int attempt = 0; attempt < 20; ++attempt) {
                double s = y.sum();
                if (s > 0.5 && s < design.n - 0.5) break;
                y = gen_outcome(table, sel.s_beta, treatment, design.outcome_scale,
                                design.outcome_kind, rng);
            }
        }

        Design d;
        d.confounders = Eigen::MatrixXd::Ones(design.n, 1);
        d.treatment.resize(design.n);
        for (int i = 0; i < design.n; ++i) d.treatment[i] = treatment[i];
        d.outcome = y;
        d.outcome_kind = design.outcome_kind;

        AnalyzeOptions rep_opts = opts;
        rep_opts.seed = hash_combine(design.seed, rep);
        RunReport report = analyze(basis.tree, table, d, rep_opts);

        ReplicateOutcome& out = summary.reps[rep];
        out.global_p = report.global_p;

        // baselines on the same component p-values / local fits
        std::vector<std::size_t> tested;
        std::vector<double> p_sobel, p_joint;
        auto subs = aggregate(basis.tree, table, rep_opts.pseudocount);
        for (std::size_t j = 0; j < report.records.size(); ++j) {
            const auto& rec = report.records[j];
            if (rec.status != NodeStatus::Tested) continue;
            tested.push_back(j);
            p_joint.push_back(joint_significance_pvalue(rec.p_alpha, rec.p_beta));
            Eigen::VectorXd lr = Eigen::Map<const Eigen::VectorXd>(
                subs[j].logratio.data(), static_cast<Eigen::Index>(subs[j].logratio.size()));
            WaldPair w = wald_estimates(d, lr);
            p_sobel.push_back(sobel_pvalue(w.alpha_hat, w.se_alpha, w.beta_hat, w.se_beta));
        }

        std::set<int> truth =
            alternative ? detail::ancestor_nodes(basis.tree, sel.mediators) : std::set<int>{};
        std::set<int> mrca;
        if (alternative)
            for (const auto& clade : sel.clades)
                mrca.insert(detail::mrca_node(basis.tree, clade));
        out.n_mrca = static_cast<int>(mrca.size());

        auto tally = [&](const std::vector<int>& selected_nodes, int& n_sel, int& n_false,
                         int& n_mrca_hit) {
            n_sel = static_cast<int>(selected_nodes.size());
            for (int v : selected_nodes) {
                if (!truth.count(v)) ++n_false;
                if (mrca.count(v)) ++n_mrca_hit;
            }
        };

        tally(report.selected_nodes, out.selected_phylomed, out.false_phylomed,
              out.mrca_hits_phylomed);

        BhResult bh_sobel = bh_select(p_sobel, design.fdr_q);
        std::vector<int> sobel_nodes;
        for (std::size_t s : bh_sobel.selected)
            sobel_nodes.push_back(report.records[tested[s]].node);
        tally(sobel_nodes, out.selected_sobel, out.false_sobel, out.mrca_hits_sobel);

        BhResult bh_joint = bh_select(p_joint, design.fdr_q);
        std::vector<int> joint_nodes;
        for (std::size_t s : bh_joint.selected)
            joint_nodes.push_back(report.records[tested[s]].node);
        tally(joint_nodes, out.selected_joint, out.false_joint, out.mrca_hits_joint);
    });
    return summary;
}

}  // namespace treemed
