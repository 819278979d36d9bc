#pragma once

#include "treemed/aggregate.hpp"
#include "treemed/count_table.hpp"
#include "treemed/error.hpp"
#include "treemed/null_mixture.hpp"
#include "treemed/parallel.hpp"
#include "treemed/permutation.hpp"
#include "treemed/score_test.hpp"
#include "treemed/tree.hpp"
#include "treemed/version.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace treemed {

enum class PvalueMode { Auto, Asymptotic, Permutation };

struct AnalyzeOptions {
    PvalueMode pvalue_mode = PvalueMode::Auto;
    PiMethod pi_method = PiMethod::JinCai;
    double fdr_q = 0.1;
    double pseudocount = 0.5;
    std::uint64_t seed = 0;
    long max_perms = 100000;
    long target_exceedances = 50;
    long batch = 500;
    double storey_lambda = 0.5;
    double min_var = 1e-8;
    int min_nonzero = 5;
};

struct NodeTestRecord {
    int node = -1;  // node index in the binarized tree
    NodeStatus status = NodeStatus::Skipped;
    double p_alpha = std::numeric_limits<double>::quiet_NaN();
    double p_beta = std::numeric_limits<double>::quiet_NaN();
    int sign_alpha = 0;
    double p_max = std::numeric_limits<double>::quiet_NaN();
    double p_med = std::numeric_limits<double>::quiet_NaN();
    double q_value = std::numeric_limits<double>::quiet_NaN();
    long perms_used_alpha = 0;
    long perms_used_beta = 0;
};

struct RunReport {
    double global_p = 1.0;
    NullProportions proportions;
    std::vector<NodeTestRecord> records;  // aligned with tree.internal_order
    std::vector<int> selected_nodes;      // tree node indices, BH at fdr_q
    std::size_t j_tested = 0;
    PvalueMode mode_used = PvalueMode::Asymptotic;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<std::string> warnings;
};

namespace detail {

inline double clamp_perm_floor(double p, long max_perms) {
    double floor = 1.0 / static_cast<double>(max_perms + 1);
    return std::min(std::max(p, floor), 1.0);
}

inline std::string hash_string(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string options_fingerprint(const AnalyzeOptions& o) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "mode=%d;pi=%d;q=%.17g;c=%.17g;seed=%llu;B=%ld;h=%ld;b=%ld;l=%.17g",
                  static_cast<int>(o.pvalue_mode), static_cast<int>(o.pi_method), o.fdr_q,
                  o.pseudocount, static_cast<unsigned long long>(o.seed), o.max_perms,
                  o.target_exceedances, o.batch, o.storey_lambda);
    return hash_string(buf);
}

}  // namespace detail

// Full analysis on already-ingested structures. The tree must be binarized.
inline RunReport analyze(const PhyloTree& tree, const CountTable& table, const Design& design,
                         const AnalyzeOptions& options = {}) {
    design.validate();
    PermConfig perm_cfg;
    perm_cfg.max_perms = options.max_perms;
    perm_cfg.target_exceedances = options.target_exceedances;
    perm_cfg.batch = options.batch;
    perm_cfg.seed = options.seed;

    RunReport report;
    report.seed = options.seed;
    report.config_hash = detail::options_fingerprint(options);
    report.mode_used = options.pvalue_mode == PvalueMode::Auto
                           ? (design.n() < 100 ? PvalueMode::Permutation
                                               : PvalueMode::Asymptotic)
                           : options.pvalue_mode;

    auto subs = aggregate(tree, table, options.pseudocount);
    auto status = flag_degenerate_nodes(subs, options.min_var, options.min_nonzero);

    const std::size_t j_total = subs.size();
    report.records.resize(j_total);

    AlphaScoreContext alpha_ctx(design);
    BetaScoreContext beta_ctx(design);
    const bool permute = report.mode_used == PvalueMode::Permutation;

    parallel_for(j_total, [&](std::size_t j) {
        NodeTestRecord& rec = report.records[j];
        rec.node = subs[j].node;
        rec.status = status[j];
        if (rec.status == NodeStatus::Skipped) return;
        Eigen::VectorXd lr = Eigen::Map<const Eigen::VectorXd>(
            subs[j].logratio.data(), static_cast<Eigen::Index>(subs[j].logratio.size()));
        ComponentTest at = alpha_ctx.test(lr);
        ComponentTest bt = beta_ctx.test(lr);
        rec.sign_alpha = at.estimate_sign;
        if (permute) {
            AlphaResampler ra(alpha_ctx, lr);
            PermResult pa = perm_pvalue(at.statistic, ra, perm_cfg, static_cast<std::uint64_t>(j),
                                        static_cast<std::uint64_t>(PermKind::Alpha));
            BetaResampler rb(beta_ctx, lr);
            PermResult pb = perm_pvalue(bt.statistic, rb, perm_cfg, static_cast<std::uint64_t>(j),
                                        static_cast<std::uint64_t>(PermKind::Beta));
            rec.p_alpha = pa.p;
            rec.p_beta = pb.p;
            rec.perms_used_alpha = pa.perms_used;
            rec.perms_used_beta = pb.perms_used;
        } else {
            rec.p_alpha = at.p_asymptotic;
            rec.p_beta = bt.p_asymptotic;
        }
        rec.p_max = std::max(rec.p_alpha, rec.p_beta);
    });

    // estimation over the tested nodes only
    std::vector<std::size_t> tested;
    std::vector<double> pa, pb;
    std::vector<double> za, zb;
    for (std::size_t j = 0; j < j_total; ++j) {
        const auto& rec = report.records[j];
        if (rec.status != NodeStatus::Tested) continue;
        tested.push_back(j);
        double cpa = detail::clamp_perm_floor(rec.p_alpha, options.max_perms);
        double cpb = detail::clamp_perm_floor(rec.p_beta, options.max_perms);
        pa.push_back(cpa);
        pb.push_back(cpb);
    }
    report.j_tested = tested.size();
    if (tested.empty()) throw NumericError("analysis: all internal nodes were skipped");
    if (tested.size() < 20)
        report.warnings.push_back("fewer than 20 tested nodes; null-proportion estimates "
                                  "are unreliable");

    if (options.pi_method == PiMethod::JinCai) {
        za.reserve(tested.size());
        zb.reserve(tested.size());
        for (std::size_t k = 0; k < tested.size(); ++k) {
            const auto& rec = report.records[tested[k]];
            za.push_back(z_from_p(pa[k], rec.sign_alpha));
            zb.push_back(z_from_p(pb[k], 1));
        }
        report.proportions = compose_jin_cai(jin_cai_pi0(za), jin_cai_pi0(zb));
    } else {
        report.proportions = compose_storey(pa, pb, options.storey_lambda);
    }

    GrenanderDensity dens_alpha = grenander(pa);
    GrenanderDensity dens_beta = grenander(pb);

    std::vector<double> p_med(tested.size());
    for (std::size_t k = 0; k < tested.size(); ++k) {
        NodeTestRecord& rec = report.records[tested[k]];
        double pm = rec.p_max;
        double fa = alt_cdf(pm, dens_alpha, report.proportions, AltSide::Alpha);
        double fb = alt_cdf(pm, dens_beta, report.proportions, AltSide::Beta);
        rec.p_med = mixture_pvalue(pm, report.proportions, fa, fb);
        p_med[k] = rec.p_med;
    }

    report.global_p = simes_global(p_med);
    BhResult bh = bh_select(p_med, options.fdr_q);
    for (std::size_t k = 0; k < tested.size(); ++k)
        report.records[tested[k]].q_value = bh.q_values[k];
    for (std::size_t sel : bh.selected)
        report.selected_nodes.push_back(report.records[tested[sel]].node);
    return report;
}

// ---------------------------------------------------------------------------
// File-based front end
// ---------------------------------------------------------------------------

struct RunConfig {
    std::string tree_path, counts_path, meta_path;
    std::string treatment_col, outcome_col;
    std::vector<std::string> confounder_cols;
    OutcomeKind outcome_kind = OutcomeKind::Continuous;
    AnalyzeOptions options;
};

struct IngestResult {
    PhyloTree tree;  // binarized
    CountTable table;
    Design design;
    std::vector<std::string> warnings;
};

namespace detail {

inline double parse_numeric(const std::string& s, const std::string& col,
                            const std::string& sample) {
    if (s.empty() || s == "NA" || s == "na" || s == "NaN")
        throw InputError("metadata: missing value in column '" + col + "' for sample '" +
                         sample + "'");
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw InputError("metadata: non-numeric value '" + s + "' in column '" + col + "'");
    }
}

}  // namespace detail

inline IngestResult ingest(const RunConfig& config) {
    IngestResult out;

    std::ifstream tf(config.tree_path);
    if (!tf) throw InputError("cannot open tree file: " + config.tree_path);
    std::string newick((std::istreambuf_iterator<char>(tf)), std::istreambuf_iterator<char>());
    int resolved = 0;
    out.tree = binarize(parse_newick(newick), &resolved);
    if (resolved > 0)
        out.warnings.push_back("resolved " + std::to_string(resolved) +
                               " multifurcating node(s) into left-leaning binary splits");

    CountTable raw = read_count_table_file(config.counts_path);
    MetaTable meta = read_meta_table_file(config.meta_path);

    int t_col = meta.column_index(config.treatment_col);
    if (t_col < 0) throw InputError("metadata: missing treatment column '" +
                                    config.treatment_col + "'");
    int y_col = meta.column_index(config.outcome_col);
    if (y_col < 0) throw InputError("metadata: missing outcome column '" +
                                    config.outcome_col + "'");
    std::vector<int> c_cols;
    for (const auto& c : config.confounder_cols) {
        int idx = meta.column_index(c);
        if (idx < 0) throw InputError("metadata: missing confounder column '" + c + "'");
        c_cols.push_back(idx);
    }

    std::map<std::string, std::size_t> meta_row;
    for (std::size_t i = 0; i < meta.sample_ids.size(); ++i)
        meta_row[meta.sample_ids[i]] = i;

    // inner join, then deterministic order by sample_id
    std::vector<std::pair<std::string, std::size_t>> joined;  // (sample_id, counts row)
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < raw.sample_ids.size(); ++i) {
        if (meta_row.count(raw.sample_ids[i]))
            joined.emplace_back(raw.sample_ids[i], i);
        else
            ++dropped;
    }
    if (dropped > 0)
        out.warnings.push_back(std::to_string(dropped) +
                               " count-table sample(s) missing from metadata were dropped");
    std::size_t meta_only = meta.sample_ids.size() - joined.size();
    if (meta_only > 0)
        out.warnings.push_back(std::to_string(meta_only) +
                               " metadata sample(s) missing from the count table were dropped");
    std::sort(joined.begin(), joined.end());
    if (joined.size() < 10)
        throw InputError("fewer than 10 samples after aligning counts and metadata");

    const std::size_t n = joined.size();
    out.table.taxa = raw.taxa;
    out.table.sample_ids.reserve(n);
    out.table.counts.reserve(n);
    Eigen::MatrixXd x(n, 1 + c_cols.size());
    Eigen::VectorXd t(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& [sid, row] = joined[i];
        out.table.sample_ids.push_back(sid);
        out.table.counts.push_back(raw.counts[row]);
        const auto& mrow = meta.rows[meta_row[sid]];
        t[i] = detail::parse_numeric(mrow[t_col], config.treatment_col, sid);
        y[i] = detail::parse_numeric(mrow[y_col], config.outcome_col, sid);
        x(i, 0) = 1.0;
        for (std::size_t k = 0; k < c_cols.size(); ++k)
            x(i, 1 + k) =
                detail::parse_numeric(mrow[c_cols[k]], config.confounder_cols[k], sid);
    }
    out.table.recompute_depths();
    if (config.outcome_kind == OutcomeKind::Binary)
        for (std::size_t i = 0; i < n; ++i)
            if (y[i] != 0.0 && y[i] != 1.0)
                throw InputError("binary outcome must be coded {0,1}; got " +
                                 std::to_string(y[i]));

    out.design.confounders = x;
    out.design.treatment = t;
    out.design.outcome = y;
    out.design.outcome_kind = config.outcome_kind;

    align_taxa(out.tree, out.table);  // fatal with offender list if mismatched
    return out;
}

inline RunReport run(const RunConfig& config, IngestResult* ingested_out = nullptr) {
    IngestResult in = ingest(config);
    RunReport report = analyze(in.tree, in.table, in.design, config.options);
    report.warnings.insert(report.warnings.begin(), in.warnings.begin(), in.warnings.end());
    if (ingested_out) *ingested_out = std::move(in);
    return report;
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt(double v) {
    if (std::isnan(v)) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// stable ids: internal nodes are N1..NJ in parents-first order, leaves keep
// their taxon names
inline std::vector<std::string> node_ids(const PhyloTree& tree) {
    std::vector<std::string> ids(tree.nodes.size());
    for (std::size_t k = 0; k < tree.internal_order.size(); ++k)
        ids[tree.internal_order[k]] = "N" + std::to_string(k + 1);
    for (std::size_t v = 0; v < tree.nodes.size(); ++v)
        if (tree.nodes[v].is_leaf()) ids[v] = tree.nodes[v].label;
    return ids;
}

}  // namespace detail

inline void emit(const PhyloTree& tree, const RunReport& report, const std::string& out_dir) {
    auto ids = detail::node_ids(tree);

    std::ofstream nodes(out_dir + "/nodes.tsv");
    if (!nodes) throw InputError("cannot write " + out_dir + "/nodes.tsv");
    nodes << "node_id\tparent_id\tchild_ids\tstatus\tp_alpha\tp_beta\tsign_alpha\tp_max\t"
             "p_med\tq_value\tperms_used_alpha\tperms_used_beta\n";
    for (const auto& rec : report.records) {
        const TreeNode& nd = tree.nodes[rec.node];
        std::string children;
        for (std::size_t c = 0; c < nd.children.size(); ++c) {
            if (c) children += ',';
            children += ids[nd.children[c]];
        }
        nodes << ids[rec.node] << '\t' << (nd.parent >= 0 ? ids[nd.parent] : std::string("-"))
              << '\t' << children << '\t'
              << (rec.status == NodeStatus::Tested ? "TESTED" : "SKIPPED") << '\t'
              << detail::fmt(rec.p_alpha) << '\t' << detail::fmt(rec.p_beta) << '\t'
              << rec.sign_alpha << '\t' << detail::fmt(rec.p_max) << '\t'
              << detail::fmt(rec.p_med) << '\t' << detail::fmt(rec.q_value) << '\t'
              << rec.perms_used_alpha << '\t' << rec.perms_used_beta << '\n';
    }
    nodes.close();

    std::ofstream global(out_dir + "/global.tsv");
    if (!global) throw InputError("cannot write " + out_dir + "/global.tsv");
    global << "global_p\tpi00\tpi10\tpi01\tpi0_alpha\tpi0_beta\tJ_tested\tconfig_hash\tseed\t"
              "version\n";
    global << detail::fmt(report.global_p) << '\t' << detail::fmt(report.proportions.pi00)
           << '\t' << detail::fmt(report.proportions.pi10) << '\t'
           << detail::fmt(report.proportions.pi01) << '\t'
           << detail::fmt(report.proportions.pi0_alpha) << '\t'
           << detail::fmt(report.proportions.pi0_beta) << '\t' << report.j_tested << '\t'
           << report.config_hash << '\t' << report.seed << '\t' << TREEMED_VERSION << '\n';
    global.close();

    std::map<int, double> pmed_of;
    for (const auto& rec : report.records) pmed_of[rec.node] = rec.p_med;
    std::string nwk = write_newick(tree, [&](int v) {
        auto it = pmed_of.find(v);
        if (it == pmed_of.end() || std::isnan(it->second)) return std::string("NA");
        return detail::fmt(it->second);
    });
    std::ofstream annotated(out_dir + "/annotated.nwk");
    if (!annotated) throw InputError("cannot write " + out_dir + "/annotated.nwk");
    annotated << nwk << '\n';
}

}  // namespace treemed
