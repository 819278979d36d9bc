// treemed: phylogeny-based mediation analysis for microbial compositions.
//
// Subcommands:
//   run       full analysis on tree + counts + metadata, writing TSV results
//   simulate  synthetic power/type-I-error benchmark from a design file

#include "treemed/design_file.hpp"
#include "treemed/pipeline.hpp"
#include "treemed/simulate.hpp"
#include "treemed/version.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

int do_run(const treemed::RunConfig& config, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    treemed::IngestResult ingested;
    treemed::RunReport report = treemed::run(config, &ingested);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    treemed::emit(ingested.tree, report, out_dir);
    std::printf("global_p\t%.10g\n", report.global_p);
    std::printf("pi00\t%.4f\tpi10\t%.4f\tpi01\t%.4f\n", report.proportions.pi00,
                report.proportions.pi10, report.proportions.pi01);
    std::printf("tested_nodes\t%zu\nselected_nodes\t%zu\n", report.j_tested,
                report.selected_nodes.size());
    std::printf("output\t%s\n", out_dir.c_str());
    return 0;
}

int do_simulate(const std::string& design_path, const std::string& out_dir) {
    treemed::SimDesign design = treemed::parse_sim_design_file(design_path);
    std::filesystem::create_directories(out_dir);
    treemed::SimSummary summary = treemed::evaluate(design);

    std::ofstream out(out_dir + "/summary.tsv");
    if (!out) throw treemed::InputError("cannot write " + out_dir + "/summary.tsv");
    out << "design\tmethod\tmetric\tvalue\treplicates\n";
    std::ostringstream label;
    label << "n=" << design.n << ",a=" << design.n_alpha << ",b=" << design.n_beta
          << ",overlap="
          << (design.overlap == treemed::Overlap::Complete
                  ? "complete"
                  : design.overlap == treemed::Overlap::Partial ? "partial" : "disjoint");
    auto row = [&](const char* method, const char* metric, double value) {
        out << label.str() << '\t' << method << '\t' << metric << '\t' << value << '\t'
            << design.replicates << '\n';
    };
    row("phylomed", "global_rejection_rate", summary.rejection_rate(design.alpha_level));
    row("phylomed", "detection_fdr", summary.mean_fdr_phylomed());
    row("phylomed", "mrca_discovery_rate",
        summary.discovery_rate(&treemed::ReplicateOutcome::mrca_hits_phylomed));
    row("sobel", "mrca_discovery_rate",
        summary.discovery_rate(&treemed::ReplicateOutcome::mrca_hits_sobel));
    row("joint_significance", "mrca_discovery_rate",
        summary.discovery_rate(&treemed::ReplicateOutcome::mrca_hits_joint));
    out.close();

    std::ofstream dump(out_dir + "/replicates.tsv");
    dump << "replicate\tglobal_p\tselected\tfalse_selected\tmrca_total\tmrca_hits\n";
    for (std::size_t r = 0; r < summary.reps.size(); ++r) {
        const auto& rep = summary.reps[r];
        dump << r << '\t' << rep.global_p << '\t' << rep.selected_phylomed << '\t'
             << rep.false_phylomed << '\t' << rep.n_mrca << '\t' << rep.mrca_hits_phylomed
             << '\n';
    }
    std::printf("summary\t%s/summary.tsv\n", out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"phylogeny-based mediation analysis"};
    app.set_version_flag("--version", TREEMED_VERSION);
    app.require_subcommand(0, 1);

    treemed::RunConfig config;
    std::string out_dir, confounders_csv, outcome_type = "continuous";
    std::string pvalue_mode = "auto", pi_method = "jincai";
    long seed = 0;

    CLI::App* run_cmd = app.add_subcommand("run", "run the mediation analysis");
    run_cmd->add_option("--tree", config.tree_path, "newick tree file")->required();
    run_cmd->add_option("--counts", config.counts_path, "count table TSV")->required();
    run_cmd->add_option("--meta", config.meta_path, "sample metadata TSV")->required();
    run_cmd->add_option("--treatment", config.treatment_col, "treatment column")->required();
    run_cmd->add_option("--outcome", config.outcome_col, "outcome column")->required();
    run_cmd->add_option("--outcome-type", outcome_type, "continuous|binary")
        ->check(CLI::IsMember({"continuous", "binary"}));
    run_cmd->add_option("--confounders", confounders_csv, "comma-separated confounder columns");
    run_cmd->add_option("--pvalue-mode", pvalue_mode, "auto|asymptotic|permutation")
        ->check(CLI::IsMember({"auto", "asymptotic", "permutation"}));
    run_cmd->add_option("--pi-method", pi_method, "jincai|storey")
        ->check(CLI::IsMember({"jincai", "storey"}));
    run_cmd->add_option("--fdr", config.options.fdr_q, "BH FDR level");
    run_cmd->add_option("--pseudocount", config.options.pseudocount, "log-ratio pseudocount");
    run_cmd->add_option("--seed", seed, "RNG seed");
    run_cmd->add_option("--max-perms", config.options.max_perms, "permutation budget per test");
    run_cmd->add_option("--out", out_dir, "output directory")->required();

    std::string design_path, sim_out;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "run the simulation benchmark");
    sim_cmd->add_option("--design", design_path, "design file (key = value)")->required();
    sim_cmd->add_option("--out", sim_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            config.outcome_kind = outcome_type == "binary" ? treemed::OutcomeKind::Binary
                                                           : treemed::OutcomeKind::Continuous;
            config.options.pvalue_mode =
                pvalue_mode == "asymptotic"
                    ? treemed::PvalueMode::Asymptotic
                    : pvalue_mode == "permutation" ? treemed::PvalueMode::Permutation
                                                   : treemed::PvalueMode::Auto;
            config.options.pi_method = pi_method == "storey" ? treemed::PiMethod::Storey
                                                             : treemed::PiMethod::JinCai;
            config.options.seed = static_cast<std::uint64_t>(seed);
            if (!confounders_csv.empty()) {
                std::stringstream ss(confounders_csv);
                std::string col;
                while (std::getline(ss, col, ','))
                    if (!col.empty()) config.confounder_cols.push_back(col);
            }
            return do_run(config, out_dir);
        }
        if (sim_cmd->parsed()) return do_simulate(design_path, sim_out);
        std::cerr << app.help();
        return 0;
    } catch (const treemed::InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const treemed::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
