#include "treemed/pipeline.hpp"
#include "treemed/rng.hpp"
#include "treemed/simulate.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace treemed;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("treemed_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

std::string read_file(const std::string& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// A small but realistic dataset: 12-leaf random tree, n samples, treatment
// bump on two taxa, outcome driven by one log-proportion.
struct Dataset {
    std::string tree_nwk;
    std::string counts_tsv;
    std::string meta_tsv;
    int n;
};

Dataset make_dataset(int n, std::uint64_t seed, bool shuffle_rows = false) {
    SplitMix64 rng(seed);
    PhyloTree tree = detail::random_binary_tree(12, rng);
    Dataset d;
    d.n = n;
    d.tree_nwk = write_newick(tree, [](int) { return ""; });

    auto taxa = tree.leaf_labels();
    std::normal_distribution<double> gauss;
    std::vector<std::string> count_rows, meta_rows;
    for (int i = 0; i < n; ++i) {
        std::string sid = "S" + std::to_string(i + 1);
        int t = i % 2;
        std::ostringstream crow;
        crow << sid;
        double y = 0.3 * t + gauss(rng);
        for (std::size_t k = 0; k < taxa.size(); ++k) {
            long base = 20 + static_cast<long>(rng() % 80);
            if (k < 2 && t == 1) base += 40;  // treatment-associated taxa
            if (k == 0) y += 0.4 * std::log(static_cast<double>(base));
            crow << '\t' << base;
        }
        count_rows.push_back(crow.str());
        std::ostringstream mrow;
        mrow << sid << '\t' << t << '\t' << y << '\t' << gauss(rng);
        meta_rows.push_back(mrow.str());
    }
    if (shuffle_rows) {
        for (std::size_t i = count_rows.size(); i > 1; --i)
            std::swap(count_rows[i - 1], count_rows[rng() % i]);
        for (std::size_t i = meta_rows.size(); i > 1; --i)
            std::swap(meta_rows[i - 1], meta_rows[rng() % i]);
    }

    std::ostringstream counts;
    counts << "sample_id";
    for (const auto& t : taxa) counts << '\t' << t;
    counts << '\n';
    for (const auto& r : count_rows) counts << r << '\n';
    d.counts_tsv = counts.str();

    std::ostringstream meta;
    meta << "sample_id\ttreat\tscore\tage\n";
    for (const auto& r : meta_rows) meta << r << '\n';
    d.meta_tsv = meta.str();
    return d;
}

RunConfig basic_config(const TempDir& dir, const Dataset& d) {
    write_file(dir.file("tree.nwk"), d.tree_nwk);
    write_file(dir.file("counts.tsv"), d.counts_tsv);
    write_file(dir.file("meta.tsv"), d.meta_tsv);
    RunConfig cfg;
    cfg.tree_path = dir.file("tree.nwk");
    cfg.counts_path = dir.file("counts.tsv");
    cfg.meta_path = dir.file("meta.tsv");
    cfg.treatment_col = "treat";
    cfg.outcome_col = "score";
    cfg.options.pvalue_mode = PvalueMode::Asymptotic;
    cfg.options.seed = 11;
    return cfg;
}

}  // namespace

TEST_CASE("analyze produces a coherent report") {
    SimDesign sd;
    sd.n = 60;
    sd.n_taxa = 30;
    sd.seed = 5;
    SimBasis basis = make_basis(sd);
    SplitMix64 rng(42);
    CountTable table = sample_counts(basis, sd.n, 1000, 2000, 1.0, rng);

    Design design;
    design.confounders = Eigen::MatrixXd::Ones(sd.n, 1);
    design.treatment.resize(sd.n);
    design.outcome.resize(sd.n);
    std::normal_distribution<double> gauss;
    for (int i = 0; i < sd.n; ++i) {
        design.treatment[i] = i % 2;
        design.outcome[i] = gauss(rng);
    }

    AnalyzeOptions opts;
    opts.pvalue_mode = PvalueMode::Asymptotic;
    RunReport rep = analyze(basis.tree, table, design, opts);

    CHECK(rep.records.size() == 29);  // J = L - 1
    CHECK(rep.j_tested <= rep.records.size());
    CHECK(rep.j_tested > 0);
    std::vector<double> pmed;
    for (const auto& r : rep.records) {
        if (r.status != NodeStatus::Tested) continue;
        CHECK(r.p_alpha >= 0.0);
        CHECK(r.p_alpha <= 1.0);
        CHECK(r.p_beta >= 0.0);
        CHECK(r.p_beta <= 1.0);
        CHECK(r.p_max == std::max(r.p_alpha, r.p_beta));
        CHECK(r.p_med > 0.0);
        CHECK(r.p_med <= 1.0);
        CHECK(r.p_med <= r.p_max + 1e-12);  // composite-null gain
        CHECK(r.q_value >= r.p_med - 1e-12);
        pmed.push_back(r.p_med);
    }
    CHECK(rep.global_p == Catch::Approx(simes_global(pmed)).epsilon(1e-12));
    CHECK(rep.proportions.pi00 + rep.proportions.pi10 + rep.proportions.pi01 ==
          Catch::Approx(1.0).epsilon(1e-9));
    // selected nodes all carry q <= fdr_q
    for (int v : rep.selected_nodes) {
        auto it = std::find_if(rep.records.begin(), rep.records.end(),
                               [&](const NodeTestRecord& r) { return r.node == v; });
        REQUIRE(it != rep.records.end());
        CHECK(it->q_value <= opts.fdr_q + 1e-12);
    }
}

TEST_CASE("auto mode switches to permutation below 100 samples") {
    SimDesign sd;
    sd.n_taxa = 12;
    sd.seed = 9;
    SimBasis basis = make_basis(sd);
    SplitMix64 rng(7);
    std::normal_distribution<double> gauss;

    for (int n : {40, 120}) {
        CountTable table = sample_counts(basis, n, 500, 800, 1.0, rng);
        Design design;
        design.confounders = Eigen::MatrixXd::Ones(n, 1);
        design.treatment.resize(n);
        design.outcome.resize(n);
        for (int i = 0; i < n; ++i) {
            design.treatment[i] = i % 2;
            design.outcome[i] = gauss(rng);
        }
        AnalyzeOptions opts;
        opts.max_perms = 2000;
        RunReport rep = analyze(basis.tree, table, design, opts);
        if (n < 100) {
            CHECK(rep.mode_used == PvalueMode::Permutation);
            for (const auto& r : rep.records)
                if (r.status == NodeStatus::Tested) CHECK(r.perms_used_alpha > 0);
        } else {
            CHECK(rep.mode_used == PvalueMode::Asymptotic);
        }
    }
}

TEST_CASE("skipped nodes are excluded from estimation and selection") {
    // two taxa with all-zero counts: their shared internal node is degenerate
    PhyloTree tree = binarize(parse_newick("(((A,B),(Z1,Z2)),(C,D));"));
    CountTable table;
    table.taxa = tree.leaf_labels();
    SplitMix64 rng(13);
    const int n = 40;
    for (int i = 0; i < n; ++i) {
        table.sample_ids.push_back("S" + std::to_string(i));
        std::vector<std::int64_t> row(table.taxa.size());
        for (std::size_t k = 0; k < row.size(); ++k) {
            bool zero_col = table.taxa[k] == "Z1" || table.taxa[k] == "Z2";
            row[k] = zero_col ? 0 : 30 + static_cast<std::int64_t>(rng() % 40);
        }
        table.counts.push_back(row);
    }
    table.recompute_depths();

    Design design;
    design.confounders = Eigen::MatrixXd::Ones(n, 1);
    design.treatment.resize(n);
    design.outcome.resize(n);
    std::normal_distribution<double> gauss;
    for (int i = 0; i < n; ++i) {
        design.treatment[i] = i % 2;
        design.outcome[i] = gauss(rng);
    }
    AnalyzeOptions opts;
    opts.pvalue_mode = PvalueMode::Asymptotic;
    RunReport rep = analyze(tree, table, design, opts);

    int skipped = 0;
    for (const auto& r : rep.records)
        if (r.status == NodeStatus::Skipped) {
            ++skipped;
            CHECK(std::isnan(r.p_med));
            CHECK(std::isnan(r.q_value));
            for (int v : rep.selected_nodes) CHECK(v != r.node);
        }
    CHECK(skipped == 1);  // only the (Z1,Z2) node
    CHECK(rep.j_tested == rep.records.size() - 1);
}

TEST_CASE("ingest joins counts and metadata on sample_id") {
    TempDir dir;
    Dataset d = make_dataset(20, 101);
    RunConfig cfg = basic_config(dir, d);

    IngestResult in = ingest(cfg);
    CHECK(in.design.n() == 20);
    CHECK(in.table.n_samples() == 20);
    CHECK(std::is_sorted(in.table.sample_ids.begin(), in.table.sample_ids.end()));
    CHECK(in.design.confounders.cols() == 1);  // intercept only
    CHECK(in.warnings.empty());

    // with a confounder column
    cfg.confounder_cols = {"age"};
    IngestResult in2 = ingest(cfg);
    CHECK(in2.design.confounders.cols() == 2);
}

TEST_CASE("ingest warns on dropped samples and fails below 10") {
    TempDir dir;
    Dataset d = make_dataset(14, 33);
    // remove two samples from the metadata only
    std::istringstream meta_in(d.meta_tsv);
    std::ostringstream meta_out;
    std::string line;
    int kept = 0;
    while (std::getline(meta_in, line)) {
        if (line.rfind("S3\t", 0) == 0 || line.rfind("S7\t", 0) == 0) continue;
        meta_out << line << '\n';
        ++kept;
    }
    d.meta_tsv = meta_out.str();
    RunConfig cfg = basic_config(dir, d);

    IngestResult in = ingest(cfg);
    CHECK(in.design.n() == 12);
    REQUIRE(in.warnings.size() == 1);
    CHECK(in.warnings[0].find("2") != std::string::npos);
    CHECK(in.warnings[0].find("dropped") != std::string::npos);

    // shrink below the floor
    Dataset tiny = make_dataset(8, 34);
    TempDir dir2;
    RunConfig cfg2 = basic_config(dir2, tiny);
    CHECK_THROWS_AS(ingest(cfg2), InputError);
}

TEST_CASE("ingest rejects missing columns, NA cells, and bad binary coding") {
    TempDir dir;
    Dataset d = make_dataset(16, 55);
    RunConfig cfg = basic_config(dir, d);

    RunConfig bad_col = cfg;
    bad_col.treatment_col = "nope";
    CHECK_THROWS_AS(ingest(bad_col), InputError);

    RunConfig bad_conf = cfg;
    bad_conf.confounder_cols = {"missing_conf"};
    CHECK_THROWS_AS(ingest(bad_conf), InputError);

    // poison one outcome cell with NA
    Dataset na = d;
    auto pos = na.meta_tsv.find("S5\t");
    auto tab1 = na.meta_tsv.find('\t', pos + 3);
    auto tab2 = na.meta_tsv.find('\t', tab1 + 1);
    na.meta_tsv.replace(tab1 + 1, tab2 - tab1 - 1, "NA");
    TempDir dir2;
    RunConfig cfg_na = basic_config(dir2, na);
    try {
        ingest(cfg_na);
        FAIL("expected NA error");
    } catch (const InputError& e) {
        std::string msg = e.what();
        CHECK(msg.find("score") != std::string::npos);
        CHECK(msg.find("S5") != std::string::npos);
    }

    RunConfig bin = cfg;
    bin.outcome_kind = OutcomeKind::Binary;
    bin.outcome_col = "score";  // continuous values: not {0,1}
    CHECK_THROWS_AS(ingest(bin), InputError);
}

TEST_CASE("emit writes complete, reparsable outputs") {
    TempDir dir;
    Dataset d = make_dataset(24, 77);
    RunConfig cfg = basic_config(dir, d);
    IngestResult in;
    RunReport rep = run(cfg, &in);
    fs::create_directories(dir.file("out"));
    emit(in.tree, rep, dir.file("out"));

    std::istringstream nodes(read_file(dir.file("out/nodes.tsv")));
    std::string line;
    std::getline(nodes, line);
    CHECK(line.rfind("node_id\t", 0) == 0);
    int rows = 0;
    while (std::getline(nodes, line))
        if (!line.empty()) ++rows;
    CHECK(rows == static_cast<int>(rep.records.size()));

    std::istringstream global(read_file(dir.file("out/global.tsv")));
    std::getline(global, line);
    CHECK(line.rfind("global_p\t", 0) == 0);
    std::getline(global, line);
    CHECK(!line.empty());

    // the annotated tree reparses with the same leaf set
    std::string nwk = read_file(dir.file("out/annotated.nwk"));
    PhyloTree re = parse_newick(nwk);
    CHECK(re.leaf_labels() == in.tree.leaf_labels());
}

TEST_CASE("runs are byte-identical across repeats and input row order") {
    Dataset ordered = make_dataset(30, 202);
    Dataset shuffled = make_dataset(30, 202, /*shuffle_rows=*/true);

    auto run_to_text = [&](const Dataset& d, PvalueMode mode) {
        TempDir dir;
        RunConfig cfg = basic_config(dir, d);
        cfg.options.pvalue_mode = mode;
        cfg.options.max_perms = 2000;
        cfg.options.seed = 99;
        IngestResult in;
        RunReport rep = run(cfg, &in);
        fs::create_directories(dir.file("out"));
        emit(in.tree, rep, dir.file("out"));
        return read_file(dir.file("out/nodes.tsv")) + read_file(dir.file("out/global.tsv")) +
               read_file(dir.file("out/annotated.nwk"));
    };

    for (PvalueMode mode : {PvalueMode::Asymptotic, PvalueMode::Permutation}) {
        std::string a = run_to_text(ordered, mode);
        std::string b = run_to_text(ordered, mode);
        std::string c = run_to_text(shuffled, mode);
        CHECK(a == b);  // determinism
        CHECK(a == c);  // invariance to input row order
    }
}

TEST_CASE("config fingerprint tracks the options") {
    AnalyzeOptions a, b;
    CHECK(detail::options_fingerprint(a) == detail::options_fingerprint(b));
    b.seed = 1;
    CHECK(detail::options_fingerprint(a) != detail::options_fingerprint(b));
    b = a;
    b.fdr_q = 0.2;
    CHECK(detail::options_fingerprint(a) != detail::options_fingerprint(b));
}
