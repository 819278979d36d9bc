#pragma once

#include "treemed/error.hpp"
#include "treemed/simulate.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace treemed {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::string unquote(std::string v) {
    if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') ||
                          (v.front() == '\'' && v.back() == '\'')))
        return v.substr(1, v.size() - 2);
    return v;
}

}  // namespace detail

// Flat key = value file (TOML-style scalars; tables and arrays are not
// needed for simulation designs).
inline std::map<std::string, std::string> read_design_kv(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw InputError("design file line " + std::to_string(lineno) +
                             ": expected key = value");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::unquote(detail::trim(line.substr(eq + 1)));
        if (key.empty() || value.empty())
            throw InputError("design file line " + std::to_string(lineno) +
                             ": empty key or value");
        kv[key] = value;
    }
    return kv;
}

inline SimDesign parse_sim_design(std::istream& in) {
    auto kv = read_design_kv(in);
    SimDesign d;
    auto geti = [&](const char* k, int& dst) {
        if (kv.count(k)) dst = std::stoi(kv[k]);
    };
    auto getl = [&](const char* k, long& dst) {
        if (kv.count(k)) dst = std::stol(kv[k]);
    };
    auto getd = [&](const char* k, double& dst) {
        if (kv.count(k)) dst = std::stod(kv[k]);
    };
    geti("n", d.n);
    geti("n_taxa", d.n_taxa);
    geti("n_alpha", d.n_alpha);
    geti("n_beta", d.n_beta);
    geti("replicates", d.replicates);
    getd("treatment_scale", d.treatment_scale);
    getd("outcome_scale", d.outcome_scale);
    getd("profile_sigma", d.profile_sigma);
    getd("sample_sigma", d.sample_sigma);
    getd("fdr_q", d.fdr_q);
    getd("alpha_level", d.alpha_level);
    getl("depth_min", d.depth_min);
    getl("depth_max", d.depth_max);
    getl("max_perms", d.max_perms);
    if (kv.count("seed")) d.seed = std::stoull(kv["seed"]);
    if (kv.count("clustered")) d.clustered = kv["clustered"] == "true";
    if (kv.count("overlap")) {
        const std::string& v = kv["overlap"];
        if (v == "complete")
            d.overlap = Overlap::Complete;
        else if (v == "partial")
            d.overlap = Overlap::Partial;
        else if (v == "disjoint")
            d.overlap = Overlap::Disjoint;
        else
            throw InputError("design file: overlap must be complete|partial|disjoint");
    }
    if (kv.count("outcome_type")) {
        const std::string& v = kv["outcome_type"];
        if (v == "continuous")
            d.outcome_kind = OutcomeKind::Continuous;
        else if (v == "binary")
            d.outcome_kind = OutcomeKind::Binary;
        else
            throw InputError("design file: outcome_type must be continuous|binary");
    }
    if (kv.count("pvalue_mode")) {
        const std::string& v = kv["pvalue_mode"];
        if (v == "asymptotic")
            d.pvalue_mode = PvalueMode::Asymptotic;
        else if (v == "permutation")
            d.pvalue_mode = PvalueMode::Permutation;
        else if (v == "auto")
            d.pvalue_mode = PvalueMode::Auto;
        else
            throw InputError("design file: pvalue_mode must be auto|asymptotic|permutation");
    }
    return d;
}

inline SimDesign parse_sim_design_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open design file: " + path);
    return parse_sim_design(in);
}

}  // namespace treemed
