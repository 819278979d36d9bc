#pragma once

#include "treemed/error.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace treemed {

// samples x taxa nonnegative counts; depths[i] is the row sum.
struct CountTable {
    std::vector<std::string> sample_ids;
    std::vector<std::string> taxa;
    std::vector<std::vector<std::int64_t>> counts;  // [sample][taxon]
    std::vector<std::int64_t> depths;

    std::size_t n_samples() const { return sample_ids.size(); }
    std::size_t n_taxa() const { return taxa.size(); }

    void recompute_depths() {
        depths.assign(counts.size(), 0);
        for (std::size_t i = 0; i < counts.size(); ++i)
            for (std::int64_t c : counts[i]) depths[i] += c;
    }
};

namespace detail {

inline std::vector<std::string> split_tsv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, '\t')) out.push_back(field);
    return out;
}

inline std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace detail

// TSV: first column sample_id, header row of taxon names.
inline CountTable read_count_table(std::istream& in) {
    CountTable table;
    std::string line;
    if (!std::getline(in, line)) throw InputError("count table: empty file");
    auto header = detail::split_tsv_line(detail::strip_cr(line));
    if (header.size() < 2) throw InputError("count table: header needs sample_id plus taxa");
    table.taxa.assign(header.begin() + 1, header.end());
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        auto fields = detail::split_tsv_line(line);
        if (fields.size() != header.size())
            throw InputError("count table line " + std::to_string(lineno) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        table.sample_ids.push_back(fields[0]);
        std::vector<std::int64_t> row;
        row.reserve(table.taxa.size());
        for (std::size_t k = 1; k < fields.size(); ++k) {
            std::int64_t v = 0;
            try {
                v = std::stoll(fields[k]);
            } catch (const std::exception&) {
                throw InputError("count table line " + std::to_string(lineno) +
                                 ": non-integer count '" + fields[k] + "'");
            }
            if (v < 0)
                throw InputError("count table line " + std::to_string(lineno) +
                                 ": negative count");
            row.push_back(v);
        }
        table.counts.push_back(std::move(row));
    }
    table.recompute_depths();
    return table;
}

inline CountTable read_count_table_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open count table: " + path);
    return read_count_table(in);
}

// Generic sample_id-keyed metadata table (all fields kept as strings).
struct MetaTable {
    std::vector<std::string> columns;  // excluding the sample_id column
    std::vector<std::string> sample_ids;
    std::vector<std::vector<std::string>> rows;

    int column_index(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return static_cast<int>(i);
        return -1;
    }
};

inline MetaTable read_meta_table(std::istream& in) {
    MetaTable meta;
    std::string line;
    if (!std::getline(in, line)) throw InputError("metadata: empty file");
    auto header = detail::split_tsv_line(detail::strip_cr(line));
    if (header.size() < 2) throw InputError("metadata: header needs sample_id plus columns");
    meta.columns.assign(header.begin() + 1, header.end());
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        auto fields = detail::split_tsv_line(line);
        if (fields.size() != header.size())
            throw InputError("metadata line " + std::to_string(lineno) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        meta.sample_ids.push_back(fields[0]);
        meta.rows.emplace_back(fields.begin() + 1, fields.end());
    }
    return meta;
}

inline MetaTable read_meta_table_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open metadata: " + path);
    return read_meta_table(in);
}

}  // namespace treemed
