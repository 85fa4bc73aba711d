#pragma once

// CSV ingestion: missing-row filtering, quantile and median discretisation,
// stratified fold assignment, and the discretised CSV + JSON sidecar format.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "json.hpp"

#include "frl/errors.hpp"
#include "frl/factor.hpp"

namespace frl {

struct IngestConfig {
    std::string target_column;
    std::vector<std::string> private_columns;
    std::vector<std::string> continuous_columns;
    std::vector<std::string> drop_columns;
    std::vector<std::string> missing_tokens{"", "NA"};
    std::size_t n_bins = 4;
    std::size_t n_folds = 10;
    std::uint64_t seed = 0;
    bool target_median_split = false;

    void validate() const {
        if (target_column.empty()) throw IngestError("no target column configured");
        if (std::find(private_columns.begin(), private_columns.end(), target_column) != private_columns.end())
            throw IngestError("target column '" + target_column + "' is also declared private");
        if (n_bins < 2) throw IngestError("n_bins must be at least 2");
        if (n_folds < 2) throw IngestError("n_folds must be at least 2");
    }

    friend bool operator==(const IngestConfig&, const IngestConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(IngestConfig, target_column, private_columns, continuous_columns,
                                                drop_columns, missing_tokens, n_bins, n_folds, seed,
                                                target_median_split)

/// Discretised instance table with fold assignment.
struct Dataset {
    std::vector<DiscreteVariable> variables;  ///< ids are column positions
    std::vector<std::uint32_t> cells;         ///< row-major, one row per instance
    std::vector<std::uint32_t> fold_of;
    std::size_t n_folds = 0;
    std::uint64_t seed = 0;
    std::map<std::string, std::vector<double>> discretisation_edges;
    std::optional<double> target_median;

    std::size_t n_columns() const { return variables.size(); }
    std::size_t n_rows() const { return variables.empty() ? 0 : cells.size() / variables.size(); }

    std::uint32_t value(std::size_t row, std::size_t col) const { return cells[row * variables.size() + col]; }

    VarId target() const {
        for (const auto& v : variables)
            if (v.role == Role::Target) return v.id;
        throw IngestError("dataset has no target variable");
    }

    std::vector<VarId> with_role(Role role) const {
        std::vector<VarId> out;
        for (const auto& v : variables)
            if (v.role == role) out.push_back(v.id);
        return out;
    }

    /// Full assignment of a row, optionally leaving out one variable.
    Assignment row_assignment(std::size_t row, std::optional<VarId> skip = std::nullopt) const {
        Assignment a;
        for (std::size_t c = 0; c < variables.size(); ++c)
            if (!skip || variables[c].id != *skip) a.set(variables[c].id, value(row, c));
        return a;
    }

    std::vector<std::size_t> rows_in_fold(std::size_t fold) const {
        std::vector<std::size_t> out;
        for (std::size_t r = 0; r < fold_of.size(); ++r)
            if (fold_of[r] == fold) out.push_back(r);
        return out;
    }

    std::vector<std::size_t> rows_outside_fold(std::size_t fold) const {
        std::vector<std::size_t> out;
        for (std::size_t r = 0; r < fold_of.size(); ++r)
            if (fold_of[r] != fold) out.push_back(r);
        return out;
    }

    void validate() const {
        int targets = 0;
        for (std::size_t c = 0; c < variables.size(); ++c) {
            if (variables[c].id != VarId(static_cast<std::uint32_t>(c)))
                throw IngestError("dataset variable ids must equal column positions");
            variables[c].validate();
            if (variables[c].role == Role::Target) ++targets;
        }
        if (targets != 1) throw IngestError("dataset must have exactly one target variable");
        if (!variables.empty() && cells.size() % variables.size() != 0)
            throw IngestError("ragged dataset table");
        for (std::size_t i = 0; i < cells.size(); ++i)
            if (cells[i] >= variables[i % variables.size()].cardinality())
                throw IngestError("state index out of range in row " + std::to_string(i / variables.size()));
        if (fold_of.size() != n_rows()) throw IngestError("fold assignment does not cover every row");
        for (auto f : fold_of)
            if (f >= n_folds) throw IngestError("fold index out of range");
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct QuantileBins {
    std::vector<std::uint32_t> states;
    std::vector<double> edges;
    std::size_t cardinality() const { return edges.size() + 1; }
};

/// Equal-frequency discretisation with nearest-rank quantile cut points.
///
/// Edge i is the ceil(i*N/n_bins)-th smallest value; duplicate edges and edges
/// no value exceeds are dropped, so fewer than n_bins states may remain. A value
/// maps to the number of edges strictly below it.
inline QuantileBins discretise_quantile(const std::vector<double>& values, std::size_t n_bins) {
    if (values.empty()) throw IngestError("cannot discretise an empty column");
    if (n_bins < 2) throw IngestError("n_bins must be at least 2");
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();

    QuantileBins out;
    for (std::size_t i = 1; i < n_bins; ++i) {
        const std::size_t rank = (i * n + n_bins - 1) / n_bins;
        const double edge = sorted[std::max<std::size_t>(rank, 1) - 1];
        if (edge >= sorted.back()) continue;
        if (out.edges.empty() || edge > out.edges.back()) out.edges.push_back(edge);
    }
    out.states.reserve(n);
    for (double v : values)
        out.states.push_back(static_cast<std::uint32_t>(
            std::lower_bound(out.edges.begin(), out.edges.end(), v) - out.edges.begin()));
    return out;
}

struct MedianSplit {
    std::vector<std::uint32_t> states;
    double median = 0.0;
};

/// Values at or below the sample median map to 0, the rest to 1.
inline MedianSplit binarise_target_by_median(const std::vector<double>& values) {
    if (values.empty()) throw IngestError("cannot binarise an empty column");
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    MedianSplit out;
    out.median = n % 2 == 1 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
    for (double v : values) out.states.push_back(v <= out.median ? 0u : 1u);
    return out;
}

/// Unbiased integer in [0, n) from raw mt19937_64 output (portable, unlike
/// std::uniform_int_distribution).
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t r = rng();
        if (r >= threshold) return r % n;
    }
}

template <typename T>
void portable_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[uniform_below(rng, i)]);
}

/// Stratified fold assignment: each class is shuffled, then all classes are
/// dealt round-robin with one pointer carried across classes.
inline std::vector<std::uint32_t> stratified_folds(const std::vector<std::uint32_t>& targets, std::size_t k,
                                                   std::uint64_t seed) {
    if (k < 2) throw IngestError("need at least two folds");
    std::mt19937_64 rng(seed);
    std::map<std::uint32_t, std::vector<std::size_t>> by_class;
    for (std::size_t r = 0; r < targets.size(); ++r) by_class[targets[r]].push_back(r);

    std::vector<std::uint32_t> fold(targets.size(), 0);
    std::size_t next = 0;
    for (auto& [cls, rows] : by_class) {
        portable_shuffle(rows, rng);
        for (std::size_t r : rows) {
            fold[r] = static_cast<std::uint32_t>(next);
            next = (next + 1) % k;
        }
    }
    return fold;
}

/// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF line ends.
/// Lines starting with '#' before the header are skipped.
inline std::vector<std::vector<std::string>> read_csv(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool at_line_start = true;
    bool field_started = false;
    char ch;
    auto end_row = [&] {
        row.push_back(std::move(field));
        field.clear();
        if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
        row.clear();
        at_line_start = true;
        field_started = false;
    };
    while (in.get(ch)) {
        if (in_quotes) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    in.get(ch);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
            continue;
        }
        if (at_line_start && ch == '#' && rows.empty()) {
            std::string discard;
            std::getline(in, discard);
            continue;
        }
        at_line_start = false;
        if (ch == '"' && !field_started) {
            in_quotes = true;
            field_started = true;
        } else if (ch == ',') {
            row.push_back(std::move(field));
            field.clear();
            field_started = false;
        } else if (ch == '\n') {
            end_row();
        } else if (ch == '\r') {
            if (in.peek() == '\n') in.get(ch);
            end_row();
        } else {
            field.push_back(ch);
            field_started = true;
        }
    }
    if (in_quotes) throw IngestError("unterminated quoted field");
    if (!field.empty() || !row.empty()) end_row();
    return rows;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::vector<std::string> interval_labels(const std::vector<double>& edges) {
    std::vector<std::string> labels;
    if (edges.empty()) return {"all"};
    labels.push_back("<=" + format_number(edges.front()));
    for (std::size_t i = 1; i < edges.size(); ++i)
        labels.push_back("(" + format_number(edges[i - 1]) + "," + format_number(edges[i]) + "]");
    labels.push_back(">" + format_number(edges.back()));
    return labels;
}

// A column with a single observed state keeps a never-observed placeholder
// state so every variable has cardinality >= 2.
inline void pad_single_state(std::vector<std::string>& labels) {
    if (labels.size() == 1) labels.push_back(labels[0] == "__unobserved__" ? "__unobserved2__" : "__unobserved__");
}

inline bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

} // namespace detail

/// Parses, filters and discretises a raw CSV table into a Dataset.
inline Dataset load_csv(std::istream& in, const IngestConfig& config) {
    config.validate();
    auto table = read_csv(in);
    if (table.empty()) throw IngestError("CSV has no header row");
    std::vector<std::string> header;
    for (const auto& h : table.front()) header.emplace_back(detail::trim(h));
    table.erase(table.begin());

    auto column_of = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw IngestError("column '" + name + "' not found in CSV header");
        return static_cast<std::size_t>(it - header.begin());
    };
    column_of(config.target_column);
    for (const auto& c : config.private_columns) column_of(c);
    for (const auto& c : config.continuous_columns) column_of(c);
    for (const auto& c : config.drop_columns) column_of(c);
    if (detail::contains(config.drop_columns, config.target_column))
        throw IngestError("target column '" + config.target_column + "' is dropped");

    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (!detail::contains(config.drop_columns, header[c])) kept.push_back(c);

    std::vector<const std::vector<std::string>*> rows;
    for (std::size_t r = 0; r < table.size(); ++r) {
        const auto& row = table[r];
        if (row.size() != header.size())
            throw IngestError("row " + std::to_string(r + 2) + " has " + std::to_string(row.size()) +
                              " fields, header has " + std::to_string(header.size()));
        bool missing = false;
        for (std::size_t c : kept)
            if (detail::contains(config.missing_tokens, std::string(detail::trim(row[c])))) missing = true;
        if (!missing) rows.push_back(&row);
    }
    if (rows.empty()) throw IngestError("no rows left after removing rows with missing values");

    Dataset ds;
    ds.n_folds = config.n_folds;
    ds.seed = config.seed;
    const std::size_t n = rows.size();
    std::vector<std::vector<std::uint32_t>> columns;
    for (std::size_t k = 0; k < kept.size(); ++k) {
        const std::size_t c = kept[k];
        const std::string& name = header[c];
        DiscreteVariable var;
        var.id = VarId(static_cast<std::uint32_t>(k));
        var.name = name;
        var.role = name == config.target_column               ? Role::Target
                   : detail::contains(config.private_columns, name) ? Role::Private
                                                                    : Role::Public;
        std::vector<std::uint32_t> states;

        const bool median = var.role == Role::Target && config.target_median_split;
        const bool continuous = detail::contains(config.continuous_columns, name);
        if (median || continuous) {
            std::vector<double> values;
            values.reserve(n);
            for (std::size_t r = 0; r < n; ++r) {
                auto v = detail::parse_number((*rows[r])[c]);
                if (!v) throw IngestError("non-numeric value '" + (*rows[r])[c] + "' in numeric column '" + name + "'");
                values.push_back(*v);
            }
            if (median) {
                auto split = binarise_target_by_median(values);
                states = std::move(split.states);
                ds.target_median = split.median;
                var.states = {"<=" + detail::format_number(split.median), ">" + detail::format_number(split.median)};
            } else {
                auto bins = discretise_quantile(values, config.n_bins);
                states = std::move(bins.states);
                var.states = detail::interval_labels(bins.edges);
                ds.discretisation_edges[name] = std::move(bins.edges);
            }
        } else {
            std::map<std::string, std::uint32_t> index;
            for (std::size_t r = 0; r < n; ++r) {
                std::string label((detail::trim((*rows[r])[c])));
                auto [it, inserted] = index.emplace(label, static_cast<std::uint32_t>(var.states.size()));
                if (inserted) var.states.push_back(label);
                states.push_back(it->second);
            }
        }
        detail::pad_single_state(var.states);
        ds.variables.push_back(std::move(var));
        columns.push_back(std::move(states));
    }

    ds.cells.resize(n * kept.size());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < kept.size(); ++k) ds.cells[r * kept.size() + k] = columns[k][r];

    const std::size_t target_col = ds.target().value;
    ds.fold_of = stratified_folds(columns[target_col], config.n_folds, config.seed);
    ds.validate();
    return ds;
}

inline Dataset load_csv(const std::string& path, const IngestConfig& config) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open '" + path + "'");
    return load_csv(in, config);
}

/// Relative frequency of the least frequent target class.
inline double imbalance(const Dataset& ds) {
    const VarId y = ds.target();
    std::vector<std::size_t> counts(ds.variables[y.value].cardinality(), 0);
    for (std::size_t r = 0; r < ds.n_rows(); ++r) ++counts[ds.value(r, y.value)];
    std::size_t least = std::numeric_limits<std::size_t>::max();
    for (auto c : counts)
        if (c > 0) least = std::min(least, c);
    return ds.n_rows() == 0 ? 0.0 : static_cast<double>(least) / static_cast<double>(ds.n_rows());
}

/// Sidecar metadata describing a discretised dataset.
inline nlohmann::json dataset_metadata(const Dataset& ds) {
    nlohmann::json vars = nlohmann::json::array();
    for (const auto& v : ds.variables)
        vars.push_back({{"id", v.id.value}, {"name", v.name}, {"role", to_string(v.role)}, {"states", v.states}});
    nlohmann::json meta = {{"format", "frl-dataset"},
                           {"version", 1},
                           {"n_rows", ds.n_rows()},
                           {"n_folds", ds.n_folds},
                           {"seed", ds.seed},
                           {"variables", vars},
                           {"discretisation_edges", ds.discretisation_edges},
                           {"folds", ds.fold_of}};
    meta["target_median"] = ds.target_median ? nlohmann::json(*ds.target_median) : nlohmann::json(nullptr);
    return meta;
}

/// Writes state indices as CSV, preceded by `header_lines` as '#' comments.
inline void write_discretised_csv(std::ostream& out, const Dataset& ds, const std::vector<std::string>& header_lines) {
    for (const auto& h : header_lines) out << "# " << h << '\n';
    for (std::size_t c = 0; c < ds.n_columns(); ++c) {
        const std::string& name = ds.variables[c].name;
        const bool quote = name.find_first_of(",\"\n\r") != std::string::npos;
        if (c) out << ',';
        if (quote) {
            out << '"';
            for (char ch : name) out << (ch == '"' ? "\"\"" : std::string(1, ch));
            out << '"';
        } else {
            out << name;
        }
    }
    out << '\n';
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        for (std::size_t c = 0; c < ds.n_columns(); ++c) {
            if (c) out << ',';
            out << ds.value(r, c);
        }
        out << '\n';
    }
}

/// Inverse of write_discretised_csv + dataset_metadata.
inline Dataset load_discretised(std::istream& csv, const nlohmann::json& meta) {
    if (meta.value("format", "") != "frl-dataset") throw IngestError("sidecar is not an frl-dataset file");
    Dataset ds;
    for (const auto& v : meta.at("variables"))
        ds.variables.push_back({VarId(v.at("id").get<std::uint32_t>()), v.at("name").get<std::string>(),
                                v.at("states").get<std::vector<std::string>>(),
                                role_from_string(v.at("role").get<std::string>())});
    ds.n_folds = meta.at("n_folds").get<std::size_t>();
    ds.seed = meta.at("seed").get<std::uint64_t>();
    ds.discretisation_edges = meta.at("discretisation_edges").get<std::map<std::string, std::vector<double>>>();
    ds.fold_of = meta.at("folds").get<std::vector<std::uint32_t>>();
    if (!meta.at("target_median").is_null()) ds.target_median = meta.at("target_median").get<double>();

    auto table = read_csv(csv);
    if (table.empty()) throw IngestError("discretised CSV has no header");
    if (table.front().size() != ds.variables.size()) throw IngestError("discretised CSV header does not match sidecar");
    for (std::size_t c = 0; c < ds.variables.size(); ++c)
        if (table.front()[c] != ds.variables[c].name)
            throw IngestError("discretised CSV column '" + table.front()[c] + "' does not match sidecar");
    for (std::size_t r = 1; r < table.size(); ++r) {
        if (table[r].size() != ds.variables.size()) throw IngestError("ragged row in discretised CSV");
        for (const auto& cell : table[r]) {
            std::uint32_t v = 0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || ptr != cell.data() + cell.size())
                throw IngestError("non-integer cell '" + cell + "' in discretised CSV");
            ds.cells.push_back(v);
        }
    }
    if (meta.at("n_rows").get<std::size_t>() != ds.n_rows()) throw IngestError("row count does not match sidecar");
    ds.validate();
    return ds;
}

inline Dataset load_discretised(const std::string& csv_path, const std::string& meta_path) {
    std::ifstream csv(csv_path, std::ios::binary);
    if (!csv) throw IngestError("cannot open '" + csv_path + "'");
    std::ifstream m(meta_path);
    if (!m) throw IngestError("cannot open '" + meta_path + "'");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(m);
    } catch (const nlohmann::json::exception& e) {
        throw IngestError("malformed sidecar '" + meta_path + "': " + e.what());
    }
    return load_discretised(csv, meta);
}

} // namespace frl
