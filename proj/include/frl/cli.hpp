#pragma once

// Command-line front end: discretise, run, oracle-sweep, summarise.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "frl/errors.hpp"
#include "frl/evaluation.hpp"
#include "frl/fairness.hpp"
#include "frl/ingest.hpp"
#include "frl/learning.hpp"
#include "frl/serialize.hpp"

namespace frl::cli {

inline constexpr const char* kVersion = "frl 1.0.0";

enum ExitCode : int {
    kOk = 0,
    kUsage = 2,
    kIngest = 3,
    kLearning = 4,
    kInference = 5,
    kOracleMismatch = 6,
};

/// Everything a run depends on. Arcs are given by column name.
struct RunConfig {
    std::string input;
    std::string meta;  ///< metadata sidecar; when set, `input` is a discretised CSV
    std::string out = "out";
    IngestConfig ingest;
    std::size_t tabu_list_size = 10;
    std::size_t max_iterations = 100;
    double equivalent_sample_size = 1.0;
    std::size_t max_parents = 0;
    std::vector<std::pair<std::string, std::string>> forced_arcs;
    std::vector<std::pair<std::string, std::string>> forbidden_arcs;
    bool oracle_check = false;
    bool force_target_arcs = false;
    std::uint64_t brute_force_cap = kDefaultBruteForceCap;
    std::size_t jobs = 0;  ///< 0 means machine parallelism
    bool record_timings = true;
    std::size_t decile_bins = 10;
    std::size_t brier_bins = 10;
    std::size_t max_private = 0;  ///< oracle-sweep upper bound; 0 means every feature
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, input, meta, out, ingest, tabu_list_size, max_iterations,
                                                equivalent_sample_size, max_parents, forced_arcs, forbidden_arcs,
                                                oracle_check, force_target_arcs, brute_force_cap, jobs,
                                                record_timings, decile_bins, brier_bins, max_private)

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open config '" + path + "'");
    try {
        return nlohmann::json::parse(in, nullptr, true, true).get<RunConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw IngestError("malformed config '" + path + "': " + e.what());
    }
}

inline std::size_t effective_jobs(const RunConfig& cfg) {
    if (cfg.jobs > 0) return cfg.jobs;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Lines opening every output file: version, the config (output path
/// excluded, so that reruns elsewhere agree), and the seed.
inline std::vector<std::string> header_lines(const RunConfig& cfg, const std::string& command) {
    nlohmann::json j = cfg;
    j.erase("out");
    j.erase("jobs");
    return {std::string(kVersion) + " " + command, "config " + j.dump(), "seed " + std::to_string(cfg.ingest.seed)};
}

/// Creates `<out>/run-NNNN` with the lowest unused number.
inline std::filesystem::path make_run_dir(const std::string& out) {
    namespace fs = std::filesystem;
    fs::create_directories(out);
    for (int i = 1; i < 10000; ++i) {
        std::ostringstream name;
        name << "run-" << std::setw(4) << std::setfill('0') << i;
        const fs::path p = fs::path(out) / name.str();
        if (fs::create_directory(p)) return p;
    }
    throw Error("no free run directory under '" + out + "'");
}

inline std::ofstream open_output(const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot write '" + p.string() + "'");
    return f;
}

inline Dataset load_input(const RunConfig& cfg) {
    if (cfg.input.empty()) throw IngestError("no input file given");
    if (!cfg.meta.empty()) return load_discretised(cfg.input, cfg.meta);
    return load_csv(cfg.input, cfg.ingest);
}

inline VarId column_id(const Dataset& ds, const std::string& name) {
    for (const auto& v : ds.variables)
        if (v.name == name) return v.id;
    throw LearningError("arc refers to unknown column '" + name + "'");
}

inline ExperimentConfig experiment_config(const RunConfig& cfg, const Dataset& ds) {
    ExperimentConfig e;
    e.search.tabu_list_size = cfg.tabu_list_size;
    e.search.max_iterations = cfg.max_iterations;
    e.search.equivalent_sample_size = cfg.equivalent_sample_size;
    e.search.max_parents = cfg.max_parents;
    for (const auto& [a, b] : cfg.forced_arcs) e.search.forced_arcs.emplace_back(column_id(ds, a), column_id(ds, b));
    for (const auto& [a, b] : cfg.forbidden_arcs)
        e.search.forbidden_arcs.emplace_back(column_id(ds, a), column_id(ds, b));
    e.oracle_check = cfg.oracle_check;
    e.force_target_arcs = cfg.force_target_arcs;
    e.brute_force_cap = cfg.brute_force_cap;
    e.jobs = effective_jobs(cfg);
    e.record_timings = cfg.record_timings;
    return e;
}

inline int cmd_discretise(const RunConfig& cfg, std::ostream& log) {
    const Dataset ds = load_csv(cfg.input, cfg.ingest);
    const auto dir = make_run_dir(cfg.out);
    const auto header = header_lines(cfg, "discretise");
    {
        auto f = open_output(dir / "dataset.csv");
        write_discretised_csv(f, ds, header);
    }
    {
        auto f = open_output(dir / "dataset.meta.json");
        nlohmann::json meta = dataset_metadata(ds);
        meta["header"] = header;
        f << meta.dump(2) << '\n';
    }
    log << "wrote " << (dir / "dataset.csv").string() << " (" << ds.n_rows() << " rows, " << ds.n_columns() - 1
        << " features: " << ds.with_role(Role::Private).size() << " private, "
        << ds.with_role(Role::Public).size() << " public)\n";
    return kOk;
}

inline void write_reports(const std::filesystem::path& dir, const std::vector<FrlRecord>& records,
                          const std::optional<DatasetSummary>& summary, const RunConfig& cfg,
                          const std::vector<std::string>& header) {
    const DecileSummary deciles = decile_summary(records, cfg.decile_bins);
    std::optional<FiveNumberSummary> timing;
    const bool timed = !records.empty() && std::all_of(records.begin(), records.end(), [](const FrlRecord& r) {
        return r.time_bn_ns && r.time_mrf_ns && *r.time_mrf_ns > 0;
    });
    if (timed) timing = timing_ratios(records);
    {
        auto f = open_output(dir / "summary.txt");
        write_summary(f, summary, deciles, timing, records, header);
    }
    {
        auto f = open_output(dir / "deciles.csv");
        write_deciles_csv(f, deciles, header);
    }
    {
        auto f = open_output(dir / "scatter.csv");
        write_scatter_csv(f, records, header);
    }
    {
        auto f = open_output(dir / "brier_bins.csv");
        write_brier_bins_csv(f, records, cfg.brier_bins, header);
    }
}

/// One diagnostic line per oracle disagreement; the exit code flags any.
inline int report_mismatches(const std::vector<FoldResult>& folds, std::ostream& err) {
    std::size_t mismatches = 0;
    for (const auto& fold : folds)
        for (const auto& m : fold.mismatches) {
            err << "oracle mismatch: fold " << m.fold << ", instance " << m.instance_id << ": field "
                << detail::fmt(m.frl_mrf) << " vs brute force " << detail::fmt(m.frl_bruteforce) << '\n';
            ++mismatches;
        }
    return mismatches ? kOracleMismatch : kOk;
}

inline int cmd_run(const RunConfig& cfg, std::ostream& log, std::ostream& err) {
    const Dataset ds = load_input(cfg);
    const ExperimentConfig ecfg = experiment_config(cfg, ds);
    const auto folds = run_experiment(ds, ecfg);
    const auto records = pooled_records(folds);

    const auto dir = make_run_dir(cfg.out);
    const auto header = header_lines(cfg, "run");
    {
        auto f = open_output(dir / "records.csv");
        write_records_csv(f, ds, folds, header);
    }
    write_reports(dir, records, dataset_summary(ds, folds), cfg, header);
    std::filesystem::create_directory(dir / "networks");
    for (const auto& fold : folds) {
        auto f = open_output(dir / "networks" / ("fold-" + std::to_string(fold.fold) + ".json"));
        f << network_to_json(fold.bn).dump(2) << '\n';
    }

    log << "wrote " << records.size() << " records to " << dir.string() << '\n';
    return report_mismatches(folds, err);
}

struct SweepRow {
    std::size_t n_private = 0;
    std::string promoted;
    MethodComparison comparison;
};

/// Promotes features to private one at a time (already-private ones first,
/// then public ones in column order), retrains on the rows outside fold 0 and
/// compares both methods on the fold-0 rows.
inline std::vector<SweepRow> oracle_sweep(const Dataset& base, const ExperimentConfig& ecfg, std::size_t max_private) {
    std::vector<VarId> order = base.with_role(Role::Private);
    for (VarId v : base.with_role(Role::Public)) order.push_back(v);
    if (order.size() < 2) throw IngestError("oracle sweep needs at least two features");
    const std::size_t top = max_private ? std::min(max_private, order.size()) : order.size();

    std::vector<SweepRow> rows;
    for (std::size_t m = 2; m <= top; ++m) {
        Dataset ds = base;
        for (std::size_t i = 0; i < order.size(); ++i)
            ds.variables[order[i].value].role = i < m ? Role::Private : Role::Public;
        ExperimentConfig cfg = ecfg;
        cfg.oracle_check = false;
        StructureSearchConfig search = cfg.search;
        if (cfg.force_target_arcs)
            for (const auto& arc : target_to_feature_arcs(ds)) search.forced_arcs.push_back(arc);
        const FairnessModel model(learn_structure(ds, search, ds.rows_outside_fold(0)));
        std::vector<Instance> instances;
        const VarId y = ds.target();
        for (std::size_t r : ds.rows_in_fold(0)) instances.push_back({r, ds.row_assignment(r, y), ds.value(r, y.value)});
        rows.push_back({m, ds.variables[order[m - 1].value].name,
                        compare_methods(model, instances, cfg.brute_force_cap, cfg.oracle_tolerance)});
    }
    return rows;
}

inline int cmd_oracle_sweep(const RunConfig& cfg, std::ostream& log, std::ostream& err) {
    const Dataset ds = load_input(cfg);
    const auto rows = oracle_sweep(ds, experiment_config(cfg, ds), cfg.max_private);
    const auto dir = make_run_dir(cfg.out);
    auto f = open_output(dir / "sweep.csv");
    for (const auto& h : header_lines(cfg, "oracle-sweep")) f << "# " << h << '\n';
    f << "n_private,promoted,instances,comparable,degenerate,mismatches,ratio_min,ratio_q1,ratio_median,ratio_q3,"
         "ratio_max,mrf_median_ns\n";
    std::size_t mismatches = 0;
    for (const auto& row : rows) {
        const auto& c = row.comparison;
        mismatches += c.mismatches;
        f << row.n_private << ',' << detail::csv_field(row.promoted) << ',' << c.instances << ','
          << (c.comparable ? 1 : 0) << ',' << (c.degenerate ? 1 : 0) << ',' << c.mismatches;
        if (c.comparable && !c.ratios.empty()) {
            const auto s = five_number_summary(c.ratios);
            for (double v : {s.min, s.q1, s.median, s.q3, s.max}) f << ',' << detail::fmt(v);
        } else {
            f << ",,,,,";
        }
        std::vector<double> mrf(c.mrf_ns.begin(), c.mrf_ns.end());
        f << ',' << (mrf.empty() ? std::string() : detail::fmt(five_number_summary(mrf).median)) << '\n';
        if (!c.comparable)
            err << "|X| = " << row.n_private << ": private space exceeds the brute-force cap, field timing only\n";
    }
    log << "wrote " << (dir / "sweep.csv").string() << '\n';
    if (mismatches) {
        err << "oracle mismatch on " << mismatches << " instances\n";
        return kOracleMismatch;
    }
    return kOk;
}

inline int cmd_summarise(const RunConfig& cfg, std::ostream& log) {
    std::ifstream in(cfg.input, std::ios::binary);
    if (!in) throw IngestError("cannot open records file '" + cfg.input + "'");
    std::vector<FrlRecord> records;
    for (auto& row : read_records_csv(in)) records.push_back(std::move(row.record));
    const auto dir = make_run_dir(cfg.out);
    write_reports(dir, records, std::nullopt, cfg, header_lines(cfg, "summarise"));
    log << "wrote summary of " << records.size() << " records to " << dir.string() << '\n';
    return kOk;
}

/// Parses `args` (without the program name), runs the command and maps
/// failures to exit codes with a one-line diagnostic on `err`.
inline int main(const std::vector<std::string>& args, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Fairness robustness levels of Bayesian-network classifiers", "frl"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> folds, bins, jobs, decile_bins, brier_bins, max_private;
    std::optional<double> ess;
    std::optional<std::string> input, meta, out;
    bool force = false, oracle = false, no_timings = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration");
        sub->add_option("--input", input, "input CSV");
        sub->add_option("--out", out, "output directory (a run-NNNN subdirectory is created)");
        sub->add_option("--seed", seed, "fold assignment seed");
        sub->add_option("--folds", folds, "number of cross-validation folds");
        sub->add_option("--bins", bins, "quantile bins for continuous columns");
    };
    auto add_model = [&](CLI::App* sub) {
        sub->add_option("--meta", meta, "metadata sidecar of a discretised input");
        sub->add_option("--ess", ess, "equivalent sample size of the Laplace prior");
        sub->add_flag("--force-target-arcs", force, "force an arc from the target to every feature");
        sub->add_option("--jobs", jobs, "worker threads (default: machine parallelism)");
    };

    auto* discretise = app.add_subcommand("discretise", "discretise a raw CSV and assign folds");
    add_common(discretise);
    auto* run = app.add_subcommand("run", "cross-validated FRL experiment");
    add_common(run);
    add_model(run);
    run->add_flag("--oracle", oracle, "check every FRL against the brute-force sweep");
    run->add_flag("--no-timings", no_timings, "write zero durations for reproducible outputs");
    run->add_option("--decile-bins", decile_bins, "FRL bins in the decile table");
    run->add_option("--brier-bins", brier_bins, "Brier-score bins for the box-plot data");
    auto* sweep = app.add_subcommand("oracle-sweep", "time both FRL methods while promoting features to private");
    add_common(sweep);
    add_model(sweep);
    sweep->add_option("--max-private", max_private, "stop the sweep at this many private features");
    auto* summarise = app.add_subcommand("summarise", "rebuild reports from a records CSV");
    summarise->add_option("--config", config_path, "JSON run configuration");
    summarise->add_option("--input", input, "records CSV")->required();
    summarise->add_option("--out", out, "output directory");
    summarise->add_option("--decile-bins", decile_bins, "FRL bins in the decile table");
    summarise->add_option("--brier-bins", brier_bins, "Brier-score bins for the box-plot data");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        log << app.help();
        return kOk;
    } catch (const CLI::CallForVersion&) {
        log << kVersion << '\n';
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsage;
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
        if (input) cfg.input = *input;
        if (meta) cfg.meta = *meta;
        if (out) cfg.out = *out;
        if (seed) cfg.ingest.seed = *seed;
        if (folds) cfg.ingest.n_folds = *folds;
        if (bins) cfg.ingest.n_bins = *bins;
        if (jobs) cfg.jobs = *jobs;
        if (ess) cfg.equivalent_sample_size = *ess;
        if (decile_bins) cfg.decile_bins = *decile_bins;
        if (brier_bins) cfg.brier_bins = *brier_bins;
        if (max_private) cfg.max_private = *max_private;
        if (force) cfg.force_target_arcs = true;
        if (oracle) cfg.oracle_check = true;
        if (no_timings) cfg.record_timings = false;

        if (*discretise) return cmd_discretise(cfg, log);
        if (*run) return cmd_run(cfg, log, err);
        if (*sweep) return cmd_oracle_sweep(cfg, log, err);
        return cmd_summarise(cfg, log);
    } catch (const IngestError& e) {
        err << "ingest error: " << e.what() << '\n';
        return kIngest;
    } catch (const LearningError& e) {
        err << "learning error: " << e.what() << '\n';
        return kLearning;
    } catch (const OracleMismatchError& e) {
        err << "oracle mismatch: " << e.what() << '\n';
        return kOracleMismatch;
    } catch (const InferenceError& e) {
        err << "inference error: " << e.what() << '\n';
        return kInference;
    } catch (const ModelError& e) {
        err << "model error: " << e.what() << '\n';
        return kInference;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }
}

} // namespace frl::cli
