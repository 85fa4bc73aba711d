#pragma once

// Cross-validated FRL experiments and their aggregate reports.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "frl/errors.hpp"
#include "frl/fairness.hpp"
#include "frl/ingest.hpp"
#include "frl/learning.hpp"
#include "frl/model.hpp"

namespace frl {

struct ExperimentConfig {
    StructureSearchConfig search;
    bool oracle_check = false;
    bool force_target_arcs = false;
    std::uint64_t brute_force_cap = kDefaultBruteForceCap;
    std::size_t jobs = 1;
    bool record_timings = true;  ///< false writes zero durations, making outputs reproducible byte for byte
    double oracle_tolerance = kTolerance;
};

struct OracleMismatch {
    std::size_t fold = 0;
    std::size_t instance_id = 0;
    double frl_mrf = 0.0;
    double frl_bruteforce = 0.0;
};

struct FoldResult {
    std::size_t fold = 0;
    BayesianNetwork bn;
    bool fair_by_design = false;
    std::size_t private_space = 1;  ///< joint states of the private blanket features
    std::vector<FrlRecord> records;  ///< sorted by instance id
    std::vector<OracleMismatch> mismatches;
};

/// Forced arcs from the target to every feature.
inline std::vector<Arc> target_to_feature_arcs(const Dataset& ds) {
    std::vector<Arc> arcs;
    const VarId y = ds.target();
    for (const auto& v : ds.variables)
        if (v.id != y) arcs.emplace_back(y, v.id);
    return arcs;
}

inline FoldResult run_fold(const Dataset& ds, const ExperimentConfig& cfg, std::size_t fold) {
    const VarId y = ds.target();
    const auto train = ds.rows_outside_fold(fold);
    const auto test = ds.rows_in_fold(fold);

    std::vector<std::size_t> class_counts(ds.variables[y.value].cardinality(), 0);
    for (std::size_t r : train) ++class_counts[ds.value(r, y.value)];
    for (std::size_t c = 0; c < class_counts.size(); ++c)
        if (class_counts[c] == 0)
            throw LearningError("fold " + std::to_string(fold) + ": training rows contain no instance of class '" +
                                ds.variables[y.value].states[c] + "'");

    StructureSearchConfig search = cfg.search;
    if (cfg.force_target_arcs)
        for (const auto& arc : target_to_feature_arcs(ds))
            if (std::find(search.forced_arcs.begin(), search.forced_arcs.end(), arc) == search.forced_arcs.end())
                search.forced_arcs.push_back(arc);

    FoldResult result;
    result.fold = fold;
    result.bn = learn_structure(ds, search, train);
    const FairnessModel model(result.bn);
    result.fair_by_design = model.fair_by_design();
    result.private_space = private_space_size(model);

    for (std::size_t r : test) {
        const Instance inst{r, ds.row_assignment(r, y), ds.value(r, y.value)};
        FrlRecord rec = frl(model, inst);
        if (cfg.oracle_check) {
            const FrlRecord bf = frl_bruteforce(model, inst, cfg.brute_force_cap);
            if (std::abs(bf.frl - rec.frl) > cfg.oracle_tolerance)
                result.mismatches.push_back({fold, r, rec.frl, bf.frl});
            rec.time_bn_ns = bf.time_bn_ns;
        }
        if (!cfg.record_timings) {
            rec.time_mrf_ns = 0;
            if (rec.time_bn_ns) rec.time_bn_ns = 0;
        }
        result.records.push_back(std::move(rec));
    }
    return result;
}

/// Trains on k-1 folds and scores the held-out fold, for every fold.
/// Folds are processed by up to `cfg.jobs` worker threads.
inline std::vector<FoldResult> run_experiment(const Dataset& ds, const ExperimentConfig& cfg) {
    if (ds.n_folds < 2) throw LearningError("dataset needs at least two folds");
    std::vector<FoldResult> results(ds.n_folds);
    const std::size_t workers = std::clamp<std::size_t>(cfg.jobs, 1, ds.n_folds);
    if (workers == 1) {
        for (std::size_t f = 0; f < ds.n_folds; ++f) results[f] = run_fold(ds, cfg, f);
        return results;
    }

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t f = next++; f < ds.n_folds; f = next++) {
                    try {
                        results[f] = run_fold(ds, cfg, f);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                    }
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
    return results;
}

inline std::vector<FrlRecord> pooled_records(const std::vector<FoldResult>& folds) {
    std::vector<FrlRecord> out;
    for (const auto& f : folds) out.insert(out.end(), f.records.begin(), f.records.end());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.instance_id < b.instance_id; });
    return out;
}

struct DecileBin {
    bool zero_bin = false;
    double frl_low = 0.0;
    double frl_high = 0.0;
    std::size_t count = 0;
    double accuracy = 0.0;
    double mean_brier = 0.0;
};

struct DecileSummary {
    std::vector<DecileBin> bins;  ///< zero-FRL bin first when present
    std::optional<std::string> warning;
};

/// Equal-frequency bins over the positive-FRL records, preceded by a dedicated
/// bin for records with zero FRL. Ties are ordered by instance id.
inline DecileSummary decile_summary(std::span<const FrlRecord> records, std::size_t n_bins = 10) {
    if (records.empty()) throw Error("decile summary of an empty record list");
    if (n_bins == 0) throw Error("decile summary needs at least one bin");

    auto summarize = [](std::span<const FrlRecord* const> group, bool zero) {
        DecileBin b;
        b.zero_bin = zero;
        b.count = group.size();
        b.frl_low = group.front()->frl;
        b.frl_high = group.back()->frl;
        double correct = 0.0, brier_sum = 0.0;
        for (const auto* r : group) {
            correct += r->predicted_class == r->true_class ? 1.0 : 0.0;
            brier_sum += r->brier;
        }
        b.accuracy = correct / static_cast<double>(group.size());
        b.mean_brier = brier_sum / static_cast<double>(group.size());
        return b;
    };

    std::vector<const FrlRecord*> zero, positive;
    for (const auto& r : records) (r.frl == 0.0 ? zero : positive).push_back(&r);
    std::sort(positive.begin(), positive.end(), [](const FrlRecord* a, const FrlRecord* b) {
        return a->frl != b->frl ? a->frl < b->frl : a->instance_id < b->instance_id;
    });

    DecileSummary out;
    if (!zero.empty()) {
        std::sort(zero.begin(), zero.end(),
                  [](const FrlRecord* a, const FrlRecord* b) { return a->instance_id < b->instance_id; });
        out.bins.push_back(summarize(zero, true));
    }
    std::size_t bins = n_bins;
    if (positive.size() < n_bins) {
        bins = positive.size();
        if (!positive.empty())
            out.warning = "only " + std::to_string(positive.size()) + " positive-FRL records; using " +
                          std::to_string(bins) + " bins";
    }
    std::size_t start = 0;
    for (std::size_t b = 0; b < bins; ++b) {
        const std::size_t size = positive.size() / bins + (b < positive.size() % bins ? 1 : 0);
        out.bins.push_back(summarize(std::span<const FrlRecord* const>(positive.data() + start, size), false));
        start += size;
    }
    return out;
}

struct FiveNumberSummary {
    std::size_t count = 0;
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

/// Linear-interpolation quantiles of `values` (need not be sorted).
inline FiveNumberSummary five_number_summary(std::vector<double> values) {
    if (values.empty()) throw Error("five-number summary of an empty sample");
    std::sort(values.begin(), values.end());
    auto q = [&](double p) {
        const double pos = p * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    return {values.size(), values.front(), q(0.25), q(0.5), q(0.75), values.back()};
}

/// Per-record brute-force over field-reduction time.
inline std::vector<double> timing_ratio_values(std::span<const FrlRecord> records) {
    std::vector<double> ratios;
    for (const auto& r : records) {
        if (!r.time_bn_ns || !r.time_mrf_ns)
            throw Error("record " + std::to_string(r.instance_id) + " lacks brute-force or field timing");
        if (*r.time_mrf_ns <= 0) throw Error("record " + std::to_string(r.instance_id) + " has no field timing");
        ratios.push_back(static_cast<double>(*r.time_bn_ns) / static_cast<double>(*r.time_mrf_ns));
    }
    return ratios;
}

inline FiveNumberSummary timing_ratios(std::span<const FrlRecord> records) {
    return five_number_summary(timing_ratio_values(records));
}

struct MethodComparison {
    std::size_t instances = 0;
    std::size_t mismatches = 0;
    bool comparable = true;   ///< false when the private space exceeds the brute-force cap
    bool degenerate = false;  ///< no private feature in the blanket, so every FRL is zero
    std::vector<double> ratios;
    std::vector<std::int64_t> mrf_ns;
};

/// Times the field reduction against the brute-force sweep on each instance and
/// counts FRL disagreements beyond `tolerance`.
inline MethodComparison compare_methods(const FairnessModel& model, std::span<const Instance> instances,
                                        std::uint64_t cap = kDefaultBruteForceCap, double tolerance = kTolerance) {
    MethodComparison out;
    out.instances = instances.size();
    out.degenerate = model.fair_by_design();
    out.comparable = private_space_size(model) <= cap;
    for (const auto& inst : instances) {
        const FrlRecord fast = frl(model, inst);
        out.mrf_ns.push_back(*fast.time_mrf_ns);
        if (!out.comparable) continue;
        const FrlRecord slow = frl_bruteforce(model, inst, cap);
        if (std::abs(fast.frl - slow.frl) > tolerance) ++out.mismatches;
        out.ratios.push_back(static_cast<double>(*slow.time_bn_ns) /
                             static_cast<double>(std::max<std::int64_t>(*fast.time_mrf_ns, 1)));
    }
    return out;
}

struct DatasetSummary {
    std::size_t n_private = 0;
    std::size_t n_public = 0;
    std::size_t n_records = 0;
    double imbalance = 0.0;
    std::size_t fair_by_design_folds = 0;
    std::size_t n_folds = 0;
};

inline DatasetSummary dataset_summary(const Dataset& ds, const std::vector<FoldResult>& folds) {
    DatasetSummary s;
    s.n_private = ds.with_role(Role::Private).size();
    s.n_public = ds.with_role(Role::Public).size();
    s.n_records = ds.n_rows();
    s.imbalance = imbalance(ds);
    s.n_folds = folds.size();
    for (const auto& f : folds) s.fair_by_design_folds += f.fair_by_design ? 1 : 0;
    return s;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw Error("spearman needs two samples of equal size >= 2");
    auto ranks = [](std::span<const double> v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(rx.size());
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(ry.size());
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

// Pipeline integrity checks. Each returns the ids of offending records.

/// frl <= max(p, 1 - p) with p = P(y0 | instance).
inline std::vector<std::size_t> frl_bound_violations(std::span<const FrlRecord> records) {
    std::vector<std::size_t> bad;
    for (const auto& r : records)
        if (r.frl < 0.0 || r.frl > std::max(r.posterior_y0, 1.0 - r.posterior_y0) + kTolerance)
            bad.push_back(r.instance_id);
    return bad;
}

/// Correct prediction iff Brier < 0.25. At an exact 0.5 posterior the tie rule
/// predicts class 0, so correctness there is decided by the true class alone.
inline std::vector<std::size_t> brier_identity_violations(std::span<const FrlRecord> records) {
    std::vector<std::size_t> bad;
    for (const auto& r : records) {
        const bool correct = r.predicted_class == r.true_class;
        const bool expected = r.posterior_y0 == 0.5 ? r.true_class == 0 : r.brier < 0.25;
        if (correct != expected) bad.push_back(r.instance_id);
    }
    return bad;
}

struct PublicGroupCheck {
    std::size_t groups = 0;            ///< groups of >= 2 records sharing a fold and public state
    std::size_t frl_violations = 0;    ///< groups whose FRL values differ by >= 1e-9
    std::size_t bound_violations = 0;  ///< groups whose extreme posteriors differ by >= 1e-9
};

/// Records of one fold that share their public blanket state share the
/// extreme posteriors; when the private space has two states they also share
/// the FRL.
inline PublicGroupCheck public_state_consistency(const FoldResult& fold) {
    PublicGroupCheck out;
    std::map<std::vector<std::pair<VarId, std::uint32_t>>, std::vector<const FrlRecord*>> groups;
    for (const auto& r : fold.records)
        groups[{r.public_state.begin(), r.public_state.end()}].push_back(&r);
    for (const auto& [key, members] : groups) {
        if (members.size() < 2) continue;
        ++out.groups;
        bool frl_ok = true, bounds_ok = true;
        for (const auto* m : members) {
            frl_ok = frl_ok && std::abs(m->frl - members.front()->frl) < kTolerance;
            bounds_ok = bounds_ok && std::abs(m->p_max - members.front()->p_max) < kTolerance &&
                        std::abs(m->p_min - members.front()->p_min) < kTolerance;
        }
        out.frl_violations += frl_ok ? 0 : 1;
        out.bound_violations += bounds_ok ? 0 : 1;
    }
    return out;
}

namespace detail {

inline std::string fmt(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

inline void write_header(std::ostream& out, const std::vector<std::string>& header_lines) {
    for (const auto& h : header_lines) out << "# " << h << '\n';
}

} // namespace detail

inline constexpr const char* kRecordColumns =
    "fold,instance_id,true_class,predicted_class,posterior_y0,brier,frl,x_star,time_bn_ns,time_mrf_ns";

/// Per-instance CSV. x_star joins the state labels of every private feature
/// (id order) with ';'. Missing timings are left empty.
inline void write_records_csv(std::ostream& out, const Dataset& ds, const std::vector<FoldResult>& folds,
                              const std::vector<std::string>& header_lines) {
    detail::write_header(out, header_lines);
    out << kRecordColumns << '\n';
    std::vector<std::pair<std::size_t, const FrlRecord*>> rows;
    for (const auto& f : folds)
        for (const auto& r : f.records) rows.emplace_back(f.fold, &r);
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.second->instance_id < b.second->instance_id; });
    for (const auto& [fold, r] : rows) {
        std::string x_star;
        for (const auto& [var, state] : r->x_star) {
            if (!x_star.empty()) x_star += ';';
            x_star += ds.variables.at(var.value).states.at(state);
        }
        out << fold << ',' << r->instance_id << ',' << r->true_class << ',' << r->predicted_class << ','
            << detail::fmt(r->posterior_y0) << ',' << detail::fmt(r->brier) << ',' << detail::fmt(r->frl) << ','
            << detail::csv_field(x_star) << ',' << (r->time_bn_ns ? std::to_string(*r->time_bn_ns) : "") << ','
            << (r->time_mrf_ns ? std::to_string(*r->time_mrf_ns) : "") << '\n';
    }
}

struct RecordRow {
    std::size_t fold = 0;
    FrlRecord record;
};

/// Reads a per-instance CSV back; x_star labels are not resolved.
inline std::vector<RecordRow> read_records_csv(std::istream& in) {
    auto table = read_csv(in);
    if (table.empty()) throw Error("empty records file");
    std::ostringstream expected;
    for (std::size_t i = 0; i < table.front().size(); ++i) expected << (i ? "," : "") << table.front()[i];
    if (expected.str() != kRecordColumns) throw Error("unexpected records header '" + expected.str() + "'");

    auto num = [](const std::string& s, auto& v) {
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size()) throw Error("malformed number '" + s + "' in records");
    };
    std::vector<RecordRow> rows;
    for (std::size_t i = 1; i < table.size(); ++i) {
        const auto& t = table[i];
        if (t.size() != 10) throw Error("records row " + std::to_string(i) + " has wrong field count");
        RecordRow row;
        auto& r = row.record;
        num(t[0], row.fold);
        num(t[1], r.instance_id);
        num(t[2], r.true_class);
        num(t[3], r.predicted_class);
        num(t[4], r.posterior_y0);
        num(t[5], r.brier);
        num(t[6], r.frl);
        if (!t[8].empty()) {
            std::int64_t v = 0;
            num(t[8], v);
            r.time_bn_ns = v;
        }
        if (!t[9].empty()) {
            std::int64_t v = 0;
            num(t[9], v);
            r.time_mrf_ns = v;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_deciles_csv(std::ostream& out, const DecileSummary& d, const std::vector<std::string>& header_lines) {
    detail::write_header(out, header_lines);
    out << "bin,zero_bin,frl_low,frl_high,count,accuracy,mean_brier\n";
    for (std::size_t i = 0; i < d.bins.size(); ++i) {
        const auto& b = d.bins[i];
        out << i << ',' << (b.zero_bin ? 1 : 0) << ',' << detail::fmt(b.frl_low) << ',' << detail::fmt(b.frl_high)
            << ',' << b.count << ',' << detail::fmt(b.accuracy) << ',' << detail::fmt(b.mean_brier) << '\n';
    }
}

inline void write_scatter_csv(std::ostream& out, std::span<const FrlRecord> records,
                              const std::vector<std::string>& header_lines) {
    detail::write_header(out, header_lines);
    out << "frl,brier\n";
    for (const auto& r : records) out << detail::fmt(r.frl) << ',' << detail::fmt(r.brier) << '\n';
}

/// FRL five-number summaries over equal-frequency Brier-score bins.
inline void write_brier_bins_csv(std::ostream& out, std::span<const FrlRecord> records, std::size_t n_bins,
                                 const std::vector<std::string>& header_lines) {
    detail::write_header(out, header_lines);
    out << "bin,brier_low,brier_high,count,frl_min,frl_q1,frl_median,frl_q3,frl_max\n";
    std::vector<const FrlRecord*> sorted;
    for (const auto& r : records) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](const FrlRecord* a, const FrlRecord* b) {
        return a->brier != b->brier ? a->brier < b->brier : a->instance_id < b->instance_id;
    });
    const std::size_t bins = std::min(n_bins, sorted.size());
    std::size_t start = 0;
    for (std::size_t b = 0; b < bins; ++b) {
        const std::size_t size = sorted.size() / bins + (b < sorted.size() % bins ? 1 : 0);
        std::vector<double> frls;
        for (std::size_t i = start; i < start + size; ++i) frls.push_back(sorted[i]->frl);
        const auto s = five_number_summary(frls);
        out << b << ',' << detail::fmt(sorted[start]->brier) << ',' << detail::fmt(sorted[start + size - 1]->brier)
            << ',' << size << ',' << detail::fmt(s.min) << ',' << detail::fmt(s.q1) << ',' << detail::fmt(s.median)
            << ',' << detail::fmt(s.q3) << ',' << detail::fmt(s.max) << '\n';
        start += size;
    }
}

/// Human-readable summary: dataset block, decile table, timing ratios.
inline void write_summary(std::ostream& out, const std::optional<DatasetSummary>& ds, const DecileSummary& deciles,
                          const std::optional<FiveNumberSummary>& timing, std::span<const FrlRecord> records,
                          const std::vector<std::string>& header_lines) {
    detail::write_header(out, header_lines);
    if (ds) {
        out << "[dataset]\n"
            << "private_features = " << ds->n_private << '\n'
            << "public_features = " << ds->n_public << '\n'
            << "records = " << ds->n_records << '\n'
            << "imbalance = " << detail::fmt(ds->imbalance) << '\n'
            << "fair_by_design_folds = " << ds->fair_by_design_folds << '\n'
            << "folds = " << ds->n_folds << "\n\n";
    }
    std::size_t correct = 0;
    double brier_sum = 0.0;
    for (const auto& r : records) {
        correct += r.predicted_class == r.true_class ? 1 : 0;
        brier_sum += r.brier;
    }
    out << "[overall]\n"
        << "instances = " << records.size() << '\n'
        << "accuracy = " << detail::fmt(records.empty() ? 0.0 : static_cast<double>(correct) / records.size()) << '\n'
        << "mean_brier = " << detail::fmt(records.empty() ? 0.0 : brier_sum / records.size()) << "\n\n";

    out << "[frl_deciles]\n";
    if (deciles.warning) out << "warning = " << *deciles.warning << '\n';
    out << "bin zero frl_low frl_high count accuracy mean_brier\n";
    for (std::size_t i = 0; i < deciles.bins.size(); ++i) {
        const auto& b = deciles.bins[i];
        out << i << ' ' << (b.zero_bin ? 1 : 0) << ' ' << detail::fmt(b.frl_low) << ' ' << detail::fmt(b.frl_high)
            << ' ' << b.count << ' ' << detail::fmt(b.accuracy) << ' ' << detail::fmt(b.mean_brier) << '\n';
    }
    if (timing) {
        out << "\n[timing_ratio_bn_over_mrf]\n"
            << "count = " << timing->count << '\n'
            << "min = " << detail::fmt(timing->min) << '\n'
            << "q1 = " << detail::fmt(timing->q1) << '\n'
            << "median = " << detail::fmt(timing->median) << '\n'
            << "q3 = " << detail::fmt(timing->q3) << '\n'
            << "max = " << detail::fmt(timing->max) << '\n';
    }
}

} // namespace frl
