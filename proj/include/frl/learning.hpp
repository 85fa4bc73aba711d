#pragma once

// Parameter estimation with Laplace smoothing, BIC tabu hill-climbing over
// DAGs, Markov blankets and blanket sub-networks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "frl/errors.hpp"
#include "frl/factor.hpp"
#include "frl/ingest.hpp"
#include "frl/model.hpp"

namespace frl {

/// n(v, pa) laid out row-major over (child, parents...).
struct CountTable {
    VarId child;
    std::vector<VarId> parents;
    std::vector<std::size_t> cards;  ///< child cardinality first, then parents
    std::vector<std::uint64_t> counts;

    std::size_t child_cardinality() const { return cards.front(); }
    std::size_t parent_configurations() const { return counts.size() / cards.front(); }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }
};

using Arc = std::pair<VarId, VarId>;  ///< (parent, child)

struct StructureSearchConfig {
    std::size_t tabu_list_size = 10;
    std::size_t max_iterations = 100;
    double equivalent_sample_size = 1.0;
    std::vector<Arc> forced_arcs;
    std::vector<Arc> forbidden_arcs;
    std::size_t max_parents = 0;  ///< 0 means unbounded
};

inline CountTable count(const Dataset& ds, VarId child, const std::vector<VarId>& parents,
                        std::span<const std::size_t> rows) {
    if (std::find(parents.begin(), parents.end(), child) != parents.end())
        throw LearningError("count: child listed among its parents");
    CountTable t{child, parents, {}, {}};
    t.cards.push_back(ds.variables.at(child.value).cardinality());
    for (VarId p : parents) t.cards.push_back(ds.variables.at(p.value).cardinality());
    std::size_t volume = 1;
    for (auto c : t.cards) volume *= c;
    t.counts.assign(volume, 0);

    std::vector<std::size_t> cols{child.value};
    for (VarId p : parents) cols.push_back(p.value);
    const std::size_t width = ds.n_columns();
    for (std::size_t r : rows) {
        const std::uint32_t* row = ds.cells.data() + r * width;
        std::size_t idx = 0;
        for (std::size_t k = 0; k < cols.size(); ++k) idx = idx * t.cards[k] + row[cols[k]];
        ++t.counts[idx];
    }
    return t;
}

/// P(v | pa) = (n(v,pa) + s/|V|) / (n(pa) + s), evaluated as
/// (n(v,pa)*|V| + s) / ((n(pa) + s)*|V|) so integer counts give a single rounding.
inline Cpt estimate_cpt(const CountTable& counts, double ess) {
    if (!(ess > 0.0)) throw LearningError("equivalent sample size must be positive");
    const std::size_t r = counts.child_cardinality();
    const std::size_t q = counts.parent_configurations();
    std::vector<double> values(counts.counts.size());
    for (std::size_t pa = 0; pa < q; ++pa) {
        std::uint64_t n_pa = 0;
        for (std::size_t v = 0; v < r; ++v) n_pa += counts.counts[v * q + pa];
        const double den = (static_cast<double>(n_pa) + ess) * static_cast<double>(r);
        for (std::size_t v = 0; v < r; ++v)
            values[v * q + pa] = (static_cast<double>(counts.counts[v * q + pa]) * static_cast<double>(r) + ess) / den;
    }
    std::vector<VarId> scope{counts.child};
    scope.insert(scope.end(), counts.parents.begin(), counts.parents.end());
    return Cpt(counts.child, counts.parents, Factor(std::move(scope), counts.cards, std::move(values)));
}

/// Decomposable BIC term of one family.
inline double bic_family(const CountTable& counts, std::size_t n_rows) {
    const std::size_t r = counts.child_cardinality();
    const std::size_t q = counts.parent_configurations();
    double ll = 0.0;
    for (std::size_t pa = 0; pa < q; ++pa) {
        std::uint64_t n_pa = 0;
        for (std::size_t v = 0; v < r; ++v) n_pa += counts.counts[v * q + pa];
        for (std::size_t v = 0; v < r; ++v) {
            const auto n = counts.counts[v * q + pa];
            if (n > 0) ll += static_cast<double>(n) * std::log(static_cast<double>(n) / static_cast<double>(n_pa));
        }
    }
    const double penalty = 0.5 * std::log(static_cast<double>(std::max<std::size_t>(n_rows, 1))) *
                           static_cast<double>((r - 1) * q);
    return ll - penalty;
}

/// BIC of a whole structure given as one parent list per dataset column.
inline double network_bic(const Dataset& ds, const std::vector<std::vector<VarId>>& parents,
                          std::span<const std::size_t> rows) {
    double total = 0.0;
    for (std::size_t c = 0; c < ds.n_columns(); ++c)
        total += bic_family(count(ds, VarId(static_cast<std::uint32_t>(c)), parents[c], rows), rows.size());
    return total;
}

namespace detail {

enum class MoveKind { Add = 0, Delete = 1, Reverse = 2 };

struct Move {
    MoveKind kind;
    std::uint32_t from;
    std::uint32_t to;

    Move inverse() const {
        switch (kind) {
        case MoveKind::Add: return {MoveKind::Delete, from, to};
        case MoveKind::Delete: return {MoveKind::Add, from, to};
        case MoveKind::Reverse: return {MoveKind::Reverse, to, from};
        }
        return *this;
    }
    friend bool operator==(const Move&, const Move&) = default;
};

class StructureSearch {
public:
    StructureSearch(const Dataset& ds, const StructureSearchConfig& cfg, std::span<const std::size_t> rows)
        : ds_(ds), cfg_(cfg), rows_(rows), n_(ds.n_columns()), parents_(n_) {}

    std::vector<std::vector<VarId>> run() {
        for (const auto& [p, c] : cfg_.forced_arcs) {
            if (has_arc(p.value, c.value)) continue;
            if (reaches(c.value, p.value)) throw LearningError("forced arcs contain a directed cycle");
            add_arc(p.value, c.value);
        }

        std::deque<Move> tabu;
        for (std::size_t iter = 0; iter < cfg_.max_iterations; ++iter) {
            bool found = false;
            Move best{MoveKind::Add, 0, 0};
            double best_delta = 0.0;
            // Lexicographic visit order (from, to, kind) realizes the tie-break.
            for (std::uint32_t a = 0; a < n_; ++a) {
                for (std::uint32_t b = 0; b < n_; ++b) {
                    if (a == b) continue;
                    for (MoveKind kind : {MoveKind::Add, MoveKind::Delete, MoveKind::Reverse}) {
                        const Move m{kind, a, b};
                        if (std::find(tabu.begin(), tabu.end(), m.inverse()) != tabu.end()) continue;
                        auto d = delta(m);
                        if (!d) continue;
                        if (!found || *d > best_delta) {
                            found = true;
                            best = m;
                            best_delta = *d;
                        }
                    }
                }
            }
            if (!found || best_delta <= kImprovement) break;
            apply(best);
            tabu.push_back(best);
            while (tabu.size() > cfg_.tabu_list_size) tabu.pop_front();
        }

        std::vector<std::vector<VarId>> out(n_);
        for (std::size_t c = 0; c < n_; ++c)
            for (auto p : parents_[c]) out[c].push_back(VarId(p));
        return out;
    }

private:
    static constexpr double kImprovement = 1e-9;

    bool has_arc(std::uint32_t a, std::uint32_t b) const {
        return std::binary_search(parents_[b].begin(), parents_[b].end(), a);
    }
    bool forced(std::uint32_t a, std::uint32_t b) const { return contains(cfg_.forced_arcs, a, b); }
    bool forbidden(std::uint32_t a, std::uint32_t b) const { return contains(cfg_.forbidden_arcs, a, b); }
    static bool contains(const std::vector<Arc>& arcs, std::uint32_t a, std::uint32_t b) {
        return std::find(arcs.begin(), arcs.end(), Arc{VarId(a), VarId(b)}) != arcs.end();
    }
    bool parent_room(std::uint32_t child) const {
        return cfg_.max_parents == 0 || parents_[child].size() < cfg_.max_parents;
    }

    /// True if a directed path from -> to exists, optionally ignoring one arc.
    bool reaches(std::uint32_t from, std::uint32_t to, std::pair<std::uint32_t, std::uint32_t> skip = {~0u, ~0u}) const {
        std::vector<char> seen(n_, 0);
        std::vector<std::uint32_t> stack{from};
        while (!stack.empty()) {
            const auto v = stack.back();
            stack.pop_back();
            if (v == to) return true;
            if (seen[v]) continue;
            seen[v] = 1;
            for (std::uint32_t c = 0; c < n_; ++c)
                if (has_arc(v, c) && !(v == skip.first && c == skip.second)) stack.push_back(c);
        }
        return false;
    }

    double family_score(std::uint32_t child, const std::vector<std::uint32_t>& parents) {
        auto key = std::make_pair(child, parents);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        std::vector<VarId> ids;
        for (auto p : parents) ids.push_back(VarId(p));
        const double s = bic_family(count(ds_, VarId(child), ids, rows_), rows_.size());
        cache_.emplace(std::move(key), s);
        return s;
    }

    static std::vector<std::uint32_t> with(std::vector<std::uint32_t> set, std::uint32_t x) {
        set.insert(std::lower_bound(set.begin(), set.end(), x), x);
        return set;
    }
    static std::vector<std::uint32_t> without(std::vector<std::uint32_t> set, std::uint32_t x) {
        set.erase(std::remove(set.begin(), set.end(), x), set.end());
        return set;
    }

    std::optional<double> delta(const Move& m) {
        const auto a = m.from, b = m.to;
        switch (m.kind) {
        case MoveKind::Add:
            if (has_arc(a, b) || has_arc(b, a) || forbidden(a, b) || !parent_room(b) || reaches(b, a))
                return std::nullopt;
            return family_score(b, with(parents_[b], a)) - family_score(b, parents_[b]);
        case MoveKind::Delete:
            if (!has_arc(a, b) || forced(a, b)) return std::nullopt;
            return family_score(b, without(parents_[b], a)) - family_score(b, parents_[b]);
        case MoveKind::Reverse:
            if (!has_arc(a, b) || forced(a, b) || forbidden(b, a) || !parent_room(a) || reaches(a, b, {a, b}))
                return std::nullopt;
            return family_score(b, without(parents_[b], a)) - family_score(b, parents_[b]) +
                   family_score(a, with(parents_[a], b)) - family_score(a, parents_[a]);
        }
        return std::nullopt;
    }

    void add_arc(std::uint32_t a, std::uint32_t b) { parents_[b] = with(parents_[b], a); }
    void remove_arc(std::uint32_t a, std::uint32_t b) { parents_[b] = without(parents_[b], a); }

    void apply(const Move& m) {
        switch (m.kind) {
        case MoveKind::Add: add_arc(m.from, m.to); break;
        case MoveKind::Delete: remove_arc(m.from, m.to); break;
        case MoveKind::Reverse:
            remove_arc(m.from, m.to);
            add_arc(m.to, m.from);
            break;
        }
    }

    const Dataset& ds_;
    const StructureSearchConfig& cfg_;
    std::span<const std::size_t> rows_;
    std::size_t n_;
    std::vector<std::vector<std::uint32_t>> parents_;
    std::map<std::pair<std::uint32_t, std::vector<std::uint32_t>>, double> cache_;
};

} // namespace detail

/// Parent lists found by BIC hill climbing with a tabu list, starting from the
/// empty graph plus the forced arcs.
inline std::vector<std::vector<VarId>> search_structure(const Dataset& ds, const StructureSearchConfig& cfg,
                                                        std::span<const std::size_t> rows) {
    for (const auto& arc : cfg.forced_arcs) {
        if (arc.first == arc.second) throw LearningError("forced self-loop");
        if (std::find(cfg.forbidden_arcs.begin(), cfg.forbidden_arcs.end(), arc) != cfg.forbidden_arcs.end())
            throw LearningError("an arc is both forced and forbidden");
        if (arc.first.value >= ds.n_columns() || arc.second.value >= ds.n_columns())
            throw LearningError("forced arc refers to an unknown variable");
    }
    return detail::StructureSearch(ds, cfg, rows).run();
}

/// Learns structure, then fits Laplace-smoothed CPTs on the same rows.
inline BayesianNetwork learn_structure(const Dataset& ds, const StructureSearchConfig& cfg,
                                       std::span<const std::size_t> rows) {
    const auto parents = search_structure(ds, cfg, rows);
    std::vector<Cpt> cpts;
    for (std::size_t c = 0; c < ds.n_columns(); ++c)
        cpts.push_back(estimate_cpt(count(ds, VarId(static_cast<std::uint32_t>(c)), parents[c], rows),
                                    cfg.equivalent_sample_size));
    return BayesianNetwork(ds.variables, std::move(cpts));
}

/// {w} U parents(w) U children(w) U parents(children(w)), sorted by id.
inline std::vector<VarId> markov_blanket(const BayesianNetwork& bn, VarId w) {
    if (!bn.has_variable(w)) throw ModelError("unknown variable " + std::to_string(w.value));
    std::set<VarId> out{w};
    for (VarId p : bn.parents(w)) out.insert(p);
    for (VarId c : bn.children(w)) {
        out.insert(c);
        for (VarId cp : bn.parents(c)) out.insert(cp);
    }
    return {out.begin(), out.end()};
}

/// Network over the blanket of `w`: the CPTs of `w` and its children are kept,
/// every other blanket variable becomes a uniform root.
inline BayesianNetwork blanket_subnetwork(const BayesianNetwork& bn, VarId w) {
    const auto blanket = markov_blanket(bn, w);
    const auto children = bn.children(w);
    std::vector<DiscreteVariable> vars;
    std::vector<Cpt> cpts;
    for (VarId v : blanket) {
        vars.push_back(bn.variable(v));
        if (v == w || std::find(children.begin(), children.end(), v) != children.end())
            cpts.push_back(bn.cpt(v));
        else
            cpts.push_back(Cpt::uniform(bn.variable(v)));
    }
    return BayesianNetwork(std::move(vars), std::move(cpts));
}

} // namespace frl
