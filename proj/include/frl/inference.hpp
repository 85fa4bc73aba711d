#pragma once

// Exact variable elimination: sum-product updating and max/min-product MPE.
//
// All elimination arithmetic runs on log tables. Min-product is computed as
// max-product over negated log potentials so a single traceback serves both
// modes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "frl/errors.hpp"
#include "frl/factor.hpp"
#include "frl/model.hpp"

namespace frl {

struct EliminationOrder {
    std::vector<VarId> order;
};

struct MpeResult {
    Assignment assignment;
    double score = 0.0;  ///< log of the optimal product of restricted potentials
};

enum class MpeMode { Max, Min };

namespace detail {

using Adjacency = std::map<VarId, std::set<VarId>>;

inline Adjacency interaction_graph(const std::vector<Factor>& factors) {
    Adjacency g;
    for (const auto& f : factors) {
        for (VarId a : f.scope()) {
            auto& nbrs = g[a];
            for (VarId b : f.scope())
                if (a != b) nbrs.insert(b);
        }
    }
    return g;
}

inline std::size_t fill_in(const Adjacency& g, VarId v) {
    const auto& nbrs = g.at(v);
    std::size_t missing = 0;
    for (auto i = nbrs.begin(); i != nbrs.end(); ++i)
        for (auto j = std::next(i); j != nbrs.end(); ++j)
            if (!g.at(*i).contains(*j)) ++missing;
    return missing;
}

inline void eliminate_node(Adjacency& g, VarId v) {
    const std::set<VarId> nbrs = g[v];
    for (VarId a : nbrs) {
        for (VarId b : nbrs)
            if (a != b) g[a].insert(b);
        g[a].erase(v);
    }
    g.erase(v);
}

inline EliminationOrder min_fill(const std::vector<Factor>& factors, std::vector<VarId> targets) {
    Adjacency g = interaction_graph(factors);
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
    for (VarId t : targets) g[t];

    EliminationOrder result;
    std::vector<VarId> remaining = targets;
    while (!remaining.empty()) {
        std::size_t best = 0;
        std::size_t best_fill = std::numeric_limits<std::size_t>::max();
        for (std::size_t i = 0; i < remaining.size(); ++i) {
            const std::size_t f = fill_in(g, remaining[i]);
            if (f < best_fill) {
                best_fill = f;
                best = i;
            }
        }
        result.order.push_back(remaining[best]);
        eliminate_node(g, remaining[best]);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
    }
    return result;
}

/// Multiplies together and removes every factor that mentions `var`.
inline Factor take_bucket(std::vector<Factor>& factors, VarId var) {
    Factor acc = Factor::scalar(0.0, Representation::Log);
    std::vector<Factor> rest;
    rest.reserve(factors.size());
    for (auto& f : factors) {
        if (f.contains(var))
            acc = product(acc, f);
        else
            rest.push_back(std::move(f));
    }
    factors = std::move(rest);
    return acc;
}

/// Max-reduces `var` out of `f`, also returning the lowest maximizing state per residual cell.
inline std::pair<Factor, std::vector<std::uint32_t>> max_with_argmax(const Factor& f, VarId var) {
    const std::size_t p = *f.position(var);
    const std::size_t card = f.cards()[p];
    std::size_t inner = 1;
    for (std::size_t k = p + 1; k < f.cards().size(); ++k) inner *= f.cards()[k];
    const std::size_t outer = f.size() / (card * inner);

    std::vector<VarId> scope = f.scope();
    std::vector<std::size_t> cards = f.cards();
    scope.erase(scope.begin() + static_cast<std::ptrdiff_t>(p));
    cards.erase(cards.begin() + static_cast<std::ptrdiff_t>(p));

    std::vector<double> best(outer * inner);
    std::vector<std::uint32_t> arg(outer * inner);
    const auto& v = f.values();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * card * inner + i;
            double m = v[base];
            std::uint32_t a = 0;
            for (std::size_t s = 1; s < card; ++s) {
                if (v[base + s * inner] > m) {
                    m = v[base + s * inner];
                    a = static_cast<std::uint32_t>(s);
                }
            }
            best[o * inner + i] = m;
            arg[o * inner + i] = a;
        }
    }
    return {Factor(std::move(scope), std::move(cards), std::move(best), Representation::Log), std::move(arg)};
}

inline Factor negate_log(const Factor& f) {
    std::vector<double> v(f.values().size());
    std::transform(f.values().begin(), f.values().end(), v.begin(), [](double x) { return -x; });
    return Factor(f.scope(), f.cards(), std::move(v), Representation::Log);
}

inline std::vector<VarId> scope_union(const std::vector<Factor>& factors) {
    std::set<VarId> all;
    for (const auto& f : factors) all.insert(f.scope().begin(), f.scope().end());
    return {all.begin(), all.end()};
}

/// Variables of `order` present in `vars`; throws if some of `vars` are missing from it.
inline std::vector<VarId> checked_order(const EliminationOrder& order, const std::vector<VarId>& vars) {
    std::vector<VarId> out;
    for (VarId v : order.order)
        if (std::binary_search(vars.begin(), vars.end(), v) &&
            std::find(out.begin(), out.end(), v) == out.end())
            out.push_back(v);
    if (out.size() != vars.size()) throw InferenceError("elimination order does not cover the variables to eliminate");
    return out;
}

} // namespace detail

/// Greedy min-fill elimination order over `targets` in the interaction graph of
/// `potentials`; ties go to the lowest variable id.
inline EliminationOrder min_fill_order(const std::vector<Factor>& potentials, const std::vector<VarId>& targets) {
    return detail::min_fill(potentials, targets);
}

inline EliminationOrder min_fill_order(const MarkovRandomField& mrf, const std::vector<VarId>& targets) {
    for (VarId t : targets)
        if (!mrf.has_variable(t)) throw InferenceError("elimination target " + std::to_string(t.value) + " not in model");
    return detail::min_fill(mrf.potentials(), targets);
}

/// Largest neighbour count met while eliminating `order` from the interaction graph.
inline std::size_t induced_width(const std::vector<Factor>& potentials, const EliminationOrder& order) {
    auto g = detail::interaction_graph(potentials);
    std::size_t width = 0;
    for (VarId v : order.order) {
        width = std::max(width, g[v].size());
        detail::eliminate_node(g, v);
    }
    return width;
}

/// Normalized P(query | evidence) by sum-product elimination.
inline std::vector<double> posterior(const BayesianNetwork& bn, VarId query, const Assignment& evidence,
                                     const std::optional<EliminationOrder>& order = std::nullopt) {
    if (!bn.has_variable(query)) throw InferenceError("unknown query variable " + std::to_string(query.value));
    if (evidence.contains(query)) throw InferenceError("query variable is bound in the evidence");
    for (const auto& [var, state] : evidence) {
        if (!bn.has_variable(var)) throw InferenceError("evidence on unknown variable " + std::to_string(var.value));
        if (state >= bn.variable(var).cardinality()) throw InferenceError("evidence state out of range");
    }

    // Barren nodes (neither ancestors of the query nor of the evidence) sum
    // out to one and are dropped. Evidence ancestors stay so that an
    // impossible instance is detected.
    std::set<VarId> relevant;
    std::vector<VarId> stack{query};
    for (const auto& [var, state] : evidence) stack.push_back(var);
    while (!stack.empty()) {
        const VarId v = stack.back();
        stack.pop_back();
        if (!relevant.insert(v).second) continue;
        for (VarId p : bn.parents(v)) stack.push_back(p);
    }
    std::vector<Factor> factors;
    for (VarId v : relevant) factors.push_back(to_log(restrict(bn.cpt(v).table(), evidence)));

    std::vector<VarId> to_eliminate = detail::scope_union(factors);
    to_eliminate.erase(std::remove(to_eliminate.begin(), to_eliminate.end(), query), to_eliminate.end());
    const std::vector<VarId> sequence =
        order ? detail::checked_order(*order, to_eliminate) : detail::min_fill(factors, to_eliminate).order;

    for (VarId v : sequence) {
        Factor bucket = detail::take_bucket(factors, v);
        factors.push_back(reduce(bucket, v, ReduceMode::Sum));
    }
    Factor joint = Factor::scalar(0.0, Representation::Log);
    for (const auto& f : factors) joint = product(joint, f);

    const std::size_t card = bn.variable(query).cardinality();
    std::vector<double> logp(card, 0.0);
    if (joint.contains(query)) {
        logp = joint.values();
    } else {
        std::fill(logp.begin(), logp.end(), joint.scalar_value());
    }
    double total = -std::numeric_limits<double>::infinity();
    for (double l : logp) total = detail::log_add(total, l);
    if (total == -std::numeric_limits<double>::infinity())
        throw InferenceError("evidence has zero probability");

    std::vector<double> out(card);
    for (std::size_t i = 0; i < card; ++i) out[i] = std::exp(logp[i] - total);
    return out;
}

/// Optimal joint state of `free` given `evidence` under the product of the
/// field's potentials. Ties resolve to the lowest state at each traceback step.
/// An empty free set yields the scalar score and an empty assignment.
inline MpeResult mpe(const MarkovRandomField& mrf, const std::vector<VarId>& free, const Assignment& evidence,
                     MpeMode mode, const std::optional<EliminationOrder>& order = std::nullopt) {
    std::vector<VarId> free_sorted = free;
    std::sort(free_sorted.begin(), free_sorted.end());
    free_sorted.erase(std::unique(free_sorted.begin(), free_sorted.end()), free_sorted.end());
    for (VarId v : free_sorted) {
        if (!mrf.has_variable(v)) throw InferenceError("free variable " + std::to_string(v.value) + " not in model");
        if (evidence.contains(v)) throw InferenceError("variable " + std::to_string(v.value) + " is both free and observed");
    }
    for (const auto& var : mrf.variables())
        if (!evidence.contains(var.id) && !std::binary_search(free_sorted.begin(), free_sorted.end(), var.id))
            throw InferenceError("variable '" + var.name + "' is neither free nor observed");

    const bool negate = mode == MpeMode::Min;
    std::vector<Factor> factors;
    factors.reserve(mrf.potentials().size());
    for (const auto& p : mrf.potentials()) {
        Factor f = to_log(restrict(p, evidence));
        factors.push_back(negate ? detail::negate_log(f) : std::move(f));
    }

    const std::vector<VarId> sequence =
        order ? detail::checked_order(*order, free_sorted) : detail::min_fill(factors, free_sorted).order;

    struct Step {
        VarId var;
        Factor residual;  // carries scope of the argmax table
        std::vector<std::uint32_t> argmax;
    };
    std::vector<Step> steps;
    steps.reserve(sequence.size());
    for (VarId v : sequence) {
        Factor bucket = detail::take_bucket(factors, v);
        if (!bucket.contains(v)) {
            steps.push_back({v, Factor::scalar(0.0, Representation::Log), {0}});
            continue;
        }
        auto [maxed, arg] = detail::max_with_argmax(bucket, v);
        steps.push_back({v, maxed, std::move(arg)});
        factors.push_back(std::move(maxed));
    }

    double score = 0.0;
    for (const auto& f : factors) score += f.scalar_value();

    MpeResult result;
    for (auto it = steps.rbegin(); it != steps.rend(); ++it)
        result.assignment.set(it->var, it->argmax[it->residual.index_of(result.assignment)]);
    result.score = negate ? -score : score;
    return result;
}

/// Log of the product of restricted potentials at a full assignment.
inline double log_score(const MarkovRandomField& mrf, const Assignment& full) {
    double s = 0.0;
    for (const auto& p : mrf.potentials()) {
        const double v = p.at(full.restricted_to(p.scope()));
        s += p.representation() == Representation::Log ? v : std::log(v);
    }
    return s;
}

} // namespace frl
