#pragma once

// Conditional probability tables, Bayesian networks and Markov random fields.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "frl/errors.hpp"
#include "frl/factor.hpp"

namespace frl {

/// Tolerance used for every normalization and equality check.
inline constexpr double kTolerance = 1e-9;

/// P(child | parents) stored as a linear factor over {child} U parents.
class Cpt {
public:
    /// `table` must be a linear factor whose scope is exactly {child} U parents.
    Cpt(VarId child, std::vector<VarId> parents, Factor table)
        : child_(child), parents_(std::move(parents)), table_(std::move(table)) {
        if (table_.representation() != Representation::Linear)
            throw ModelError("CPT tables are stored in linear representation");
        std::vector<VarId> expected = parents_;
        expected.push_back(child_);
        std::sort(expected.begin(), expected.end());
        if (std::adjacent_find(expected.begin(), expected.end()) != expected.end())
            throw ModelError("CPT child appears among its parents");
        if (expected != table_.scope()) throw ModelError("CPT scope does not match child and parents");

        const Factor sums = reduce(table_, child_, ReduceMode::Sum);
        for (double s : sums.values())
            if (std::abs(s - 1.0) > kTolerance)
                throw ModelError("CPT column for variable " + std::to_string(child_.value) +
                                 " sums to " + std::to_string(s));
    }

    /// Builds a CPT from a table laid out row-major over (child, parents...).
    static Cpt from_table(const DiscreteVariable& child, const std::vector<DiscreteVariable>& parents,
                          std::vector<double> values) {
        std::vector<VarId> scope{child.id};
        std::vector<std::size_t> cards{child.cardinality()};
        std::vector<VarId> parent_ids;
        for (const auto& p : parents) {
            scope.push_back(p.id);
            cards.push_back(p.cardinality());
            parent_ids.push_back(p.id);
        }
        return Cpt(child.id, std::move(parent_ids), Factor(std::move(scope), std::move(cards), std::move(values)));
    }

    /// Parentless uniform distribution over `child`.
    static Cpt uniform(const DiscreteVariable& child) {
        const std::size_t n = child.cardinality();
        return from_table(child, {}, std::vector<double>(n, 1.0 / static_cast<double>(n)));
    }

    VarId child() const { return child_; }
    const std::vector<VarId>& parents() const { return parents_; }
    const Factor& table() const { return table_; }

    /// P(child = state | parents as bound in `context`).
    double probability(std::uint32_t state, const Assignment& context) const {
        Assignment a = context.restricted_to(parents_);
        a.set(child_, state);
        return table_.at(a);
    }

    friend bool operator==(const Cpt&, const Cpt&) = default;

private:
    VarId child_;
    std::vector<VarId> parents_;
    Factor table_;
};

/// DAG over discrete variables with one CPT per node. Immutable once built.
class BayesianNetwork {
public:
    BayesianNetwork() = default;

    BayesianNetwork(std::vector<DiscreteVariable> variables, std::vector<Cpt> cpts)
        : variables_(std::move(variables)) {
        std::sort(variables_.begin(), variables_.end(),
                  [](const DiscreteVariable& a, const DiscreteVariable& b) { return a.id < b.id; });
        int targets = 0;
        for (std::size_t i = 0; i < variables_.size(); ++i) {
            variables_[i].validate();
            if (i > 0 && variables_[i].id == variables_[i - 1].id)
                throw ModelError("duplicate variable id " + std::to_string(variables_[i].id.value));
            if (variables_[i].role == Role::Target) ++targets;
        }
        if (targets > 1) throw ModelError("a network may have at most one target variable");

        cpts_.reserve(variables_.size());
        for (const auto& v : variables_) {
            auto it = std::find_if(cpts.begin(), cpts.end(), [&](const Cpt& c) { return c.child() == v.id; });
            if (it == cpts.end()) throw ModelError("variable '" + v.name + "' has no CPT");
            if (std::count_if(cpts.begin(), cpts.end(), [&](const Cpt& c) { return c.child() == v.id; }) > 1)
                throw ModelError("variable '" + v.name + "' has more than one CPT");
            cpts_.push_back(*it);
        }
        if (cpts.size() != variables_.size()) throw ModelError("CPT for a variable outside the network");

        for (const auto& c : cpts_) {
            for (std::size_t k = 0; k < c.table().scope().size(); ++k) {
                const VarId id = c.table().scope()[k];
                if (!has_variable(id))
                    throw ModelError("CPT refers to unknown variable " + std::to_string(id.value));
                if (variable(id).cardinality() != c.table().cards()[k])
                    throw ModelError("CPT cardinality mismatch for variable '" + variable(id).name + "'");
            }
        }
        if (!topological_order_impl()) throw ModelError("parent lists contain a directed cycle");
    }

    const std::vector<DiscreteVariable>& variables() const { return variables_; }
    const std::vector<Cpt>& cpts() const { return cpts_; }

    bool has_variable(VarId id) const { return index(id).has_value(); }

    const DiscreteVariable& variable(VarId id) const { return variables_[require(id)]; }
    const Cpt& cpt(VarId id) const { return cpts_[require(id)]; }
    const std::vector<VarId>& parents(VarId id) const { return cpts_[require(id)].parents(); }

    std::vector<VarId> children(VarId id) const {
        require(id);
        std::vector<VarId> out;
        for (const auto& c : cpts_)
            if (std::find(c.parents().begin(), c.parents().end(), id) != c.parents().end())
                out.push_back(c.child());
        return out;
    }

    std::vector<VarId> ids() const {
        std::vector<VarId> out;
        for (const auto& v : variables_) out.push_back(v.id);
        return out;
    }

    std::optional<VarId> target() const {
        for (const auto& v : variables_)
            if (v.role == Role::Target) return v.id;
        return std::nullopt;
    }

    std::vector<VarId> with_role(Role role) const {
        std::vector<VarId> out;
        for (const auto& v : variables_)
            if (v.role == role) out.push_back(v.id);
        return out;
    }

    std::vector<VarId> topological_order() const { return *topological_order_impl(); }

    /// CPTs viewed as potentials of a Markov random field.
    std::vector<Factor> factors() const {
        std::vector<Factor> out;
        for (const auto& c : cpts_) out.push_back(c.table());
        return out;
    }

private:
    std::optional<std::size_t> index(VarId id) const {
        auto it = std::lower_bound(variables_.begin(), variables_.end(), id,
                                   [](const DiscreteVariable& v, VarId x) { return v.id < x; });
        if (it == variables_.end() || it->id != id) return std::nullopt;
        return static_cast<std::size_t>(it - variables_.begin());
    }

    std::size_t require(VarId id) const {
        auto i = index(id);
        if (!i) throw ModelError("unknown variable " + std::to_string(id.value));
        return *i;
    }

    // Kahn's algorithm with lowest-id-first selection; nullopt on a cycle.
    std::optional<std::vector<VarId>> topological_order_impl() const {
        std::map<VarId, std::size_t> indegree;
        for (const auto& c : cpts_) indegree[c.child()] = c.parents().size();
        std::vector<VarId> order;
        while (order.size() < cpts_.size()) {
            auto it = std::find_if(indegree.begin(), indegree.end(), [](const auto& e) { return e.second == 0; });
            if (it == indegree.end()) return std::nullopt;
            const VarId next = it->first;
            indegree.erase(it);
            order.push_back(next);
            for (const auto& c : cpts_)
                if (std::find(c.parents().begin(), c.parents().end(), next) != c.parents().end())
                    --indegree[c.child()];
        }
        return order;
    }

    std::vector<DiscreteVariable> variables_;
    std::vector<Cpt> cpts_;
};

/// P(full) as the product of consistent CPT entries, accumulated in log space.
inline double joint_probability(const BayesianNetwork& bn, const Assignment& full) {
    double log_p = 0.0;
    for (const auto& c : bn.cpts()) {
        const double p = c.table().at(full.restricted_to(c.table().scope()));
        log_p += std::log(p);
    }
    return std::exp(log_p);
}

/// Bag of potentials; every variable must occur in at least one scope.
class MarkovRandomField {
public:
    MarkovRandomField() = default;

    MarkovRandomField(std::vector<DiscreteVariable> variables, std::vector<Factor> potentials)
        : variables_(std::move(variables)), potentials_(std::move(potentials)) {
        std::sort(variables_.begin(), variables_.end(),
                  [](const DiscreteVariable& a, const DiscreteVariable& b) { return a.id < b.id; });
        for (const auto& v : variables_) {
            bool covered = false;
            for (const auto& f : potentials_) {
                if (auto p = f.position(v.id)) {
                    covered = true;
                    if (f.cards()[*p] != v.cardinality())
                        throw ModelError("potential cardinality mismatch for variable '" + v.name + "'");
                }
            }
            if (!covered) throw ModelError("variable '" + v.name + "' is in no potential");
        }
        for (const auto& f : potentials_)
            for (VarId id : f.scope())
                if (!has_variable(id))
                    throw ModelError("potential refers to unknown variable " + std::to_string(id.value));
    }

    const std::vector<DiscreteVariable>& variables() const { return variables_; }
    const std::vector<Factor>& potentials() const { return potentials_; }

    bool has_variable(VarId id) const {
        return std::any_of(variables_.begin(), variables_.end(), [&](const auto& v) { return v.id == id; });
    }

    const DiscreteVariable& variable(VarId id) const {
        for (const auto& v : variables_)
            if (v.id == id) return v;
        throw ModelError("unknown variable " + std::to_string(id.value));
    }

    std::vector<VarId> ids() const {
        std::vector<VarId> out;
        for (const auto& v : variables_) out.push_back(v.id);
        return out;
    }

    /// The MRF whose potentials are the CPTs of `bn`.
    static MarkovRandomField from_network(const BayesianNetwork& bn) {
        return MarkovRandomField(bn.variables(), bn.factors());
    }

private:
    std::vector<DiscreteVariable> variables_;
    std::vector<Factor> potentials_;
};

} // namespace frl
