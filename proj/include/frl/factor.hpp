#pragma once

// Discrete variables, assignments and dense factor tables.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "frl/errors.hpp"

namespace frl {

/// Opaque variable identifier. Ordering defines the canonical scope order.
struct VarId {
    std::uint32_t value = 0;

    constexpr VarId() = default;
    constexpr explicit VarId(std::uint32_t v) : value(v) {}

    friend constexpr auto operator<=>(VarId, VarId) = default;
};

enum class Role { Target, Private, Public };

inline std::string to_string(Role role) {
    switch (role) {
    case Role::Target: return "target";
    case Role::Private: return "private";
    case Role::Public: return "public";
    }
    return "public";
}

inline Role role_from_string(const std::string& s) {
    if (s == "target") return Role::Target;
    if (s == "private") return Role::Private;
    if (s == "public") return Role::Public;
    throw ModelError("unknown role '" + s + "'");
}

struct DiscreteVariable {
    VarId id;
    std::string name;
    std::vector<std::string> states;
    Role role = Role::Public;

    std::size_t cardinality() const { return states.size(); }

    /// Throws ModelError unless cardinality >= 2 and labels are unique.
    void validate() const {
        if (states.size() < 2)
            throw ModelError("variable '" + name + "' needs at least two states");
        std::vector<std::string> sorted = states;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw ModelError("variable '" + name + "' has duplicate state labels");
    }

    friend bool operator==(const DiscreteVariable&, const DiscreteVariable&) = default;
};

/// Convenience constructor for variables with generated labels s0, s1, ...
inline DiscreteVariable make_variable(VarId id, std::string name, std::size_t cardinality,
                                      Role role = Role::Public) {
    DiscreteVariable v{id, std::move(name), {}, role};
    for (std::size_t i = 0; i < cardinality; ++i) v.states.push_back("s" + std::to_string(i));
    return v;
}

/// Partial map from variable id to state index, kept sorted by id.
class Assignment {
public:
    using Binding = std::pair<VarId, std::uint32_t>;

    Assignment() = default;
    Assignment(std::initializer_list<Binding> bindings) {
        for (const auto& [var, state] : bindings) set(var, state);
    }

    void set(VarId var, std::uint32_t state) {
        auto it = lower(var);
        if (it != bindings_.end() && it->first == var)
            it->second = state;
        else
            bindings_.insert(it, {var, state});
    }

    void erase(VarId var) {
        auto it = lower(var);
        if (it != bindings_.end() && it->first == var) bindings_.erase(it);
    }

    bool contains(VarId var) const {
        auto it = lower(var);
        return it != bindings_.end() && it->first == var;
    }

    std::optional<std::uint32_t> find(VarId var) const {
        auto it = lower(var);
        if (it != bindings_.end() && it->first == var) return it->second;
        return std::nullopt;
    }

    std::uint32_t at(VarId var) const {
        auto s = find(var);
        if (!s) throw ModelError("variable " + std::to_string(var.value) + " is unbound");
        return *s;
    }

    /// Bindings of this assignment restricted to `vars`.
    Assignment restricted_to(const std::vector<VarId>& vars) const {
        Assignment out;
        for (VarId v : vars)
            if (auto s = find(v)) out.set(v, *s);
        return out;
    }

    /// Overwrites this assignment's bindings with those of `other`.
    void merge(const Assignment& other) {
        for (const auto& [var, state] : other) set(var, state);
    }

    std::size_t size() const { return bindings_.size(); }
    bool empty() const { return bindings_.empty(); }
    std::vector<Binding>::const_iterator begin() const { return bindings_.begin(); }
    std::vector<Binding>::const_iterator end() const { return bindings_.end(); }

    friend bool operator==(const Assignment&, const Assignment&) = default;

private:
    std::vector<Binding>::iterator lower(VarId var) {
        return std::lower_bound(bindings_.begin(), bindings_.end(), var,
                                [](const Binding& b, VarId v) { return b.first < v; });
    }
    std::vector<Binding>::const_iterator lower(VarId var) const {
        return std::lower_bound(bindings_.begin(), bindings_.end(), var,
                                [](const Binding& b, VarId v) { return b.first < v; });
    }

    std::vector<Binding> bindings_;
};

enum class Representation { Linear, Log };
enum class ReduceMode { Sum, Max, Min };

namespace detail {

inline double log_add(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

inline std::size_t checked_volume(const std::vector<std::size_t>& cards) {
    std::size_t n = 1;
    for (std::size_t c : cards) {
        if (c == 0) throw ModelError("zero cardinality in factor scope");
        if (n > std::numeric_limits<std::size_t>::max() / c)
            throw ModelError("factor table too large");
        n *= c;
    }
    return n;
}

} // namespace detail

/// Dense non-negative table over an ordered scope of discrete variables.
///
/// Scope is always kept sorted by variable id and the table is row-major over
/// that order (last variable varies fastest).
class Factor {
public:
    /// Scalar factor holding the multiplicative identity.
    Factor() : values_{1.0} {}

    /// Builds a factor from a table laid out row-major over `scope` in the order
    /// given; the result is realigned to canonical order.
    Factor(std::vector<VarId> scope, std::vector<std::size_t> cards, std::vector<double> values,
           Representation rep = Representation::Linear)
        : rep_(rep) {
        if (scope.size() != cards.size())
            throw ModelError("scope and cardinality lists differ in length");
        if (values.size() != detail::checked_volume(cards))
            throw ModelError("table length does not match scope cardinalities");

        std::vector<std::size_t> perm(scope.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return scope[a] < scope[b]; });
        for (std::size_t i = 1; i < perm.size(); ++i)
            if (scope[perm[i]] == scope[perm[i - 1]]) throw ModelError("duplicate variable in factor scope");

        const bool sorted = std::is_sorted(perm.begin(), perm.end());
        for (std::size_t i : perm) {
            scope_.push_back(scope[i]);
            cards_.push_back(cards[i]);
        }
        if (sorted) {
            values_ = std::move(values);
        } else {
            // Source strides in the caller's order, visited in canonical order.
            std::vector<std::size_t> src_stride(scope.size());
            std::size_t s = 1;
            for (std::size_t i = scope.size(); i-- > 0;) {
                src_stride[i] = s;
                s *= cards[i];
            }
            values_.resize(values.size());
            std::vector<std::size_t> counter(scope.size(), 0);
            std::size_t src = 0;
            for (std::size_t out = 0; out < values_.size(); ++out) {
                values_[out] = values[src];
                for (std::size_t k = scope_.size(); k-- > 0;) {
                    const std::size_t orig = perm[k];
                    if (++counter[k] < cards_[k]) {
                        src += src_stride[orig];
                        break;
                    }
                    src -= src_stride[orig] * (cards_[k] - 1);
                    counter[k] = 0;
                }
            }
        }
        validate_entries();
    }

    static Factor scalar(double value, Representation rep = Representation::Linear) {
        return Factor({}, {}, {value}, rep);
    }

    static Factor constant(std::vector<VarId> scope, std::vector<std::size_t> cards, double value,
                           Representation rep = Representation::Linear) {
        const std::size_t n = detail::checked_volume(cards);
        return Factor(std::move(scope), std::move(cards), std::vector<double>(n, value), rep);
    }

    const std::vector<VarId>& scope() const { return scope_; }
    const std::vector<std::size_t>& cards() const { return cards_; }
    const std::vector<double>& values() const { return values_; }
    Representation representation() const { return rep_; }
    std::size_t size() const { return values_.size(); }
    bool is_scalar() const { return scope_.empty(); }

    std::optional<std::size_t> position(VarId var) const {
        auto it = std::lower_bound(scope_.begin(), scope_.end(), var);
        if (it == scope_.end() || *it != var) return std::nullopt;
        return static_cast<std::size_t>(it - scope_.begin());
    }
    bool contains(VarId var) const { return position(var).has_value(); }

    std::size_t cardinality(VarId var) const {
        auto p = position(var);
        if (!p) throw ModelError("variable " + std::to_string(var.value) + " not in factor scope");
        return cards_[*p];
    }

    /// Row-major stride of each scope position.
    std::vector<std::size_t> strides() const {
        std::vector<std::size_t> st(scope_.size());
        std::size_t s = 1;
        for (std::size_t i = scope_.size(); i-- > 0;) {
            st[i] = s;
            s *= cards_[i];
        }
        return st;
    }

    /// Table index of the cell consistent with `a`; every scope variable must be bound.
    std::size_t index_of(const Assignment& a) const {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < scope_.size(); ++i) {
            const std::uint32_t s = a.at(scope_[i]);
            if (s >= cards_[i]) throw ModelError("state index out of range");
            idx = idx * cards_[i] + s;
        }
        return idx;
    }

    Assignment assignment_at(std::size_t index) const {
        Assignment a;
        for (std::size_t i = scope_.size(); i-- > 0;) {
            a.set(scope_[i], static_cast<std::uint32_t>(index % cards_[i]));
            index /= cards_[i];
        }
        return a;
    }

    double at(const Assignment& a) const { return values_[index_of(a)]; }

    double scalar_value() const {
        if (!is_scalar()) throw ModelError("factor is not a scalar");
        return values_.front();
    }

    friend bool operator==(const Factor&, const Factor&) = default;

private:
    void validate_entries() const {
        for (double v : values_) {
            if (std::isnan(v)) throw ModelError("NaN entry in factor table");
            if (rep_ == Representation::Linear && (v < 0.0 || std::isinf(v)))
                throw ModelError("linear factor entries must be finite and non-negative");
        }
    }

    std::vector<VarId> scope_;
    std::vector<std::size_t> cards_;
    std::vector<double> values_;
    Representation rep_ = Representation::Linear;
};

/// Pointwise product (linear) or sum (log) over the union of the two scopes.
inline Factor product(const Factor& a, const Factor& b) {
    if (a.representation() != b.representation())
        throw ModelError("factor product: representation mismatch");

    std::vector<VarId> scope;
    std::vector<std::size_t> cards;
    std::vector<std::size_t> stride_a, stride_b;
    const auto sa = a.strides();
    const auto sb = b.strides();
    std::size_t i = 0, j = 0;
    while (i < a.scope().size() || j < b.scope().size()) {
        if (j == b.scope().size() || (i < a.scope().size() && a.scope()[i] < b.scope()[j])) {
            scope.push_back(a.scope()[i]);
            cards.push_back(a.cards()[i]);
            stride_a.push_back(sa[i]);
            stride_b.push_back(0);
            ++i;
        } else if (i == a.scope().size() || b.scope()[j] < a.scope()[i]) {
            scope.push_back(b.scope()[j]);
            cards.push_back(b.cards()[j]);
            stride_a.push_back(0);
            stride_b.push_back(sb[j]);
            ++j;
        } else {
            if (a.cards()[i] != b.cards()[j])
                throw ModelError("factor product: cardinality mismatch for variable " +
                                 std::to_string(a.scope()[i].value));
            scope.push_back(a.scope()[i]);
            cards.push_back(a.cards()[i]);
            stride_a.push_back(sa[i]);
            stride_b.push_back(sb[j]);
            ++i;
            ++j;
        }
    }

    const bool log = a.representation() == Representation::Log;
    std::vector<double> out(detail::checked_volume(cards));
    std::vector<std::size_t> counter(scope.size(), 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = log ? a.values()[ia] + b.values()[ib] : a.values()[ia] * b.values()[ib];
        for (std::size_t d = scope.size(); d-- > 0;) {
            if (++counter[d] < cards[d]) {
                ia += stride_a[d];
                ib += stride_b[d];
                break;
            }
            ia -= stride_a[d] * (cards[d] - 1);
            ib -= stride_b[d] * (cards[d] - 1);
            counter[d] = 0;
        }
    }
    return Factor(std::move(scope), std::move(cards), std::move(out), a.representation());
}

/// Eliminates `var` by sum, max or min. Sum in log representation is log-sum-exp.
inline Factor reduce(const Factor& f, VarId var, ReduceMode mode) {
    const auto pos = f.position(var);
    if (!pos) throw ModelError("reduce: variable " + std::to_string(var.value) + " not in scope");

    const std::size_t p = *pos;
    const std::size_t card = f.cards()[p];
    std::size_t inner = 1;
    for (std::size_t k = p + 1; k < f.cards().size(); ++k) inner *= f.cards()[k];
    const std::size_t outer = f.size() / (card * inner);
    const bool log = f.representation() == Representation::Log;

    std::vector<VarId> scope = f.scope();
    std::vector<std::size_t> cards = f.cards();
    scope.erase(scope.begin() + static_cast<std::ptrdiff_t>(p));
    cards.erase(cards.begin() + static_cast<std::ptrdiff_t>(p));

    std::vector<double> out(outer * inner);
    const auto& v = f.values();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * card * inner + i;
            double acc = v[base];
            for (std::size_t s = 1; s < card; ++s) {
                const double x = v[base + s * inner];
                switch (mode) {
                case ReduceMode::Sum: acc = log ? detail::log_add(acc, x) : acc + x; break;
                case ReduceMode::Max: acc = std::max(acc, x); break;
                case ReduceMode::Min: acc = std::min(acc, x); break;
                }
            }
            out[o * inner + i] = acc;
        }
    }
    return Factor(std::move(scope), std::move(cards), std::move(out), f.representation());
}

/// Slices `f` at the evidence; evidence variables outside the scope are ignored.
inline Factor restrict(const Factor& f, const Assignment& evidence) {
    std::vector<VarId> scope;
    std::vector<std::size_t> cards, free_stride;
    const auto st = f.strides();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < f.scope().size(); ++k) {
        if (auto s = evidence.find(f.scope()[k])) {
            if (*s >= f.cards()[k])
                throw ModelError("evidence state " + std::to_string(*s) + " out of range for variable " +
                                 std::to_string(f.scope()[k].value));
            offset += *s * st[k];
        } else {
            scope.push_back(f.scope()[k]);
            cards.push_back(f.cards()[k]);
            free_stride.push_back(st[k]);
        }
    }
    if (scope.size() == f.scope().size()) return f;

    std::vector<double> out(detail::checked_volume(cards));
    std::vector<std::size_t> counter(scope.size(), 0);
    std::size_t src = offset;
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = f.values()[src];
        for (std::size_t d = scope.size(); d-- > 0;) {
            if (++counter[d] < cards[d]) {
                src += free_stride[d];
                break;
            }
            src -= free_stride[d] * (cards[d] - 1);
            counter[d] = 0;
        }
    }
    return Factor(std::move(scope), std::move(cards), std::move(out), f.representation());
}

inline Factor to_log(const Factor& f) {
    if (f.representation() == Representation::Log) return f;
    std::vector<double> v(f.values().size());
    std::transform(f.values().begin(), f.values().end(), v.begin(), [](double x) { return std::log(x); });
    return Factor(f.scope(), f.cards(), std::move(v), Representation::Log);
}

inline Factor to_linear(const Factor& f) {
    if (f.representation() == Representation::Linear) return f;
    std::vector<double> v(f.values().size());
    std::transform(f.values().begin(), f.values().end(), v.begin(), [](double x) { return std::exp(x); });
    return Factor(f.scope(), f.cards(), std::move(v), Representation::Linear);
}

} // namespace frl

template <>
struct std::hash<frl::VarId> {
    std::size_t operator()(frl::VarId v) const noexcept { return std::hash<std::uint32_t>{}(v.value); }
};
