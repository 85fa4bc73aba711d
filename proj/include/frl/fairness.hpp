#pragma once

// Fairness robustness level (FRL) of a binary Bayesian-network classifier.
//
// The FRL of an instance (x, z) is the largest change of P(y0 | x', z) over all
// re-assignments x' of the private features. It is obtained from the two
// extreme posteriors, which are MPE problems in an auxiliary field of
// likelihood-ratio potentials; a brute-force sweep over the private space
// serves as the reference path.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "frl/errors.hpp"
#include "frl/factor.hpp"
#include "frl/inference.hpp"
#include "frl/learning.hpp"
#include "frl/model.hpp"

namespace frl {

/// Raised when the private space is larger than the brute-force cap.
class BruteForceCapError : public InferenceError {
public:
    using InferenceError::InferenceError;
};

inline constexpr std::uint64_t kDefaultBruteForceCap = std::uint64_t{1} << 20;

struct Instance {
    std::size_t id = 0;
    Assignment features;  ///< binds every feature (target binding, if any, is ignored)
    std::uint32_t true_class = 0;
};

struct FrlRecord {
    std::size_t instance_id = 0;
    std::uint32_t true_class = 0;
    std::uint32_t predicted_class = 0;
    double posterior_y0 = 0.0;
    double brier = 0.0;
    double frl = 0.0;
    Assignment x_star;  ///< over every private feature of the model
    Assignment x_max;   ///< private blanket state maximizing P(y0 | x, z)
    Assignment x_min;   ///< private blanket state minimizing P(y0 | x, z)
    double p_max = 0.0;
    double p_min = 0.0;
    Assignment public_state;  ///< public blanket features of the instance
    std::optional<std::int64_t> time_bn_ns;
    std::optional<std::int64_t> time_mrf_ns;
};

/// Likelihood-ratio field over the blanket of binary `y`: one potential
/// P(y1 | pa) / P(y0 | pa) over the parents of y, and for each child C one
/// potential P(c | pa'_C, y1) / P(c | pa'_C, y0). Entries are stored as logs.
inline MarkovRandomField build_ratio_mrf(const BayesianNetwork& blanket_bn, VarId y) {
    if (blanket_bn.variable(y).cardinality() != 2)
        throw ModelError("ratio field needs a binary target, '" + blanket_bn.variable(y).name + "' has " +
                         std::to_string(blanket_bn.variable(y).cardinality()) + " states");

    auto log_ratio = [&](const Factor& cpt) {
        const Factor num = restrict(cpt, Assignment{{y, 1}});
        const Factor den = restrict(cpt, Assignment{{y, 0}});
        std::vector<double> values(num.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (den.values()[i] == 0.0)
                throw ZeroDenominatorError("zero probability in the denominator of a ratio potential");
            values[i] = std::log(num.values()[i]) - std::log(den.values()[i]);
        }
        return Factor(num.scope(), num.cards(), std::move(values), Representation::Log);
    };

    std::vector<Factor> potentials{log_ratio(blanket_bn.cpt(y).table())};
    for (VarId c : blanket_bn.children(y)) potentials.push_back(log_ratio(blanket_bn.cpt(c).table()));

    std::vector<DiscreteVariable> vars;
    for (const auto& v : blanket_bn.variables())
        if (v.id != y) vars.push_back(v);
    return MarkovRandomField(std::move(vars), std::move(potentials));
}

/// Everything needed to classify and audit instances for one learned network.
class FairnessModel {
public:
    /// `bn` must carry exactly one binary target variable.
    explicit FairnessModel(const BayesianNetwork& bn) {
        const auto y = bn.target();
        if (!y) throw ModelError("network has no target variable");
        if (bn.variable(*y).cardinality() != 2)
            throw ModelError("only binary targets are supported; '" + bn.variable(*y).name + "' has " +
                             std::to_string(bn.variable(*y).cardinality()) + " states");
        y_ = *y;
        all_private_ = bn.with_role(Role::Private);
        blanket_bn_ = blanket_subnetwork(bn, y_);
        for (const auto& v : blanket_bn_.variables()) {
            if (v.role == Role::Private) private_.push_back(v.id);
            if (v.role == Role::Public) public_.push_back(v.id);
        }
        ratio_mrf_ = build_ratio_mrf(blanket_bn_, y_);
    }

    VarId target() const { return y_; }
    const BayesianNetwork& blanket_bn() const { return blanket_bn_; }
    const std::vector<VarId>& private_in_blanket() const { return private_; }
    const std::vector<VarId>& public_in_blanket() const { return public_; }
    const std::vector<VarId>& all_private() const { return all_private_; }
    const MarkovRandomField& ratio_mrf() const { return ratio_mrf_; }
    bool fair_by_design() const { return private_.empty(); }

    /// Blanket features of `instance`; throws if one is unbound.
    Assignment blanket_evidence(const Assignment& instance) const {
        Assignment e;
        for (const auto& v : blanket_bn_.variables()) {
            if (v.id == y_) continue;
            auto s = instance.find(v.id);
            if (!s) throw InferenceError("instance does not bind blanket feature '" + v.name + "'");
            e.set(v.id, *s);
        }
        return e;
    }

    /// P(y0 | blanket features of `instance`).
    double posterior_y0(const Assignment& instance) const {
        return posterior(blanket_bn_, y_, blanket_evidence(instance))[0];
    }

private:
    VarId y_;
    BayesianNetwork blanket_bn_;
    std::vector<VarId> private_;
    std::vector<VarId> public_;
    std::vector<VarId> all_private_;
    MarkovRandomField ratio_mrf_;
};

struct Classification {
    std::uint32_t predicted = 0;
    std::vector<double> posterior;
};

/// Most probable class; an exact tie goes to state 0.
inline Classification classify(const FairnessModel& model, const Assignment& instance) {
    Classification c;
    c.posterior = posterior(model.blanket_bn(), model.target(), model.blanket_evidence(instance));
    c.predicted = c.posterior[1] > c.posterior[0] ? 1u : 0u;
    return c;
}

/// Half the L1 distance between two distributions over the same variable.
inline double manhattan(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw ModelError("manhattan: distributions differ in dimension");
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
    return d / 2.0;
}

inline double brier(std::span<const double> posterior, std::uint32_t true_class) {
    const double miss = 1.0 - posterior[true_class];
    return miss * miss;
}

struct ConservativeBounds {
    Assignment x_max;
    Assignment x_min;
    double p_max = 0.0;
    double p_min = 0.0;
};

/// Private blanket states extremizing P(y0 | x, z): the minimizer is the
/// max-product MPE of the ratio field given the public evidence, the maximizer
/// the min-product MPE. Both posteriors are recomputed by exact updating.
inline ConservativeBounds conservative_bounds(const FairnessModel& model, const Assignment& instance) {
    const Assignment evidence = model.blanket_evidence(instance);
    const Assignment z_hat = evidence.restricted_to(model.public_in_blanket());
    ConservativeBounds b;
    if (model.fair_by_design()) {
        b.p_max = b.p_min = model.posterior_y0(evidence);
        return b;
    }
    b.x_min = mpe(model.ratio_mrf(), model.private_in_blanket(), z_hat, MpeMode::Max).assignment;
    b.x_max = mpe(model.ratio_mrf(), model.private_in_blanket(), z_hat, MpeMode::Min).assignment;

    Assignment at_max = z_hat;
    at_max.merge(b.x_max);
    Assignment at_min = z_hat;
    at_min.merge(b.x_min);
    b.p_max = model.posterior_y0(at_max);
    b.p_min = model.posterior_y0(at_min);
    return b;
}

namespace detail {

inline FrlRecord record_skeleton(const FairnessModel& model, const Instance& inst, const Classification& c) {
    FrlRecord r;
    r.instance_id = inst.id;
    r.true_class = inst.true_class;
    r.predicted_class = c.predicted;
    r.posterior_y0 = c.posterior[0];
    r.brier = brier(c.posterior, inst.true_class);
    r.public_state = inst.features.restricted_to(model.public_in_blanket());
    r.x_star = inst.features.restricted_to(model.all_private());
    return r;
}

inline std::int64_t elapsed_ns(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();
}

} // namespace detail

/// FRL through the ratio-field reduction.
///
/// x* is the maximizer when P(y0 | x, z) lies strictly below the midpoint of the
/// two extremes and the minimizer otherwise; the FRL is recomputed from the
/// exact posterior at x*.
inline FrlRecord frl(const FairnessModel& model, const Instance& inst) {
    const auto start = std::chrono::steady_clock::now();
    const Classification c = classify(model, inst.features);
    FrlRecord r = detail::record_skeleton(model, inst, c);
    const double p_hat = c.posterior[0];

    if (model.fair_by_design()) {
        r.p_max = r.p_min = p_hat;
        r.frl = 0.0;
    } else {
        ConservativeBounds b = conservative_bounds(model, inst.features);
        const bool take_max = p_hat < (b.p_max + b.p_min) / 2.0;
        const Assignment& chosen = take_max ? b.x_max : b.x_min;
        r.frl = std::abs((take_max ? b.p_max : b.p_min) - p_hat);
        r.x_star.merge(chosen);
        r.x_max = std::move(b.x_max);
        r.x_min = std::move(b.x_min);
        r.p_max = b.p_max;
        r.p_min = b.p_min;
    }
    r.time_mrf_ns = detail::elapsed_ns(start);
    return r;
}

/// Number of joint states of the private blanket features.
inline std::uint64_t private_space_size(const FairnessModel& model) {
    std::uint64_t n = 1;
    for (VarId v : model.private_in_blanket()) {
        const auto card = model.blanket_bn().variable(v).cardinality();
        if (n > std::numeric_limits<std::uint64_t>::max() / card) return std::numeric_limits<std::uint64_t>::max();
        n *= card;
    }
    return n;
}

/// FRL by sweeping every joint private state, lowest index first; the first
/// maximizer wins ties.
inline FrlRecord frl_bruteforce(const FairnessModel& model, const Instance& inst,
                                std::uint64_t cap = kDefaultBruteForceCap) {
    const std::uint64_t space = private_space_size(model);
    if (space > cap)
        throw BruteForceCapError("private space of " + std::to_string(space) + " states exceeds the cap of " +
                                 std::to_string(cap));

    const auto start = std::chrono::steady_clock::now();
    const Classification c = classify(model, inst.features);
    FrlRecord r = detail::record_skeleton(model, inst, c);
    const double p_hat = c.posterior[0];
    r.p_max = r.p_min = p_hat;

    if (!model.fair_by_design()) {
        const auto& privates = model.private_in_blanket();
        Assignment evidence = model.blanket_evidence(inst.features);
        std::vector<std::uint32_t> state(privates.size(), 0);
        bool first = true;
        Assignment best_dev;
        for (std::uint64_t k = 0; k < space; ++k) {
            for (std::size_t i = 0; i < privates.size(); ++i) evidence.set(privates[i], state[i]);
            const double p = posterior(model.blanket_bn(), model.target(), evidence)[0];
            const double dev = std::abs(p - p_hat);
            const Assignment x = evidence.restricted_to(privates);
            if (first || dev > r.frl) {
                r.frl = dev;
                best_dev = x;
            }
            if (first || p > r.p_max) {
                r.p_max = p;
                r.x_max = x;
            }
            if (first || p < r.p_min) {
                r.p_min = p;
                r.x_min = x;
            }
            first = false;
            for (std::size_t i = privates.size(); i-- > 0;) {
                if (++state[i] < model.blanket_bn().variable(privates[i]).cardinality()) break;
                state[i] = 0;
            }
        }
        r.x_star.merge(best_dev);
    }
    r.time_bn_ns = detail::elapsed_ns(start);
    return r;
}

} // namespace frl
