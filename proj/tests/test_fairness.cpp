#include <gtest/gtest.h>

#include <cmath>

#include "frl/fairness.hpp"
#include "support/generators.hpp"

using namespace frl;
using namespace frl::testing;

namespace {

const VarId Y{0}, X{1}, Z{2};

// Y with parents X (private) and Z (public), no children.
// P(y0 | x0,z0) = 0.8, P(y0 | x1,z0) = 0.3, P(y0 | x0,z1) = 0.6, P(y0 | x1,z1) = 0.6.
BayesianNetwork two_parent() {
    const auto y = make_variable(Y, "y", 2, Role::Target);
    const auto x = make_variable(X, "x", 2, Role::Private);
    const auto z = make_variable(Z, "z", 2, Role::Public);
    // Layout (y, x, z), z fastest.
    const Cpt cy = Cpt::from_table(y, {x, z}, {0.8, 0.6, 0.3, 0.6, 0.2, 0.4, 0.7, 0.4});
    return BayesianNetwork({y, x, z}, {cy, Cpt::uniform(x), Cpt::uniform(z)});
}

Instance instance(Assignment a, std::uint32_t true_class = 0) { return {0, std::move(a), true_class}; }

/// Posterior of y0 at every private state, by enumeration.
std::vector<std::pair<Assignment, double>> sweep(const FairnessModel& m, const Assignment& features) {
    std::vector<DiscreteVariable> priv;
    for (VarId v : m.private_in_blanket()) priv.push_back(m.blanket_bn().variable(v));
    const Assignment evidence = m.blanket_evidence(features);
    std::vector<std::pair<Assignment, double>> out;
    for_each_state(priv, evidence, [&](const Assignment& a) {
        out.emplace_back(a.restricted_to(m.private_in_blanket()), oracle_posterior(m.blanket_bn(), m.target(), a)[0]);
    });
    return out;
}

} // namespace

TEST(Classify, TieGoesToFirstClass) {
    const auto y = make_variable(Y, "y", 2, Role::Target);
    const auto x = make_variable(X, "x", 2, Role::Public);
    const BayesianNetwork bn({y, x}, {Cpt::from_table(y, {x}, {0.8, 0.5, 0.2, 0.5}), Cpt::uniform(x)});
    const FairnessModel m(bn);
    const auto a = classify(m, {{X, 0}});
    EXPECT_EQ(a.predicted, 0u);
    EXPECT_NEAR(a.posterior[0], 0.8, 1e-12);
    const auto b = classify(m, {{X, 1}});
    EXPECT_EQ(b.predicted, 0u);
}

TEST(Classify, MatchesEnumerationArgmax) {
    Rng rng(51);
    for (int trial = 0; trial < 100; ++trial) {
        const auto bn = random_blanket_network(rng, {});
        const FairnessModel m(bn);
        Assignment inst = random_assignment(rng, bn.variables());
        inst.erase(m.target());
        const auto c = classify(m, inst);
        const auto p = oracle_posterior(bn, m.target(), inst);
        EXPECT_EQ(c.predicted, p[1] > p[0] ? 1u : 0u);
        EXPECT_NEAR(c.posterior[0], p[0], 1e-9);
    }
}

TEST(FairnessModel, RequiresBinaryTarget) {
    const auto y = make_variable(Y, "y", 3, Role::Target);
    EXPECT_THROW(FairnessModel(BayesianNetwork({y}, {Cpt::uniform(y)})), ModelError);
    const auto x = make_variable(X, "x", 2);
    EXPECT_THROW(FairnessModel(BayesianNetwork({x}, {Cpt::uniform(x)})), ModelError);
}

TEST(FairnessModel, UnboundBlanketFeatureIsAnError) {
    const FairnessModel m(two_parent());
    EXPECT_THROW(m.blanket_evidence({{X, 0}}), InferenceError);
}

TEST(Manhattan, Examples) {
    const std::vector<double> p{0.7, 0.3}, q{0.4, 0.6}, one{1, 0}, other{0, 1};
    EXPECT_DOUBLE_EQ(manhattan(p, p), 0.0);
    EXPECT_DOUBLE_EQ(manhattan(one, other), 1.0);
    EXPECT_NEAR(manhattan(p, q), 0.3, 1e-15);
    EXPECT_THROW(manhattan(p, std::vector<double>{1.0}), ModelError);
}

TEST(RatioField, TwoParentPotential) {
    const FairnessModel m(two_parent());
    const auto& mrf = m.ratio_mrf();
    ASSERT_EQ(mrf.potentials().size(), 1u);
    const Factor phi = to_linear(mrf.potentials()[0]);
    EXPECT_NEAR(phi.at({{X, 0}, {Z, 0}}), 0.25, 1e-12);
    EXPECT_NEAR(phi.at({{X, 1}, {Z, 0}}), 7.0 / 3.0, 1e-12);
}

TEST(RatioField, OneChildGivesTwoPotentials) {
    const auto y = make_variable(Y, "y", 2, Role::Target);
    const auto c = make_variable(X, "c", 3, Role::Private);
    const BayesianNetwork bn({y, c}, {Cpt::from_table(y, {}, {0.4, 0.6}),
                                      Cpt::from_table(c, {y}, {0.2, 0.5, 0.3, 0.3, 0.5, 0.2})});
    const auto mrf = build_ratio_mrf(bn, Y);
    EXPECT_EQ(mrf.potentials().size(), 2u);
    EXPECT_TRUE(mrf.potentials()[0].is_scalar());
    EXPECT_NEAR(std::exp(mrf.potentials()[0].scalar_value()), 1.5, 1e-12);
}

TEST(RatioField, ZeroDenominator) {
    const auto y = make_variable(Y, "y", 2, Role::Target);
    EXPECT_THROW(build_ratio_mrf(BayesianNetwork({y}, {Cpt::from_table(y, {}, {0.0, 1.0})}), Y), ZeroDenominatorError);
}

TEST(RatioField, ProductEqualsJointRatio) {
    Rng rng(52);
    for (int trial = 0; trial < 200; ++trial) {
        const auto bn = random_blanket_network(rng, {});
        const FairnessModel m(bn);
        const auto& b = m.blanket_bn();
        std::vector<DiscreteVariable> features;
        for (const auto& v : b.variables())
            if (v.id != m.target()) features.push_back(v);
        const Assignment some = random_assignment(rng, features);
        const double lhs = log_score(m.ratio_mrf(), some);
        Assignment a1 = some, a0 = some;
        a1.set(m.target(), 1);
        a0.set(m.target(), 0);
        EXPECT_NEAR(lhs, std::log(oracle_joint(b, a1) / oracle_joint(b, a0)), 1e-9);
    }
}

TEST(ConservativeBounds, TwoParentExample) {
    const FairnessModel m(two_parent());
    const auto b = conservative_bounds(m, {{X, 0}, {Z, 0}});
    EXPECT_EQ(b.x_min, (Assignment{{X, 1}}));
    EXPECT_EQ(b.x_max, (Assignment{{X, 0}}));
    EXPECT_NEAR(b.p_max, 0.8, 1e-12);
    EXPECT_NEAR(b.p_min, 0.3, 1e-12);
}

TEST(ConservativeBounds, AttainTrueExtremes) {
    Rng rng(53);
    for (int trial = 0; trial < 500; ++trial) {
        const auto bn = random_blanket_network(rng, {});
        const FairnessModel m(bn);
        Assignment inst = random_assignment(rng, bn.variables());
        inst.erase(m.target());
        const auto b = conservative_bounds(m, inst);
        double hi = -1.0, lo = 2.0;
        for (const auto& [x, p] : sweep(m, inst)) {
            hi = std::max(hi, p);
            lo = std::min(lo, p);
        }
        EXPECT_NEAR(b.p_max, hi, 1e-9);
        EXPECT_NEAR(b.p_min, lo, 1e-9);
    }
}

TEST(ConservativeBounds, MonotoneTransform) {
    // argmax of the joint ratio y1/y0 is an argmin of P(y0 | x, z).
    Rng rng(54);
    for (int trial = 0; trial < 200; ++trial) {
        const auto bn = random_blanket_network(rng, {});
        const FairnessModel m(bn);
        if (m.fair_by_design()) continue;
        Assignment inst = random_assignment(rng, bn.variables());
        inst.erase(m.target());
        const auto evidence = m.blanket_evidence(inst);
        double best_ratio = -INFINITY, at_best = 0.0, lo = 2.0;
        for (const auto& [x, p] : sweep(m, inst)) {
            Assignment full = evidence;
            full.merge(x);
            Assignment f1 = full, f0 = full;
            f1.set(m.target(), 1);
            f0.set(m.target(), 0);
            const double r = oracle_joint(m.blanket_bn(), f1) / oracle_joint(m.blanket_bn(), f0);
            if (r > best_ratio) {
                best_ratio = r;
                at_best = p;
            }
            lo = std::min(lo, p);
        }
        EXPECT_NEAR(at_best, lo, 1e-12);
    }
}

TEST(ConservativeBounds, SinglePrivateValue) {
    // Posterior constant in x: both extremes coincide and rho vanishes.
    const auto y = make_variable(Y, "y", 2, Role::Target);
    const auto x = make_variable(X, "x", 2, Role::Private);
    const BayesianNetwork bn({y, x}, {Cpt::from_table(y, {x}, {0.7, 0.7, 0.3, 0.3}), Cpt::uniform(x)});
    const FairnessModel m(bn);
    const auto b = conservative_bounds(m, {{X, 1}});
    EXPECT_NEAR(b.p_max, b.p_min, 1e-12);
    const auto r = frl::frl(m, instance({{X, 1}}));
    EXPECT_NEAR(r.frl, 0.0, 1e-12);
}

TEST(Frl, TwoParentExample) {
    const FairnessModel m(two_parent());
    const auto r = frl::frl(m, instance({{X, 0}, {Z, 0}}));
    EXPECT_NEAR(r.posterior_y0, 0.8, 1e-12);
    EXPECT_EQ(r.x_star, (Assignment{{X, 1}}));
    EXPECT_NEAR(r.frl, 0.5, 1e-12);
    ASSERT_TRUE(r.time_mrf_ns.has_value());

    const auto bf = frl_bruteforce(m, instance({{X, 0}, {Z, 0}}));
    EXPECT_NEAR(bf.frl, r.frl, 1e-12);
    EXPECT_EQ(bf.x_star, r.x_star);
    EXPECT_EQ(bf.x_max, r.x_max);
    EXPECT_EQ(bf.x_min, r.x_min);
    ASSERT_TRUE(bf.time_bn_ns.has_value());
}

TEST(Frl, ContextSpecificIrrelevance) {
    // At z1 the posterior does not depend on x.
    const FairnessModel m(two_parent());
    EXPECT_NEAR(frl::frl(m, instance({{X, 0}, {Z, 1}})).frl, 0.0, 1e-12);
    EXPECT_NEAR(frl::frl(m, instance({{X, 1}, {Z, 1}})).frl, 0.0, 1e-12);
}

TEST(Frl, FairByDesignIsZero) {
    const auto y = make_variable(Y, "y", 2, Role::Target);
    const auto x = make_variable(X, "x", 2, Role::Private);
    const auto z = make_variable(Z, "z", 2, Role::Public);
    // x is disconnected from y.
    const BayesianNetwork bn({y, x, z}, {Cpt::from_table(y, {z}, {0.9, 0.2, 0.1, 0.8}), Cpt::uniform(x), Cpt::uniform(z)});
    const FairnessModel m(bn);
    EXPECT_TRUE(m.fair_by_design());
    for (std::uint32_t xs = 0; xs < 2; ++xs)
        for (std::uint32_t zs = 0; zs < 2; ++zs) {
            EXPECT_EQ(frl::frl(m, instance({{X, xs}, {Z, zs}})).frl, 0.0);
            EXPECT_EQ(frl_bruteforce(m, instance({{X, xs}, {Z, zs}})).frl, 0.0);
        }
    // x_star still reports the observed private state.
    EXPECT_EQ(frl::frl(m, instance({{X, 1}, {Z, 0}})).x_star, (Assignment{{X, 1}}));
}

TEST(Frl, BruteForceCap) {
    const FairnessModel m(two_parent());
    EXPECT_THROW(frl_bruteforce(m, instance({{X, 0}, {Z, 0}}), 1), BruteForceCapError);
}

TEST(Frl, OracleEquivalenceAndBound) {
    Rng rng(55);
    std::size_t unique_checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const auto bn = random_blanket_network(rng, {});
        const FairnessModel m(bn);
        Assignment feats = random_assignment(rng, bn.variables());
        feats.erase(m.target());
        const auto r = frl::frl(m, instance(feats));
        const auto bf = frl_bruteforce(m, instance(feats));
        EXPECT_NEAR(r.frl, bf.frl, 1e-9);
        EXPECT_LE(r.frl, std::max(r.posterior_y0, 1.0 - r.posterior_y0) + 1e-12);

        // Unique optimum by enumeration.
        const auto states = sweep(m, feats);
        int at_best = 0;
        for (const auto& [x, p] : states) at_best += std::abs(std::abs(p - r.posterior_y0) - bf.frl) < 1e-9 ? 1 : 0;
        if (at_best == 1) {
            ++unique_checked;
            EXPECT_EQ(r.x_star.restricted_to(m.private_in_blanket()), bf.x_star.restricted_to(m.private_in_blanket()));
        }
    }
    EXPECT_GT(unique_checked, 100u);
}

TEST(Frl, SymmetricInTargetState) {
    // Deviations of P(y1 | .) give the same rho and x*.
    Rng rng(56);
    for (int trial = 0; trial < 200; ++trial) {
        const auto bn = random_blanket_network(rng, {});
        const FairnessModel m(bn);
        Assignment feats = random_assignment(rng, bn.variables());
        feats.erase(m.target());
        const auto r = frl::frl(m, instance(feats));
        const double p1_hat = 1.0 - r.posterior_y0;
        double best = 0.0;
        for (const auto& [x, p] : sweep(m, feats)) best = std::max(best, std::abs((1.0 - p) - p1_hat));
        EXPECT_NEAR(best, r.frl, 1e-9);
    }
}

TEST(Frl, PublicStateDeterminesRhoWithTwoPrivateStates) {
    // One binary private feature: rho = p_max - p_min whatever the observed x.
    Rng rng(57);
    for (int trial = 0; trial < 100; ++trial) {
        const auto bn = private_children_network(rng, 1, 2);
        const FairnessModel m(bn);
        Assignment feats = random_assignment(rng, bn.variables());
        feats.erase(m.target());
        Assignment other = feats;
        other.set(VarId{2}, 1 - feats.at(VarId{2}));
        EXPECT_NEAR(frl::frl(m, instance(feats)).frl, frl::frl(m, instance(other)).frl, 1e-9);
    }
}

TEST(Frl, PrivateChildrenFieldHasWidthOne) {
    // Each private child only meets Y, so after conditioning on the public
    // evidence the field decomposes into unary potentials.
    Rng rng(58);
    for (std::size_t n = 2; n <= 11; ++n) {
        const auto bn = private_children_network(rng, n, 1);
        const FairnessModel m(bn);
        const auto& privates = m.private_in_blanket();
        ASSERT_EQ(privates.size(), n);
        std::vector<Factor> conditioned;
        Assignment z;
        for (VarId v : m.public_in_blanket()) z.set(v, 0);
        for (const auto& p : m.ratio_mrf().potentials()) conditioned.push_back(restrict(p, z));
        EXPECT_LE(induced_width(conditioned, min_fill_order(conditioned, privates)), 1u);
        for (const auto& f : conditioned) EXPECT_LE(f.scope().size(), 1u);
    }
}
