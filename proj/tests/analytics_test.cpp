#include <gtest/gtest.h>

#include <cmath>

#include <popproto/analytics.hpp>
#include <popproto/library.hpp>
#include <popproto/rng.hpp>

using namespace popproto;

namespace {

OscillatorView lazy_view(double a1, double a2, double a3) {
    OscillatorView v;
    v.a = {a1, a2, a3};
    v.plus = v.a;
    v.s = a1 + a2 + a3;
    return v;
}

}  // namespace

TEST(Potentials, Center) {
    const auto r = potentials(lazy_view(1.0 / 3, 1.0 / 3, 1.0 / 3), 0.06);
    ASSERT_TRUE(r.phi_valid);
    EXPECT_NEAR(r.phi, -std::log(27.0), 1e-14);
    EXPECT_NEAR(r.delta, 0.0, 1e-15);
    EXPECT_NEAR(r.eta, 0.0, 1e-7);
}

TEST(Potentials, Deltas) {
    const auto r = potentials(lazy_view(0.5, 0.25, 0.25), 0.06);
    EXPECT_DOUBLE_EQ(r.delta_i[0], 0.25);
    EXPECT_DOUBLE_EQ(r.delta_i[1], -0.25);
    EXPECT_DOUBLE_EQ(r.delta_i[2], 0.0);
    EXPECT_DOUBLE_EQ(r.delta, std::sqrt(1.0 / 8));
}

TEST(Potentials, KappaVanishesOnTheSlowManifold) {
    auto v = lazy_view(0.5, 0.3, 0.2);
    for (int i = 0; i < 3; ++i) v.pp[i] = v.a[i] * v.a[i] / v.s;
    const auto r = potentials(v, 0.06);
    ASSERT_TRUE(r.kappa_all_valid);
    EXPECT_NEAR(r.kappa, 0.0, 1e-15);
    EXPECT_NEAR(r.psi, r.eta * r.eta, 1e-14);
}

TEST(Potentials, Identities) {
    Rng rng(11);
    for (int t = 0; t < 200; ++t) {
        OscillatorView v;
        for (int i = 0; i < 3; ++i) {
            v.a[i] = 0.01 + rng.unit();
            v.pp[i] = v.a[i] * rng.unit();
        }
        const double scale = (0.2 + 0.8 * rng.unit()) / (v.a[0] + v.a[1] + v.a[2]);
        for (int i = 0; i < 3; ++i) {
            v.a[i] *= scale;
            v.pp[i] *= scale;
        }
        v.s = v.a[0] + v.a[1] + v.a[2];
        const auto r = potentials(v, 0.06);
        EXPECT_NEAR(r.eta * r.eta, std::log(v.s * v.s * v.s / 27) - r.phi, 1e-12);
        for (int i = 0; i < 3; ++i) EXPECT_NEAR(v.pp[i], v.a[i] / v.s * (v.a[i] + r.kappa_i[i]), 1e-14);
    }
}

TEST(Potentials, EmptySpeciesMarksInvalid) {
    const auto r = potentials(lazy_view(0.5, 0.5, 0.0), 0.06);
    EXPECT_FALSE(r.phi_valid);
    EXPECT_FALSE(r.eta_valid);
    EXPECT_FALSE(r.kappa_valid[2]);
    EXPECT_FALSE(r.kappa_all_valid);
    EXPECT_TRUE(std::isnan(r.kappa));
}

TEST(Drift, LimitMatchesOscillatorEquations) {
    const double p = 0.06;
    const auto po = build("po");
    const RuleTable t(po);
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> u(po.size());
        double total = 0;
        for (auto& x : u) total += (x = rng.unit());
        for (auto& x : u) x /= total;
        const auto d = limit_drift(u, t);
        const auto v = project(po, u);
        const auto dv = project(po, d);
        const double x = v.x, s = v.s;
        for (int i = 0; i < 3; ++i) {
            const int prev = (i + 2) % 3, next = (i + 1) % 3;
            const double a_dot = x * (s / 3 - v.a[i]) + p * v.a[prev] * (v.a[i] + v.pp[i]) -
                                 p * v.a[i] * (v.a[next] + v.pp[next]);
            const double pp_dot = -x * v.pp[i] + v.a[i] * v.a[i] - s * v.pp[i];
            EXPECT_NEAR(dv.a[i], a_dot, 1e-14);
            EXPECT_NEAR(dv.pp[i], pp_dot, 1e-14);
        }
        EXPECT_NEAR(dv.x, 0.0, 1e-15);
        // phi-dot through the chain rule
        double phi_dot = 0, sum_inv = 0, cross = 0;
        for (int i = 0; i < 3; ++i) {
            phi_dot += dv.a[i] / v.a[i];
            sum_inv += s / v.a[i];
            cross += v.pp[i] * (v.a[(i + 2) % 3] / v.a[i] - 1);
        }
        EXPECT_NEAR(phi_dot, x / 3 * (sum_inv - 9) + p * cross, 1e-12);
    }
}

TEST(Drift, RpsKeepsPhiConstant) {
    const auto rps = build("rps");
    const RuleTable t(rps);
    const std::vector<double> u{0.5, 0.25, 0.25};
    const auto d = limit_drift(u, t);
    EXPECT_NEAR(d[0], 0.0, 1e-16);  // p a1 (a3 - a2)
    EXPECT_NEAR(d[1], 0.06 * 0.25 * (0.5 - 0.25), 1e-16);
    double phi_dot = 0;
    for (int i = 0; i < 3; ++i) phi_dot += d[i] / u[i];
    EXPECT_NEAR(phi_dot, 0.0, 1e-16);
}

TEST(Drift, CornerIsFixed) {
    const auto po = build("po");
    const auto c = canonical_init(po, "corner", 100, std::int64_t{0});
    for (double d : drift(c, po)) EXPECT_EQ(d, 0.0);
}

TEST(Drift, FiniteDriftOfTwoAgents) {
    // (A1, A2): A2 initiates with probability 1/2 and wins with p
    const auto rps = build("rps");
    const auto d = drift(Configuration({1, 1, 0}), rps);
    EXPECT_NEAR(d[0], -0.03, 1e-15);
    EXPECT_NEAR(d[1], 0.03, 1e-15);
    EXPECT_EQ(d[2], 0.0);
}

TEST(Projector, Corner) {
    const auto po = build("po");
    const OscillatorProjector proj(po);
    auto c = canonical_init(po, "corner", 10, std::int64_t{2});
    EXPECT_EQ(proj.corner(c), 0);
    c[po.at("A1+")] += 1;
    c[po.at("A1++")] -= 1;
    EXPECT_FALSE(proj.corner(c));
    const auto v = proj.view(canonical_init(po, "center", 12, std::int64_t{3}));
    EXPECT_DOUBLE_EQ(v.x, 0.25);
    EXPECT_DOUBLE_EQ(v.s, 0.75);
    EXPECT_DOUBLE_EQ(v.plus[1], 0.25);
}

TEST(Projector, TaggedOscillators) {
    const auto bb = build("bitbroadcast");
    EXPECT_EQ(oscillator_tags(bb), (std::vector<std::string>{"1", "2"}));
    EXPECT_EQ(oscillator_tags(build("po")), (std::vector<std::string>{""}));
    const auto c = canonical_init(bb, "corner", 20, {{"X[1]", 1}, {"X[2]", 3}});
    const auto v1 = view(c, bb, "1"), v2 = view(c, bb, "2");
    EXPECT_DOUBLE_EQ(v1.x, 0.05);
    EXPECT_DOUBLE_EQ(v2.x, 0.15);
    EXPECT_DOUBLE_EQ(v1.pp[0], 0.8);
    EXPECT_DOUBLE_EQ(v2.pp[0], 0.8);
}

TEST(Period, SquareWave) {
    std::vector<double> rounds;
    std::array<std::vector<double>, 3> a;
    for (int t = 0; t < 1000; ++t) {
        rounds.push_back(t);
        for (int i = 0; i < 3; ++i) a[i].push_back(((t + 33 * i) / 50) % 2 == 0 ? 0.0 : 1.0);
    }
    const auto est = estimate_period(rounds, a, 1.0);
    ASSERT_TRUE(est.valid);
    EXPECT_DOUBLE_EQ(est.period, 100.0);
    // time rescaled by three
    for (auto& r : rounds) r *= 3;
    EXPECT_DOUBLE_EQ(estimate_period(rounds, a, 1.0).period, 300.0);
}

TEST(Period, ConstantSeriesHasNoCycles) {
    std::vector<double> rounds(100);
    std::array<std::vector<double>, 3> a;
    for (int t = 0; t < 100; ++t) {
        rounds[t] = t;
        for (auto& s : a) s.push_back(1.0 / 3);
    }
    const auto est = estimate_period(rounds, a, 1.0);
    EXPECT_FALSE(est.valid);
    EXPECT_EQ(est.cycles, 0);
}

TEST(Answers, Fractions) {
    const auto bb = build("bitbroadcast");
    const auto c = canonical_init(bb, "corner", 100, {{"X[1]", 4}});
    const auto f = answer_fractions(c, bb);
    EXPECT_DOUBLE_EQ(f.at(std::string(kNoneAnswer)), 0.04);
    EXPECT_DOUBLE_EQ(f.at("1"), 0.96);
    EXPECT_DOUBLE_EQ(f.at("2"), 0.0);
}

TEST(Answers, LogConfig) {
    const auto l = log_config(Configuration({0, 1, 10}));
    EXPECT_EQ(l[0], -1.0);
    EXPECT_EQ(l[1], 0.0);
    EXPECT_DOUBLE_EQ(l[2], std::log(10.0));
}
