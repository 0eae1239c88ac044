#include "kernelguard/attacks.hpp"
#include "scenario_util.hpp"

#include <gtest/gtest.h>

using namespace kgtest;

namespace {

// Zero at 0.5: numerator 0.1 c1 + c2 (z − 0.9).
StateSpaceSystem half_zero_plant() { return {mat({{0.9, 0.1}, {0.0, 0.8}}), mat({{0.0}, {1.0}}), mat({{1.0, 0.25}}), mat({{0.0}})}; }

// Poles 0.9, 0.8; zero 1.05.
StateSpaceSystem unstable_zero_plant() { return {mat({{1.7, -0.72}, {1.0, 0.0}}), mat({{1.0}, {0.0}}), mat({{1.0, -1.05}}), mat({{0.0}})}; }

// Poles 0.5, 0.6, 0.7; zeros 0.3 ± 0.4i.
StateSpaceSystem complex_zero_plant() {
    return {mat({{1.8, -1.07, 0.21}, {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}}), mat({{1.0}, {0.0}, {0.0}}),
            mat({{1.0, -0.6, 0.25}}), mat({{0.0}})};
}

AttackSpec additive(Channel c, Vector value, TimeIndex start = 0, TimeIndex end = forever) {
    AttackSpec a;
    a.kind = AttackKind::additive;
    a.channel = c;
    a.value = std::move(value);
    a.start = start;
    a.end = end;
    return a;
}

AttackSpec covert(Channel c = Channel::y, TimeIndex start = 0) {
    AttackSpec a;
    a.kind = AttackKind::covert;
    a.channel = c;
    a.source = c == Channel::y ? Channel::u : Channel::gamma;
    a.start = start;
    return a;
}

GainBank bank0(const StateSpaceSystem& g) {
    Matrix F = feedback_gain(g.A(), g.B(), Matrix::Identity(g.order(), g.order()), Matrix::Identity(1, 1));
    Matrix L = observer_gain(g.A(), g.C(), Matrix::Identity(g.order(), g.order()), Matrix::Identity(1, 1));
    return constant_bank(F, L, 1000);
}

}  // namespace

TEST(ZeroDynamics, NoFiniteZerosIsInfeasible) {
    EXPECT_THROW(zero_dynamics_attack(desk_plant()), InfeasibleError);
}

TEST(ZeroDynamics, SignalAndStateDirection) {
    auto a = zero_dynamics_attack(half_zero_plant(), std::nullopt, 2.0);
    EXPECT_NEAR(a.z0.real(), 0.5, 1e-9);
    EXPECT_NEAR(a.z0.imag(), 0.0, 1e-12);
    EXPECT_NEAR(a.g.norm(), 1.0, 1e-12);
    for (int j = 0; j < 20; ++j) EXPECT_NEAR(a.input(j)(0), 2.0 * std::pow(0.5, j), 1e-12);
    // x0 = −(A − 0.5 I)⁻¹ B g by hand: [0.8333…, −3.3333…]
    const Vector dx = a.state_offset();
    EXPECT_NEAR(dx(0), 2.0 * 0.25 / 0.3, 1e-9);
    EXPECT_NEAR(dx(1), -2.0 / 0.3, 1e-9);
}

TEST(ZeroDynamics, MatchedStateGivesZeroOutput) {
    for (const auto& g : {half_zero_plant(), unstable_zero_plant(), complex_zero_plant()}) {
        auto a = zero_dynamics_attack(g, std::nullopt, 1.0, 0.7, 1000);
        Vector x = a.state_offset();
        for (int j = 0; j < 150; ++j) {
            const Vector u = a.input(j);
            EXPECT_LT((g.C() * x + g.D() * u).norm(), 1e-9 * std::max(1.0, x.norm())) << "step " << j;
            x = g.A() * x + g.B() * u;
        }
    }
}

TEST(ZeroDynamics, ComplexZeroPicksLargestModulus) {
    auto a = zero_dynamics_attack(complex_zero_plant());
    EXPECT_NEAR(std::abs(a.z0), 0.5, 1e-8);
    EXPECT_NEAR(std::abs(a.z0.imag()), 0.4, 1e-8);
    auto b = zero_dynamics_attack(unstable_zero_plant());
    EXPECT_NEAR(b.z0.real(), 1.05, 1e-8);
}

TEST(ZeroDynamics, RequestedZeroMustExist) {
    EXPECT_THROW(zero_dynamics_attack(half_zero_plant(), Complex(0.7, 0.0)), ValidationError);
    EXPECT_NO_THROW(zero_dynamics_attack(half_zero_plant(), Complex(0.5, 0.0)));
}

TEST(ZeroDynamics, UnstableZeroIsClipped) {
    auto a = zero_dynamics_attack(unstable_zero_plant(), std::nullopt, 1.0, 0.0, 50);
    const double cap = std::pow(1.05, 50);
    for (int j = 0; j < 500; ++j) EXPECT_LE(std::abs(a.input(j)(0)), cap * (1 + 1e-12));
    EXPECT_NEAR(std::abs(a.input(400)(0)), cap, 1e-9 * cap);
}

// Without the state offset the residual is the observer error of the missing
// offset: r0(k) = −C (A − L C)^k x_off.
TEST(ZeroDynamics, UnmatchedResidualDecaysAtObserverRate) {
    const auto g = unstable_zero_plant();
    const GainBank b = bank0(g);
    auto a = zero_dynamics_attack(g, std::nullopt, 1.0, 0.0, 1000);
    const Vector xoff = a.state_offset();
    ObserverController ctl(g, make_controller(g, b.F[0], b.L[0]));
    Vector x = Vector::Zero(2);
    const Matrix AL = g.A() - b.L[0] * g.C();
    Matrix P = Matrix::Identity(2, 2);
    for (int k = 0; k < 120; ++k) {
        const Vector ua = ctl.control(vec({0})) + a.input(k);
        const Vector y = g.C() * x + g.D() * ua;
        x = g.A() * x + g.B() * ua;
        const Vector r0 = ctl.observe(y);
        EXPECT_NEAR(r0(0), -(g.C() * P * xoff)(0), 1e-9) << "step " << k;
        P = AL * P;
    }
}

TEST(Covert, ZeroInputGivesZeroOutput) {
    const auto g = desk_plant();
    Adversary adv(g, bank0(g), {additive(Channel::u, vec({0.0})), covert()});
    for (TimeIndex k = 0; k < 50; ++k) {
        adv.begin_step(k);
        EXPECT_EQ(adv.current(Channel::y)->norm(), 0.0);
    }
}

TEST(Covert, StepMatchesIndependentStepResponse) {
    const auto g = desk_plant();
    Adversary adv(g, bank0(g), {additive(Channel::u, vec({1.0})), covert()});
    Matrix Ak = Matrix::Identity(2, 2);
    double step = 0.0;  // Σ_{j<k} C A^j B
    for (TimeIndex k = 0; k < 80; ++k) {
        adv.begin_step(k);
        EXPECT_NEAR((*adv.current(Channel::y))(0), -step, 1e-12) << "step " << k;
        step += (g.C() * Ak * g.B())(0, 0);
        Ak = g.A() * Ak;
    }
}

TEST(Covert, KernelConditionHolds) {
    const auto g = half_zero_plant();
    const GainBank b = bank0(g);
    AttackSpec au = additive(Channel::u, vec({0.8}), 10);
    au.shape = Shape::sine;
    au.frequency = 0.03;
    Adversary adv(g, b, {au, covert(Channel::y, 10)});
    auto f = coprime_factors(g, b.F[0], b.L[0]);
    for (TimeIndex k = 0; k < 300; ++k) {
        adv.begin_step(k);
        const Vector ay = adv.current(Channel::y).value_or(Vector::Zero(1));
        const Vector aU = adv.current(Channel::u).value_or(Vector::Zero(1));
        EXPECT_LT((f.Mhat.step(ay) + f.Nhat.step(aU)).norm(), 1e-9);
    }
}

TEST(Covert, NoiseFreeBaselineResidualStaysZero) {
    json d = desk_doc("baseline", 600);
    d["reference"] = {0.3};
    d["attacks"] = json::array({{{"type", "additive"}, {"channel", "u"}, {"shape", "sine"}, {"value", {3.0}},
                                 {"frequency", 0.02}, {"start", 100}},
                                {{"type", "covert"}, {"channel", "y"}, {"start", 100}}});
    const auto rep = run_scenario(noise_free(build_scenario(d)), quiet());
    for (const auto& f : rep.frames) EXPECT_LT(f.r_0K.norm(), 1e-10) << "step " << f.k;
}

TEST(Covert, BothChannelsModifiedAtSameStep) {
    const auto g = desk_plant();
    Adversary adv(g, bank0(g), {additive(Channel::u, vec({1.0}), 5), covert(Channel::y, 5)});
    for (TimeIndex k = 0; k < 8; ++k) {
        adv.begin_step(k);
        const Vector u = adv.inject(Channel::u, k, vec({0.0}));
        const Vector y = adv.inject(Channel::y, k, vec({0.0}));
        EXPECT_EQ(u(0) != 0.0, k >= 5);
        // CB = 0, so the output part lags the input by two steps
        EXPECT_EQ(y(0) != 0.0, k >= 7);
    }
}

TEST(EavesdropLog, RecordsWithinCapacity) {
    EavesdropLog log(10, 5);
    for (TimeIndex k = 0; k < 20; ++k) log.record(k, vec({double(k)}));
    EXPECT_FALSE(log.lookup(9).has_value());
    EXPECT_FALSE(log.lookup(15).has_value());
    for (TimeIndex k = 10; k < 15; ++k) {
        ASSERT_TRUE(log.lookup(k).has_value());
    }
}

TEST(Replay, SubstitutesRecordedFrames) {
    const auto g = desk_plant();
    AttackSpec r;
    r.kind = AttackKind::replay;
    r.channels = {Channel::y};
    r.record_start = 10;
    r.length = 10;
    r.replay_start = 30;
    Adversary adv(g, bank0(g), {r});
    for (TimeIndex k = 0; k < 50; ++k) {
        adv.begin_step(k);
        const Vector y = adv.inject(Channel::y, k, vec({double(k)}));
        const Vector u = adv.inject(Channel::u, k, vec({double(-k)}));
        EXPECT_EQ(y(0), (k >= 30 && k < 40) ? double(k - 20) : double(k));
        EXPECT_EQ(u(0), double(-k));
    }
}

TEST(Replay, WindowsMustNotOverlap) {
    const auto g = desk_plant();
    AttackSpec r;
    r.kind = AttackKind::replay;
    r.channels = {Channel::y};
    r.record_start = 10;
    r.length = 10;
    r.replay_start = 15;
    EXPECT_THROW(Adversary(g, bank0(g), {r}), ValidationError);
    r.length = 0;
    r.replay_start = 40;
    EXPECT_THROW(Adversary(g, bank0(g), {r}), ValidationError);
}

TEST(Replay, SteadyStateReplayLeavesResidualUnchanged) {
    json d = desk_doc("baseline", 1400);
    d["reference"] = {0.5};
    const auto clean = run_scenario(noise_free(build_scenario(d)), quiet());
    d["attacks"] = json::array({{{"type", "replay"}, {"channels", {"y"}}, {"record_start", 600}, {"length", 200},
                                 {"replay_start", 1000}}});
    const auto replayed = run_scenario(noise_free(build_scenario(d)), quiet());
    for (std::size_t k = 0; k < clean.frames.size(); ++k)
        EXPECT_NEAR(clean.traces[k].r0(0), replayed.traces[k].r0(0), 1e-9) << "step " << k;
}

TEST(Replay, Deterministic) {
    json d = desk_doc("baseline", 800, 0.01, 4);
    d["attacks"] = json::array({{{"type", "replay"}, {"channels", {"y"}}, {"record_start", 100}, {"length", 200},
                                 {"replay_start", 400}},
                                {{"type", "additive"}, {"channel", "u"}, {"value", {1.0}}, {"start", 400}}});
    const auto a = run_scenario(build_scenario(d), quiet());
    const auto b = run_scenario(build_scenario(d), quiet());
    EXPECT_EQ(report_csv(a), report_csv(b));
}

TEST(Inject, InactiveWindowLeavesFrameUnchanged) {
    const auto g = desk_plant();
    Adversary adv(g, bank0(g), {additive(Channel::y, vec({0.1}), 200, 300)});
    for (TimeIndex k = 0; k < 400; ++k) {
        adv.begin_step(k);
        const double y = adv.inject(Channel::y, k, vec({1.25}))(0);
        if (k >= 200 && k < 300) EXPECT_EQ(y, 1.25 + 0.1);
        else EXPECT_EQ(y, 1.25);
    }
}

TEST(Inject, ShapesFollowTheirFormulas) {
    const auto g = desk_plant();
    AttackSpec s = additive(Channel::y, vec({2.0}), 10);
    s.shape = Shape::sine;
    s.frequency = 0.05;
    s.phase = 0.3;
    AttackSpec r = additive(Channel::u, vec({0.5}), 10);
    r.shape = Shape::ramp;
    Adversary adv(g, bank0(g), {s, r});
    for (TimeIndex k = 0; k < 40; ++k) {
        adv.begin_step(k);
        const double y = adv.inject(Channel::y, k, vec({0.0}))(0);
        const double u = adv.inject(Channel::u, k, vec({0.0}))(0);
        const double t = double(k - 10);
        EXPECT_DOUBLE_EQ(y, k >= 10 ? 2.0 * std::sin(2 * M_PI * 0.05 * t + 0.3) : 0.0);
        EXPECT_DOUBLE_EQ(u, k >= 10 ? 0.5 * t : 0.0);
    }
}

TEST(Inject, StepsMustBeConsecutive) {
    const auto g = desk_plant();
    Adversary adv(g, bank0(g), {});
    adv.begin_step(0);
    EXPECT_THROW(adv.inject(Channel::y, 1, vec({0.0})), ValidationError);
    EXPECT_THROW(adv.begin_step(2), ValidationError);
}

TEST(Validate, OneGeneratorPerChannel) {
    const auto g = desk_plant();
    EXPECT_THROW(Adversary(g, bank0(g), {additive(Channel::y, vec({1})), additive(Channel::y, vec({2}))}),
                 ValidationError);
}

TEST(Validate, CovertNeedsInputPart) {
    const auto g = desk_plant();
    EXPECT_THROW(Adversary(g, bank0(g), {covert()}), ValidationError);
    EXPECT_NO_THROW(Adversary(g, bank0(g), {additive(Channel::u, vec({1})), covert()}));
}

TEST(Validate, ShapesAndChannels) {
    const auto g = desk_plant();
    EXPECT_THROW(Adversary(g, bank0(g), {additive(Channel::y, vec({1, 2}))}), ValidationError);
    AttackSpec zd;
    zd.kind = AttackKind::zero_dynamics;
    zd.channel = Channel::y;
    EXPECT_THROW(Adversary(half_zero_plant(), bank0(half_zero_plant()), {zd}), ValidationError);
    zd.channel = Channel::u;
    EXPECT_THROW(Adversary(g, bank0(g), {zd}), InfeasibleError);
}

TEST(Stealth, NoAttackMatchesAlpha) {
    const auto rep = verify_stealth(build_scenario(desk_doc("baseline", 4000)), 10);
    EXPECT_TRUE(rep.stealthy) << rep.rate << " outside [" << rep.band_low << ", " << rep.band_high << "]";
    EXPECT_NEAR(rep.mean_J, 1.0, 0.05);
}

TEST(Stealth, CovertAttackIsStealthy) {
    json d = desk_doc("baseline", 10000);
    d["attacks"] = json::array({{{"type", "additive"}, {"channel", "u"}, {"shape", "sine"}, {"value", {2.0}},
                                 {"frequency", 0.01}, {"start", 500}},
                                {{"type", "covert"}, {"channel", "y"}, {"start", 500}}});
    const auto rep = verify_stealth(build_scenario(d), 20);
    EXPECT_TRUE(rep.stealthy) << rep.rate << " outside [" << rep.band_low << ", " << rep.band_high << "]";
}

TEST(Stealth, NaiveOutputStepIsDetected) {
    json d = desk_doc("baseline", 3000);
    d["attacks"] = json::array({{{"type", "additive"}, {"channel", "y"}, {"shape", "sine"}, {"value", {0.5}}, {"frequency", 0.2}, {"start", 500}}});
    const auto rep = verify_stealth(build_scenario(d), 5);
    EXPECT_FALSE(rep.stealthy);
    EXPECT_GT(rep.rate, 0.5);
}
