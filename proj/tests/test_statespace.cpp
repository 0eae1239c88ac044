#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace kgtest;

TEST(Step, OneStepDelay) {
    StateSpaceSystem s(mat({{0}}), mat({{1}}), mat({{1}}), mat({{0}}));
    EXPECT_DOUBLE_EQ(s.step(vec({1}))(0), 0.0);
    EXPECT_DOUBLE_EQ(s.state()(0), 1.0);
}

TEST(Step, StaticFeedthrough) {
    auto s = StateSpaceSystem::identity(2);
    EXPECT_EQ(s.order(), 0);
    Vector y = s.step(vec({3, 4}));
    EXPECT_DOUBLE_EQ(y(0), 3.0);
    EXPECT_DOUBLE_EQ(y(1), 4.0);
}

TEST(Step, DeskPlantHandMultiply) {
    auto s = desk_plant();
    s.set_state(vec({1, 1}));
    Vector y = s.step(vec({0}));
    EXPECT_DOUBLE_EQ(y(0), 1.0);
    EXPECT_NEAR(s.state()(0), 1.0, 1e-15);
    EXPECT_NEAR(s.state()(1), 0.8, 1e-15);
}

TEST(Step, RejectsWrongInputLength) {
    auto s = desk_plant();
    EXPECT_THROW(s.step(vec({1, 2})), DimensionError);
}

TEST(Construct, RejectsInconsistentShapes) {
    EXPECT_THROW(StateSpaceSystem(mat({{1}}), mat({{1, 2}}), mat({{1}}), mat({{0}})), DimensionError);
}

TEST(FreqResponse, ScalarFormula) {
    StateSpaceSystem s(mat({{0.5}}), mat({{1}}), mat({{1}}), mat({{0}}));
    EXPECT_NEAR(std::abs(freq_response(s, 1.0) (0, 0) - Complex(2.0)), 0.0, 1e-14);
}

TEST(FreqResponse, StaticSystemIsD) {
    auto s = StateSpaceSystem::gain(mat({{1, 2}, {3, 4}}));
    CMatrix g = freq_response(s, Complex(0.3, 0.7));
    EXPECT_EQ(g(1, 0), Complex(3.0));
}

TEST(FreqResponse, DeskPlantAtOne) {
    EXPECT_NEAR(freq_response(desk_plant(), 1.0)(0, 0).real(), 5.0, 1e-12);
}

TEST(FreqResponse, PoleIsRejected) {
    EXPECT_THROW(freq_response(desk_plant(), 0.9), NumericalError);
}

TEST(FreqResponse, MatchesImpulseResponseSum) {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        auto g = random_plant(rng, 1 + trial, 2, 2, 0.7);
        const Complex z = std::polar(2.0, rng.uniform(0, 6.28));
        CMatrix sum = g.D().cast<Complex>();
        Matrix ak = Matrix::Identity(g.order(), g.order());
        Complex zk = 1.0;
        for (int k = 1; k <= 200; ++k) {
            zk /= z;
            sum += (g.C() * ak * g.B()).cast<Complex>() * zk;
            ak = g.A() * ak;
        }
        EXPECT_LT((sum - freq_response(g, z)).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(Compose, SeriesWithIdentity) {
    auto g = desk_plant();
    auto s = compose(ComposeKind::series, g, StateSpaceSystem::identity(1));
    EXPECT_LT(std::abs(freq_response(s, Complex(2, 0))(0, 0) - freq_response(g, Complex(2, 0))(0, 0)), 1e-12);
}

TEST(Compose, DifferenceCancels) {
    Rng rng(3);
    auto g = random_plant(rng, 3, 2, 2, 0.8);
    auto d = compose(ComposeKind::difference, g, g);
    for (int i = 0; i < 16; ++i) {
        const Complex z = std::polar(2.0, rng.uniform(0, 6.28));
        EXPECT_LT(freq_response(d, z).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Compose, SumOfStaticGains) {
    auto s = compose(ComposeKind::sum, StateSpaceSystem::gain(mat({{2}})), StateSpaceSystem::gain(mat({{3}})));
    EXPECT_EQ(s.order(), 0);
    EXPECT_DOUBLE_EQ(s.D()(0, 0), 5.0);
}

TEST(Compose, SeriesIsResponseProduct) {
    Rng rng(5);
    auto g1 = random_plant(rng, 3, 2, 3, 0.9);
    auto g2 = random_plant(rng, 2, 1, 2, 0.9);
    auto s = compose(ComposeKind::series, g1, g2);
    for (int i = 0; i < 32; ++i) {
        const Complex z = std::polar(2.0, rng.uniform(0, 6.28));
        CMatrix expect = freq_response(g2, z) * freq_response(g1, z);
        EXPECT_LT((freq_response(s, z) - expect).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Compose, SeriesRejectsMismatch) {
    Rng rng(1);
    EXPECT_THROW(compose(ComposeKind::series, random_plant(rng, 2, 2, 1, 0.5), random_plant(rng, 2, 1, 3, 0.5)),
                 DimensionError);
}

TEST(Compose, StackingMatchesBlocks) {
    Rng rng(8);
    auto g1 = random_plant(rng, 2, 2, 1, 0.5);
    auto g2 = random_plant(rng, 3, 2, 2, 0.5);
    auto h = hstack(g1, g2);
    const Complex z(1.5, 0.5);
    CMatrix expect(2, 3);
    expect << freq_response(g1, z), freq_response(g2, z);
    EXPECT_LT((freq_response(h, z) - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Inverse, ComposesToIdentity) {
    Rng rng(4);
    auto g = random_plant(rng, 3, 2, 2, 0.5, 1.0);
    auto prod = g.inverse() * g;
    const Complex z(0.3, 1.9);
    EXPECT_LT((freq_response(prod, z) - CMatrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(SpectralRadius, ScaledIdentity) { EXPECT_NEAR(spectral_radius(0.5 * Matrix::Identity(2, 2)).max_modulus, 0.5, 1e-15); }

TEST(SpectralRadius, Rotation) {
    auto r = spectral_radius(mat({{0, 1}, {-1, 0}}));
    ASSERT_EQ(r.values.size(), 2u);
    EXPECT_NEAR(r.max_modulus, 1.0, 1e-14);
    for (const auto& v : r.values) {
        EXPECT_NEAR(v.real(), 0.0, 1e-14);
        EXPECT_NEAR(std::abs(v.imag()), 1.0, 1e-14);
    }
}

TEST(SpectralRadius, Triangular) {
    auto r = spectral_radius(mat({{0.9, 0.1}, {0, 0.8}}));
    std::vector<double> re;
    for (auto v : r.values) re.push_back(v.real());
    std::sort(re.begin(), re.end());
    EXPECT_NEAR(re[0], 0.8, 1e-14);
    EXPECT_NEAR(re[1], 0.9, 1e-14);
}

TEST(SpectralRadius, MatchesEigenSolverOnRandomMatrices) {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = 1 + trial % 12;
        Matrix a = random_matrix(rng, n, n);
        auto mine = spectral_radius(a);
        Eigen::VectorXcd ref = Eigen::EigenSolver<Matrix>(a).eigenvalues();
        ASSERT_EQ(static_cast<Eigen::Index>(mine.values.size()), n);
        // Every reference eigenvalue has a close partner among ours.
        for (Eigen::Index i = 0; i < n; ++i) {
            double best = 1e300;
            for (auto v : mine.values) best = std::min(best, std::abs(v - ref(i)));
            EXPECT_LT(best, 1e-8 * (1 + std::abs(ref(i)))) << "n=" << n;
        }
        EXPECT_NEAR(mine.max_modulus, ref.cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(SpectralRadius, SimilarityInvariant) {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix a = random_matrix(rng, 6, 6);
        Matrix t = random_orthogonal(rng, 6);
        EXPECT_NEAR(spectral_radius(a).max_modulus, spectral_radius(t.transpose() * a * t).max_modulus, 1e-9);
    }
}

TEST(SpectralRadius, DefectiveAndZeroMatrices) {
    EXPECT_NEAR(spectral_radius(mat({{0.5, 1}, {0, 0.5}})).max_modulus, 0.5, 1e-7);
    EXPECT_EQ(spectral_radius(Matrix::Zero(4, 4)).max_modulus, 0.0);
    Matrix shift = Matrix::Zero(5, 5);
    for (int i = 0; i < 4; ++i) shift(i + 1, i) = 1.0;
    shift(0, 4) = 1.0;  // cyclic permutation, eigenvalues on the unit circle
    EXPECT_NEAR(spectral_radius(shift).max_modulus, 1.0, 1e-12);
}

TEST(SpectralRadius, NonConvergenceIsReported) {
    EigenOptions tight;
    tight.max_sweeps = 0;
    EXPECT_THROW(spectral_radius(mat({{0, 1, 0}, {0, 0, 1}, {1, 0.2, 0.3}}), tight), NumericalError);
}

TEST(SpectralRadius, RejectsNonSquare) { EXPECT_THROW(spectral_radius(Matrix::Zero(2, 3)), DimensionError); }

TEST(InvariantZeros, NumeratorRoot) {
    StateSpaceSystem g(mat({{1.7, -0.72}, {1, 0}}), mat({{1}, {0}}), mat({{1, -0.5}}), mat({{0}}));
    auto z = invariant_zeros(g);
    ASSERT_EQ(z.size(), 1u);
    EXPECT_NEAR(z[0].z0.real(), 0.5, 1e-9);
    EXPECT_NEAR(z[0].z0.imag(), 0.0, 1e-12);
    // rank test of the pencil at z = 0.5
    Matrix p(3, 3);
    p << 0.5 * Matrix::Identity(2, 2) - g.A(), -g.B(), g.C(), g.D();
    EXPECT_LT(Eigen::JacobiSVD<Matrix>(p).singularValues()(2), 1e-12);
}

TEST(InvariantZeros, FeedthroughClosedForm) {
    StateSpaceSystem g(mat({{0.5}}), mat({{1}}), mat({{1}}), mat({{1}}));
    auto z = invariant_zeros(g);
    ASSERT_EQ(z.size(), 1u);
    EXPECT_NEAR(z[0].z0.real(), -0.5, 1e-10);
}

TEST(InvariantZeros, RelativeDegreeOneHasNone) {
    StateSpaceSystem g(mat({{0.5}}), mat({{1}}), mat({{1}}), mat({{0}}));
    EXPECT_TRUE(invariant_zeros(g).empty());
}

TEST(InvariantZeros, DirectionsSatisfyPencil) {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        auto g = random_plant(rng, 2 + trial % 5, 2, 2, 0.9, 0.0);
        if (trial % 3 == 0) g = StateSpaceSystem(g.A(), g.B(), g.C(), random_matrix(rng, 2, 2));
        for (const auto& zd : invariant_zeros(g)) {
            ASSERT_TRUE(zd.has_direction);
            const auto n = g.order();
            CMatrix p(n + 2, n + 2);
            p << zd.z0 * CMatrix::Identity(n, n) - g.A().cast<Complex>(), -g.B().cast<Complex>(),
                g.C().cast<Complex>(), g.D().cast<Complex>();
            CVector v(n + 2);
            v << zd.x0, zd.g;
            EXPECT_LE((p * v).norm(), 1e-8 * (zd.x0.norm() + zd.g.norm()) * std::max(1.0, p.norm()));
            EXPECT_GT(v.norm(), 0.5);
        }
    }
}

TEST(InvariantZeros, ComplexPairFromKnownNumerator) {
    // G(z) = (z^2 - 0.6 z + 0.25) / (z^3 - 0.5 z^2 + 0.1 z - 0.02), companion form.
    Matrix A = mat({{0.5, -0.1, 0.02}, {1, 0, 0}, {0, 1, 0}});
    StateSpaceSystem g(A, mat({{1}, {0}, {0}}), mat({{1, -0.6, 0.25}}), mat({{0}}));
    auto z = invariant_zeros(g);
    ASSERT_EQ(z.size(), 2u);
    for (const auto& zd : z) {
        EXPECT_NEAR(zd.z0.real(), 0.3, 1e-9);
        EXPECT_NEAR(std::abs(zd.z0.imag()), 0.4, 1e-9);
    }
}

TEST(InvariantZeros, NonSquareUnsupported) {
    Rng rng(2);
    EXPECT_THROW(invariant_zeros(random_plant(rng, 3, 2, 1, 0.5)), DimensionError);
}

TEST(Switched, SharedStateSurvivesSwitch) {
    StateSpaceSystem a(mat({{0.5}}), mat({{1}}), mat({{1}}), mat({{0}}));
    StateSpaceSystem b(mat({{-0.5}}), mat({{2}}), mat({{3}}), mat({{1}}));
    SwitchedSystem s({a, b});
    s.step(vec({1}));  // state 1
    s.set_mode(1);
    Vector y = s.step(vec({1}));
    EXPECT_DOUBLE_EQ(y(0), 3.0 * 1.0 + 1.0);
    EXPECT_DOUBLE_EQ(s.state()(0), -0.5 + 2.0);
}
