#include "kernelguard/stats.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace kgtest;

TEST(Chi2Threshold, OneDofMatchesErfOracle) {
    const double t = chi2_threshold(0.05, 1);
    EXPECT_NEAR(t, 3.8414588206941, 1e-9);
    EXPECT_NEAR(std::erf(std::sqrt(t / 2.0)), 0.95, 1e-12);
}

TEST(Chi2Threshold, TwoDofClosedForm) {
    EXPECT_NEAR(chi2_threshold(0.05, 2), -2.0 * std::log(0.05), 1e-9);
    EXPECT_NEAR(chi2_threshold(0.5, 2), 2.0 * std::log(2.0), 1e-9);
}

TEST(Chi2Threshold, InvertsCdf) {
    for (double a : {0.001, 0.01, 0.05, 0.5})
        for (int m = 1; m <= 10; ++m) EXPECT_NEAR(chi2_cdf(chi2_threshold(a, m), m), 1.0 - a, 1e-9) << a << " " << m;
}

TEST(Chi2Threshold, EvenDofPoissonOracle) {
    // For even m, P(chi2(m) > x) = exp(-x/2) sum_{j<m/2} (x/2)^j / j!
    for (int m : {2, 4, 6, 10}) {
        const double x = chi2_threshold(0.01, m);
        double term = 1.0, sum = 0.0;
        for (int j = 0; j < m / 2; ++j) {
            if (j > 0) term *= (x / 2.0) / j;
            sum += term;
        }
        EXPECT_NEAR(std::exp(-x / 2.0) * sum, 0.01, 1e-10);
    }
}

TEST(Chi2Threshold, RejectsBadArguments) {
    EXPECT_THROW(chi2_threshold(0.0, 1), ValidationError);
    EXPECT_THROW(chi2_threshold(0.1, 0), ValidationError);
}

TEST(JointNoise, IndependentWhenSZero) {
    NoiseSpec ns{Matrix::Identity(2, 2), 4.0 * Matrix::Identity(1, 1), Matrix::Zero(2, 1), Matrix::Zero(2, 2)};
    NoiseSampler s(ns);
    Rng rng(1);
    const int N = 100000;
    Matrix cross = Matrix::Zero(2, 1);
    double var_v = 0.0;
    for (int i = 0; i < N; ++i) {
        auto [w, v] = s.sample(rng);
        cross += w * v.transpose();
        var_v += v(0) * v(0);
    }
    cross /= N;
    var_v /= N;
    EXPECT_LT(cross.cwiseAbs().maxCoeff(), 0.05 * 2.0);
    EXPECT_NEAR(var_v, 4.0, 0.05 * 4.0);
}

TEST(JointNoise, HonoursCrossCovariance) {
    NoiseSpec ns{mat({{1.0}}), mat({{1.0}}), mat({{0.6}}), mat({{0.0}})};
    NoiseSampler s(ns);
    Rng rng(2);
    const int N = 100000;
    double c = 0.0;
    for (int i = 0; i < N; ++i) {
        auto [w, v] = s.sample(rng);
        c += w(0) * v(0);
    }
    EXPECT_NEAR(c / N, 0.6, 0.03);
}

TEST(JointNoise, ZeroProcessNoiseIsExactlyZero) {
    NoiseSpec ns{Matrix::Zero(3, 3), mat({{0.01}}), Matrix::Zero(3, 1), Matrix::Zero(3, 3)};
    NoiseSampler s(ns);
    Rng rng(3);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(s.sample(rng).first.cwiseAbs().maxCoeff(), 0.0);
}

TEST(JointNoise, Reproducible) {
    NoiseSpec ns{Matrix::Identity(2, 2), mat({{1.0}}), Matrix::Zero(2, 1), Matrix::Zero(2, 2)};
    Rng a(7), b(7);
    for (int i = 0; i < 10; ++i) {
        auto x = sample_joint_noise(ns, a);
        auto y = sample_joint_noise(ns, b);
        EXPECT_EQ(x.first, y.first);
        EXPECT_EQ(x.second, y.second);
    }
}

TEST(JointNoise, RejectsIndefinite) {
    NoiseSpec ns{mat({{1.0}}), mat({{1.0}}), mat({{2.0}}), mat({{0.0}})};
    EXPECT_THROW(NoiseSampler{ns}, ValidationError);
    NoiseSpec zero_var{mat({{0.0}}), mat({{1.0}}), mat({{0.5}}), mat({{0.0}})};
    EXPECT_THROW(NoiseSampler{zero_var}, ValidationError);
}

TEST(Rates, AllFalse) {
    auto r = empirical_rates(std::vector<bool>(100, false));
    EXPECT_EQ(r.rate, 0.0);
    EXPECT_FALSE(r.detection_delay.has_value());
}

TEST(Rates, DetectionDelay) {
    std::vector<bool> a(1000, false);
    a[503] = true;
    a[700] = true;
    a[10] = true;
    auto r = empirical_rates(a, TimeIndex{500});
    ASSERT_TRUE(r.detection_delay.has_value());
    EXPECT_EQ(*r.detection_delay, 3);
    EXPECT_EQ(r.n_steps, 500u);
    EXPECT_EQ(r.n_alarms, 1u);
    EXPECT_DOUBLE_EQ(r.rate, 1.0 / 500.0);
}

TEST(Rates, CalibratedStreamWithinCi) {
    Rng rng(17);
    const double th = chi2_threshold(0.05, 2);
    std::vector<bool> alarms;
    for (int i = 0; i < 20000; ++i) {
        const double j = std::pow(rng.normal(), 2) + std::pow(rng.normal(), 2);
        alarms.push_back(j > th);
    }
    auto r = empirical_rates(alarms);
    auto [lo, hi] = alpha_band(0.05, r.n_steps);
    EXPECT_GE(r.rate, lo);
    EXPECT_LE(r.rate, hi);
}

TEST(Chi2Moments, SampleMomentsOfSquaredGaussians) {
    Rng rng(23);
    const int N = 100000, m = 3;
    std::vector<double> j(N);
    for (auto& x : j) {
        x = 0;
        for (int i = 0; i < m; ++i) x += std::pow(rng.normal(), 2);
    }
    EXPECT_LE(std::abs(sample_mean(j) - m), 3.0 * std::sqrt(2.0 * m / N));
    EXPECT_NEAR(sample_variance(j), 2.0 * m, 0.1 * 2.0 * m);
}

TEST(WindowedMeanShift, ThresholdAndTrigger) {
    WindowedMeanShift w(50, 2, 0.05);
    EXPECT_NEAR(w.threshold(), chi2_threshold(0.05, 100) / 50.0, 1e-12);
    for (int i = 0; i < 49; ++i) EXPECT_FALSE(w.push(10.0));
    EXPECT_TRUE(w.push(10.0));
    WindowedMeanShift quiet(50, 2, 0.05);
    for (int i = 0; i < 200; ++i) EXPECT_FALSE(quiet.push(2.0));
}

TEST(Autocorrelation, WhiteVersusAr1) {
    Rng rng(5);
    const int N = 100000;
    std::vector<double> white(N), ar(N);
    double s = 0;
    for (int i = 0; i < N; ++i) {
        white[i] = rng.normal();
        s = 0.8 * s + white[i];
        ar[i] = s;
    }
    EXPECT_LT(std::abs(autocorrelation(white, 1)), 3.0 / std::sqrt(N));
    EXPECT_NEAR(autocorrelation(ar, 1), 0.8, 0.01);
}
