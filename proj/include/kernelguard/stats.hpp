#pragma once

// Chi-square quantiles, joint Gaussian noise draws and alarm-rate bookkeeping.

#include "kernelguard/random.hpp"
#include "kernelguard/types.hpp"

#include <cmath>
#include <algorithm>
#include <deque>
#include <limits>
#include <optional>
#include <tuple>
#include <vector>

namespace kernelguard {

/// Process/measurement noise statistics. S is the cross-covariance E[ω νᵀ].
struct NoiseSpec {
    Matrix Sigma_w;
    Matrix Sigma_v;
    Matrix S;
    Matrix Pi0;

    static NoiseSpec zero(Eigen::Index n, Eigen::Index m) {
        return {Matrix::Zero(n, n), Matrix::Identity(m, m), Matrix::Zero(n, m), Matrix::Zero(n, n)};
    }

    Matrix joint() const {
        const auto n = Sigma_w.rows(), m = Sigma_v.rows();
        Matrix j(n + m, n + m);
        j << Sigma_w, S, S.transpose(), Sigma_v;
        return j;
    }

    /// Shape checks; `require_pd_v` additionally demands Σ_ν ≻ 0 (needed for Kalman synthesis).
    void validate(Eigen::Index n, Eigen::Index m, bool require_pd_v = false) const {
        auto square = [](const Matrix& x, Eigen::Index k) { return x.rows() == k && x.cols() == k; };
        if (!square(Sigma_w, n)) throw DimensionError("Sigma_w must be " + std::to_string(n) + "x" + std::to_string(n) + ", got " + dims_str(Sigma_w));
        if (!square(Sigma_v, m)) throw DimensionError("Sigma_v must be " + std::to_string(m) + "x" + std::to_string(m) + ", got " + dims_str(Sigma_v));
        if (S.rows() != n || S.cols() != m) throw DimensionError("S must be " + std::to_string(n) + "x" + std::to_string(m) + ", got " + dims_str(S));
        if (!square(Pi0, n)) throw DimensionError("Pi0 must be " + std::to_string(n) + "x" + std::to_string(n) + ", got " + dims_str(Pi0));
        if (require_pd_v && m > 0 && Eigen::LLT<Matrix>(Sigma_v).info() != Eigen::Success)
            throw ValidationError("measurement covariance must be positive definite", "Sigma_v");
    }
};

namespace detail {

inline double gamma_p_series(double a, double x) {
    double sum = 1.0 / a, term = sum, ap = a;
    for (int i = 0; i < 10000; ++i) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-17) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper tail Q(a, x) by modified Lentz continued fraction.
inline double gamma_q_fraction(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-17) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

/// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
    if (x <= 0.0) return 0.0;
    if (x < a + 1.0) return detail::gamma_p_series(a, x);
    return 1.0 - detail::gamma_q_fraction(a, x);
}

inline double chi2_cdf(double x, int m) { return gamma_p(0.5 * m, 0.5 * x); }

/// J_th with P(χ²(m) > J_th) = alpha.
inline double chi2_threshold(double alpha, int m) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0,1)", "alpha");
    if (m < 1) throw ValidationError("degrees of freedom must be >= 1", "m");
    const double target = 1.0 - alpha;
    double lo = 0.0, hi = m + 40.0 * std::sqrt(2.0 * m);
    while (chi2_cdf(hi, m) < target) hi *= 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-14 * std::max(1.0, hi); ++i) {
        const double mid = 0.5 * (lo + hi);
        (chi2_cdf(mid, m) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Draws (ω, ν) jointly from N(0, [[Σ_ω, S], [Sᵀ, Σ_ν]]).
/// Coordinates with zero variance are returned as exact zeros.
class NoiseSampler {
public:
    NoiseSampler() = default;

    explicit NoiseSampler(const NoiseSpec& spec) : n_(spec.Sigma_w.rows()), m_(spec.Sigma_v.rows()) {
        const Matrix joint = spec.joint();
        const auto dim = joint.rows();
        const double scale = std::max(1.0, joint.diagonal().cwiseAbs().maxCoeff());
        for (Eigen::Index i = 0; i < dim; ++i) {
            const double d = joint(i, i);
            if (d < -1e-14 * scale) throw ValidationError("joint noise covariance is indefinite (negative variance)", "noise");
            if (d > 0.0) active_.push_back(i);
        }
        for (Eigen::Index i = 0; i < dim; ++i) {
            if (joint(i, i) > 0.0) continue;
            if (joint.row(i).cwiseAbs().maxCoeff() > 1e-14 * scale)
                throw ValidationError("joint noise covariance is indefinite (zero variance with nonzero covariance)", "noise");
        }
        const auto k = static_cast<Eigen::Index>(active_.size());
        Matrix sub(k, k);
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index j = 0; j < k; ++j) sub(i, j) = joint(active_[i], active_[j]);

        double jitter = 0.0;
        for (int attempt = 0; attempt < 6; ++attempt) {
            Eigen::LLT<Matrix> llt(sub + jitter * Matrix::Identity(k, k));
            if (llt.info() == Eigen::Success) {
                factor_ = llt.matrixL();
                return;
            }
            jitter = (jitter == 0.0) ? 1e-12 * scale : jitter * 10.0;
        }
        throw ValidationError("joint noise covariance is not positive semidefinite", "noise");
    }

    std::pair<Vector, Vector> sample(Rng& rng) const {
        Vector full = Vector::Zero(n_ + m_);
        if (!active_.empty()) {
            const Vector z = rng.normal(static_cast<Eigen::Index>(active_.size()));
            const Vector draw = factor_ * z;
            for (std::size_t i = 0; i < active_.size(); ++i) full(active_[i]) = draw(static_cast<Eigen::Index>(i));
        }
        return {full.head(n_), full.tail(m_)};
    }

private:
    Eigen::Index n_ = 0, m_ = 0;
    std::vector<Eigen::Index> active_;
    Matrix factor_;
};

inline std::pair<Vector, Vector> sample_joint_noise(const NoiseSpec& noise, Rng& rng) {
    return NoiseSampler(noise).sample(rng);
}

struct RateReport {
    std::size_t n_steps = 0;
    std::size_t n_alarms = 0;
    double rate = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::optional<TimeIndex> detection_delay;
    // Alarms on or after onset, over the post-onset steps.
    double detection_rate = 0.0;
};

/// 95% normal-approximation interval with a 0.5/n continuity guard, clipped to [0, 1].
inline std::pair<double, double> binomial_ci(std::size_t successes, std::size_t trials) {
    if (trials == 0) return {0.0, 1.0};
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double half = 1.96 * std::sqrt(p * (1.0 - p) / n) + 0.5 / n;
    return {std::max(0.0, p - half), std::min(1.0, p + half)};
}

/// Interval that an alarm rate must fall into to be consistent with alpha over n trials.
inline std::pair<double, double> alpha_band(double alpha, std::size_t trials) {
    const double n = static_cast<double>(trials);
    const double half = 1.96 * std::sqrt(alpha * (1.0 - alpha) / n) + 0.5 / n;
    return {alpha - half, alpha + half};
}

/// Pre-onset alarms are false alarms; the first alarm at or after onset gives the delay.
inline RateReport empirical_rates(const std::vector<bool>& alarms, std::optional<TimeIndex> onset = std::nullopt) {
    RateReport r;
    const auto total = static_cast<TimeIndex>(alarms.size());
    const TimeIndex end = onset ? std::min(*onset, total) : total;
    for (TimeIndex k = 0; k < end; ++k) r.n_alarms += alarms[static_cast<std::size_t>(k)] ? 1 : 0;
    r.n_steps = static_cast<std::size_t>(std::max<TimeIndex>(end, 0));
    r.rate = r.n_steps ? static_cast<double>(r.n_alarms) / static_cast<double>(r.n_steps) : 0.0;
    std::tie(r.ci_low, r.ci_high) = binomial_ci(r.n_alarms, r.n_steps);
    if (onset) {
        std::size_t hits = 0;
        for (TimeIndex k = std::max<TimeIndex>(*onset, 0); k < total; ++k) {
            if (!alarms[static_cast<std::size_t>(k)]) continue;
            ++hits;
            if (!r.detection_delay) r.detection_delay = k - *onset;
        }
        const TimeIndex post = total - std::max<TimeIndex>(*onset, 0);
        r.detection_rate = post > 0 ? static_cast<double>(hits) / static_cast<double>(post) : 0.0;
    }
    return r;
}

/// Moving average of J over W samples, compared with χ²(W·m)/W.
class WindowedMeanShift {
public:
    WindowedMeanShift(std::size_t window, int m, double alpha)
        : window_(window), threshold_(chi2_threshold(alpha, static_cast<int>(window) * m) / static_cast<double>(window)) {
        if (window == 0) throw ValidationError("window must be positive", "window");
    }

    /// Returns true when a full window's mean exceeds the threshold.
    bool push(double j) {
        buf_.push_back(j);
        sum_ += j;
        if (buf_.size() > window_) {
            sum_ -= buf_.front();
            buf_.pop_front();
        }
        return buf_.size() == window_ && mean() > threshold_;
    }

    double mean() const { return buf_.empty() ? 0.0 : sum_ / static_cast<double>(buf_.size()); }
    double threshold() const { return threshold_; }

private:
    std::size_t window_;
    double threshold_;
    std::deque<double> buf_;
    double sum_ = 0.0;
};

inline double sample_mean(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

inline double sample_variance(const std::vector<double>& x) {
    if (x.size() < 2) return 0.0;
    const double mu = sample_mean(x);
    double s = 0.0;
    for (double v : x) s += (v - mu) * (v - mu);
    return s / static_cast<double>(x.size() - 1);
}

/// Normalized sample autocorrelation at the given lag.
inline double autocorrelation(const std::vector<double>& x, std::size_t lag) {
    if (x.size() <= lag) return 0.0;
    const double mu = sample_mean(x);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        den += (x[i] - mu) * (x[i] - mu);
        if (i + lag < x.size()) num += (x[i] - mu) * (x[i + lag] - mu);
    }
    return den > 0.0 ? num / den : 0.0;
}

}  // namespace kernelguard
