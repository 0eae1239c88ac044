#pragma once

// Gain synthesis (Kalman predictor, LQ state feedback), switched gain banks,
// coprime factorizations and the filters derived from gain changes.

#include "kernelguard/random.hpp"
#include "kernelguard/statespace.hpp"
#include "kernelguard/stats.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace kernelguard {

struct RiccatiOptions {
    double tolerance = 1e-11;
    long max_iters = 100000;
};

struct KalmanSolution {
    Matrix P;
    Matrix L_K;
    Matrix Sigma_r;
    long iterations = 0;
};

/// Steady predictor-form Kalman gain by iterating
///   Σ_r = C P Cᵀ + Σ_ν,  L = (A P Cᵀ + S) Σ_r⁻¹,  P ← A P Aᵀ + Σ_ω − L Σ_r Lᵀ
/// from P = Π₀.
inline KalmanSolution kalman_gain(const Matrix& A, const Matrix& C, const NoiseSpec& noise,
                                  const RiccatiOptions& opts = {}) {
    const auto n = A.rows(), m = C.rows();
    require_dims(A.cols() == n && C.cols() == n, "kalman_gain: A is " + dims_str(A) + ", C is " + dims_str(C));
    noise.validate(n, m, true);

    Matrix P = noise.Pi0;
    auto gain_for = [&](const Matrix& p, Matrix& sigma_r) {
        sigma_r = C * p * C.transpose() + noise.Sigma_v;
        return Matrix((A * p * C.transpose() + noise.S) * sigma_r.inverse());
    };

    KalmanSolution sol;
    double delta = 0.0;
    for (long it = 1; it <= opts.max_iters; ++it) {
        Matrix sigma_r;
        const Matrix L = gain_for(P, sigma_r);
        Matrix next = A * P * A.transpose() + noise.Sigma_w - L * sigma_r * L.transpose();
        next = 0.5 * (next + next.transpose());
        delta = n ? (next - P).cwiseAbs().rowwise().sum().maxCoeff() : 0.0;
        P = next;
        if (!std::isfinite(delta)) break;
        if (delta < opts.tolerance * std::max(1.0, P.cwiseAbs().maxCoeff())) {
            sol.iterations = it;
            break;
        }
    }
    if (sol.iterations == 0) {
        std::ostringstream msg;
        msg << "kalman_gain: Riccati iteration did not converge in " << opts.max_iters
            << " iterations (last step " << delta << ")";
        throw NumericalError(msg.str());
    }
    sol.P = P;
    sol.L_K = gain_for(P, sol.Sigma_r);
    if (!is_schur(A - sol.L_K * C)) throw NumericalError("kalman_gain: A - L_K C is not Schur; (A, C) not detectable");
    return sol;
}

/// LQ state feedback u = F x with F = −(R + BᵀPB)⁻¹BᵀPA.
inline Matrix feedback_gain(const Matrix& A, const Matrix& B, const Matrix& Qw, const Matrix& Rw,
                            const RiccatiOptions& opts = {}) {
    const auto n = A.rows(), p = B.cols();
    require_dims(A.cols() == n && B.rows() == n, "feedback_gain: A is " + dims_str(A) + ", B is " + dims_str(B));
    require_dims(Qw.rows() == n && Qw.cols() == n && Rw.rows() == p && Rw.cols() == p,
                 "feedback_gain: weights are " + dims_str(Qw) + " and " + dims_str(Rw));
    if (p > 0 && Eigen::LLT<Matrix>(Rw).info() != Eigen::Success)
        throw ValidationError("input weight must be positive definite", "Rw");

    Matrix P = Qw;
    bool converged = false;
    double delta = 0.0;
    for (long it = 0; it < opts.max_iters; ++it) {
        const Matrix g = Rw + B.transpose() * P * B;
        const Matrix k = g.ldlt().solve(B.transpose() * P * A);
        Matrix next = Qw + A.transpose() * P * A - A.transpose() * P * B * k;
        next = 0.5 * (next + next.transpose());
        delta = n ? (next - P).cwiseAbs().rowwise().sum().maxCoeff() : 0.0;
        P = next;
        if (!std::isfinite(delta)) break;
        if (delta < opts.tolerance * std::max(1.0, P.cwiseAbs().maxCoeff())) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        std::ostringstream msg;
        msg << "feedback_gain: Riccati iteration did not converge (last step " << delta << "); (A, B) not stabilizable?";
        throw NumericalError(msg.str());
    }
    const Matrix F = -(Rw + B.transpose() * P * B).ldlt().solve(B.transpose() * P * A);
    if (!is_schur(A + B * F)) throw NumericalError("feedback_gain: A + B F is not Schur; (A, B) not stabilizable");
    return F;
}

/// Observer gain L with A − L C Schur, from the dual LQ problem.
inline Matrix observer_gain(const Matrix& A, const Matrix& C, const Matrix& Qw, const Matrix& Rw,
                            const RiccatiOptions& opts = {}) {
    return -feedback_gain(A.transpose(), C.transpose(), Qw, Rw, opts).transpose();
}

/// Stabilizing gain pairs with a precomputed switching schedule. Mode 0 is the
/// controller's own pair.
struct GainBank {
    std::vector<Matrix> F;
    std::vector<Matrix> L;
    std::uint64_t seed = 0;
    TimeIndex dwell_min = 25;
    std::vector<std::size_t> schedule;  // mode per step, length = horizon

    std::size_t size() const { return F.size(); }
    std::size_t mode_at(TimeIndex k) const {
        if (schedule.empty()) return 0;
        if (k < 0) return schedule.front();
        const auto i = static_cast<std::size_t>(k);
        return i < schedule.size() ? schedule[i] : schedule.back();
    }
    std::vector<TimeIndex> switch_times() const {
        std::vector<TimeIndex> out;
        for (std::size_t k = 1; k < schedule.size(); ++k)
            if (schedule[k] != schedule[k - 1]) out.push_back(static_cast<TimeIndex>(k));
        return out;
    }
};

/// Single-mode bank that never switches.
inline GainBank constant_bank(const Matrix& F0, const Matrix& L0, TimeIndex horizon) {
    GainBank b;
    b.F = {F0};
    b.L = {L0};
    b.schedule.assign(static_cast<std::size_t>(std::max<TimeIndex>(horizon, 0)), 0);
    return b;
}

/// Segment lengths are dwell_min + U{0..dwell_min}; each new mode is drawn
/// uniformly from the other modes.
inline std::vector<std::size_t> build_schedule(std::size_t modes, std::uint64_t seed, TimeIndex dwell_min,
                                               TimeIndex horizon) {
    if (dwell_min < 1) throw ValidationError("dwell_min must be positive", "dwell_min");
    if (horizon < 0) throw ValidationError("horizon must be non-negative", "horizon");
    std::vector<std::size_t> sched;
    sched.reserve(static_cast<std::size_t>(horizon));
    Rng rng(derive_seed(seed, Stream::schedule));
    std::size_t mode = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(modes) - 1));
    while (static_cast<TimeIndex>(sched.size()) < horizon) {
        const TimeIndex len = dwell_min + rng.uniform_int(0, dwell_min);
        for (TimeIndex j = 0; j < len && static_cast<TimeIndex>(sched.size()) < horizon; ++j) sched.push_back(mode);
        if (modes > 1) {
            auto next = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(modes) - 2));
            mode = next >= mode ? next + 1 : next;
        }
    }
    return sched;
}

/// Adds kappa modes from LQ problems with randomly scaled diagonal weights
/// 10^(scale·U(−1,1)) and rejects non-Schur or duplicate pairs.
inline GainBank build_gain_bank(const StateSpaceSystem& plant, const Matrix& F0, const Matrix& L0, std::size_t kappa,
                                std::uint64_t seed, TimeIndex dwell_min, double perturbation_scale, TimeIndex horizon,
                                int max_attempts_per_mode = 50) {
    if (kappa < 1) throw ValidationError("kappa must be >= 1", "kappa");
    const Matrix& A = plant.A();
    const Matrix& B = plant.B();
    const Matrix& C = plant.C();
    const auto n = plant.order(), p = plant.inputs(), m = plant.outputs();
    if (!is_schur(A + B * F0) || !is_schur(A - L0 * C))
        throw ValidationError("mode-0 gains must satisfy the Schur conditions", "gain_bank");

    GainBank bank;
    bank.seed = seed;
    bank.dwell_min = dwell_min;
    bank.F.push_back(F0);
    bank.L.push_back(L0);

    Rng rng(derive_seed(seed, Stream::gain_bank));
    auto weights = [&](Eigen::Index k) {
        Vector d(k);
        for (Eigen::Index i = 0; i < k; ++i) d(i) = std::pow(10.0, perturbation_scale * rng.uniform(-1.0, 1.0));
        return Matrix(d.asDiagonal());
    };

    const int budget = max_attempts_per_mode * static_cast<int>(kappa);
    for (int attempt = 0; attempt < budget && bank.size() < kappa + 1; ++attempt) {
        const Matrix qf = weights(n), rf = weights(p), ql = weights(n), rl = weights(m);
        Matrix F, L;
        try {
            F = feedback_gain(A, B, qf, rf);
            L = observer_gain(A, C, ql, rl);
        } catch (const NumericalError&) {
            continue;
        }
        if (!is_schur(A + B * F) || !is_schur(A - L * C)) continue;
        bool duplicate = false;
        for (std::size_t j = 0; j < bank.size(); ++j) {
            const double gap = (F - bank.F[j]).norm() + (L - bank.L[j]).norm();
            if (gap < 1e-6 * (1.0 + F.norm() + L.norm())) duplicate = true;
        }
        if (duplicate) continue;
        bank.F.push_back(F);
        bank.L.push_back(L);
    }
    if (bank.size() < kappa + 1) {
        throw NumericalError("build_gain_bank: found only " + std::to_string(bank.size() - 1) + " of " +
                             std::to_string(kappa) + " stabilizing modes");
    }
    bank.schedule = build_schedule(bank.size(), seed, dwell_min, horizon);
    return bank;
}

struct CoprimeFactorSet {
    StateSpaceSystem Mhat, Nhat, M, N, Xhat, Yhat, X, Y;
};

inline void require_stabilizing(const StateSpaceSystem& plant, const Matrix& F, const Matrix& L, const char* who) {
    require_dims(F.rows() == plant.inputs() && F.cols() == plant.order(),
                 std::string(who) + ": F must be " + std::to_string(plant.inputs()) + "x" + std::to_string(plant.order()));
    require_dims(L.rows() == plant.order() && L.cols() == plant.outputs(),
                 std::string(who) + ": L must be " + std::to_string(plant.order()) + "x" + std::to_string(plant.outputs()));
    if (!is_schur(plant.A() + plant.B() * F)) throw ValidationError("A + B F is not Schur", who);
    if (!is_schur(plant.A() - L * plant.C())) throw ValidationError("A - L C is not Schur", who);
}

inline CoprimeFactorSet coprime_factors(const StateSpaceSystem& plant, const Matrix& F, const Matrix& L) {
    require_stabilizing(plant, F, L, "coprime_factors");
    const Matrix &A = plant.A(), &B = plant.B(), &C = plant.C(), &D = plant.D();
    const auto p = plant.inputs(), m = plant.outputs();
    const Matrix AL = A - L * C, AF = A + B * F, BL = B - L * D, CF = C + D * F;
    const Matrix Im = Matrix::Identity(m, m), Ip = Matrix::Identity(p, p);
    return {
        {AL, -L, C, Im},                  // Mhat
        {AL, BL, C, D},                   // Nhat
        {AF, B, F, Ip},                   // M
        {AF, B, CF, D},                   // N
        {AF, L, CF, Im},                  // Xhat
        {AF, -L, F, Matrix::Zero(p, m)},  // Yhat
        {AL, -BL, F, Ip},                 // X
        {AL, -L, F, Matrix::Zero(p, m)},  // Y
    };
}

struct BezoutReport {
    double max_error = 0.0;           // plain identity
    double max_error_extended = 0.0;  // with the Youla parameter Q
    bool pass = false;
};

namespace detail {

inline CMatrix block2(const CMatrix& a, const CMatrix& b, const CMatrix& c, const CMatrix& d) {
    CMatrix out(a.rows() + c.rows(), a.cols() + b.cols());
    out << a, b, c, d;
    return out;
}

// Random point on |z| = radius that is not a pole of any listed system.
template <class... Systems>
Complex sample_point(Rng& rng, double radius, const Systems&... systems) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        const Complex z = std::polar(radius, rng.uniform(0.0, 2.0 * M_PI));
        try {
            (freq_response(systems, z), ...);
            return z;
        } catch (const NumericalError&) {
        }
    }
    throw NumericalError("could not find a sample point away from the poles");
}

}  // namespace detail

/// Checks [X Y; −N̂ M̂][M −Ŷ; N X̂] = I and its Q-extended form at random points on |z| = 2.
inline BezoutReport verify_bezout(const CoprimeFactorSet& f, int n_samples = 32, double tol = 1e-8,
                                  const StateSpaceSystem* Q = nullptr, std::uint64_t seed = 1) {
    const auto p = f.M.outputs(), m = f.Mhat.outputs();
    StateSpaceSystem q = Q ? *Q : StateSpaceSystem::zero(p, m);
    require_dims(q.inputs() == m && q.outputs() == p, "verify_bezout: Q must map " + std::to_string(m) + " to " +
                                                          std::to_string(p) + " signals");
    Rng rng(seed);
    BezoutReport rep;
    const CMatrix I = CMatrix::Identity(p + m, p + m);
    for (int s = 0; s < n_samples; ++s) {
        const Complex z = detail::sample_point(rng, 2.0, f.Mhat, f.M, q);
        const CMatrix Mh = freq_response(f.Mhat, z), Nh = freq_response(f.Nhat, z);
        const CMatrix M = freq_response(f.M, z), N = freq_response(f.N, z);
        const CMatrix Xh = freq_response(f.Xhat, z), Yh = freq_response(f.Yhat, z);
        const CMatrix X = freq_response(f.X, z), Y = freq_response(f.Y, z);
        const CMatrix Qz = freq_response(q, z);

        const CMatrix left = detail::block2(X, Y, -Nh, Mh);
        const CMatrix right = detail::block2(M, -Yh, N, Xh);
        rep.max_error = std::max(rep.max_error, (left * right - I).cwiseAbs().maxCoeff());

        const CMatrix left_q = detail::block2(X - Qz * Nh, Y + Qz * Mh, -Nh, Mh);
        const CMatrix right_q = detail::block2(M, -Yh - M * Qz, N, Xh - N * Qz);
        rep.max_error_extended = std::max(rep.max_error_extended, (left_q * right_q - I).cwiseAbs().maxCoeff());
    }
    rep.pass = rep.max_error <= tol && rep.max_error_extended <= tol;
    return rep;
}

/// Filters relating the residual generators of two gain pairs (F1, L1), (F2, L2):
///   [X1 Y1] = R12 [X2 Y2] + Q̄11 [−N̂1 M̂1] = R12 [X2 Y2] + Q̄12 [−N̂2 M̂2].
struct GainPairFilters {
    StateSpaceSystem R12, R21, Rbar12, Q21, Qbar11, Qbar12;
};

inline GainPairFilters gain_pair_filters(const StateSpaceSystem& plant, const Matrix& F1, const Matrix& L1,
                                    const Matrix& F2, const Matrix& L2) {
    require_stabilizing(plant, F1, L1, "gain_pair_filters(F1, L1)");
    require_stabilizing(plant, F2, L2, "gain_pair_filters(F2, L2)");
    const Matrix &A = plant.A(), &B = plant.B(), &C = plant.C();
    const auto p = plant.inputs(), m = plant.outputs();
    const Matrix AF1 = A + B * F1, AF2 = A + B * F2, AL1 = A - L1 * C, AL2 = A - L2 * C;
    const Matrix Ip = Matrix::Identity(p, p), Im = Matrix::Identity(m, m), Zpm = Matrix::Zero(p, m);

    GainPairFilters f;
    f.R12 = {AF2, B, F2 - F1, Ip};
    f.R21 = {AF1, B, F1 - F2, Ip};
    f.Rbar12 = {AF2, L2, F1 - F2, Zpm};
    f.Q21 = {AL2, L1 - L2, C, Im};
    f.Qbar11 = StateSpaceSystem(AL2, L2 - L1, F1, Zpm) - f.Rbar12 * f.Q21;
    f.Qbar12 = StateSpaceSystem(AL1, L2 - L1, F1, Zpm) - f.Rbar12;
    return f;
}

struct GainPairReport {
    double max_error = 0.0;          // both factorizations of [X1 Y1]
    double max_error_inverse = 0.0;  // R12 R21 = I
    bool pass = false;
};

inline GainPairReport verify_gain_pair(const StateSpaceSystem& plant, const Matrix& F1, const Matrix& L1, const Matrix& F2,
                                  const Matrix& L2, int n_samples = 64, double tol = 1e-7, std::uint64_t seed = 1) {
    const auto lf = gain_pair_filters(plant, F1, L1, F2, L2);
    const auto f1 = coprime_factors(plant, F1, L1), f2 = coprime_factors(plant, F2, L2);
    const auto p = plant.inputs();
    auto row2 = [](const CMatrix& a, const CMatrix& b) {
        CMatrix out(a.rows(), a.cols() + b.cols());
        out << a, b;
        return out;
    };
    Rng rng(seed);
    GainPairReport rep;
    for (int i = 0; i < n_samples; ++i) {
        const Complex z = detail::sample_point(rng, 2.0, f1.X, f2.X, lf.Qbar11, lf.Qbar12);
        const CMatrix xy1 = row2(freq_response(f1.X, z), freq_response(f1.Y, z));
        const CMatrix xy2 = row2(freq_response(f2.X, z), freq_response(f2.Y, z));
        const CMatrix k1 = row2(-freq_response(f1.Nhat, z), freq_response(f1.Mhat, z));
        const CMatrix k2 = row2(-freq_response(f2.Nhat, z), freq_response(f2.Mhat, z));
        const CMatrix r12 = freq_response(lf.R12, z);
        const double e1 = (xy1 - r12 * xy2 - freq_response(lf.Qbar11, z) * k1).cwiseAbs().maxCoeff();
        const double e2 = (xy1 - r12 * xy2 - freq_response(lf.Qbar12, z) * k2).cwiseAbs().maxCoeff();
        rep.max_error = std::max({rep.max_error, e1, e2});
        rep.max_error_inverse = std::max(
            rep.max_error_inverse, (r12 * freq_response(lf.R21, z) - CMatrix::Identity(p, p)).cwiseAbs().maxCoeff());
    }
    rep.pass = rep.max_error <= tol && rep.max_error_inverse <= tol;
    return rep;
}

/// Filters attached to gain mode σ of a bank (mode 0 is the controller's pair).
struct SchemeFilters {
    std::size_t mode = 0;
    StateSpaceSystem P_0s;    // r_0,σ = P_0σ r_0,p
    StateSpaceSystem P_us;    // r_en,σ = P_uσ r_en,0 + Q_σ r_0,p
    StateSpaceSystem Q_s;
    StateSpaceSystem Qbar_s;  // Q_σ − P_uσ Q
    StateSpaceSystem Q_K0;    // whitening post-filter, Kalman residual from r_0
    StateSpaceSystem R_0s;    // P_uσ − I
    StateSpaceSystem Q_0s;    // attack-free r_β = Q_0σ r_0
};

namespace detail {

inline void check_mode(const GainBank& bank, std::size_t i) {
    if (i >= bank.size()) throw ValidationError("mode " + std::to_string(i) + " outside bank of " +
                                                std::to_string(bank.size()), "mode");
}

}  // namespace detail

inline StateSpaceSystem post_filter_QK0(const StateSpaceSystem& plant, const Matrix& L0, const Matrix& L_K) {
    const auto m = plant.outputs();
    return {plant.A() - L_K * plant.C(), L0 - L_K, plant.C(), Matrix::Identity(m, m)};
}

/// Inverse of Q_K0, recovering r_0 from the whitened residual.
inline StateSpaceSystem post_filter_QK0_inverse(const StateSpaceSystem& plant, const Matrix& L0, const Matrix& L_K) {
    const auto m = plant.outputs();
    return {plant.A() - L0 * plant.C(), L_K - L0, plant.C(), Matrix::Identity(m, m)};
}

inline SchemeFilters scheme_filters(const StateSpaceSystem& plant, const GainBank& bank, std::size_t i,
                                    const Matrix& L_K, const StateSpaceSystem* Q = nullptr) {
    detail::check_mode(bank, i);
    const Matrix &A = plant.A(), &B = plant.B(), &C = plant.C();
    const auto p = plant.inputs(), m = plant.outputs();
    require_dims(L_K.rows() == plant.order() && L_K.cols() == m, "scheme_filters: L_K must be n x m");
    const StateSpaceSystem q = Q ? *Q : StateSpaceSystem::zero(p, m);
    require_dims(q.inputs() == m && q.outputs() == p, "scheme_filters: Q must map m to p signals");

    const Matrix &F0 = bank.F[0], &L0 = bank.L[0], &Fs = bank.F[i], &Ls = bank.L[i];
    const Matrix AF0 = A + B * F0, ALs = A - Ls * C;
    const Matrix Ip = Matrix::Identity(p, p), Im = Matrix::Identity(m, m);

    SchemeFilters f;
    f.mode = i;
    f.P_0s = {ALs, L0 - Ls, C, Im};
    f.P_us = {AF0, B, F0 - Fs, Ip};
    f.Q_s = StateSpaceSystem(ALs, L0 - Ls, Fs, Matrix::Zero(p, m)) -
            StateSpaceSystem(AF0, L0, Fs - F0, Matrix::Zero(p, m));
    f.Qbar_s = f.Q_s - f.P_us * q;
    f.Q_K0 = post_filter_QK0(plant, L0, L_K);
    f.R_0s = {AF0, B, F0 - Fs, Matrix::Zero(p, p)};
    f.Q_0s = {AF0, L0, F0 - Fs, Matrix::Zero(p, m)};
    return f;
}

/// Mode-switched versions of the scheme filters. Every mode shares one state
/// layout so a switch changes coefficients but keeps the filter state.
struct SwitchedSchemeFilters {
    SwitchedSystem P_0s, P_us, Q_s, Qbar_s, R_0s, Q_0s;
    StateSpaceSystem Q_K0;

    void set_mode(std::size_t i) {
        for (SwitchedSystem* s : {&P_0s, &P_us, &Q_s, &Qbar_s, &R_0s, &Q_0s}) s->set_mode(i);
    }
};

inline SwitchedSchemeFilters switched_scheme_filters(const StateSpaceSystem& plant, const GainBank& bank,
                                                     const Matrix& L_K, const StateSpaceSystem* Q = nullptr) {
    std::vector<StateSpaceSystem> p0, pu, qs, qbar, r0, q0;
    SwitchedSchemeFilters out;
    for (std::size_t i = 0; i < bank.size(); ++i) {
        SchemeFilters f = scheme_filters(plant, bank, i, L_K, Q);
        p0.push_back(f.P_0s);
        pu.push_back(f.P_us);
        qs.push_back(f.Q_s);
        qbar.push_back(f.Qbar_s);
        r0.push_back(f.R_0s);
        q0.push_back(f.Q_0s);
        if (i == 0) out.Q_K0 = f.Q_K0;
    }
    out.P_0s = SwitchedSystem(std::move(p0));
    out.P_us = SwitchedSystem(std::move(pu));
    out.Q_s = SwitchedSystem(std::move(qs));
    out.Qbar_s = SwitchedSystem(std::move(qbar));
    out.R_0s = SwitchedSystem(std::move(r0));
    out.Q_0s = SwitchedSystem(std::move(q0));
    return out;
}

/// Random stable, strictly proper Youla parameter with m inputs and p outputs.
inline StateSpaceSystem random_stable_q(Eigen::Index order, Eigen::Index p, Eigen::Index m, Rng& rng,
                                        double radius = 0.6, double gain = 0.3) {
    Matrix A(order, order), B(order, m), C(p, order);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < B.size(); ++i) B.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < C.size(); ++i) C.data()[i] = gain * rng.normal();
    if (order > 0) {
        const double rho = spectral_radius(A).max_modulus;
        if (rho > 0) A *= radius / rho;
    }
    return {A, B, C, Matrix::Zero(p, m)};
}

}  // namespace kernelguard
