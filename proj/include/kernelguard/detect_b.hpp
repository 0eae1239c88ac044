#pragma once

// Split-controller detection: the plant side runs the observer and reports the
// residual r_0 and β = (F0 − F_σ) x̂; the monitor sends γ and checks β against
// its own copy of the observer driven by γ.

#include "kernelguard/detector.hpp"
#include "kernelguard/loopsim.hpp"
#include "kernelguard/synthesis.hpp"

#include <string>

namespace kernelguard {

/// Plant side: u^a = F0 x̂ + γ^a,  r_0p = y − C x̂ − D u^a,  β = (F0 − F_σ) x̂.
class PlantNodeB {
public:
    struct Output {
        Vector r0p;
        Vector beta;
    };

    PlantNodeB(const StateSpaceSystem& plant, const GainBank& bank) : plant_(plant), bank_(bank) {
        require_stabilizing(plant, bank.F.front(), bank.L.front(), "plant node");
        xhat_ = Vector::Zero(plant.order());
        AL_ = plant.A() - bank.L[0] * plant.C();
        BL_ = plant.B() - bank.L[0] * plant.D();
    }

    Vector actuate(TimeIndex k, const Vector& gamma_received) {
        require_dims(gamma_received.size() == plant_.inputs(), "received gamma has wrong length");
        k_ = k;
        u_ = bank_.F[0] * xhat_ + gamma_received;
        return u_;
    }

    Output measure(const Vector& y) {
        require_dims(y.size() == plant_.outputs(), "measured y has wrong length");
        const std::size_t mode = bank_.mode_at(k_);
        Output out;
        out.r0p = y - plant_.C() * xhat_ - plant_.D() * u_;
        out.beta = (bank_.F[0] - bank_.F[mode]) * xhat_;
        xhat_ = AL_ * xhat_ + BL_ * u_ + bank_.L[0] * y;
        return out;
    }

    const Vector& xhat() const { return xhat_; }

private:
    StateSpaceSystem plant_;
    GainBank bank_;
    Matrix AL_, BL_;
    Vector xhat_, u_;
    TimeIndex k_ = 0;
};

/// Monitor side. γ = v − F0 x_v − Q(C x_v + D v) − Q(r_0^a);
///   x_β(k+1) = (A + B F0) x_β + B γ,  r_β = β^a − (F0 − F_σ) x_β,
///   r_u = r_β − Q_0σ(r_0^a),  r_0K = Q_K0(r_0^a).
/// y_rec rebuilds the plant output from γ and r_0^a.
class MonitorNodeB {
public:
    struct Output {
        Vector r_beta;
        Vector r_u;
        Vector r_0K;
        Vector y_rec;
        std::size_t mode = 0;
    };

    MonitorNodeB(const StateSpaceSystem& plant, const ControllerConfig& cfg, const GainBank& bank, const Matrix& L_K)
        : plant_(plant), cfg_(cfg), bank_(bank), q_r0_(cfg.Q), q_v_(cfg.Q),
          filters_(switched_scheme_filters(plant, bank, L_K, &cfg.Q)) {
        cfg_.validate(plant);
        if (bank.F.front() != cfg.F0 || bank.L.front() != cfg.L0)
            throw ValidationError("gain bank mode 0 must equal the controller gains", "gain_bank");
        const auto n = plant.order();
        xv_ = Vector::Zero(n);
        xb_ = Vector::Zero(n);
        xm_ = Vector::Zero(n);
        AL_ = plant.A() - cfg.L0 * plant.C();
        BL_ = plant.B() - cfg.L0 * plant.D();
        AF_ = plant.A() + plant.B() * cfg.F0;
    }

    Vector control(const Vector& v) {
        require_dims(v.size() == plant_.inputs(), "reference v has wrong length");
        v_ = v;
        gamma_ = v - cfg_.F0 * xv_ - q_v_.free_output() - q_r0_.free_output();
        return gamma_;
    }

    Output observe(TimeIndex k, const Vector& r0_received, const Vector& beta_received) {
        require_dims(r0_received.size() == plant_.outputs(), "received r0 has wrong length");
        require_dims(beta_received.size() == plant_.inputs(), "received beta has wrong length");
        const Matrix &B = plant_.B(), &C = plant_.C(), &D = plant_.D();
        Output out;
        out.mode = bank_.mode_at(k);
        filters_.set_mode(out.mode);
        out.r_beta = beta_received - (cfg_.F0 - bank_.F[out.mode]) * xb_;
        out.r_u = out.r_beta - filters_.Q_0s.step(r0_received);
        out.r_0K = filters_.Q_K0.step(r0_received);
        out.y_rec = (C + D * cfg_.F0) * xm_ + D * gamma_ + r0_received;

        const Vector nv = C * xv_ + D * v_;
        xv_ = AL_ * xv_ + BL_ * v_;
        xb_ = AF_ * xb_ + B * gamma_;
        xm_ = AF_ * xm_ + B * gamma_ + cfg_.L0 * r0_received;
        q_v_.advance(nv);
        q_r0_.advance(r0_received);
        return out;
    }

    const Vector& last_gamma() const { return gamma_; }

private:
    StateSpaceSystem plant_;
    ControllerConfig cfg_;
    GainBank bank_;
    StateSpaceSystem q_r0_, q_v_;
    SwitchedSchemeFilters filters_;
    Matrix AL_, BL_, AF_;
    Vector xv_, xb_, xm_, v_, gamma_;
};

/// Stable inverse of N̂0 = (A − L0C, B − L0D, C, D) when D is invertible and
/// the plant is minimum phase. Returns false with a reason otherwise.
inline bool nhat_inverse(const StateSpaceSystem& plant, const Matrix& L0, StateSpaceSystem& out, std::string& reason) {
    const Matrix& D = plant.D();
    if (D.rows() != D.cols()) {
        reason = "input estimate needs a square plant";
        return false;
    }
    Eigen::FullPivLU<Matrix> lu(D);
    if (D.size() == 0 || !lu.isInvertible()) {
        reason = "input estimate needs an invertible feedthrough D";
        return false;
    }
    const Matrix Di = lu.inverse();
    const Matrix BL = plant.B() - L0 * plant.D();
    StateSpaceSystem inv(plant.A() - L0 * plant.C() - BL * Di * plant.C(), BL * Di, -Di * plant.C(), Di);
    if (!is_schur(inv.A())) {
        reason = "plant has invariant zeros on or outside the unit circle";
        return false;
    }
    out = std::move(inv);
    return true;
}

/// Streaming estimate of a covert attack pair from the whitened residual:
///   â_y = Q_K0⁻¹(r_0K),  â_u = −N̂0⁻¹ M̂0 â_y (when a stable inverse exists).
class CovertReconstructor {
public:
    struct Estimate {
        Vector a_y;
        std::optional<Vector> a_u;
    };

    CovertReconstructor(const StateSpaceSystem& plant, const Matrix& L0, const Matrix& L_K)
        : qk_inv_(post_filter_QK0_inverse(plant, L0, L_K)) {
        const auto m = plant.outputs();
        mhat_ = StateSpaceSystem(plant.A() - L0 * plant.C(), -L0, plant.C(), Matrix::Identity(m, m));
        StateSpaceSystem inv;
        feasible_ = nhat_inverse(plant, L0, inv, reason_);
        if (feasible_) nhat_inv_ = std::move(inv);
    }

    Estimate step(const Vector& r0K) {
        Estimate e;
        e.a_y = qk_inv_.step(r0K);
        const Vector w = mhat_.step(e.a_y);
        if (feasible_) e.a_u = Vector(-nhat_inv_.step(w));
        return e;
    }

    bool input_feasible() const { return feasible_; }
    const std::string& reason() const { return reason_; }

private:
    StateSpaceSystem qk_inv_, mhat_, nhat_inv_;
    bool feasible_ = false;
    std::string reason_;
};

struct CovertReconstruction {
    std::vector<Vector> a_y;
    std::vector<Vector> a_u;  // empty unless input_feasible
    bool input_feasible = false;
    std::string reason;
};

inline CovertReconstruction reconstruct_covert(const StateSpaceSystem& plant, const Matrix& L0, const Matrix& L_K,
                                               const std::vector<Vector>& r0K) {
    CovertReconstructor rec(plant, L0, L_K);
    CovertReconstruction out;
    out.input_feasible = rec.input_feasible();
    out.reason = rec.reason();
    for (const auto& r : r0K) {
        auto e = rec.step(r);
        out.a_y.push_back(std::move(e.a_y));
        if (e.a_u) out.a_u.push_back(std::move(*e.a_u));
    }
    return out;
}

}  // namespace kernelguard
