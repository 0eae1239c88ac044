#pragma once

// Noisy plant process, the observer-based realization of the Youla-parameterized
// controller, and the auxiliary kernel residual generators.

#include "kernelguard/random.hpp"
#include "kernelguard/statespace.hpp"
#include "kernelguard/stats.hpp"
#include "kernelguard/synthesis.hpp"

#include <utility>
#include <vector>

namespace kernelguard {

enum class X0Mode { zero, sampled, fixed };

struct PlantSpec {
    StateSpaceSystem sys;
    NoiseSpec noise;
    X0Mode x0_mode = X0Mode::zero;
    Vector x0;

    void validate() const {
        noise.validate(sys.order(), sys.outputs());
        if (x0_mode == X0Mode::fixed && x0.size() != sys.order())
            throw DimensionError("x0 must have length " + std::to_string(sys.order()));
    }
};

/// x(k+1) = A x + B u + ω,  y = C x + D u + ν, output taken before the update.
class PlantProcess {
public:
    PlantProcess(const PlantSpec& spec, std::uint64_t seed)
        : sys_(spec.sys), sampler_(spec.noise), rng_(derive_seed(seed, Stream::plant_noise)) {
        spec.validate();
        Vector x0 = Vector::Zero(sys_.order());
        if (spec.x0_mode == X0Mode::fixed) x0 = spec.x0;
        if (spec.x0_mode == X0Mode::sampled && sys_.order() > 0) {
            Rng init(derive_seed(seed, Stream::initial_state));
            NoiseSpec pi{spec.noise.Pi0, Matrix::Zero(0, 0), Matrix::Zero(sys_.order(), 0), spec.noise.Pi0};
            x0 = NoiseSampler(pi).sample(init).first;
        }
        sys_.set_state(x0);
    }

    Vector step(const Vector& u_applied) {
        auto [w, v] = sampler_.sample(rng_);
        Vector y = sys_.output(u_applied) + v;
        sys_.set_state(sys_.A() * sys_.state() + sys_.B() * u_applied + w);
        return y;
    }

    const Vector& state() const { return sys_.state(); }
    void offset_state(const Vector& dx) { sys_.set_state(sys_.state() + dx); }
    const StateSpaceSystem& model() const { return sys_; }

private:
    StateSpaceSystem sys_;
    NoiseSampler sampler_;
    Rng rng_;
};

/// Single noisy plant step on an explicit state vector.
inline Vector plant_step(const PlantSpec& spec, Vector& x, const Vector& u, Rng& rng) {
    auto [w, v] = sample_joint_noise(spec.noise, rng);
    Vector y = spec.sys.C() * x + spec.sys.D() * u + v;
    x = spec.sys.A() * x + spec.sys.B() * u + w;
    return y;
}

/// Mode-0 controller data. Q must be stable and strictly proper (D = 0) so that
/// u(k) depends on filter states only and no algebraic loop arises.
struct ControllerConfig {
    Matrix F0;
    Matrix L0;
    StateSpaceSystem Q;

    void validate(const StateSpaceSystem& plant) const {
        require_stabilizing(plant, F0, L0, "controller");
        if (Q.inputs() != plant.outputs() || Q.outputs() != plant.inputs())
            throw ValidationError("Q must have " + std::to_string(plant.outputs()) + " inputs and " +
                                  std::to_string(plant.inputs()) + " outputs", "controller.Q");
        if (!is_stable(Q)) throw ValidationError("Q must be stable", "controller.Q");
        if (Q.D().size() > 0 && Q.D().cwiseAbs().maxCoeff() != 0.0)
            throw ValidationError("Q must be strictly proper (zero feedthrough)", "controller.Q");
    }
};

inline ControllerConfig make_controller(const StateSpaceSystem& plant, const Matrix& F0, const Matrix& L0) {
    return {F0, L0, StateSpaceSystem::zero(plant.inputs(), plant.outputs())};
}

/// Monitor-side observer-based controller
///   x̂(k+1) = (A − L0C) x̂ + (B − L0D) u + L0 y^a,   r0 = y^a − C x̂ − D u,
///   x_v(k+1) = (A − L0C) x_v + (B − L0D) v,
///   v̄0 = v − F0 x_v − Q(C x_v + D v),   u = F0 x̂ − Q(r0) + v̄0.
/// `control` produces u(k); `observe` consumes y^a(k) and advances to k+1.
class ObserverController {
public:
    ObserverController(const StateSpaceSystem& plant, ControllerConfig cfg)
        : plant_(plant), cfg_(std::move(cfg)), q_r0_(cfg_.Q), q_v_(cfg_.Q) {
        cfg_.validate(plant_);
        xhat_ = Vector::Zero(plant_.order());
        xv_ = Vector::Zero(plant_.order());
        AL_ = plant_.A() - cfg_.L0 * plant_.C();
        BL_ = plant_.B() - cfg_.L0 * plant_.D();
    }

    /// v̄0(k) for the current states.
    Vector vbar(const Vector& v) const {
        require_dims(v.size() == plant_.inputs(), "reference v has wrong length");
        return v - cfg_.F0 * xv_ - q_v_.free_output();
    }

    Vector control(const Vector& v) {
        v_ = v;
        vbar_ = vbar(v);
        u_ = cfg_.F0 * xhat_ - q_r0_.free_output() + vbar_;
        return u_;
    }

    /// Residual r0(k) from the received output; advances every internal state.
    Vector observe(const Vector& y_received) {
        require_dims(y_received.size() == plant_.outputs(), "received y has wrong length");
        r0_ = y_received - plant_.C() * xhat_ - plant_.D() * u_;
        const Vector nv = plant_.C() * xv_ + plant_.D() * v_;
        xhat_ = AL_ * xhat_ + BL_ * u_ + cfg_.L0 * y_received;
        xv_ = AL_ * xv_ + BL_ * v_;
        q_r0_.advance(r0_);
        q_v_.advance(nv);
        return r0_;
    }

    const Vector& xhat() const { return xhat_; }
    const Vector& last_u() const { return u_; }
    const Vector& last_vbar() const { return vbar_; }
    const Vector& last_r0() const { return r0_; }
    const ControllerConfig& config() const { return cfg_; }

private:
    StateSpaceSystem plant_;
    ControllerConfig cfg_;
    StateSpaceSystem q_r0_, q_v_;
    Matrix AL_, BL_;
    Vector xhat_, xv_, u_, v_, vbar_, r0_;
};

/// Block matrix of plant and observer under u = F x̂ (Q = 0, v = 0).
inline Matrix closed_loop_matrix(const StateSpaceSystem& plant, const Matrix& F, const Matrix& L) {
    const auto n = plant.order();
    const Matrix &A = plant.A(), &B = plant.B(), &C = plant.C();
    Matrix m(2 * n, 2 * n);
    m << A, B * F, L * C, A - L * C + B * F;
    return m;
}

struct AuxResidualFrame {
    Vector r_u;   // controller-kernel residual, length p
    Vector r_uc;  // closed-loop residuals, lengths p and m
    Vector r_yc;
};

/// Residual generators built on the controller and on the closed-loop dynamics.
/// In the attack-free loop all three outputs are zero up to noise-free transients.
class AuxResiduals {
public:
    AuxResiduals(const StateSpaceSystem& plant, const ControllerConfig& cfg)
        : plant_(plant), cfg_(cfg), q_u_(cfg.Q), q_v_(cfg.Q) {
        const auto n = plant.order();
        xu_ = Vector::Zero(n);
        xv_ = Vector::Zero(n);
        xc_ = Vector::Zero(n);
        AL_ = plant.A() - cfg.L0 * plant.C();
        BL_ = plant.B() - cfg.L0 * plant.D();
        AF_ = plant.A() + plant.B() * cfg.F0;
    }

    AuxResidualFrame step(const Vector& u, const Vector& y, const Vector& v) {
        const Matrix &C = plant_.C(), &D = plant_.D();
        const Matrix& F = cfg_.F0;
        AuxResidualFrame out;

        const Vector du = u - v;
        const Vector ru1 = du - F * xu_;
        const Vector ru2 = y - D * du - C * xu_;
        out.r_u = ru1 + q_u_.free_output();

        const Vector vbar = v - F * xv_ - q_v_.free_output();
        out.r_uc = u - F * xc_ - vbar;
        out.r_yc = y - (C + D * F) * xc_ - D * vbar;

        const Vector nv = C * xv_ + D * v;
        xu_ = AL_ * xu_ + BL_ * du + cfg_.L0 * y;
        xv_ = AL_ * xv_ + BL_ * v;
        xc_ = AF_ * xc_ + plant_.B() * vbar;
        q_u_.advance(ru2);
        q_v_.advance(nv);
        return out;
    }

private:
    StateSpaceSystem plant_;
    ControllerConfig cfg_;
    StateSpaceSystem q_u_, q_v_;
    Matrix AL_, BL_, AF_;
    Vector xu_, xv_, xc_;
};

}  // namespace kernelguard
