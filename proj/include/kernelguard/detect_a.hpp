#pragma once

// Residual-encoded detection: the plant side transmits r_en = X_σ u^a + Y_σ y
// under a secret gain schedule; the monitor decodes it against its own
// controller signals.

#include "kernelguard/detector.hpp"
#include "kernelguard/loopsim.hpp"
#include "kernelguard/synthesis.hpp"

#include <limits>

namespace kernelguard {

/// ς(k+1) = (A − L C) ς + (B − L D) u + L y,  r_en = u − F ς, with input [u; y].
inline StateSpaceSystem encoder_system(const StateSpaceSystem& plant, const Matrix& F, const Matrix& L) {
    const auto n = plant.order(), p = plant.inputs(), m = plant.outputs();
    Matrix b(n, p + m);
    b << plant.B() - L * plant.D(), L;
    Matrix d = Matrix::Zero(p, p + m);
    d.leftCols(p).setIdentity();
    return {plant.A() - L * plant.C(), b, -F, d};
}

inline SwitchedSystem switched_encoder(const StateSpaceSystem& plant, const GainBank& bank) {
    std::vector<StateSpaceSystem> modes;
    for (std::size_t i = 0; i < bank.size(); ++i) modes.push_back(encoder_system(plant, bank.F[i], bank.L[i]));
    return SwitchedSystem(std::move(modes));
}

/// Plant-side encoder. The state carries over across switches.
class EncoderA {
public:
    EncoderA(const StateSpaceSystem& plant, const GainBank& bank)
        : bank_(bank), enc_(switched_encoder(plant, bank)), p_(plant.inputs()), m_(plant.outputs()) {}

    Vector encode_step(TimeIndex k, const Vector& u_applied, const Vector& y) {
        require_dims(u_applied.size() == p_ && y.size() == m_, "encode_step: signal length mismatch");
        enc_.set_mode(bank_.mode_at(k));
        Vector in(p_ + m_);
        in << u_applied, y;
        return enc_.step(in);
    }

    std::size_t mode() const { return enc_.mode(); }
    const Vector& state() const { return enc_.state(); }

private:
    GainBank bank_;
    SwitchedSystem enc_;
    Eigen::Index p_, m_;
};

/// Monitor side: observer-based controller plus the decoder
///   r_u0 = r_en^a − P_uσ(v̄0),  r_u = r_u0 − Q̄σ(r0),  r_0K = Q_K0(r0).
class DecoderA {
public:
    struct Output {
        Vector r0;
        Vector r_u;
        Vector r_0K;
        std::size_t mode = 0;
    };

    DecoderA(const StateSpaceSystem& plant, const ControllerConfig& cfg, const GainBank& bank, const Matrix& L_K)
        : bank_(bank), ctl_(plant, cfg), filters_(switched_scheme_filters(plant, bank, L_K, &cfg.Q)) {
        if (bank.F.front() != cfg.F0 || bank.L.front() != cfg.L0)
            throw ValidationError("gain bank mode 0 must equal the controller gains", "gain_bank");
    }

    Vector control(const Vector& v) { return ctl_.control(v); }

    Output decode_step(TimeIndex k, const Vector& y_received, const Vector& r_en_received) {
        Output out;
        out.mode = bank_.mode_at(k);
        filters_.set_mode(out.mode);
        const Vector vbar0 = ctl_.last_vbar();
        out.r0 = ctl_.observe(y_received);
        const Vector pu = filters_.P_us.step(vbar0);
        const Vector qb = filters_.Qbar_s.step(out.r0);
        out.r_u = r_en_received - pu - qb;
        out.r_0K = filters_.Q_K0.step(out.r0);
        return out;
    }

    const ObserverController& controller() const { return ctl_; }

private:
    GainBank bank_;
    ObserverController ctl_;
    SwitchedSchemeFilters filters_;
};

struct EncoderIdentityReport {
    double r0_error = 0.0;   // max |r_0σ − P_0σ r_0p| over all steps
    double ren_error = 0.0;  // max |r_enσ − P_uσ r_en0 − Q_σ r_0p|
    double r0_error_settled = 0.0;  // same, excluding `settle` steps after each switch
    double ren_error_settled = 0.0;
    std::size_t switches = 0;
};

/// Runs the mode-σ residual generators directly on (u, y) and compares them
/// with the mode-0 generators pushed through the switched relation filters.
inline EncoderIdentityReport check_encoder_identities(const StateSpaceSystem& plant, const GainBank& bank,
                                                      const std::vector<Vector>& u, const std::vector<Vector>& y,
                                                      TimeIndex settle = 0) {
    require_dims(u.size() == y.size(), "check_encoder_identities: u and y lengths differ");
    const Matrix &A = plant.A(), &B = plant.B(), &C = plant.C(), &D = plant.D();
    const auto n = plant.order();
    SwitchedSystem enc = switched_encoder(plant, bank);
    StateSpaceSystem enc0 = encoder_system(plant, bank.F[0], bank.L[0]);
    SwitchedSchemeFilters filt = switched_scheme_filters(plant, bank, bank.L[0]);
    Vector xs = Vector::Zero(n), x0 = Vector::Zero(n);

    EncoderIdentityReport rep;
    TimeIndex last_switch = std::numeric_limits<TimeIndex>::min() / 2;
    std::size_t prev = bank.mode_at(0);
    for (std::size_t k = 0; k < u.size(); ++k) {
        const auto kk = static_cast<TimeIndex>(k);
        const std::size_t mode = bank.mode_at(kk);
        if (mode != prev) {
            ++rep.switches;
            last_switch = kk;
            prev = mode;
        }
        enc.set_mode(mode);
        filt.set_mode(mode);
        const Matrix& Ls = bank.L[mode];
        const Matrix& L0 = bank.L[0];

        Vector in(u[k].size() + y[k].size());
        in << u[k], y[k];
        const Vector ren_s = enc.step(in);
        const Vector ren_0 = enc0.step(in);
        const Vector r0s = y[k] - C * xs - D * u[k];
        const Vector r0p = y[k] - C * x0 - D * u[k];
        xs = A * xs + B * u[k] + Ls * r0s;
        x0 = A * x0 + B * u[k] + L0 * r0p;

        const double e0 = (r0s - filt.P_0s.step(r0p)).cwiseAbs().maxCoeff();
        const double e1 = (ren_s - filt.P_us.step(ren_0) - filt.Q_s.step(r0p)).cwiseAbs().maxCoeff();
        rep.r0_error = std::max(rep.r0_error, e0);
        rep.ren_error = std::max(rep.ren_error, e1);
        if (kk - last_switch >= settle) {
            rep.r0_error_settled = std::max(rep.r0_error_settled, e0);
            rep.ren_error_settled = std::max(rep.ren_error_settled, e1);
        }
    }
    return rep;
}

}  // namespace kernelguard
