#pragma once

// Monitor and plant endpoints for each scheme, speaking in frames.

#include "kernelguard/detect_a.hpp"
#include "kernelguard/detect_b.hpp"
#include "kernelguard/detector.hpp"
#include "kernelguard/harness/frame.hpp"
#include "kernelguard/harness/scenario.hpp"
#include "kernelguard/loopsim.hpp"

#include <memory>
#include <stdexcept>

namespace kernelguard {

class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Extra per-step signals kept for reporting only.
struct StepTrace {
    Vector r0;     // residual seen by the monitor
    Vector y_rec;  // scheme B output reconstruction
    Vector a_y_hat;
    std::optional<Vector> a_u_hat;
};

class MonitorNode {
public:
    virtual ~MonitorNode() = default;
    virtual std::vector<Frame> emit(TimeIndex k) = 0;
    virtual ResidualFrame absorb(const std::vector<Frame>& up, TimeIndex k) = 0;
    virtual std::size_t up_count() const = 0;
    const StepTrace& trace() const { return trace_; }
    std::size_t mode() const { return mode_; }

protected:
    StepTrace trace_;
    std::size_t mode_ = 0;
};

class PlantNode {
public:
    virtual ~PlantNode() = default;
    virtual std::vector<Frame> handle(const std::vector<Frame>& down, TimeIndex k) = 0;
    virtual std::size_t down_count() const { return 1; }
    /// True plant state, for tests.
    virtual const Vector& plant_state() const = 0;
};

namespace detail {

inline const Vector& expect_frame(const std::vector<Frame>& frames, std::size_t i, MsgType type, TimeIndex k) {
    if (i >= frames.size()) throw TransportError("missing frame " + std::to_string(i) + " at step " + std::to_string(k));
    const Frame& f = frames[i];
    if (f.type != type)
        throw TransportError("unexpected message type " + std::to_string(static_cast<int>(f.type)) + " at step " +
                             std::to_string(k));
    if (f.k != static_cast<std::uint64_t>(k))
        throw TransportError("schedule desync: frame for step " + std::to_string(f.k) + " arrived at step " +
                             std::to_string(k));
    return f.payload;
}

inline Frame make_frame(MsgType t, TimeIndex k, const Vector& x) { return {t, static_cast<std::uint64_t>(k), x}; }

}  // namespace detail

/// Observer-based controller with the plain χ² test on r_0K.
class BaselineMonitor : public MonitorNode {
public:
    explicit BaselineMonitor(const Scenario& s)
        : ctl_(s.plant.sys, s.controller), qk_(post_filter_QK0(s.plant.sys, s.controller.L0, s.kalman.L_K)),
          eval_(s.kalman.Sigma_r, s.lambda, s.alpha), v_(s.reference) {}

    std::vector<Frame> emit(TimeIndex k) override { return {detail::make_frame(MsgType::u, k, ctl_.control(v_))}; }

    ResidualFrame absorb(const std::vector<Frame>& up, TimeIndex k) override {
        const Vector& y = detail::expect_frame(up, 0, MsgType::y, k);
        trace_.r0 = ctl_.observe(y);
        return eval_(k, Vector(0), qk_.step(trace_.r0));
    }

    std::size_t up_count() const override { return 1; }

private:
    ObserverController ctl_;
    StateSpaceSystem qk_;
    ChiSquareEvaluator eval_;
    Vector v_;
};

class SchemeAMonitor : public MonitorNode {
public:
    explicit SchemeAMonitor(const Scenario& s)
        : dec_(s.plant.sys, s.controller, s.bank, s.kalman.L_K), eval_(s.kalman.Sigma_r, s.lambda, s.alpha),
          v_(s.reference) {}

    std::vector<Frame> emit(TimeIndex k) override { return {detail::make_frame(MsgType::u, k, dec_.control(v_))}; }

    ResidualFrame absorb(const std::vector<Frame>& up, TimeIndex k) override {
        const Vector& y = detail::expect_frame(up, 0, MsgType::y, k);
        const Vector& ren = detail::expect_frame(up, 1, MsgType::r_en, k);
        auto out = dec_.decode_step(k, y, ren);
        trace_.r0 = out.r0;
        mode_ = out.mode;
        return eval_(k, out.r_u, out.r_0K);
    }

    std::size_t up_count() const override { return 2; }

private:
    DecoderA dec_;
    ChiSquareEvaluator eval_;
    Vector v_;
};

class SchemeBMonitor : public MonitorNode {
public:
    explicit SchemeBMonitor(const Scenario& s)
        : mon_(s.plant.sys, s.controller, s.bank, s.kalman.L_K), rec_(s.plant.sys, s.controller.L0, s.kalman.L_K),
          eval_(s.kalman.Sigma_r, s.lambda, s.alpha), v_(s.reference) {}

    std::vector<Frame> emit(TimeIndex k) override { return {detail::make_frame(MsgType::gamma, k, mon_.control(v_))}; }

    ResidualFrame absorb(const std::vector<Frame>& up, TimeIndex k) override {
        const Vector& r0 = detail::expect_frame(up, 0, MsgType::r0p, k);
        const Vector& beta = detail::expect_frame(up, 1, MsgType::beta, k);
        auto out = mon_.observe(k, r0, beta);
        auto est = rec_.step(out.r_0K);
        trace_.r0 = r0;
        trace_.y_rec = out.y_rec;
        trace_.a_y_hat = est.a_y;
        trace_.a_u_hat = est.a_u;
        mode_ = out.mode;
        return eval_(k, out.r_u, out.r_0K);
    }

    std::size_t up_count() const override { return 2; }
    const CovertReconstructor& reconstructor() const { return rec_; }

private:
    MonitorNodeB mon_;
    CovertReconstructor rec_;
    ChiSquareEvaluator eval_;
    Vector v_;
};

/// Plant with its local processing. Applies attack state offsets at their onset.
class SchemePlant : public PlantNode {
public:
    SchemePlant(const Scenario& s, std::vector<StateOffset> offsets)
        : scheme_(s.scheme), plant_(s.plant, s.seed), offsets_(std::move(offsets)) {
        if (scheme_ == Scheme::scheme_a) enc_.emplace(s.plant.sys, s.bank);
        if (scheme_ == Scheme::scheme_b) node_.emplace(s.plant.sys, s.bank);
    }

    std::vector<Frame> handle(const std::vector<Frame>& down, TimeIndex k) override {
        for (const auto& o : offsets_)
            if (o.k == k) plant_.offset_state(o.dx);
        using detail::make_frame;
        if (scheme_ == Scheme::scheme_b) {
            const Vector& gamma = detail::expect_frame(down, 0, MsgType::gamma, k);
            const Vector u = node_->actuate(k, gamma);
            const Vector y = plant_.step(u);
            auto out = node_->measure(y);
            return {make_frame(MsgType::r0p, k, out.r0p), make_frame(MsgType::beta, k, out.beta)};
        }
        const Vector& u = detail::expect_frame(down, 0, MsgType::u, k);
        const Vector y = plant_.step(u);
        if (scheme_ == Scheme::scheme_a)
            return {make_frame(MsgType::y, k, y), make_frame(MsgType::r_en, k, enc_->encode_step(k, u, y))};
        return {make_frame(MsgType::y, k, y)};
    }

    const Vector& plant_state() const override { return plant_.state(); }

private:
    Scheme scheme_;
    PlantProcess plant_;
    std::vector<StateOffset> offsets_;
    std::optional<EncoderA> enc_;
    std::optional<PlantNodeB> node_;
};

inline std::unique_ptr<MonitorNode> make_monitor(const Scenario& s) {
    switch (s.scheme) {
        case Scheme::baseline: return std::make_unique<BaselineMonitor>(s);
        case Scheme::scheme_a: return std::make_unique<SchemeAMonitor>(s);
        case Scheme::scheme_b: return std::make_unique<SchemeBMonitor>(s);
    }
    throw ValidationError("unknown scheme", "scheme");
}

}  // namespace kernelguard
