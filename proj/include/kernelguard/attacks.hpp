#pragma once

// Attack generators and the man-in-the-middle adversary that applies them to
// frames in transit.

#include "kernelguard/detect_a.hpp"
#include "kernelguard/statespace.hpp"
#include "kernelguard/synthesis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace kernelguard {

enum class Channel { u, y, r_en, gamma, r0, beta };
inline constexpr std::array<Channel, 6> all_channels{Channel::u,     Channel::y,  Channel::r_en,
                                                     Channel::gamma, Channel::r0, Channel::beta};

inline const char* channel_name(Channel c) {
    switch (c) {
        case Channel::u: return "u";
        case Channel::y: return "y";
        case Channel::r_en: return "r_en";
        case Channel::gamma: return "gamma";
        case Channel::r0: return "r0";
        case Channel::beta: return "beta";
    }
    return "?";
}

inline Channel parse_channel(const std::string& s) {
    for (Channel c : all_channels)
        if (s == channel_name(c)) return c;
    throw ValidationError("unknown channel '" + s + "'", "channel");
}

/// Signal length on a channel: input-sized or output-sized.
inline Eigen::Index channel_dim(Channel c, const StateSpaceSystem& plant) {
    return (c == Channel::y || c == Channel::r0) ? plant.outputs() : plant.inputs();
}

enum class AttackKind { additive, zero_dynamics, covert, replay, encoder_cancel, beta_cancel };
enum class Shape { step, sine, ramp };

inline constexpr TimeIndex forever = std::numeric_limits<TimeIndex>::max();

/// One scenario attack entry. Windows are half-open [start, end).
struct AttackSpec {
    AttackKind kind = AttackKind::additive;
    Channel channel = Channel::u;
    TimeIndex start = 0;
    TimeIndex end = forever;

    // additive: step = value, sine = value·sin(2π f (k − start) + phase), ramp = value·(k − start)
    Shape shape = Shape::step;
    Vector value;
    double frequency = 0.0;
    double phase = 0.0;

    // zero dynamics (phase reused as the complex rotation)
    std::optional<Complex> zero;
    double amplitude = 1.0;
    bool match_state = false;
    TimeIndex saturation_horizon = 200;

    // covert / beta_cancel: channel carrying the input-side attack
    Channel source = Channel::u;

    // replay
    std::vector<Channel> channels;
    TimeIndex record_start = 0;
    TimeIndex length = 0;
    TimeIndex replay_start = 0;

    // encoder_cancel / beta_cancel
    bool knows_schedule = false;

    bool active(TimeIndex k) const {
        if (kind == AttackKind::replay) return k >= replay_start && k < replay_start + length;
        return k >= start && k < end;
    }
};

/// a_u(k0 + j) = Re(c g z0^j) with c = amplitude·e^{iφ}; the matching state offset is Re(c x0).
/// Growth is frozen at |z0|^H after j = H when |z0| ≥ 1.
struct ZeroDynamicsAttack {
    Complex z0;
    CVector g;
    CVector x0;
    double amplitude = 1.0;
    double phase = 0.0;
    TimeIndex saturation_horizon = 200;

    Vector input(TimeIndex j) const {
        const Complex c = std::polar(amplitude, phase);
        Complex zj;
        if (std::abs(z0) >= 1.0 && j > saturation_horizon)
            zj = std::pow(z0, static_cast<double>(saturation_horizon)) *
                 std::polar(1.0, std::arg(z0) * static_cast<double>(j - saturation_horizon));
        else
            zj = std::pow(z0, static_cast<double>(j));
        return (c * zj * g).real();
    }

    Vector state_offset() const { return (std::polar(amplitude, phase) * x0).real(); }
};

inline ZeroDynamicsAttack zero_dynamics_attack(const StateSpaceSystem& plant, std::optional<Complex> z0 = std::nullopt,
                                               double amplitude = 1.0, double phase = 0.0,
                                               TimeIndex saturation_horizon = 200) {
    std::vector<ZeroDirection> zeros;
    try {
        zeros = invariant_zeros(plant);
    } catch (const DimensionError& e) {
        throw InfeasibleError(std::string("zero-dynamics attack: ") + e.what());
    }
    const ZeroDirection* pick = nullptr;
    for (const auto& z : zeros) {
        if (!z.has_direction) continue;
        if (z0) {
            if (std::abs(z.z0 - *z0) <= 1e-6 * std::max(1.0, std::abs(*z0))) pick = &z;
        } else if (!pick || std::abs(z.z0) > std::abs(pick->z0)) {
            pick = &z;
        }
    }
    if (!pick) {
        if (z0) throw ValidationError("requested zero is not an invariant zero of the plant", "attack.zero");
        throw InfeasibleError("zero-dynamics attack: plant has no invariant zeros");
    }

    ZeroDynamicsAttack a;
    a.z0 = pick->z0;
    a.g = pick->g;
    a.x0 = pick->x0;
    const CVector& ref = a.g.norm() > 1e-12 ? a.g : a.x0;
    Eigen::Index imax = 0;
    ref.cwiseAbs().maxCoeff(&imax);
    const Complex rot = std::conj(ref(imax)) / std::abs(ref(imax)) / ref.norm();
    a.g *= rot;
    a.x0 *= rot;
    a.amplitude = amplitude;
    a.phase = phase;
    a.saturation_horizon = saturation_horizon;
    return a;
}

/// Fixed-capacity ring buffer of eavesdropped samples for one channel.
class EavesdropLog {
public:
    EavesdropLog() = default;
    EavesdropLog(TimeIndex first, std::size_t capacity) : first_(first), buf_(capacity), have_(capacity, false) {}

    void record(TimeIndex k, const Vector& x) {
        if (buf_.empty() || k < first_) return;
        const auto i = static_cast<std::size_t>(k - first_) % buf_.size();
        buf_[i] = x;
        have_[i] = true;
    }

    std::optional<Vector> lookup(TimeIndex k) const {
        if (buf_.empty() || k < first_ || k >= first_ + static_cast<TimeIndex>(buf_.size())) return std::nullopt;
        const auto i = static_cast<std::size_t>(k - first_) % buf_.size();
        if (!have_[i]) return std::nullopt;
        return buf_[i];
    }

private:
    TimeIndex first_ = 0;
    std::vector<Vector> buf_;
    std::vector<bool> have_;
};

struct StateOffset {
    TimeIndex k = 0;
    Vector dx;
};

/// Checks one attack list against a plant. Throws ValidationError.
inline void validate_attacks(const std::vector<AttackSpec>& specs, const StateSpaceSystem& plant) {
    std::array<int, 6> owners{};
    auto claim = [&](Channel c) {
        if (++owners[static_cast<int>(c)] > 1)
            throw ValidationError(std::string("more than one attack on channel ") + channel_name(c), "attacks");
    };
    auto find_source = [&](Channel c) -> const AttackSpec* {
        for (const auto& s : specs)
            if ((s.kind == AttackKind::additive || s.kind == AttackKind::zero_dynamics) && s.channel == c) return &s;
        return nullptr;
    };
    for (const auto& s : specs) {
        if (s.kind == AttackKind::replay) {
            if (s.channels.empty()) throw ValidationError("replay needs at least one channel", "attacks.channels");
            if (s.length <= 0) throw ValidationError("replay length must be positive", "attacks.length");
            if (s.record_start < 0) throw ValidationError("replay record_start must be >= 0", "attacks.record_start");
            if (s.replay_start < s.record_start + s.length)
                throw ValidationError("replay must start after the recording window ends", "attacks.replay_start");
            for (Channel c : s.channels) claim(c);
            continue;
        }
        if (s.start < 0 || s.end <= s.start) throw ValidationError("attack window must satisfy 0 <= start < end", "attacks.window");
        claim(s.channel);
        switch (s.kind) {
            case AttackKind::additive:
                if (s.value.size() != channel_dim(s.channel, plant))
                    throw ValidationError(std::string("attack value on ") + channel_name(s.channel) + " must have length " +
                                              std::to_string(channel_dim(s.channel, plant)),
                                          "attacks.value");
                if (s.shape == Shape::sine && !(s.frequency >= 0.0 && s.frequency <= 0.5))
                    throw ValidationError("sine frequency must lie in [0, 0.5] cycles per step", "attacks.frequency");
                break;
            case AttackKind::zero_dynamics:
                if (s.channel != Channel::u && s.channel != Channel::gamma)
                    throw ValidationError("zero-dynamics attack must act on u or gamma", "attacks.channel");
                if (s.saturation_horizon < 0)
                    throw ValidationError("saturation_horizon must be >= 0", "attacks.saturation_horizon");
                break;
            case AttackKind::covert: {
                if (s.channel != Channel::y && s.channel != Channel::r0)
                    throw ValidationError("covert output part must act on y or r0", "attacks.channel");
                const Channel need = s.channel == Channel::y ? Channel::u : Channel::gamma;
                if (s.source != need || !find_source(need))
                    throw ValidationError(std::string("covert attack on ") + channel_name(s.channel) +
                                              " requires an input attack on " + channel_name(need),
                                          "attacks.source");
                break;
            }
            case AttackKind::encoder_cancel:
                if (s.channel != Channel::r_en)
                    throw ValidationError("encoder_cancel acts on r_en", "attacks.channel");
                break;
            case AttackKind::beta_cancel:
                if (s.channel != Channel::beta) throw ValidationError("beta_cancel acts on beta", "attacks.channel");
                break;
            case AttackKind::replay: break;
        }
    }
}

/// Applies every configured attack. Call begin_step(k) once per step, then
/// inject each frame crossing the link at that step.
class Adversary {
public:
    Adversary() = default;

    Adversary(const StateSpaceSystem& plant, const GainBank& bank, std::vector<AttackSpec> specs)
        : plant_(plant), bank_(bank), specs_(std::move(specs)) {
        validate_attacks(specs_, plant_);
        rt_.resize(specs_.size());
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            const auto& s = specs_[i];
            auto& r = rt_[i];
            switch (s.kind) {
                case AttackKind::zero_dynamics:
                    r.zd = zero_dynamics_attack(plant_, s.zero, s.amplitude, s.phase, s.saturation_horizon);
                    break;
                case AttackKind::covert: r.copy = plant_; break;
                case AttackKind::encoder_cancel: r.switched = switched_encoder(plant_, bank_); break;
                case AttackKind::beta_cancel: {
                    std::vector<StateSpaceSystem> modes;
                    for (std::size_t j = 0; j < bank_.size(); ++j) {
                        const Matrix AF0 = plant_.A() + plant_.B() * bank_.F[0];
                        modes.emplace_back(AF0, plant_.B(), bank_.F[0] - bank_.F[j],
                                           Matrix::Zero(plant_.inputs(), plant_.inputs()));
                    }
                    r.switched = SwitchedSystem(std::move(modes));
                    break;
                }
                case AttackKind::replay:
                    for (Channel c : s.channels)
                        logs_[static_cast<int>(c)] = EavesdropLog(s.record_start, static_cast<std::size_t>(s.length));
                    break;
                case AttackKind::additive: break;
            }
        }
    }

    bool empty() const { return specs_.empty(); }
    const std::vector<AttackSpec>& specs() const { return specs_; }

    /// Plant-state jumps that accompany zero-dynamics attacks.
    std::vector<StateOffset> state_offsets() const {
        std::vector<StateOffset> out;
        for (std::size_t i = 0; i < specs_.size(); ++i)
            if (specs_[i].kind == AttackKind::zero_dynamics && specs_[i].match_state)
                out.push_back({specs_[i].start, rt_[i].zd->state_offset()});
        return out;
    }

    bool attack_active(TimeIndex k) const {
        for (const auto& s : specs_)
            if (s.active(k)) return true;
        return false;
    }

    void begin_step(TimeIndex k) {
        if (started_ && k != k_ + 1)
            throw ValidationError("adversary steps must be consecutive (got " + std::to_string(k) + " after " +
                                  std::to_string(k_) + ")", "k");
        started_ = true;
        k_ = k;
        for (auto& v : current_) v.reset();

        // Input-side generators first; covert and cancelling entries read them.
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            const auto& s = specs_[i];
            if (!s.active(k)) continue;
            if (s.kind == AttackKind::additive) set(s.channel, additive_value(s, k));
            if (s.kind == AttackKind::zero_dynamics) set(s.channel, rt_[i].zd->input(k - s.start));
        }
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            const auto& s = specs_[i];
            if (s.kind != AttackKind::covert || k < s.start) continue;
            const Vector au = value_or_zero(s.source);
            const Vector ya = rt_[i].copy.step(au);
            if (s.active(k)) set(s.channel, -ya);
        }
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            const auto& s = specs_[i];
            if (k < s.start) continue;
            auto& sw = rt_[i].switched;
            if (s.kind == AttackKind::encoder_cancel) {
                sw.set_mode(s.knows_schedule ? bank_.mode_at(k) : 0);
                Vector in(plant_.inputs() + plant_.outputs());
                in << -value_or_zero(Channel::u), value_or_zero(Channel::y);
                const Vector a = sw.step(in);
                if (s.active(k)) set(s.channel, a);
            } else if (s.kind == AttackKind::beta_cancel) {
                sw.set_mode(s.knows_schedule ? bank_.mode_at(k) : 0);
                const Vector a = -sw.step(value_or_zero(s.source));
                if (s.active(k)) set(s.channel, a);
            }
        }
    }

    /// Value delivered to the receiver for a frame sent on `c` at step k.
    Vector inject(Channel c, TimeIndex k, const Vector& sent) {
        if (!started_ || k != k_) throw ValidationError("inject called for a step that was not begun", "k");
        auto& log = logs_[static_cast<int>(c)];
        if (log) {
            for (const auto& s : specs_) {
                if (s.kind != AttackKind::replay) continue;
                if (std::find(s.channels.begin(), s.channels.end(), c) == s.channels.end()) continue;
                if (k >= s.record_start && k < s.record_start + s.length) log->record(k, sent);
                if (s.active(k)) {
                    if (auto old = log->lookup(k - s.replay_start + s.record_start)) return *old;
                }
            }
            return sent;
        }
        const auto& add = current_[static_cast<int>(c)];
        if (add) {
            require_dims(add->size() == sent.size(), std::string("attack on ") + channel_name(c) + " has wrong length");
            return sent + *add;
        }
        return sent;
    }

    /// Additive attack value on a channel at the current step, if any.
    const std::optional<Vector>& current(Channel c) const { return current_[static_cast<int>(c)]; }

private:
    struct Runtime {
        std::optional<ZeroDynamicsAttack> zd;
        StateSpaceSystem copy;
        SwitchedSystem switched;
    };

    static Vector additive_value(const AttackSpec& s, TimeIndex k) {
        const double t = static_cast<double>(k - s.start);
        switch (s.shape) {
            case Shape::step: return s.value;
            case Shape::sine: return s.value * std::sin(2.0 * M_PI * s.frequency * t + s.phase);
            case Shape::ramp: return s.value * t;
        }
        return s.value;
    }

    void set(Channel c, Vector v) { current_[static_cast<int>(c)] = std::move(v); }

    Vector value_or_zero(Channel c) const {
        const auto& v = current_[static_cast<int>(c)];
        return v ? *v : Vector(Vector::Zero(channel_dim(c, plant_)));
    }

    StateSpaceSystem plant_;
    GainBank bank_;
    std::vector<AttackSpec> specs_;
    std::vector<Runtime> rt_;
    std::array<std::optional<Vector>, 6> current_;
    std::array<std::optional<EavesdropLog>, 6> logs_;
    TimeIndex k_ = 0;
    bool started_ = false;
};

}  // namespace kernelguard
