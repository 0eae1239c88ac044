#pragma once

// Scenario files: JSON, matrices as row-major nested arrays.

#include "kernelguard/attacks.hpp"
#include "kernelguard/loopsim.hpp"
#include "kernelguard/synthesis.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>

namespace kernelguard {

using json = nlohmann::json;

enum class Scheme { baseline, scheme_a, scheme_b };
enum class TransportKind { inproc, tcp };
enum class TapSide { monitor, plant };

inline const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::baseline: return "baseline";
        case Scheme::scheme_a: return "scheme_a";
        case Scheme::scheme_b: return "scheme_b";
    }
    return "?";
}

struct TransportSpec {
    TransportKind kind = TransportKind::inproc;
    std::string host = "127.0.0.1";
    int port = 0;
    TapSide tap = TapSide::monitor;
    int timeout_ms = 10000;
};

struct Scenario {
    std::uint64_t seed = 1;
    TimeIndex horizon = 0;
    Scheme scheme = Scheme::baseline;
    double alpha = 0.05;
    double lambda = 1e6;

    PlantSpec plant;
    KalmanSolution kalman;
    ControllerConfig controller;
    GainBank bank;
    Vector reference;
    std::vector<AttackSpec> attacks;
    TransportSpec transport;
    std::size_t mean_shift_window = 50;
    std::string out_dir;

    json source;  // the document this scenario was built from

    /// First step at which any attack acts.
    std::optional<TimeIndex> onset() const {
        std::optional<TimeIndex> k;
        for (const auto& a : attacks) {
            const TimeIndex s = a.kind == AttackKind::replay ? a.replay_start : a.start;
            if (!k || s < *k) k = s;
        }
        return k;
    }
};

struct ScenarioOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<TimeIndex> steps;
    std::optional<TransportKind> transport;
    std::optional<std::string> out_dir;
};

namespace detail {

inline const json& require(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key))
        throw ValidationError("missing required field", where.empty() ? key : where + "." + key);
    return j.at(key);
}

inline std::string join(const std::string& where, const std::string& key) { return where.empty() ? key : where + "." + key; }

inline double read_double(const json& j, const std::string& field) {
    if (!j.is_number()) throw ValidationError("expected a number", field);
    return j.get<double>();
}

inline Matrix read_matrix(const json& j, const std::string& field) {
    if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
    if (!j.is_array()) throw ValidationError("expected a matrix (array of rows)", field);
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) return Matrix(0, 0);
    if (!j[0].is_array()) throw ValidationError("matrix rows must be arrays", field);
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw ValidationError("row " + std::to_string(r) + " has the wrong length", field);
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = read_double(row[static_cast<std::size_t>(c)], field + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    }
    return m;
}

inline Vector read_vector(const json& j, const std::string& field) {
    if (j.is_number()) return Vector::Constant(1, j.get<double>());
    if (!j.is_array()) throw ValidationError("expected an array of numbers", field);
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = read_double(j[i], field);
    return v;
}

inline void expect_shape(const Matrix& m, Eigen::Index r, Eigen::Index c, const std::string& field) {
    if (m.rows() != r || m.cols() != c)
        throw ValidationError("must be " + std::to_string(r) + "x" + std::to_string(c) + ", got " + dims_str(m), field);
}

inline TimeIndex read_index(const json& j, const std::string& field) {
    if (!j.is_number_integer()) throw ValidationError("expected an integer", field);
    return j.get<TimeIndex>();
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError("has the wrong type", join(where, key));
    }
}

inline Channel read_channel(const json& j, const std::string& field) {
    if (!j.is_string()) throw ValidationError("expected a channel name", field);
    std::string s = j.get<std::string>();
    if (s.rfind("a_", 0) == 0) s = s.substr(2);
    try {
        return parse_channel(s);
    } catch (const ValidationError& e) {
        throw ValidationError(e.what(), field);
    }
}

inline AttackSpec read_attack(const json& j, const std::string& where, const StateSpaceSystem& plant, TimeIndex horizon) {
    AttackSpec a;
    const std::string type = detail::get_or<std::string>(j, "type", "", where);
    if (type == "additive") a.kind = AttackKind::additive;
    else if (type == "zero_dynamics") a.kind = AttackKind::zero_dynamics;
    else if (type == "covert") a.kind = AttackKind::covert;
    else if (type == "replay") a.kind = AttackKind::replay;
    else if (type == "encoder_cancel") a.kind = AttackKind::encoder_cancel;
    else if (type == "beta_cancel") a.kind = AttackKind::beta_cancel;
    else throw ValidationError("unknown attack type '" + type + "'", join(where, "type"));

    if (j.contains("start")) a.start = read_index(j["start"], join(where, "start"));
    a.end = j.contains("end") ? read_index(j["end"], join(where, "end")) : horizon;
    if (a.kind != AttackKind::replay && (a.start >= horizon || a.end > horizon))
        throw ValidationError("attack window must lie within the horizon", where);

    switch (a.kind) {
        case AttackKind::additive: {
            a.channel = read_channel(require(j, "channel", where), join(where, "channel"));
            const std::string shape = get_or<std::string>(j, "shape", "step", where);
            if (shape == "step") a.shape = Shape::step;
            else if (shape == "sine") a.shape = Shape::sine;
            else if (shape == "ramp") a.shape = Shape::ramp;
            else throw ValidationError("unknown shape '" + shape + "'", join(where, "shape"));
            a.value = read_vector(require(j, "value", where), join(where, "value"));
            a.frequency = get_or<double>(j, "frequency", 0.0, where);
            a.phase = get_or<double>(j, "phase", 0.0, where);
            break;
        }
        case AttackKind::zero_dynamics: {
            a.channel = j.contains("channel") ? read_channel(j["channel"], join(where, "channel")) : Channel::u;
            if (j.contains("zero")) {
                const json& z = j["zero"];
                if (z.is_string() && z.get<std::string>() == "auto") {
                } else if (z.is_number()) {
                    a.zero = Complex(z.get<double>(), 0.0);
                } else if (z.is_array() && z.size() == 2) {
                    a.zero = Complex(read_double(z[0], join(where, "zero")), read_double(z[1], join(where, "zero")));
                } else {
                    throw ValidationError("expected \"auto\", a number or [re, im]", join(where, "zero"));
                }
            }
            a.amplitude = get_or<double>(j, "amplitude", 1.0, where);
            a.phase = get_or<double>(j, "phase", 0.0, where);
            a.match_state = get_or<bool>(j, "match_state", false, where);
            a.saturation_horizon = get_or<TimeIndex>(j, "saturation_horizon", 200, where);
            break;
        }
        case AttackKind::covert:
            a.channel = j.contains("channel") ? read_channel(j["channel"], join(where, "channel")) : Channel::y;
            a.source = j.contains("source") ? read_channel(j["source"], join(where, "source"))
                                            : (a.channel == Channel::r0 ? Channel::gamma : Channel::u);
            break;
        case AttackKind::replay: {
            const json& chans = require(j, "channels", where);
            if (!chans.is_array()) throw ValidationError("expected an array of channel names", join(where, "channels"));
            for (const auto& c : chans) a.channels.push_back(read_channel(c, join(where, "channels")));
            a.record_start = read_index(require(j, "record_start", where), join(where, "record_start"));
            a.length = read_index(require(j, "length", where), join(where, "length"));
            a.replay_start = read_index(require(j, "replay_start", where), join(where, "replay_start"));
            if (a.replay_start + a.length > horizon)
                throw ValidationError("replay window must lie within the horizon", where);
            break;
        }
        case AttackKind::encoder_cancel:
            a.channel = Channel::r_en;
            a.knows_schedule = get_or<bool>(j, "knows_schedule", false, where);
            break;
        case AttackKind::beta_cancel:
            a.channel = Channel::beta;
            a.source = j.contains("source") ? read_channel(j["source"], join(where, "source")) : Channel::gamma;
            a.knows_schedule = get_or<bool>(j, "knows_schedule", false, where);
            break;
    }
    (void)plant;
    return a;
}

inline void check_scheme_channels(Scheme scheme, const std::vector<AttackSpec>& attacks) {
    auto allowed = [&](Channel c) {
        switch (scheme) {
            case Scheme::baseline: return c == Channel::u || c == Channel::y;
            case Scheme::scheme_a: return c == Channel::u || c == Channel::y || c == Channel::r_en;
            case Scheme::scheme_b: return c == Channel::gamma || c == Channel::r0 || c == Channel::beta;
        }
        return false;
    };
    for (std::size_t i = 0; i < attacks.size(); ++i) {
        const auto& a = attacks[i];
        std::vector<Channel> used = a.kind == AttackKind::replay ? a.channels : std::vector<Channel>{a.channel};
        for (Channel c : used)
            if (!allowed(c))
                throw ValidationError(std::string("channel ") + channel_name(c) + " is not transmitted in " +
                                          scheme_name(scheme),
                                      "attacks[" + std::to_string(i) + "]");
    }
}

}  // namespace detail

inline std::optional<std::uint64_t> seed_from_env() {
    const char* s = std::getenv("KERNELGUARD_SEED");
    if (!s || !*s) return std::nullopt;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (*end != '\0') throw ValidationError("KERNELGUARD_SEED must be an unsigned integer", "KERNELGUARD_SEED");
    return static_cast<std::uint64_t>(v);
}

/// Builds and validates a scenario. Overrides take precedence over the document.
inline Scenario build_scenario(const json& doc, const ScenarioOverrides& ov = {}) {
    using namespace detail;
    if (!doc.is_object()) throw ValidationError("scenario must be a JSON object", "scenario");
    Scenario s;
    s.source = doc;

    s.seed = ov.seed ? *ov.seed : get_or<std::uint64_t>(doc, "seed", 1, "");
    s.horizon = ov.steps ? *ov.steps : read_index(require(doc, "horizon", ""), "horizon");
    if (s.horizon <= 0) throw ValidationError("must be positive", "horizon");

    const std::string scheme = get_or<std::string>(doc, "scheme", "baseline", "");
    if (scheme == "baseline") s.scheme = Scheme::baseline;
    else if (scheme == "scheme_a") s.scheme = Scheme::scheme_a;
    else if (scheme == "scheme_b") s.scheme = Scheme::scheme_b;
    else throw ValidationError("unknown scheme '" + scheme + "'", "scheme");

    s.alpha = get_or<double>(doc, "alpha", 0.05, "");
    if (!(s.alpha > 0.0 && s.alpha < 1.0)) throw ValidationError("must lie in (0, 1)", "alpha");
    s.lambda = get_or<double>(doc, "lambda", 1e6, "");
    if (!(s.lambda > 0.0)) throw ValidationError("must be positive", "lambda");
    s.mean_shift_window = get_or<std::size_t>(doc, "mean_shift_window", 50, "");
    if (s.mean_shift_window == 0) throw ValidationError("must be positive", "mean_shift_window");

    // plant
    const json& pj = require(doc, "plant", "");
    const Matrix A = read_matrix(require(pj, "A", "plant"), "plant.A");
    const auto n = A.rows();
    expect_shape(A, n, n, "plant.A");
    const Matrix B = read_matrix(require(pj, "B", "plant"), "plant.B");
    if (B.rows() != n) throw ValidationError("must have " + std::to_string(n) + " rows to match plant.A, got " + dims_str(B), "plant.B");
    const auto p = B.cols();
    const Matrix C = read_matrix(require(pj, "C", "plant"), "plant.C");
    if (C.cols() != n) throw ValidationError("must have " + std::to_string(n) + " columns to match plant.A, got " + dims_str(C), "plant.C");
    const auto m = C.rows();
    Matrix D = pj.contains("D") ? read_matrix(pj["D"], "plant.D") : Matrix(Matrix::Zero(m, p));
    expect_shape(D, m, p, "plant.D");
    s.plant.sys = StateSpaceSystem(A, B, C, D);
    if (s.horizon <= 10 * n) throw ValidationError("must exceed 10 times the plant order", "horizon");

    const json& nj = require(pj, "noise", "plant");
    NoiseSpec& noise = s.plant.noise;
    noise.Sigma_w = read_matrix(require(nj, "Sigma_w", "plant.noise"), "plant.noise.Sigma_w");
    expect_shape(noise.Sigma_w, n, n, "plant.noise.Sigma_w");
    noise.Sigma_v = read_matrix(require(nj, "Sigma_v", "plant.noise"), "plant.noise.Sigma_v");
    expect_shape(noise.Sigma_v, m, m, "plant.noise.Sigma_v");
    noise.S = nj.contains("S") ? read_matrix(nj["S"], "plant.noise.S") : Matrix(Matrix::Zero(n, m));
    expect_shape(noise.S, n, m, "plant.noise.S");
    noise.Pi0 = Matrix::Zero(n, n);
    bool pi0_steady = false;
    if (nj.contains("Pi0")) {
        if (nj["Pi0"].is_string()) {
            if (nj["Pi0"].get<std::string>() != "steady_state")
                throw ValidationError("expected a matrix or \"steady_state\"", "plant.noise.Pi0");
            pi0_steady = true;
        } else {
            noise.Pi0 = read_matrix(nj["Pi0"], "plant.noise.Pi0");
            expect_shape(noise.Pi0, n, n, "plant.noise.Pi0");
        }
    }
    s.kalman = kalman_gain(A, C, noise);
    if (pi0_steady) noise.Pi0 = s.kalman.P;

    if (pj.contains("x0")) {
        const json& xj = pj["x0"];
        if (xj.is_string()) {
            const std::string mode = xj.get<std::string>();
            if (mode == "zero") s.plant.x0_mode = X0Mode::zero;
            else if (mode == "sampled") s.plant.x0_mode = X0Mode::sampled;
            else throw ValidationError("expected \"zero\", \"sampled\" or a vector", "plant.x0");
        } else {
            s.plant.x0_mode = X0Mode::fixed;
            s.plant.x0 = read_vector(xj, "plant.x0");
            if (s.plant.x0.size() != n) throw ValidationError("must have length " + std::to_string(n), "plant.x0");
        }
    }
    s.plant.validate();

    // controller
    const json cj = doc.value("controller", json::object());
    if (cj.contains("F0")) {
        s.controller.F0 = read_matrix(cj["F0"], "controller.F0");
        expect_shape(s.controller.F0, p, n, "controller.F0");
    } else {
        const Matrix qf = cj.contains("Qf") ? read_matrix(cj["Qf"], "controller.Qf") : Matrix(Matrix::Identity(n, n));
        const Matrix rf = cj.contains("Rf") ? read_matrix(cj["Rf"], "controller.Rf") : Matrix(Matrix::Identity(p, p));
        expect_shape(qf, n, n, "controller.Qf");
        expect_shape(rf, p, p, "controller.Rf");
        s.controller.F0 = feedback_gain(A, B, qf, rf);
    }
    const json l0 = cj.value("L0", json("kalman"));
    if (l0.is_string()) {
        const std::string how = l0.get<std::string>();
        if (how == "kalman") {
            s.controller.L0 = s.kalman.L_K;
        } else if (how == "lqe") {
            const Matrix ql = cj.contains("Ql") ? read_matrix(cj["Ql"], "controller.Ql") : Matrix(Matrix::Identity(n, n));
            const Matrix rl = cj.contains("Rl") ? read_matrix(cj["Rl"], "controller.Rl") : Matrix(Matrix::Identity(m, m));
            expect_shape(ql, n, n, "controller.Ql");
            expect_shape(rl, m, m, "controller.Rl");
            s.controller.L0 = observer_gain(A, C, ql, rl);
        } else {
            throw ValidationError("expected \"kalman\", \"lqe\" or a matrix", "controller.L0");
        }
    } else {
        s.controller.L0 = read_matrix(l0, "controller.L0");
        expect_shape(s.controller.L0, n, m, "controller.L0");
    }
    const json qj = cj.value("Q", json("zero"));
    if (qj.is_string() && qj.get<std::string>() == "zero") {
        s.controller.Q = StateSpaceSystem::zero(p, m);
    } else if (qj.is_string() && qj.get<std::string>() == "random") {
        Rng rng(derive_seed(s.seed, Stream::q_filter));
        s.controller.Q = random_stable_q(get_or<Eigen::Index>(cj, "Q_order", 2, "controller"), p, m, rng);
    } else if (qj.is_object()) {
        const Matrix qa = read_matrix(require(qj, "A", "controller.Q"), "controller.Q.A");
        const auto nq = qa.rows();
        expect_shape(qa, nq, nq, "controller.Q.A");
        const Matrix qb = read_matrix(require(qj, "B", "controller.Q"), "controller.Q.B");
        expect_shape(qb, nq, m, "controller.Q.B");
        const Matrix qc = read_matrix(require(qj, "C", "controller.Q"), "controller.Q.C");
        expect_shape(qc, p, nq, "controller.Q.C");
        s.controller.Q = StateSpaceSystem(qa, qb, qc, Matrix::Zero(p, m));
    } else {
        throw ValidationError("expected \"zero\", \"random\" or {A, B, C}", "controller.Q");
    }
    s.controller.validate(s.plant.sys);

    // gain bank
    if (s.scheme == Scheme::baseline) {
        s.bank = constant_bank(s.controller.F0, s.controller.L0, s.horizon);
    } else {
        const json bj = doc.value("gain_bank", json::object());
        const auto kappa = get_or<std::size_t>(bj, "kappa", 3, "gain_bank");
        const auto dwell = get_or<TimeIndex>(bj, "dwell_min", 25, "gain_bank");
        const double scale = get_or<double>(bj, "scale", 1.0, "gain_bank");
        const auto bank_seed = get_or<std::uint64_t>(bj, "seed", s.seed, "gain_bank");
        s.bank = build_gain_bank(s.plant.sys, s.controller.F0, s.controller.L0, kappa, bank_seed, dwell, scale, s.horizon);
    }

    s.reference = doc.contains("reference") ? read_vector(doc["reference"], "reference") : Vector(Vector::Zero(p));
    if (s.reference.size() != p) throw ValidationError("must have length " + std::to_string(p), "reference");

    if (doc.contains("attacks")) {
        const json& aj = doc["attacks"];
        if (!aj.is_array()) throw ValidationError("expected an array", "attacks");
        for (std::size_t i = 0; i < aj.size(); ++i)
            s.attacks.push_back(read_attack(aj[i], "attacks[" + std::to_string(i) + "]", s.plant.sys, s.horizon));
    }
    check_scheme_channels(s.scheme, s.attacks);
    validate_attacks(s.attacks, s.plant.sys);

    const json tj = doc.value("transport", json::object());
    const std::string kind = get_or<std::string>(tj, "kind", "inproc", "transport");
    if (kind == "inproc") s.transport.kind = TransportKind::inproc;
    else if (kind == "tcp" || kind == "socket") s.transport.kind = TransportKind::tcp;
    else throw ValidationError("expected \"inproc\" or \"tcp\"", "transport.kind");
    if (ov.transport) s.transport.kind = *ov.transport;
    s.transport.host = get_or<std::string>(tj, "host", "127.0.0.1", "transport");
    s.transport.port = get_or<int>(tj, "port", 0, "transport");
    if (s.transport.port < 0 || s.transport.port > 65535) throw ValidationError("out of range", "transport.port");
    const std::string tap = get_or<std::string>(tj, "tap", "monitor", "transport");
    if (tap == "monitor") s.transport.tap = TapSide::monitor;
    else if (tap == "plant") s.transport.tap = TapSide::plant;
    else throw ValidationError("expected \"monitor\" or \"plant\"", "transport.tap");
    s.transport.timeout_ms = get_or<int>(tj, "timeout_ms", 10000, "transport");

    s.out_dir = ov.out_dir ? *ov.out_dir : get_or<std::string>(doc.value("output", json::object()), "dir", "", "output");
    return s;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'", "scenario");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("invalid JSON: ") + e.what(), path);
    }
}

/// Seed precedence: explicit override, then KERNELGUARD_SEED, then the file.
inline Scenario load_scenario(const std::string& path, ScenarioOverrides ov = {}) {
    if (!ov.seed) ov.seed = seed_from_env();
    return build_scenario(read_json_file(path), ov);
}

}  // namespace kernelguard
