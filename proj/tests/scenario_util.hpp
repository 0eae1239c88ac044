#pragma once

#include "kernelguard/harness/runner.hpp"
#include "test_util.hpp"

namespace kgtest {

inline json eye_json(std::size_t n, double s) {
    json rows = json::array();
    for (std::size_t i = 0; i < n; ++i) {
        json r = json::array();
        for (std::size_t j = 0; j < n; ++j) r.push_back(i == j ? s : 0.0);
        rows.push_back(r);
    }
    return rows;
}

/// Desk plant scenario document with isotropic noise of the given variance.
inline json desk_doc(const std::string& scheme, TimeIndex horizon, double var = 0.01, std::uint64_t seed = 1) {
    return json{{"seed", seed},
                {"horizon", horizon},
                {"scheme", scheme},
                {"plant",
                 {{"A", {{0.9, 0.1}, {0.0, 0.8}}},
                  {"B", {{0.0}, {1.0}}},
                  {"C", {{1.0, 0.0}}},
                  {"noise", {{"Sigma_w", eye_json(2, var)}, {"Sigma_v", eye_json(1, var)}, {"Pi0", "steady_state"}}},
                  {"x0", "sampled"}}},
                {"gain_bank", {{"kappa", 3}, {"dwell_min", 25}}}};
}

/// Same plant matrices with D = 1 (minimum phase, invertible feedthrough).
inline json desk_d_doc(const std::string& scheme, TimeIndex horizon, double var, std::uint64_t seed = 1) {
    json d = desk_doc(scheme, horizon, var, seed);
    d["plant"]["D"] = {{1.0}};
    return d;
}

/// The noise-free variant keeps the gains designed for the noisy plant.
inline Scenario noise_free(Scenario s) {
    s.plant.noise.Sigma_w.setZero();
    s.plant.noise.Sigma_v.setZero();
    s.plant.noise.Pi0.setZero();
    s.plant.x0_mode = X0Mode::zero;
    return s;
}

inline RunOptions quiet() { return {true, false, nullptr}; }

}  // namespace kgtest
