#pragma once

// Scenario execution, CSV/JSON reporting, Monte-Carlo stealth checks and sweeps.

#include "kernelguard/harness/nodes.hpp"
#include "kernelguard/harness/scenario.hpp"
#include "kernelguard/harness/transport.hpp"
#include "kernelguard/stats.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace kernelguard {

struct StepRow {
    TimeIndex k = 0;
    double J = 0.0;
    double J_th = 0.0;
    bool alarm = false;
    double r_u_norm = 0.0;
    double r_0K_norm = 0.0;
    std::size_t mode = 0;
    bool attack_active = false;
};

struct MeanShiftSummary {
    std::size_t window = 50;
    double threshold = 0.0;
    std::size_t pre_onset_alarms = 0;
    std::size_t post_onset_alarms = 0;
    std::optional<TimeIndex> first_alarm;  // first alarm at or after onset
};

struct DetectionReport {
    Scheme scheme = Scheme::baseline;
    std::uint64_t seed = 0;
    TimeIndex horizon = 0;
    double alpha = 0.05;
    double lambda = 1e6;
    double J_th = 0.0;
    std::optional<TimeIndex> onset;
    std::vector<StepRow> rows;
    std::vector<ResidualFrame> frames;
    std::vector<StepTrace> traces;
    RateReport rates;
    MeanShiftSummary mean_shift;
    double mean_J = 0.0;
};

struct RunOptions {
    bool keep_frames = true;
    bool write_files = true;
    LinkLog* link_log = nullptr;  // inproc only
};

inline void summarize(DetectionReport& rep, std::size_t m) {
    std::vector<bool> alarms;
    alarms.reserve(rep.rows.size());
    double sum = 0.0;
    WindowedMeanShift ms(rep.mean_shift.window, static_cast<int>(m), rep.alpha);
    rep.mean_shift.threshold = ms.threshold();
    for (const auto& r : rep.rows) {
        alarms.push_back(r.alarm);
        sum += r.J;
        const bool shift = ms.push(r.J);
        if (!shift) continue;
        if (rep.onset && r.k >= *rep.onset) {
            ++rep.mean_shift.post_onset_alarms;
            if (!rep.mean_shift.first_alarm) rep.mean_shift.first_alarm = r.k;
        } else {
            ++rep.mean_shift.pre_onset_alarms;
        }
    }
    rep.mean_J = rep.rows.empty() ? 0.0 : sum / static_cast<double>(rep.rows.size());
    rep.rates = empirical_rates(alarms, rep.onset);
}

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string report_csv(const DetectionReport& rep) {
    std::string out = "k,J,J_th,alarm,r_u_norm,r_0K_norm,mode,attack_active\n";
    for (const auto& r : rep.rows) {
        out += std::to_string(r.k) + ',' + format_double(r.J) + ',' + format_double(r.J_th) + ',' + (r.alarm ? '1' : '0') +
               ',' + format_double(r.r_u_norm) + ',' + format_double(r.r_0K_norm) + ',' + std::to_string(r.mode) + ',' +
               (r.attack_active ? '1' : '0') + '\n';
    }
    return out;
}

inline json rates_json(const RateReport& r) {
    json j{{"n_steps", r.n_steps}, {"n_alarms", r.n_alarms}, {"rate", r.rate}, {"ci_low", r.ci_low},
           {"ci_high", r.ci_high}, {"detection_rate", r.detection_rate}};
    j["detection_delay"] = r.detection_delay ? json(*r.detection_delay) : json(nullptr);
    return j;
}

inline json report_summary(const DetectionReport& rep) {
    json j{{"scheme", scheme_name(rep.scheme)},
           {"seed", rep.seed},
           {"horizon", rep.horizon},
           {"alpha", rep.alpha},
           {"lambda", rep.lambda},
           {"J_th", rep.J_th},
           {"mean_J", rep.mean_J},
           {"rates", rates_json(rep.rates)}};
    j["onset"] = rep.onset ? json(*rep.onset) : json(nullptr);
    json ms{{"window", rep.mean_shift.window},
            {"threshold", rep.mean_shift.threshold},
            {"pre_onset_alarms", rep.mean_shift.pre_onset_alarms},
            {"post_onset_alarms", rep.mean_shift.post_onset_alarms}};
    ms["first_alarm"] = rep.mean_shift.first_alarm ? json(*rep.mean_shift.first_alarm) : json(nullptr);
    j["mean_shift"] = ms;
    return j;
}

inline std::string trace_csv(const DetectionReport& rep) {
    std::ostringstream out;
    if (rep.traces.empty()) return {};
    const auto& t0 = rep.traces.front();
    out << "k";
    for (Eigen::Index i = 0; i < t0.r0.size(); ++i) out << ",r0_" << i;
    for (Eigen::Index i = 0; i < t0.y_rec.size(); ++i) out << ",y_rec_" << i;
    for (Eigen::Index i = 0; i < t0.a_y_hat.size(); ++i) out << ",a_y_hat_" << i;
    if (t0.a_u_hat)
        for (Eigen::Index i = 0; i < t0.a_u_hat->size(); ++i) out << ",a_u_hat_" << i;
    out << '\n';
    for (std::size_t k = 0; k < rep.traces.size(); ++k) {
        const auto& t = rep.traces[k];
        out << k;
        for (Eigen::Index i = 0; i < t.r0.size(); ++i) out << ',' << format_double(t.r0(i));
        for (Eigen::Index i = 0; i < t.y_rec.size(); ++i) out << ',' << format_double(t.y_rec(i));
        for (Eigen::Index i = 0; i < t.a_y_hat.size(); ++i) out << ',' << format_double(t.a_y_hat(i));
        if (t.a_u_hat)
            for (Eigen::Index i = 0; i < t.a_u_hat->size(); ++i) out << ',' << format_double((*t.a_u_hat)(i));
        out << '\n';
    }
    return out.str();
}

inline void write_report(const DetectionReport& rep, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream(fs::path(dir) / "steps.csv", std::ios::binary) << report_csv(rep);
    std::ofstream(fs::path(dir) / "summary.json") << report_summary(rep).dump(2) << '\n';
    if (rep.scheme == Scheme::scheme_b) std::ofstream(fs::path(dir) / "trace.csv", std::ios::binary) << trace_csv(rep);
}

/// Lockstep loop: monitor emits → link (adversary, plant node, adversary) → monitor absorbs.
inline DetectionReport run_scenario(const Scenario& s, const RunOptions& opt = {}) {
    Adversary adv(s.plant.sys, s.bank, s.attacks);
    SchemePlant plant(s, adv.state_offsets());
    auto monitor = make_monitor(s);

    std::unique_ptr<Link> link;
    if (s.transport.kind == TransportKind::tcp)
        link = std::make_unique<TcpLink>(plant, adv, s.transport, monitor->up_count(), s.horizon);
    else
        link = std::make_unique<InprocLink>(plant, adv, opt.link_log);

    DetectionReport rep;
    rep.scheme = s.scheme;
    rep.seed = s.seed;
    rep.horizon = s.horizon;
    rep.alpha = s.alpha;
    rep.lambda = s.lambda;
    rep.onset = s.onset();
    rep.mean_shift.window = s.mean_shift_window;
    rep.rows.reserve(static_cast<std::size_t>(s.horizon));

    for (TimeIndex k = 0; k < s.horizon; ++k) {
        const auto down = monitor->emit(k);
        const auto up = link->exchange(k, down);
        ResidualFrame f = monitor->absorb(up, k);
        if (!std::isfinite(f.J)) throw NumericalError("test statistic is not finite at step " + std::to_string(k));
        rep.J_th = f.J_th;
        rep.rows.push_back({k, f.J, f.J_th, f.alarm, f.r_u.norm(), f.r_0K.norm(), monitor->mode(), adv.attack_active(k)});
        if (opt.keep_frames) {
            rep.frames.push_back(std::move(f));
            rep.traces.push_back(monitor->trace());
        }
    }
    link->finish();
    summarize(rep, static_cast<std::size_t>(s.plant.sys.outputs()));
    if (opt.write_files && !s.out_dir.empty()) write_report(rep, s.out_dir);
    return rep;
}

struct StealthReport {
    std::size_t n_runs = 0;
    std::size_t n_steps = 0;
    std::size_t n_alarms = 0;
    double rate = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double band_low = 0.0;
    double band_high = 0.0;
    double mean_J = 0.0;
    bool stealthy = false;
};

/// Monte-Carlo alarm rate of the baseline detector over the steps where an
/// attack is active (all steps when there is none). Stealthy iff the rate lies in the
/// α band for that many trials.
inline StealthReport verify_stealth(const Scenario& base, std::size_t n_runs) {
    StealthReport out;
    out.n_runs = n_runs;
    double jsum = 0.0;
    for (std::size_t i = 0; i < n_runs; ++i) {
        Scenario s = base;
        s.scheme = Scheme::baseline;
        s.bank = constant_bank(s.controller.F0, s.controller.L0, s.horizon);
        s.transport.kind = TransportKind::inproc;
        s.seed = derive_seed(base.seed, 1000 + i);
        s.out_dir.clear();
        const auto rep = run_scenario(s, {false, false, nullptr});
        for (const auto& r : rep.rows) {
            if (rep.onset && !r.attack_active) continue;
            ++out.n_steps;
            out.n_alarms += r.alarm ? 1 : 0;
            jsum += r.J;
        }
    }
    out.rate = out.n_steps ? static_cast<double>(out.n_alarms) / static_cast<double>(out.n_steps) : 0.0;
    out.mean_J = out.n_steps ? jsum / static_cast<double>(out.n_steps) : 0.0;
    std::tie(out.ci_low, out.ci_high) = binomial_ci(out.n_alarms, out.n_steps);
    std::tie(out.band_low, out.band_high) = alpha_band(base.alpha, out.n_steps);
    out.stealthy = out.rate >= out.band_low && out.rate <= out.band_high;
    return out;
}

/// "a.b.0.c" → json_pointer "/a/b/0/c".
inline json::json_pointer param_pointer(const std::string& dotted) {
    std::string ptr;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (part.empty()) throw ValidationError("empty path component", "param");
        ptr += "/" + part;
    }
    return json::json_pointer(ptr);
}

/// Values for a sweep: "v1,v2,..." (JSON literals) or "lo:hi:step" (numeric, inclusive).
inline std::vector<json> parse_range(const std::string& spec) {
    std::vector<json> out;
    if (std::count(spec.begin(), spec.end(), ':') == 2) {
        double v[3];
        std::stringstream ss(spec);
        std::string part;
        for (int i = 0; i < 3; ++i) {
            std::getline(ss, part, ':');
            try {
                v[i] = std::stod(part);
            } catch (const std::exception&) {
                throw ValidationError("bad numeric range '" + spec + "'", "param");
            }
        }
        if (!(v[2] > 0.0) || v[1] < v[0]) throw ValidationError("range needs lo <= hi and step > 0", "param");
        const bool integral = std::floor(v[0]) == v[0] && std::floor(v[2]) == v[2];
        for (int i = 0;; ++i) {
            const double x = v[0] + i * v[2];
            if (x > v[1] + 1e-12 * std::max(1.0, std::abs(v[1]))) break;
            out.push_back(integral ? json(static_cast<std::int64_t>(std::llround(x))) : json(x));
        }
        return out;
    }
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ',')) {
        try {
            out.push_back(json::parse(part));
        } catch (const json::exception&) {
            out.push_back(json(part));
        }
    }
    if (out.empty()) throw ValidationError("empty value list", "param");
    return out;
}

/// Runs the scenario once per value of one parameter. Sub-runs write to out_dir/run_<i>.
inline json sweep(const json& doc, const std::string& path, const std::vector<json>& values, const ScenarioOverrides& ov) {
    json results = json::array();
    const auto ptr = param_pointer(path);
    for (std::size_t i = 0; i < values.size(); ++i) {
        json d = doc;
        d[ptr] = values[i];
        ScenarioOverrides o = ov;
        if (ov.out_dir) o.out_dir = (std::filesystem::path(*ov.out_dir) / ("run_" + std::to_string(i))).string();
        const Scenario s = build_scenario(d, o);
        const auto rep = run_scenario(s, {false, true, nullptr});
        json row = report_summary(rep);
        row["param"] = path;
        row["value"] = values[i];
        results.push_back(row);
    }
    return results;
}

/// Collects every summary.json below `dir` and pools their alarm counts.
inline json aggregate_reports(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw ValidationError("not a directory: " + dir, "in");
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() == "summary.json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    json runs = json::array();
    std::size_t steps = 0, alarms = 0;
    for (const auto& f : files) {
        json j = read_json_file(f.string());
        if (!j.contains("rates")) continue;
        steps += j["rates"].value("n_steps", std::size_t{0});
        alarms += j["rates"].value("n_alarms", std::size_t{0});
        j["path"] = fs::relative(f, dir).string();
        runs.push_back(j);
    }
    const auto [lo, hi] = binomial_ci(alarms, steps);
    return json{{"runs", runs},
                {"pooled", {{"n_runs", runs.size()},
                            {"n_steps", steps},
                            {"n_alarms", alarms},
                            {"rate", steps ? static_cast<double>(alarms) / static_cast<double>(steps) : 0.0},
                            {"ci_low", lo},
                            {"ci_high", hi}}}};
}

}  // namespace kernelguard
