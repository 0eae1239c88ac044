// kernelguard command line: run, verify, sweep, report.

#include "kernelguard/kernelguard.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace kernelguard;

namespace {

struct CommonOptions {
    std::string scenario;
    TimeIndex steps = -1;
    std::int64_t seed = -1;
    std::string transport;
    std::string out;
};

ScenarioOverrides overrides(const CommonOptions& o) {
    ScenarioOverrides ov;
    ov.seed = seed_from_env();
    if (o.seed >= 0) ov.seed = static_cast<std::uint64_t>(o.seed);
    if (o.steps >= 0) ov.steps = o.steps;
    if (o.transport == "inproc") ov.transport = TransportKind::inproc;
    else if (o.transport == "tcp" || o.transport == "socket") ov.transport = TransportKind::tcp;
    else if (!o.transport.empty()) throw ValidationError("expected inproc or tcp", "--transport");
    if (!o.out.empty()) ov.out_dir = o.out;
    return ov;
}

int cmd_run(const CommonOptions& o) {
    const Scenario s = build_scenario(read_json_file(o.scenario), overrides(o));
    const DetectionReport rep = run_scenario(s, {false, true, nullptr});
    std::cout << report_summary(rep).dump(2) << '\n';
    if (!s.out_dir.empty()) std::cerr << "wrote " << s.out_dir << "/steps.csv and summary.json\n";
    return 0;
}

// Accepts a bare plant object or a scenario containing one.
json plant_document(const json& doc) {
    json pj = doc.contains("plant") ? doc["plant"] : doc;
    if (!pj.contains("noise")) {
        const auto n = pj.at("A").size();
        const auto m = pj.at("C").size();
        auto eye = [](std::size_t k) {
            json rows = json::array();
            for (std::size_t i = 0; i < k; ++i) {
                json r = json::array();
                for (std::size_t j = 0; j < k; ++j) r.push_back(i == j ? 1.0 : 0.0);
                rows.push_back(r);
            }
            return rows;
        };
        pj["noise"] = {{"Sigma_w", eye(n)}, {"Sigma_v", eye(m)}};
    }
    json s{{"scheme", "scheme_a"}, {"horizon", 2000}, {"plant", pj}};
    for (const char* key : {"controller", "gain_bank", "seed"})
        if (doc.contains(key)) s[key] = doc[key];
    return s;
}

int cmd_verify(const std::string& path, std::int64_t seed_opt) {
    ScenarioOverrides ov;
    ov.seed = seed_from_env();
    if (seed_opt >= 0) ov.seed = static_cast<std::uint64_t>(seed_opt);
    const Scenario s = build_scenario(plant_document(read_json_file(path)), ov);
    const auto& plant = s.plant.sys;
    const auto& bank = s.bank;
    json out;
    bool ok = true;

    Rng rng(derive_seed(s.seed, Stream::q_filter));
    const StateSpaceSystem q = random_stable_q(2, plant.inputs(), plant.outputs(), rng);
    const auto bez = verify_bezout(coprime_factors(plant, bank.F[0], bank.L[0]), 32, 1e-8, &q, s.seed);
    out["bezout"] = {{"max_error", bez.max_error}, {"max_error_extended", bez.max_error_extended}, {"pass", bez.pass}};
    ok = ok && bez.pass;

    double pair_err = 0.0, pair_inv = 0.0;
    bool pair_ok = true;
    for (std::size_t i = 0; i < bank.size(); ++i)
        for (std::size_t j = 0; j < bank.size(); ++j) {
            const auto r = verify_gain_pair(plant, bank.F[i], bank.L[i], bank.F[j], bank.L[j], 64, 1e-7, s.seed + i * 31 + j);
            pair_err = std::max(pair_err, r.max_error);
            pair_inv = std::max(pair_inv, r.max_error_inverse);
            pair_ok = pair_ok && r.pass;
        }
    out["gain_pairs"] = {{"pairs", bank.size() * bank.size()}, {"max_error", pair_err}, {"max_error_inverse", pair_inv},
                     {"pass", pair_ok}};
    ok = ok && pair_ok;

    double traj = 0.0;
    std::size_t switches = 0;
    Rng sig(derive_seed(s.seed, Stream::reference));
    for (int r = 0; r < 10; ++r) {
        GainBank b = bank;
        b.schedule = build_schedule(b.size(), s.seed + 100 + static_cast<std::uint64_t>(r), b.dwell_min, s.horizon);
        StateSpaceSystem g = plant;
        std::vector<Vector> u, y;
        for (TimeIndex k = 0; k < s.horizon; ++k) {
            u.push_back(sig.normal(plant.inputs()));
            y.push_back(g.step(u.back()));
        }
        const auto rep = check_encoder_identities(plant, b, u, y, b.dwell_min / 2);
        traj = std::max({traj, rep.r0_error_settled, rep.ren_error_settled});
        switches += rep.switches;
    }
    const bool traj_ok = traj <= 1e-8;
    out["encoder_identities"] = {{"schedules", 10}, {"switches", switches}, {"max_error", traj}, {"pass", traj_ok}};
    ok = ok && traj_ok;
    out["pass"] = ok;
    std::cout << out.dump(2) << '\n';
    return ok ? 0 : 3;
}

int cmd_sweep(const CommonOptions& o, const std::string& param) {
    const auto eq = param.find('=');
    if (eq == std::string::npos) throw ValidationError("expected <path>=<range>", "--param");
    const json doc = read_json_file(o.scenario);
    const json res = sweep(doc, param.substr(0, eq), parse_range(param.substr(eq + 1)), overrides(o));
    if (!o.out.empty()) {
        std::filesystem::create_directories(o.out);
        std::ofstream(std::filesystem::path(o.out) / "sweep.json") << res.dump(2) << '\n';
    }
    std::cout << res.dump(2) << '\n';
    return 0;
}

int cmd_report(const std::string& dir) {
    const json agg = aggregate_reports(dir);
    std::ofstream(std::filesystem::path(dir) / "report.json") << agg.dump(2) << '\n';
    std::cout << agg.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kernel-attack detection simulator"};
    app.require_subcommand(1);

    CommonOptions run_o;
    auto* run = app.add_subcommand("run", "Run one scenario");
    run->add_option("--scenario", run_o.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    run->add_option("--steps", run_o.steps, "Override the horizon");
    run->add_option("--seed", run_o.seed, "Override the seed");
    run->add_option("--transport", run_o.transport, "inproc or tcp");
    run->add_option("--out", run_o.out, "Output directory");

    std::string plant_path;
    std::int64_t verify_seed = -1;
    auto* verify = app.add_subcommand("verify", "Check the factorization identities for a plant");
    verify->add_option("--plant", plant_path, "Plant or scenario JSON file")->required()->check(CLI::ExistingFile);
    verify->add_option("--seed", verify_seed, "Seed for the gain bank and sample points");

    CommonOptions sweep_o;
    std::string param;
    auto* sw = app.add_subcommand("sweep", "Run a scenario over a range of one parameter");
    sw->add_option("--scenario", sweep_o.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    sw->add_option("--param", param, "path=lo:hi:step or path=v1,v2,...")->required();
    sw->add_option("--steps", sweep_o.steps, "Override the horizon");
    sw->add_option("--seed", sweep_o.seed, "Override the seed");
    sw->add_option("--out", sweep_o.out, "Output directory");

    std::string in_dir;
    auto* report = app.add_subcommand("report", "Aggregate summary.json files");
    report->add_option("--in", in_dir, "Directory to scan")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*run) return cmd_run(run_o);
        if (*verify) return cmd_verify(plant_path, verify_seed);
        if (*sw) return cmd_sweep(sweep_o, param);
        if (*report) return cmd_report(in_dir);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return 2;
    } catch (const DimensionError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
