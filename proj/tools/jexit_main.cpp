// Command-line front end: predict / simulate / analyze / sweep.
//
// Exit status contract: 0 success, 2 configuration or validation failure,
// 3 I/O failure, 4 when fewer than 99% of requested trials succeeded.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "jexit/jexit.hpp"

namespace fs = std::filesystem;
using namespace jexit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitTrialLoss = 4;

struct CommonFlags {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
    bool outer = false;
    double alpha = -1.0;  // >= 0 enables inner-box diagnostics
};

int resolve_workers(int flag_workers, const RunControls& run) {
    if (const char* env = std::getenv("JORDAN_EXIT_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (...) {
        }
        std::cerr << "warning: ignoring malformed JORDAN_EXIT_THREADS\n";
    }
    int w = flag_workers > 0 ? flag_workers : run.workers;
    if (w <= 0) w = static_cast<int>(std::thread::hardware_concurrency());
    return std::max(1, w);
}

ParsedConfig load_or_fail(const std::string& path, int& status) {
    ParsedConfig cfg = load_config(path);
    if (!cfg.ok()) {
        std::cerr << "config errors:\n";
        for (const auto& e : cfg.errors) std::cerr << "  " << e << "\n";
        status = kExitConfig;
    }
    return cfg;
}

TrialOptions make_trial_options(const CommonFlags& flags, ProblemSpec& spec) {
    TrialOptions opt;
    if (flags.alpha >= 0.0) {
        spec.alpha = flags.alpha;
        opt.inner_diagnostics = true;
    }
    if (!flags.outer) spec.outer_domain = OuterDomainSpec::none();
    return opt;
}

json simulate_manifest(const ParsedConfig& cfg, double eps, long n_requested,
                       const BatchResult& batch, std::uint64_t seed,
                       const std::string& csv_path, double wall_seconds) {
    json failures = json::array();
    for (const auto& f : batch.failures) failures.push_back({{"trial_id", f.trial_id},
                                                             {"message", f.message}});
    return json{{"config_hash", cfg.hash},
                {"tool_version", kToolVersion},
                {"master_seed", seed},
                {"epsilon", eps},
                {"trials_requested", n_requested},
                {"trials_recorded", static_cast<long>(batch.records.size())},
                {"started_outside_inner", batch.started_outside_inner},
                {"failures", failures},
                {"records_csv", csv_path},
                {"wall_seconds", wall_seconds}};
}

int cmd_predict(const CommonFlags& flags, long samples, const std::string& out_dir) {
    int status = kExitOk;
    ParsedConfig cfg = load_or_fail(flags.config_path, status);
    if (status != kExitOk) return status;
    ProblemSpec spec = cfg.spec;

    try {
        std::optional<PoincareData> poincare;
        if (spec.outer_domain.present) {
            const FlowIntegrator fi(spec);
            poincare = poincare_data(fi, spec.box_radius, spec.outer_domain.half_width);
        }

        json predictions = json::array();
        for (double eps : spec.epsilon_grid)
            predictions.push_back(
                to_json(make_prediction_set(spec, eps, poincare ? &*poincare : nullptr)));
        json out{{"config_hash", cfg.hash}, {"tool_version", kToolVersion},
                 {"predictions", predictions}};
        if (poincare.has_value()) out["poincare"] = to_json(*poincare);

        std::string samples_csv;
        if (samples > 0) {
            const std::uint64_t seed = flags.seed_set ? flags.seed : cfg.run.seed;
            const LimitLawSampler sampler = LimitLawSampler::from_spec(spec);
            RngStream rng(seed, 0);
            samples_csv = "rho,eta,sign\n";
            for (long i = 0; i < samples; ++i) {
                Vec chi = sampler.sample_chi(rng);
                while (chi[spec.dim - 1] == 0.0) chi = sampler.sample_chi(rng);
                const int sign = chi[spec.dim - 1] > 0.0 ? 1 : -1;
                samples_csv += format_double(rho_of_chi(chi, spec.lambda, spec.box_radius, spec.dim));
                samples_csv += ',';
                if (spec.dim >= 2)
                    samples_csv += format_double(eta_of_chi(chi, spec.lambda, spec.box_radius, spec.dim));
                samples_csv += ',';
                samples_csv += std::to_string(sign);
                samples_csv += '\n';
            }
        }

        if (!out_dir.empty()) {
            fs::create_directories(out_dir);
            write_file(out_dir + "/predictions.json", out.dump(2) + "\n");
            if (samples > 0) write_file(out_dir + "/samples.csv", samples_csv);
        } else if (samples > 0) {
            std::cout << samples_csv;
        } else {
            std::cout << out.dump(2) << "\n";
        }
    } catch (const fs::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "predict failed: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}

int simulate_one(const ParsedConfig& cfg, ProblemSpec spec, const CommonFlags& flags, double eps,
                 long trials, const std::string& out_dir, std::string& csv_path_out) {
    const std::uint64_t seed = flags.seed_set ? flags.seed : cfg.run.seed;
    const int workers = resolve_workers(flags.workers, cfg.run);
    ProblemSpec run_spec = spec;
    const TrialOptions opt = make_trial_options(flags, run_spec);

    const auto t0 = std::chrono::steady_clock::now();
    BatchResult batch;
    try {
        batch = run_batch(run_spec, eps, trials, seed, workers, opt);
    } catch (const std::exception& e) {
        std::cerr << "simulate failed: " << e.what() << "\n";
        return kExitConfig;
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    try {
        fs::create_directories(out_dir);
        std::string tag = format_double(eps);
        for (char& c : tag)
            if (c == '+') c = '_';
        csv_path_out = out_dir + "/records_eps" + tag + ".csv";
        write_file(csv_path_out, records_to_csv(batch.records, run_spec.dim));
        const json manifest =
            simulate_manifest(cfg, eps, trials, batch, seed, csv_path_out, wall);
        write_file(out_dir + "/manifest_eps" + tag + ".json", manifest.dump(2) + "\n");
    } catch (const std::exception& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    }

    std::cerr << "eps=" << format_double(eps) << ": " << batch.records.size() << "/" << trials
              << " trials recorded\n";
    const double success =
        static_cast<double>(batch.records.size()) / static_cast<double>(trials);
    return success >= 0.99 ? kExitOk : kExitTrialLoss;
}

int cmd_simulate(const CommonFlags& flags, double eps_flag, bool eps_set, long trials,
                 const std::string& out_dir) {
    int status = kExitOk;
    ParsedConfig cfg = load_or_fail(flags.config_path, status);
    if (status != kExitOk) return status;

    double eps = eps_flag;
    if (!eps_set) {
        if (cfg.spec.epsilon_grid.size() != 1) {
            std::cerr << "config has an epsilon grid; pass --epsilon to pick one\n";
            return kExitConfig;
        }
        eps = cfg.spec.epsilon_grid[0];
    }
    const long n = trials > 0 ? trials : cfg.run.trials;
    std::string csv_path;
    return simulate_one(cfg, cfg.spec, flags, eps, n,
                        out_dir.empty() ? cfg.run.out_dir : out_dir, csv_path);
}

int cmd_analyze(const CommonFlags& flags, const std::vector<std::string>& record_paths,
                const std::string& out_path) {
    int status = kExitOk;
    ParsedConfig cfg = load_or_fail(flags.config_path, status);
    if (status != kExitOk) return status;
    ProblemSpec spec = cfg.spec;

    try {
        std::map<double, std::vector<TrialRecord>, std::greater<double>> by_eps;
        for (const auto& path : record_paths) {
            for (auto& rec : read_records_csv(path, spec.dim))
                by_eps[rec.epsilon].push_back(std::move(rec));
        }
        if (by_eps.empty()) throw InvalidInputError("no records given");

        std::optional<PoincareData> poincare;
        if (flags.outer) {
            if (!spec.outer_domain.present)
                throw InvalidInputError("--outer given but config has no outer domain");
            const FlowIntegrator fi(spec);
            poincare = poincare_data(fi, spec.box_radius, spec.outer_domain.half_width);
        }

        const std::uint64_t seed = flags.seed_set ? flags.seed : cfg.run.seed;
        const TheorySample theory = sample_theory(spec, 100'000, seed);

        std::vector<std::pair<double, std::vector<TrialRecord>>> cells;
        for (auto& [eps, recs] : by_eps) cells.emplace_back(eps, std::move(recs));

        GridReport report =
            analyze_grid(spec, cells, theory, poincare ? &*poincare : nullptr);
        json out = to_json(report);
        out["config_hash"] = cfg.hash;
        out["tool_version"] = kToolVersion;
        out["theory_p_plus"] = theory.p_plus;

        if (!out_path.empty()) write_file(out_path, out.dump(2) + "\n");
        else std::cout << out.dump(2) << "\n";
    } catch (const InvalidInputError& e) {
        std::cerr << "analyze failed: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "analyze failed: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitOk;
}

int cmd_sweep(const CommonFlags& flags, long trials, const std::string& out_dir) {
    int status = kExitOk;
    ParsedConfig cfg = load_or_fail(flags.config_path, status);
    if (status != kExitOk) return status;
    ProblemSpec spec = cfg.spec;
    if (spec.epsilon_grid.size() < 3)
        std::cerr << "warning: fewer than 3 grid points, trend verdicts unavailable\n";

    const std::string dir = out_dir.empty() ? cfg.run.out_dir : out_dir;
    const long n = trials > 0 ? trials : cfg.run.trials;

    int worst = kExitOk;
    std::vector<std::pair<double, std::string>> completed;
    for (double eps : spec.epsilon_grid) {
        std::string csv_path;
        const int rc = simulate_one(cfg, spec, flags, eps, n, dir, csv_path);
        if (rc == kExitOk || rc == kExitTrialLoss) completed.emplace_back(eps, csv_path);
        worst = std::max(worst, rc);
        if (rc == kExitIo) break;  // cannot continue without output
    }

    try {
        std::optional<PoincareData> poincare;
        if (flags.outer && spec.outer_domain.present) {
            const FlowIntegrator fi(spec);
            poincare = poincare_data(fi, spec.box_radius, spec.outer_domain.half_width);
        }
        const std::uint64_t seed = flags.seed_set ? flags.seed : cfg.run.seed;
        const TheorySample theory = sample_theory(spec, 100'000, seed);

        std::vector<std::pair<double, std::vector<TrialRecord>>> cells;
        for (const auto& [eps, path] : completed)
            cells.emplace_back(eps, read_records_csv(path, spec.dim));

        json out{{"config_hash", cfg.hash},
                 {"tool_version", kToolVersion},
                 {"complete", completed.size() == spec.epsilon_grid.size()},
                 {"theory_p_plus", theory.p_plus}};
        if (!cells.empty()) {
            GridReport report =
                analyze_grid(spec, cells, theory, poincare ? &*poincare : nullptr);
            out["report"] = to_json(report);
        }
        write_file(dir + "/sweep_report.json", out.dump(2) + "\n");
    } catch (const std::exception& e) {
        std::cerr << "sweep report failed: " << e.what() << "\n";
        worst = std::max(worst, kExitIo);
    }
    return worst;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"first-exit simulation and asymptotics for Jordan-block unstable equilibria"};
    app.require_subcommand(1);

    CommonFlags flags;
    long samples = 0;
    long trials = 0;
    double eps_flag = 0.0;
    std::string out_path;
    std::vector<std::string> record_paths;

    auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
        auto* c = cmd->add_option("--config", flags.config_path, "JSON problem configuration");
        if (needs_config) c->required();
        cmd->add_option("--seed", flags.seed, "master seed (overrides config)")
            ->each([&](const std::string&) { flags.seed_set = true; });
        cmd->add_option("--workers", flags.workers, "worker threads (overrides config)");
        cmd->add_flag("--outer", flags.outer, "enable the outer-domain pipeline");
        cmd->add_option("--alpha", flags.alpha,
                        "enable inner-box diagnostics with this exponent");
    };

    CLI::App* predict = app.add_subcommand("predict", "evaluate expansion predictions");
    add_common(predict);
    predict->add_option("--samples", samples, "also emit sampled (rho, eta, sign) triples");
    predict->add_option("--out", out_path, "output directory");

    CLI::App* simulate = app.add_subcommand("simulate", "run trials at one epsilon");
    add_common(simulate);
    auto* eps_opt = simulate->add_option("--epsilon", eps_flag, "noise magnitude");
    simulate->add_option("--trials", trials, "number of trials");
    simulate->add_option("--out", out_path, "output directory");

    CLI::App* analyze = app.add_subcommand("analyze", "compare records against the limit laws");
    add_common(analyze);
    analyze->add_option("--records", record_paths, "trial CSV files")->required();
    analyze->add_option("--out", out_path, "output JSON path");

    CLI::App* sweep = app.add_subcommand("sweep", "simulate + analyze over the epsilon grid");
    add_common(sweep);
    sweep->add_option("--trials", trials, "trials per epsilon");
    sweep->add_option("--out", out_path, "output directory");

    CLI11_PARSE(app, argc, argv);

    if (predict->parsed()) return cmd_predict(flags, samples, out_path);
    if (simulate->parsed())
        return cmd_simulate(flags, eps_flag, eps_opt->count() > 0, trials, out_path);
    if (analyze->parsed()) return cmd_analyze(flags, record_paths, out_path);
    if (sweep->parsed()) return cmd_sweep(flags, trials, out_path);
    return kExitConfig;
}
