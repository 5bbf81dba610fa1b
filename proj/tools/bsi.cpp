// bsi: blind system identification with the stable spline kernel.
//
// Exit codes: 0 success, 1 usage, 2 data/validation, 3 numerical failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "bsi/io/commands.hpp"

namespace {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const bsi::FactorizationError*>(&e) ||
        dynamic_cast<const bsi::ConditioningError*>(&e) ||
        dynamic_cast<const bsi::EstimationError*>(&e)) {
        return kNumeric;
    }
    return kData;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Blind system identification via stable spline kernels and EM"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string output;
    bool quiet = false;
    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--seed", seed, "Master seed (overrides config)");
    app.add_option("--output", output, "Output directory (overrides config output_dir)");
    app.add_flag("--quiet", quiet, "Suppress progress output");

    auto* sim = app.add_subcommand("simulate", "Generate one random instance (y.csv, u_true.csv, g_true.csv, instance.json)");

    auto* ident = app.add_subcommand("identify", "Estimate g and u from y.csv and a known input basis");
    std::string data_path;
    bool write_trace = false;
    ident->add_option("data", data_path, "CSV with a single column headed 'y'")->required();
    ident->add_flag("--trace", write_trace, "Also write trace.csv");

    auto* bench = app.add_subcommand("benchmark", "Monte Carlo comparison of B-KB, NB-LS and NB-KB");
    unsigned threads = 0;
    bench->add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");

    auto* insp = app.add_subcommand("inspect", "Summarize a results.csv");
    std::string results_path;
    insp->add_option("results", results_path, "results.csv written by benchmark")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (insp->parsed()) {
            std::cout << bsi::io::inspect_report(bsi::io::load_results(results_path));
            return kOk;
        }

        bsi::io::ExperimentConfig cfg =
            config_path.empty() ? bsi::io::ExperimentConfig{} : bsi::io::load_config(config_path);
        if (seed) cfg.master_seed = *seed;
        if (!output.empty()) cfg.output_dir = output;

        if (sim->parsed()) {
            const auto s = bsi::io::simulate(cfg);
            bsi::io::write_simulation(cfg, s, cfg.output_dir);
            if (!quiet) {
                std::cerr << "wrote instance (p=" << s.instance.x_true.size()
                          << ", sigma2_true=" << s.instance.sigma2_true << ") to " << cfg.output_dir << '\n';
            }
            return kOk;
        }
        if (ident->parsed()) {
            const bsi::Vector y = bsi::io::read_vector_csv(data_path, "y");
            cfg.N = y.size();
            const auto r = bsi::io::identify(cfg, y);
            bsi::io::write_identification(r, cfg.output_dir, write_trace);
            if (!quiet) {
                std::cerr << "log marginal " << r.em.log_marginal() << ", sigma2 " << r.em.theta.sigma2
                          << ", beta " << r.em.theta.beta << ", " << r.em.trace.iterations
                          << " iterations\n";
            }
            if (!r.em.trace.converged) {
                std::cerr << "warning: EM did not converge within " << cfg.em.max_iters
                          << " iterations; estimates written anyway\n";
                return kNumeric;
            }
            return kOk;
        }
        if (bench->parsed()) {
            const auto rows = bsi::io::run_benchmark(cfg, {quiet, threads});
            if (!quiet) std::cout << bsi::io::inspect_report(rows);
            return kOk;
        }
    } catch (const bsi::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
