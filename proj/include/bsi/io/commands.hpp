#pragma once

// Implementation of the `simulate`, `identify`, `benchmark` and `inspect`
// commands. The CLI front end in tools/ only parses flags and maps errors
// to exit codes.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <typeinfo>
#include <vector>

#include "bsi/baselines.hpp"
#include "bsi/em.hpp"
#include "bsi/io/config.hpp"
#include "bsi/io/csv.hpp"
#include "bsi/io/svg.hpp"
#include "bsi/metrics.hpp"
#include "bsi/simulation.hpp"

namespace bsi::io {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Per-run seed: the master seed hashed with (group p, run index).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t group, std::uint64_t run) {
    return splitmix64(splitmix64(splitmix64(master) ^ group) ^ run);
}

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory '" + dir + "': " + ec.message());
}

inline std::string join_path(const std::string& dir, const std::string& file) {
    return (std::filesystem::path(dir) / file).string();
}

inline void write_json(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------- simulate

struct SimulateOutput {
    SimulatedInstance instance;
    TransferFunction system;
    BasisSpec basis;
};

inline SimulateOutput simulate(const ExperimentConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.master_seed);
    RandomSystemSpec spec = cfg.system;
    spec.seed = rng();
    SimulateOutput out;
    out.system = normalize_peak(random_system(spec), cfg.n);
    out.basis = cfg.basis;
    if (!out.basis.explicit_basis()) {
        if (out.basis.kind != "piecewise_constant") {
            throw InputError("simulate: sinusoid basis needs basis.frequencies");
        }
        out.basis.switch_instants = random_switch_instants(cfg.N, cfg.groups.front().p, rng);
    }
    const InputBasis basis = out.basis.build(cfg.N);
    Vector x(basis.dimension());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < x.size(); ++i) x(i) = normal(rng);
    out.instance = simulate_instance(out.system, basis, x, cfg.noise_ratio, cfg.n, rng());
    return out;
}

inline void write_simulation(const ExperimentConfig& cfg, const SimulateOutput& s,
                             const std::string& dir) {
    ensure_dir(dir);
    write_vector_csv(join_path(dir, "y.csv"), "y", s.instance.y);
    write_vector_csv(join_path(dir, "u_true.csv"), "u", s.instance.u_true);
    write_vector_csv(join_path(dir, "g_true.csv"), "g", s.instance.g_true);
    json j;
    j["seed"] = cfg.master_seed;
    j["N"] = cfg.N;
    j["n"] = cfg.n;
    j["noise_ratio"] = cfg.noise_ratio;
    j["sigma2_true"] = s.instance.sigma2_true;
    j["basis"] = s.basis.to_json();
    j["x_true"] = std::vector<double>(s.instance.x_true.data(),
                                      s.instance.x_true.data() + s.instance.x_true.size());
    j["system"] = {{"num", s.system.num}, {"den", s.system.den}};
    write_json(join_path(dir, "instance.json"), j);
}

// ---------------------------------------------------------------- identify

struct IdentifyOutput {
    EMResult em;
    NormalizedPair normalized;
    InputBasis basis;
};

inline IdentifyOutput identify(const ExperimentConfig& cfg, const Vector& y) {
    if (!cfg.basis.explicit_basis()) {
        throw InputError("identify: the config must give basis.switch_instants or basis.frequencies");
    }
    IdentifyOutput out;
    out.basis = cfg.basis.build(y.size());
    EMSettings s = cfg.em;
    s.n = cfg.n;
    s.seed = cfg.master_seed;
    out.em = run_em(y, out.basis.H, s);
    out.normalized = normalize_pair(out.basis.H * out.em.theta.x, out.em.post.mean_g);
    return out;
}

inline void write_identification(const IdentifyOutput& r, const std::string& dir, bool trace) {
    ensure_dir(dir);
    write_vector_csv(join_path(dir, "g_hat.csv"), "g_hat", r.normalized.g_norm);
    write_vector_csv(join_path(dir, "u_hat.csv"), "u_hat", r.normalized.u_norm);
    const auto& th = r.em.theta;
    json j;
    j["x"] = std::vector<double>(th.x.data(), th.x.data() + th.x.size());
    j["sigma2"] = th.sigma2;
    j["beta"] = th.beta;
    j["log_marginal"] = r.em.log_marginal();
    j["iterations"] = r.em.trace.iterations;
    j["converged"] = r.em.trace.converged;
    j["restart"] = r.em.restart;
    j["alpha"] = r.normalized.alpha;
    write_json(join_path(dir, "theta.json"), j);
    if (trace) {
        Table t;
        t.header = {"iter", "log_marginal", "sigma2", "beta"};
        for (Index i = 0; i < th.x.size(); ++i) t.header.push_back("x" + std::to_string(i + 1));
        for (std::size_t k = 0; k < r.em.trace.thetas.size(); ++k) {
            const auto& tk = r.em.trace.thetas[k];
            std::vector<std::string> row{std::to_string(k), format_double(r.em.trace.log_marginals[k]),
                                         format_double(tk.sigma2), format_double(tk.beta)};
            for (Index i = 0; i < tk.x.size(); ++i) row.push_back(format_double(tk.x(i)));
            t.rows.push_back(std::move(row));
        }
        write_table(join_path(dir, "trace.csv"), t);
    }
}

// ---------------------------------------------------------------- benchmark

struct RunResult {
    Index p = 0;
    int run = 0;
    std::uint64_t seed = 0;
    double fit_bkb = std::nan("");
    double fit_nbls = std::nan("");
    double fit_nbkb = std::nan("");
    int iters = 0;
    bool converged = false;
    double wall_ms = 0.0;
    std::string status = "ok";

    [[nodiscard]] bool ok() const { return status == "ok"; }
};

inline const std::vector<std::string>& results_header() {
    static const std::vector<std::string> h{"p",        "run",      "seed", "fit_bkb",   "fit_nbls",
                                            "fit_nbkb", "iters",    "converged", "status"};
    return h;
}

namespace detail {

inline std::string error_tag(const std::exception& e) {
    if (dynamic_cast<const EstimationError*>(&e)) return "failed:estimation";
    if (dynamic_cast<const ConditioningError*>(&e)) return "failed:conditioning";
    if (dynamic_cast<const FactorizationError*>(&e)) return "failed:factorization";
    if (dynamic_cast<const InputError*>(&e)) return "failed:input";
    if (dynamic_cast<const DomainError*>(&e)) return "failed:domain";
    if (dynamic_cast<const DimensionError*>(&e)) return "failed:dimension";
    return "failed:other";
}

}  // namespace detail

/// One Monte Carlo run: simulate, run B-KB / NB-LS / NB-KB, score.
inline RunResult benchmark_run(const ExperimentConfig& cfg, Index p, int run) {
    RunResult r;
    r.p = p;
    r.run = run;
    r.seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(p),
                         static_cast<std::uint64_t>(run));
    const auto t0 = std::chrono::steady_clock::now();
    try {
        std::mt19937_64 rng(r.seed);
        RandomSystemSpec spec = cfg.system;
        spec.seed = rng();
        const TransferFunction sys = normalize_peak(random_system(spec), cfg.n);
        const InputBasis basis = piecewise_constant_basis(random_switch_instants(cfg.N, p, rng));
        Vector x(p);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Index i = 0; i < p; ++i) x(i) = normal(rng);
        const SimulatedInstance inst = simulate_instance(sys, basis, x, cfg.noise_ratio, cfg.n, rng());

        EMSettings s = cfg.em;
        s.n = cfg.n;
        s.seed = rng();
        const EMResult bkb = run_em(inst.y, basis.H, s);
        r.iters = bkb.trace.iterations;
        r.converged = bkb.trace.converged;
        r.fit_bkb = fit_score(basis.H * bkb.theta.x, bkb.post.mean_g, inst.u_true, inst.g_true, cfg.n).value;

        const BaselineResult ls = fir_least_squares(inst.y, inst.u_true, cfg.n);
        r.fit_nbls = fit_score(inst.u_true, ls.g_hat, inst.u_true, inst.g_true, cfg.n).value;

        const BaselineResult kb = kernel_known_input(inst.y, inst.u_true, cfg.n, s);
        r.fit_nbkb = fit_score(inst.u_true, kb.g_hat, inst.u_true, inst.g_true, cfg.n).value;
    } catch (const Error& e) {
        r.status = detail::error_tag(e);
    }
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

struct GroupSummary {
    Index p = 0;
    std::size_t runs = 0;
    std::size_t failed = 0;
    BoxSummary bkb, nbls, nbkb;
};

/// Per-group boxplot statistics over successful rows, ordered by p.
inline std::vector<GroupSummary> summarize(const std::vector<RunResult>& rows) {
    std::map<Index, std::vector<const RunResult*>> by_p;
    for (const auto& r : rows) by_p[r.p].push_back(&r);
    std::vector<GroupSummary> out;
    for (const auto& [p, rs] : by_p) {
        GroupSummary g;
        g.p = p;
        g.runs = rs.size();
        std::vector<double> a, b, c;
        for (const RunResult* r : rs) {
            if (!r->ok()) {
                ++g.failed;
                continue;
            }
            a.push_back(r->fit_bkb);
            b.push_back(r->fit_nbls);
            c.push_back(r->fit_nbkb);
        }
        if (a.empty()) throw InputError("summarize: group p=" + std::to_string(p) + " has no successful runs");
        g.bkb = aggregate(a);
        g.nbls = aggregate(b);
        g.nbkb = aggregate(c);
        out.push_back(std::move(g));
    }
    if (out.empty()) throw InputError("summarize: no results");
    return out;
}

inline json box_json(const BoxSummary& b) {
    return {{"count", b.count}, {"median", b.median}, {"q1", b.q1}, {"q3", b.q3},
            {"min", b.min},     {"max", b.max},       {"whisker_low", b.whisker_low},
            {"whisker_high", b.whisker_high}, {"outliers", b.outliers}};
}

inline Table results_table(const std::vector<RunResult>& rows) {
    Table t;
    t.header = results_header();
    for (const auto& r : rows) {
        t.rows.push_back({std::to_string(r.p), std::to_string(r.run), std::to_string(r.seed),
                          format_double(r.fit_bkb), format_double(r.fit_nbls),
                          format_double(r.fit_nbkb), std::to_string(r.iters),
                          r.converged ? "1" : "0", r.status});
    }
    return t;
}

inline std::vector<RunResult> parse_results(const Table& t, const std::string& path) {
    if (t.header != results_header()) throw DataError("'" + path + "' does not have the results.csv header");
    std::vector<RunResult> rows;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& f = t.rows[i];
        const std::string ctx = path + ":" + std::to_string(i + 2);
        RunResult r;
        try {
            r.p = static_cast<Index>(std::stoll(f[0]));
            r.run = std::stoi(f[1]);
            r.seed = std::stoull(f[2]);
            r.iters = std::stoi(f[6]);
        } catch (const std::exception&) {
            throw DataError(ctx + ": malformed integer field");
        }
        r.fit_bkb = parse_double(f[3], ctx);
        r.fit_nbls = parse_double(f[4], ctx);
        r.fit_nbkb = parse_double(f[5], ctx);
        if (f[7] != "0" && f[7] != "1") throw DataError(ctx + ": converged must be 0 or 1");
        r.converged = f[7] == "1";
        r.status = f[8];
        if (r.ok() && !(std::isfinite(r.fit_bkb) && std::isfinite(r.fit_nbls) && std::isfinite(r.fit_nbkb))) {
            throw DataError(ctx + ": successful row with non-finite FIT");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::vector<RunResult> load_results(const std::string& path) {
    return parse_results(read_table(path), path);
}

struct BenchmarkOptions {
    bool quiet = false;
    unsigned threads = 0;  // 0: hardware concurrency
};

/// Runs every (group, run) pair; rows come back in (group, run) order whatever
/// the thread count. Writes results.csv, timing.csv, summary.json and SVG plots.
inline std::vector<RunResult> run_benchmark(const ExperimentConfig& cfg, const BenchmarkOptions& opt = {}) {
    cfg.validate();
    std::vector<std::pair<Index, int>> jobs;
    for (const auto& g : cfg.groups) {
        for (int r = 0; r < g.runs; ++r) jobs.emplace_back(g.p, r);
    }
    std::vector<RunResult> rows(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mu;
    unsigned nthreads = opt.threads ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
    nthreads = static_cast<unsigned>(std::min<std::size_t>(nthreads, jobs.size()));
    const auto worker = [&] {
        for (std::size_t k = next++; k < jobs.size(); k = next++) {
            rows[k] = benchmark_run(cfg, jobs[k].first, jobs[k].second);
            if (!opt.quiet) {
                const std::lock_guard lock(log_mu);
                const auto& r = rows[k];
                std::cerr << "p=" << r.p << " run=" << r.run << " " << r.status
                          << " fit_bkb=" << r.fit_bkb << " fit_nbls=" << r.fit_nbls
                          << " fit_nbkb=" << r.fit_nbkb << " (" << std::lround(r.wall_ms) << " ms)\n";
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 1; t < nthreads; ++t) pool.emplace_back(worker);
        worker();
    }

    ensure_dir(cfg.output_dir);
    write_table(join_path(cfg.output_dir, "results.csv"), results_table(rows));
    Table timing;
    timing.header = {"p", "run", "wall_ms"};
    for (const auto& r : rows) {
        timing.rows.push_back({std::to_string(r.p), std::to_string(r.run), format_double(r.wall_ms)});
    }
    write_table(join_path(cfg.output_dir, "timing.csv"), timing);

    const auto groups = summarize(rows);
    json summary;
    summary["seed"] = cfg.master_seed;
    summary["groups"] = json::array();
    Series s_bkb{"B-KB", {}, {}}, s_ls{"NB-LS", {}, {}}, s_kb{"NB-KB", {}, {}};
    for (const auto& g : groups) {
        summary["groups"].push_back({{"p", g.p},
                                     {"runs", g.runs},
                                     {"failed", g.failed},
                                     {"bkb", box_json(g.bkb)},
                                     {"nbls", box_json(g.nbls)},
                                     {"nbkb", box_json(g.nbkb)}});
        write_boxplot_svg(join_path(cfg.output_dir, "boxplot_p" + std::to_string(g.p) + ".svg"),
                          "FIT, p = " + std::to_string(g.p),
                          {{"B-KB", g.bkb}, {"NB-LS", g.nbls}, {"NB-KB", g.nbkb}});
        const auto pd = static_cast<double>(g.p);
        s_bkb.x.push_back(pd), s_bkb.y.push_back(g.bkb.median);
        s_ls.x.push_back(pd), s_ls.y.push_back(g.nbls.median);
        s_kb.x.push_back(pd), s_kb.y.push_back(g.nbkb.median);
    }
    write_json(join_path(cfg.output_dir, "summary.json"), summary);
    write_line_chart_svg(join_path(cfg.output_dir, "median_vs_p.svg"), "Median FIT vs p", "p",
                         {s_bkb, s_ls, s_kb});
    return rows;
}

// ---------------------------------------------------------------- inspect

struct OrderingChecks {
    bool nbkb_ge_bkb_all = true;    // NB-KB median >= B-KB median in every group
    std::vector<std::pair<Index, bool>> bkb_ge_nbls;  // per group
    bool bkb_degrades = false;      // B-KB median at largest p < at smallest p
};

inline OrderingChecks ordering_checks(const std::vector<GroupSummary>& groups) {
    OrderingChecks c;
    for (const auto& g : groups) {
        c.nbkb_ge_bkb_all = c.nbkb_ge_bkb_all && g.nbkb.median >= g.bkb.median;
        c.bkb_ge_nbls.emplace_back(g.p, g.bkb.median >= g.nbls.median);
    }
    c.bkb_degrades = groups.size() >= 2 && groups.back().bkb.median < groups.front().bkb.median;
    return c;
}

inline std::string inspect_report(const std::vector<RunResult>& rows) {
    const auto groups = summarize(rows);
    std::ostringstream s;
    s << std::fixed << std::setprecision(4);
    s << "   p  runs  fail |  B-KB med [q1, q3]        | NB-LS med [q1, q3]        | NB-KB med [q1, q3]\n";
    for (const auto& g : groups) {
        s << std::setw(4) << g.p << std::setw(6) << g.runs << std::setw(6) << g.failed;
        for (const BoxSummary* b : {&g.bkb, &g.nbls, &g.nbkb}) {
            s << " | " << std::setw(7) << b->median << " [" << std::setw(7) << b->q1 << ", "
              << std::setw(7) << b->q3 << "]";
        }
        s << '\n';
    }
    const auto c = ordering_checks(groups);
    s << "NB-KB >= B-KB (median, every group): " << (c.nbkb_ge_bkb_all ? "yes" : "no") << '\n';
    for (const auto& [p, ok] : c.bkb_ge_nbls) {
        s << "B-KB >= NB-LS (median) at p=" << p << ": " << (ok ? "yes" : "no") << '\n';
    }
    if (groups.size() >= 2) {
        s << "B-KB median lower at p=" << groups.back().p << " than at p=" << groups.front().p << ": "
          << (c.bkb_degrades ? "yes" : "no") << '\n';
    }
    return s.str();
}

}  // namespace bsi::io
