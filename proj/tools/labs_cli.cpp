// Command-line harness around the labs library: simulate benchmark datasets,
// fit single datasets, run full experiment sweeps, and emit smoothness
// diagnostics. Exit codes: 0 success, 2 configuration error, 3 sweep finished
// with failed cells.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "labsr/bench.hpp"
#include "labsr/besov.hpp"
#include "labsr/model.hpp"
#include "labsr/sampler.hpp"
#include "labsr/testbed.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file " + path);
    json j;
    in >> j;
    return j;
}

// Parse an integrability/summability index that may be the word "inf".
double parse_index(const std::string& text) {
    if (text == "inf" || text == "Inf" || text == "INF")
        return std::numeric_limits<double>::infinity();
    return std::stod(text);
}

void print_warnings(const labsr::HyperParams& hp) {
    for (const std::string& w : hp.validate()) std::cerr << "warning: " << w << "\n";
}

// ~~~~ simulate ~~~~

struct SimulateArgs {
    std::string config;
    std::string function = "blocks";
    long n = 128;
    double rsnr = 10.0;
    std::uint64_t seed = 1;
    std::string mode = "truth";
    std::string out = "dataset.csv";
};

int run_simulate(const SimulateArgs& a) {
    json cfg = load_config(a.config);
    static const std::set<std::string> known{"function", "n", "rsnr", "seed", "mode", "out"};
    for (const auto& item : cfg.items())
        if (!known.count(item.key()))
            throw std::invalid_argument("simulate: unknown config key '" + item.key() + "'");

    const std::string fname = cfg.value("function", a.function);
    const long n = cfg.value("n", a.n);
    const double rsnr = cfg.value("rsnr", a.rsnr);
    const std::uint64_t seed = cfg.value("seed", a.seed);
    const std::string mode = cfg.value("mode", a.mode);
    const std::string out = cfg.value("out", a.out);

    labsr::StandardizeMode sm;
    if (mode == "truth")
        sm = labsr::StandardizeMode::Truth;
    else if (mode == "empirical")
        sm = labsr::StandardizeMode::Empirical;
    else
        throw std::invalid_argument("simulate: mode must be 'truth' or 'empirical'");

    const labsr::Dataset data =
        labsr::generate_dataset(labsr::test_function_from_name(fname), n, rsnr, seed, sm);
    labsr::write_dataset_csv(data, out);
    std::cout << "wrote " << out << " (" << data.n() << " points, sigma0 = " << fmt(data.sigma0)
              << ")\n";
    return kExitOk;
}

// ~~~~ fit ~~~~

struct FitArgs {
    std::string data;
    std::string config;
    std::string out_prefix = "fit";
    std::string trace;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int run_fit(const FitArgs& a) {
    json cfg = load_config(a.config);
    static const std::set<std::string> known{"hyper", "chain"};
    for (const auto& item : cfg.items())
        if (!known.count(item.key()))
            throw std::invalid_argument("fit: unknown config key '" + item.key() + "'");

    labsr::HyperParams hp = labsr::HyperParams::from_json(cfg.value("hyper", json::object()));
    labsr::ChainConfig cc = labsr::ChainConfig::from_json(cfg.value("chain", json::object()));
    if (a.seed_set) cc.seed = a.seed;
    if (!a.trace.empty()) cc.trace_path = a.trace;
    print_warnings(hp);

    if (!std::ifstream(a.data).good())
        throw std::invalid_argument("cannot open dataset file " + a.data);
    const labsr::Dataset data = labsr::read_dataset_csv(a.data);
    const labsr::ChainOutput out = labsr::run_chain(data, hp, cc);

    const std::string curve_path = a.out_prefix + "_curve.csv";
    {
        std::ofstream curve(curve_path);
        if (!curve) throw std::runtime_error("cannot write " + curve_path);
        curve << "x,mean,q05,q95\n";
        for (std::size_t i = 0; i < out.grid.size(); ++i)
            curve << fmt(out.grid[i]) << "," << fmt(out.curve_mean[i]) << ","
                  << fmt(out.curve_q05[i]) << "," << fmt(out.curve_q95[i]) << "\n";
    }

    json summary{{"n", data.n()},
                 {"draws", out.draws.size()},
                 {"sigma_hat", out.sigma_hat},
                 {"mean_J_total", out.mean_J_total},
                 {"joint_updates", out.joint_updates},
                 {"joint_skipped", out.joint_skipped}};
    summary["degrees"] = out.degrees;
    for (const auto& [name, stats] : out.moves) {
        summary["moves"][name] = {{"proposed", stats.proposed},
                                  {"accepted", stats.accepted},
                                  {"rate", stats.rate()}};
    }
    if (!data.function.empty()) {
        summary["function"] = data.function;
        summary["mse"] = labsr::mse(labsr::dataset_truth(data), out.fitted_mean);
    }
    const std::string summary_path = a.out_prefix + "_summary.json";
    std::ofstream js(summary_path);
    if (!js) throw std::runtime_error("cannot write " + summary_path);
    js << summary.dump(2) << "\n";

    std::cout << "wrote " << summary_path << " and " << curve_path << "\n";
    return kExitOk;
}

// ~~~~ benchmark ~~~~

struct BenchArgs {
    std::string config;
    std::string output_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
};

int run_bench(const BenchArgs& a) {
    labsr::ExperimentConfig cfg = labsr::ExperimentConfig::from_json(load_config(a.config));
    if (!a.output_dir.empty()) cfg.output_dir = a.output_dir;
    if (a.seed_set) cfg.seed = a.seed;
    if (a.workers > 0) cfg.workers = a.workers;
    print_warnings(cfg.hyper);

    const std::vector<labsr::BenchRecord> records = labsr::run_benchmark(cfg);
    long failed = 0;
    for (const auto& r : records)
        if (r.failed) ++failed;
    std::cout << records.size() << " cells -> " << cfg.output_dir << " (" << failed
              << " failed)\n";
    if (failed > 0) {
        for (const auto& r : records)
            if (r.failed)
                std::cerr << "failed: " << r.function << " n=" << r.n << " rsnr=" << r.rsnr
                          << " rep=" << r.replicate << ": " << r.error << "\n";
        return kExitPartial;
    }
    return kExitOk;
}

// ~~~~ besov-check ~~~~

struct BesovArgs {
    std::string config;
    std::vector<std::string> functions;
    double s = 1.0;
    std::string p = "1";
    std::string q = "inf";
    int grid_size = 8192;
    int t_count = 40;
    std::string out = "besov.csv";
};

int run_besov(const BesovArgs& a) {
    json cfg = load_config(a.config);
    static const std::set<std::string> known{"functions", "s",       "p", "q",
                                             "grid_size", "t_count", "out"};
    for (const auto& item : cfg.items())
        if (!known.count(item.key()))
            throw std::invalid_argument("besov-check: unknown config key '" + item.key() + "'");

    std::vector<std::string> fnames = a.functions;
    if (cfg.contains("functions")) fnames = cfg.at("functions").get<std::vector<std::string>>();
    if (fnames.empty()) fnames = {"blocks", "bumps", "heavisine", "doppler"};
    const double s = cfg.value("s", a.s);
    const double p = parse_index(cfg.contains("p") ? cfg.at("p").get<std::string>() : a.p);
    const double q = parse_index(cfg.contains("q") ? cfg.at("q").get<std::string>() : a.q);
    const int grid_size = cfg.value("grid_size", a.grid_size);
    const int t_count = cfg.value("t_count", a.t_count);
    const std::string out = cfg.value("out", a.out);

    if (grid_size < 8) throw std::invalid_argument("besov-check: grid_size must be >= 8");
    if (t_count < 2) throw std::invalid_argument("besov-check: t_count must be >= 2");

    std::ofstream csv(out);
    if (!csv) throw std::runtime_error("cannot write " + out);
    csv << "function,t,w,t_pow_neg_s_w\n";

    const int r = static_cast<int>(std::floor(s)) + 1;
    const auto ts = labsr::log_spaced_t_grid(4.0 / static_cast<double>(grid_size), 1.0,
                                             static_cast<std::size_t>(t_count));
    for (const std::string& fname : fnames) {
        const labsr::TestFunctionId id = labsr::test_function_from_name(fname);
        const labsr::StandardizedTruth st = labsr::standardized_truth(id);
        labsr::GridFunction g;
        g.values.resize(static_cast<std::size_t>(grid_size));
        for (int i = 0; i < grid_size; ++i)
            g.values[static_cast<std::size_t>(i)] =
                st.f(static_cast<double>(i) / static_cast<double>(grid_size - 1));
        for (double t : ts) {
            const double w = labsr::modulus_of_smoothness(g, r, p, t);
            csv << fname << "," << fmt(t) << "," << fmt(w) << "," << fmt(std::pow(t, -s) * w)
                << "\n";
        }
        const double estimate = labsr::besov_seminorm_estimate(g, s, p, q, ts);
        std::cout << fname << ": seminorm estimate " << fmt(estimate) << " (s=" << fmt(s)
                  << ", p=" << (std::isinf(p) ? "inf" : fmt(p))
                  << ", q=" << (std::isinf(q) ? "inf" : fmt(q)) << ", grid " << grid_size
                  << ")\n";
    }
    std::cout << "wrote " << out << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive B-spline regression harness"};
    app.require_subcommand(1);

    SimulateArgs sim;
    CLI::App* simulate = app.add_subcommand("simulate", "Generate a benchmark dataset CSV");
    simulate->add_option("--config", sim.config,
                         "JSON config (keys: function, n, rsnr, seed, mode, out); flags below "
                         "are defaults the config may override");
    simulate->add_option("--function", sim.function,
                         "Test function: blocks, bumps, heavisine, doppler");
    simulate->add_option("--n", sim.n, "Number of observations");
    simulate->add_option("--rsnr", sim.rsnr, "Root signal-to-noise ratio (sigma0 = 1/rsnr)");
    simulate->add_option("--seed", sim.seed, "Dataset seed");
    simulate->add_option("--mode", sim.mode, "Standardization: truth or empirical");
    simulate->add_option("--out", sim.out, "Output CSV path (JSON sidecar written next to it)");

    FitArgs fit;
    CLI::App* fit_cmd =
        app.add_subcommand("fit", "Fit one dataset; writes summary JSON and curve CSV");
    fit_cmd->add_option("--data", fit.data, "Dataset CSV (as written by simulate)")->required();
    fit_cmd->add_option("--config", fit.config,
                        "JSON config with optional 'hyper' and 'chain' blocks");
    fit_cmd->add_option("--out-prefix", fit.out_prefix,
                        "Prefix for <prefix>_summary.json and <prefix>_curve.csv");
    fit_cmd->add_option("--trace", fit.trace, "Write a per-iteration trace CSV to this path");
    fit_cmd->add_option("--seed", fit.seed, "Chain seed (overrides the config)")
        ->each([&fit](const std::string&) { fit.seed_set = true; });

    BenchArgs bench;
    CLI::App* bench_cmd = app.add_subcommand(
        "benchmark", "Run the full (function x n x rsnr x replicate) sweep");
    bench_cmd->add_option("--config", bench.config,
                          "Experiment JSON (keys: functions, ns, rsnrs, replicates, hyper, "
                          "chain, seed, output_dir, workers)");
    bench_cmd->add_option("--output-dir", bench.output_dir, "Overrides the config output_dir");
    bench_cmd->add_option("--seed", bench.seed, "Overrides the config master seed")
        ->each([&bench](const std::string&) { bench.seed_set = true; });
    bench_cmd->add_option("--workers", bench.workers, "Overrides the config worker count");

    BesovArgs besov;
    CLI::App* besov_cmd = app.add_subcommand(
        "besov-check", "Smoothness diagnostics CSV (t, modulus, t^-s * modulus)");
    besov_cmd->add_option("--config", besov.config,
                          "JSON config (keys: functions, s, p, q, grid_size, t_count, out)");
    besov_cmd->add_option("--function", besov.functions,
                          "Test function(s); default: all four");
    besov_cmd->add_option("--s", besov.s, "Smoothness index (difference order = floor(s)+1)");
    besov_cmd->add_option("--p", besov.p, "Integrability index, a number or 'inf'");
    besov_cmd->add_option("--q", besov.q, "Summability index, a number or 'inf'");
    besov_cmd->add_option("--grid-size", besov.grid_size, "Sampling grid resolution");
    besov_cmd->add_option("--t-count", besov.t_count, "Number of scales in (4/grid, 1]");
    besov_cmd->add_option("--out", besov.out, "Output CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (simulate->parsed()) return run_simulate(sim);
        if (fit_cmd->parsed()) return run_fit(fit);
        if (bench_cmd->parsed()) return run_bench(bench);
        return run_besov(besov);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
