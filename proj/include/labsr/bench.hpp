#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "labsr/model.hpp"
#include "labsr/sampler.hpp"
#include "labsr/testbed.hpp"

namespace labsr {

// Full experiment sweep: every (function, n, rsnr, replicate) combination
// becomes one simulated dataset and one chain.
struct ExperimentConfig {
    std::vector<TestFunctionId> functions{TestFunctionId::Blocks, TestFunctionId::Bumps,
                                          TestFunctionId::HeaviSine, TestFunctionId::Doppler};
    std::vector<long> ns{128, 512, 2048};
    std::vector<double> rsnrs{3.0, 5.0, 10.0};
    int replicates = 20;
    HyperParams hyper;  // schedule resolved per n; hyper.n is overridden cell by cell
    ChainConfig chain;  // chain.seed and trace_path are overridden cell by cell
    std::string output_dir = "bench_out";
    std::uint64_t seed = 1;
    int workers = 1;

    // Throws std::invalid_argument on structural problems.
    void validate() const;

    // Strict parser: unknown keys are configuration errors.
    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

// One completed (or failed) cell of the sweep. Failed cells carry NaN
// metrics plus the error text and are excluded from summaries and rate fits.
struct BenchRecord {
    std::string function;
    long n = 0;
    double rsnr = 0.0;
    int replicate = 0;
    double mse = 0.0;
    double log_mse = 0.0;
    double sigma_hat = 0.0;
    double mean_J_total = 0.0;
    double wall_seconds = 0.0;
    bool failed = false;
    std::string error;
};

// Deterministic per-cell seed stream. `stream` separates independent uses
// within one cell (0 = dataset noise, 1 = chain randomness); everything else
// identifies the cell, so adding configurations never disturbs existing ones.
std::uint64_t bench_subseed(std::uint64_t master, TestFunctionId function, long n, double rsnr,
                            int replicate, std::uint64_t stream);

// Run a single cell, converting any thrown error into a failed record.
BenchRecord run_bench_cell(const ExperimentConfig& cfg, TestFunctionId function, long n,
                           double rsnr, int replicate);

// Run the whole sweep with cfg.workers threads. Records are appended to
// <output_dir>/results.csv as they complete; on return the directory holds
// the canonical emit_results artifacts and the returned records are in
// configuration order (functions x ns x rsnrs x replicates).
std::vector<BenchRecord> run_benchmark(const ExperimentConfig& cfg);

// Ordinary least squares of log(median MSE) against log n; returns
// {slope, intercept}. Requires at least three distinct sample sizes and
// positive MSEs.
std::pair<double, double> rate_fit(const std::vector<double>& ns,
                                   const std::vector<double>& median_mses);

// Write results.csv (one row per record, in order), summary.json (per-cell
// log-MSE quartiles over the non-failed replicates), and rates.csv (per
// function x rsnr slope of log median MSE against log n, where at least
// three sample sizes are available). Re-emission of identical records is
// byte-identical.
void emit_results(const std::vector<BenchRecord>& records, const std::string& output_dir);

// Piecewise-constant regressogram baseline: predict each y by its bin's mean
// response and score against the true curve. A deliberately naive yardstick
// that any serious fit must beat.
double binned_baseline_mse(const Dataset& data, std::size_t bins = 16);

} // namespace labsr
