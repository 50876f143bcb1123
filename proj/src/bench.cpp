#include "labsr/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include "labsr/rng.hpp"
#include "labsr/stats.hpp"

namespace labsr {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string record_row(const BenchRecord& r) {
    return r.function + "," + std::to_string(r.n) + "," + fmt(r.rsnr) + "," +
           std::to_string(r.replicate) + "," + fmt(r.mse) + "," + fmt(r.log_mse) + "," +
           fmt(r.sigma_hat) + "," + fmt(r.mean_J_total) + "," + fmt(r.wall_seconds);
}

constexpr const char* kResultsHeader =
    "function,n,rsnr,replicate,mse,log_mse,sigma_hat,mean_J_total,wall_seconds";

} // namespace

// ~~~~ configuration ~~~~

void ExperimentConfig::validate() const {
    if (functions.empty()) throw std::invalid_argument("experiment: no test functions");
    if (ns.empty()) throw std::invalid_argument("experiment: no sample sizes");
    for (long n : ns)
        if (n < 2) throw std::invalid_argument("experiment: sample sizes must be >= 2");
    if (rsnrs.empty()) throw std::invalid_argument("experiment: no rsnr values");
    for (double r : rsnrs)
        if (!(r > 0.0)) throw std::invalid_argument("experiment: rsnr values must be positive");
    if (replicates < 1) throw std::invalid_argument("experiment: replicates must be >= 1");
    if (workers < 1) throw std::invalid_argument("experiment: workers must be >= 1");
    if (output_dir.empty()) throw std::invalid_argument("experiment: output_dir is empty");
    hyper.validate();
    chain.validate();
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    static const std::set<std::string> known{"functions", "ns",         "rsnrs", "replicates",
                                             "hyper",     "chain",      "seed",  "output_dir",
                                             "workers"};
    for (const auto& item : j.items())
        if (!known.count(item.key()))
            throw std::invalid_argument("experiment: unknown key '" + item.key() + "'");

    ExperimentConfig cfg;
    if (j.contains("functions")) {
        cfg.functions.clear();
        for (const auto& name : j.at("functions"))
            cfg.functions.push_back(test_function_from_name(name.get<std::string>()));
    }
    if (j.contains("ns")) cfg.ns = j.at("ns").get<std::vector<long>>();
    if (j.contains("rsnrs")) cfg.rsnrs = j.at("rsnrs").get<std::vector<double>>();
    if (j.contains("replicates")) cfg.replicates = j.at("replicates").get<int>();
    if (j.contains("hyper")) cfg.hyper = HyperParams::from_json(j.at("hyper"));
    if (j.contains("chain")) cfg.chain = ChainConfig::from_json(j.at("chain"));
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("workers")) cfg.workers = j.at("workers").get<int>();
    cfg.validate();
    return cfg;
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json names = nlohmann::json::array();
    for (TestFunctionId id : functions) names.push_back(test_function_name(id));
    return {{"functions", names},   {"ns", ns},
            {"rsnrs", rsnrs},       {"replicates", replicates},
            {"hyper", hyper.to_json()}, {"chain", chain.to_json()},
            {"seed", seed},         {"output_dir", output_dir},
            {"workers", workers}};
}

// ~~~~ cells ~~~~

std::uint64_t bench_subseed(std::uint64_t master, TestFunctionId function, long n, double rsnr,
                            int replicate, std::uint64_t stream) {
    return derive_seed(master, {static_cast<std::uint64_t>(function), static_cast<std::uint64_t>(n),
                                seed_token(rsnr), static_cast<std::uint64_t>(replicate), stream});
}

BenchRecord run_bench_cell(const ExperimentConfig& cfg, TestFunctionId function, long n,
                           double rsnr, int replicate) {
    BenchRecord rec;
    rec.function = test_function_name(function);
    rec.n = n;
    rec.rsnr = rsnr;
    rec.replicate = replicate;

    const auto t0 = std::chrono::steady_clock::now();
    try {
        const Dataset data = generate_dataset(function, n, rsnr,
                                              bench_subseed(cfg.seed, function, n, rsnr,
                                                            replicate, 0));
        HyperParams hp = cfg.hyper;
        hp.n = n; // the schedule follows the cell's sample size
        ChainConfig cc = cfg.chain;
        cc.seed = bench_subseed(cfg.seed, function, n, rsnr, replicate, 1);
        cc.trace_path.clear();

        const ChainOutput out = run_chain(data, hp, cc);
        rec.mse = mse(dataset_truth(data), out.fitted_mean);
        rec.log_mse = std::log(rec.mse);
        rec.sigma_hat = out.sigma_hat;
        rec.mean_J_total = out.mean_J_total;
    } catch (const std::exception& e) {
        rec.failed = true;
        rec.error = e.what();
        rec.mse = rec.log_mse = rec.sigma_hat = rec.mean_J_total = kNan;
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

std::vector<BenchRecord> run_benchmark(const ExperimentConfig& cfg) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);

    const std::size_t cells = cfg.functions.size() * cfg.ns.size() * cfg.rsnrs.size() *
                              static_cast<std::size_t>(cfg.replicates);
    std::vector<BenchRecord> records(cells);

    // Completion-order progress log; rewritten canonically by emit_results.
    std::ofstream incremental(fs::path(cfg.output_dir) / "results.csv");
    if (!incremental)
        throw std::runtime_error("cannot write to output directory " + cfg.output_dir);
    incremental << kResultsHeader << "\n";

    std::atomic<std::size_t> cursor{0};
    std::mutex sink;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= cells) return;
            // Decode the flat index back into (function, n, rsnr, replicate).
            const std::size_t rep = i % static_cast<std::size_t>(cfg.replicates);
            std::size_t rest = i / static_cast<std::size_t>(cfg.replicates);
            const std::size_t ri = rest % cfg.rsnrs.size();
            rest /= cfg.rsnrs.size();
            const std::size_t ni = rest % cfg.ns.size();
            const std::size_t fi = rest / cfg.ns.size();

            BenchRecord rec = run_bench_cell(cfg, cfg.functions[fi], cfg.ns[ni], cfg.rsnrs[ri],
                                             static_cast<int>(rep));
            std::lock_guard<std::mutex> lock(sink);
            incremental << record_row(rec) << "\n";
            incremental.flush();
            records[i] = std::move(rec);
        }
    };

    const std::size_t nthreads =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), cells);
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nthreads);
        for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    incremental.close();

    emit_results(records, cfg.output_dir);
    return records;
}

// ~~~~ aggregation ~~~~

std::pair<double, double> rate_fit(const std::vector<double>& ns,
                                   const std::vector<double>& median_mses) {
    if (ns.size() != median_mses.size())
        throw std::invalid_argument("rate_fit: length mismatch");
    std::set<double> distinct(ns.begin(), ns.end());
    if (distinct.size() < 3)
        throw std::invalid_argument("rate_fit: need at least three distinct sample sizes");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < ns.size(); ++i) {
        if (!(ns[i] > 0.0) || !(median_mses[i] > 0.0))
            throw std::invalid_argument("rate_fit: sample sizes and MSEs must be positive");
        lx.push_back(std::log(ns[i]));
        ly.push_back(std::log(median_mses[i]));
    }
    const double mx = mean(lx), my = mean(ly);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

namespace {

// Aggregation cell: one (function, n, rsnr) box of the sweep.
struct CellStats {
    std::string function;
    long n = 0;
    double rsnr = 0.0;
    std::vector<double> mses;     // non-failed replicates only
    std::vector<double> log_mses; // ditto
};

std::vector<CellStats> group_cells(const std::vector<BenchRecord>& records) {
    std::vector<CellStats> cells;
    for (const auto& r : records) {
        auto it = std::find_if(cells.begin(), cells.end(), [&](const CellStats& c) {
            return c.function == r.function && c.n == r.n && c.rsnr == r.rsnr;
        });
        if (it == cells.end()) {
            cells.push_back({r.function, r.n, r.rsnr, {}, {}});
            it = std::prev(cells.end());
        }
        if (!r.failed) {
            it->mses.push_back(r.mse);
            it->log_mses.push_back(r.log_mse);
        }
    }
    return cells;
}

} // namespace

void emit_results(const std::vector<BenchRecord>& records, const std::string& output_dir) {
    if (records.empty()) throw std::invalid_argument("emit_results: no records");
    namespace fs = std::filesystem;
    fs::create_directories(output_dir);

    {
        std::ofstream csv(fs::path(output_dir) / "results.csv");
        if (!csv) throw std::runtime_error("cannot write results.csv in " + output_dir);
        csv << kResultsHeader << "\n";
        for (const auto& r : records) csv << record_row(r) << "\n";
    }

    const std::vector<CellStats> cells = group_cells(records);
    {
        nlohmann::json out;
        out["cells"] = nlohmann::json::array();
        for (const auto& c : cells) {
            nlohmann::json jc{{"function", c.function},
                              {"n", c.n},
                              {"rsnr", c.rsnr},
                              {"count", c.log_mses.size()}};
            if (!c.log_mses.empty()) {
                const double q1 = quantile(c.log_mses, 0.25);
                const double q3 = quantile(c.log_mses, 0.75);
                jc["median_log_mse"] = median(c.log_mses);
                jc["q1_log_mse"] = q1;
                jc["q3_log_mse"] = q3;
                jc["iqr_log_mse"] = q3 - q1;
                jc["median_mse"] = median(c.mses);
            } else {
                jc["median_log_mse"] = nullptr;
                jc["q1_log_mse"] = nullptr;
                jc["q3_log_mse"] = nullptr;
                jc["iqr_log_mse"] = nullptr;
                jc["median_mse"] = nullptr;
            }
            out["cells"].push_back(std::move(jc));
        }
        std::ofstream js(fs::path(output_dir) / "summary.json");
        if (!js) throw std::runtime_error("cannot write summary.json in " + output_dir);
        js << out.dump(2) << "\n";
    }

    {
        std::ofstream csv(fs::path(output_dir) / "rates.csv");
        if (!csv) throw std::runtime_error("cannot write rates.csv in " + output_dir);
        csv << "function,rsnr,slope,intercept\n";
        // Walk (function, rsnr) pairs in first-appearance order and fit the
        // decay of the median MSE across however many sample sizes succeeded.
        std::vector<std::pair<std::string, double>> seen;
        for (const auto& c : cells) {
            const std::pair<std::string, double> key{c.function, c.rsnr};
            if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
            seen.push_back(key);
            std::vector<double> fit_ns, fit_mses;
            for (const auto& o : cells)
                if (o.function == c.function && o.rsnr == c.rsnr && !o.mses.empty()) {
                    const double med = median(o.mses);
                    if (med > 0.0) {
                        fit_ns.push_back(static_cast<double>(o.n));
                        fit_mses.push_back(med);
                    }
                }
            std::set<double> distinct(fit_ns.begin(), fit_ns.end());
            if (distinct.size() < 3) continue;
            const auto [slope, intercept] = rate_fit(fit_ns, fit_mses);
            csv << c.function << "," << fmt(c.rsnr) << "," << fmt(slope) << ","
                << fmt(intercept) << "\n";
        }
    }
}

double binned_baseline_mse(const Dataset& data, std::size_t bins) {
    if (bins < 1) throw std::invalid_argument("baseline: need at least one bin");
    if (data.n() == 0) throw std::invalid_argument("baseline: empty dataset");

    std::vector<double> sum(bins, 0.0);
    std::vector<long> count(bins, 0);
    auto bin_of = [&](double x) {
        const long b = static_cast<long>(std::floor(x * static_cast<double>(bins)));
        return static_cast<std::size_t>(std::clamp<long>(b, 0, static_cast<long>(bins) - 1));
    };
    for (std::size_t i = 0; i < data.n(); ++i) {
        sum[bin_of(data.xs[i])] += data.ys[i];
        ++count[bin_of(data.xs[i])];
    }
    const double global = mean(data.ys);
    std::vector<double> fit(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) {
        const std::size_t b = bin_of(data.xs[i]);
        fit[i] = count[b] > 0 ? sum[b] / static_cast<double>(count[b]) : global;
    }
    return mse(dataset_truth(data), fit);
}

} // namespace labsr
