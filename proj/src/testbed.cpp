#include "labsr/testbed.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "labsr/rng.hpp"
#include "labsr/stats.hpp"

namespace labsr {

namespace {

inline double sgn(double t) { return t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0); }

// Jump locations and sizes shared by Blocks and (with all-positive sizes)
// Bumps.
constexpr std::array<double, 11> kLocations{0.1, 0.13, 0.15, 0.23, 0.25, 0.40,
                                            0.44, 0.65, 0.76, 0.78, 0.81};
constexpr std::array<double, 11> kBlockSizes{4.0, -5.0, 3.0, -4.0, 5.0, -4.2,
                                             2.1, 4.3, -3.1, 2.1, -4.2};
constexpr std::array<double, 11> kBumpSizes{4.0, 5.0, 3.0, 4.0, 5.0, 4.2,
                                            2.1, 4.3, 3.1, 2.1, 4.2};
constexpr std::array<double, 11> kBumpWidths{0.005, 0.005, 0.006, 0.01, 0.01, 0.03,
                                             0.01, 0.01, 0.005, 0.008, 0.005};

double blocks(double x) {
    double acc = 0.0;
    for (std::size_t j = 0; j < kLocations.size(); ++j)
        acc += kBlockSizes[j] * (1.0 + sgn(x - kLocations[j])) / 2.0;
    return acc;
}

double bumps(double x) {
    double acc = 0.0;
    for (std::size_t j = 0; j < kLocations.size(); ++j) {
        const double t = (x - kLocations[j]) / kBumpWidths[j];
        acc += kBumpSizes[j] * std::pow(1.0 + std::abs(t), -4.0);
    }
    return acc;
}

double heavisine(double x) {
    return 4.0 * std::sin(4.0 * std::numbers::pi * x) - sgn(x - 0.3) - sgn(0.72 - x);
}

double doppler(double x) {
    return std::sqrt(x * (1.0 - x)) * std::sin(2.1 * std::numbers::pi / (x + 0.05));
}

std::pair<double, double> grid_center_scale(TestFunctionId id, int grid_size) {
    if (grid_size < 1000)
        throw std::invalid_argument("standardized_truth: grid_size must be >= 1000");
    std::vector<double> vals(static_cast<std::size_t>(grid_size));
    for (int j = 0; j < grid_size; ++j)
        vals[static_cast<std::size_t>(j)] =
            eval_test_function(id, (j + 0.5) / static_cast<double>(grid_size));
    const double c = mean(vals);
    const double s = std::sqrt(variance(vals));
    if (!(s > 1e-12))
        throw std::invalid_argument("standardized_truth: signal is degenerate on the grid");
    return {c, s};
}

} // namespace

TestFunctionId test_function_from_name(const std::string& name) {
    if (name == "blocks") return TestFunctionId::Blocks;
    if (name == "bumps") return TestFunctionId::Bumps;
    if (name == "heavisine") return TestFunctionId::HeaviSine;
    if (name == "doppler") return TestFunctionId::Doppler;
    throw std::invalid_argument("unknown test function '" + name +
                                "' (expected blocks|bumps|heavisine|doppler)");
}

std::string test_function_name(TestFunctionId id) {
    switch (id) {
        case TestFunctionId::Blocks: return "blocks";
        case TestFunctionId::Bumps: return "bumps";
        case TestFunctionId::HeaviSine: return "heavisine";
        case TestFunctionId::Doppler: return "doppler";
    }
    throw std::invalid_argument("unknown test function id");
}

double eval_test_function(TestFunctionId id, double x) {
    switch (id) {
        case TestFunctionId::Blocks: return blocks(x);
        case TestFunctionId::Bumps: return bumps(x);
        case TestFunctionId::HeaviSine: return heavisine(x);
        case TestFunctionId::Doppler: return doppler(x);
    }
    throw std::invalid_argument("unknown test function id");
}

StandardizedTruth standardized_truth(TestFunctionId id, int grid_size) {
    const auto [c, s] = grid_center_scale(id, grid_size);
    StandardizedTruth st;
    st.center = c;
    st.scale = s;
    st.f = [id, c, s](double x) { return (eval_test_function(id, x) - c) / s; };
    return st;
}

Dataset generate_dataset(TestFunctionId id, long n, double rsnr, std::uint64_t seed,
                         StandardizeMode mode) {
    if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
    if (!(rsnr > 0.0)) throw std::invalid_argument("generate_dataset: rsnr must be positive");

    SplitMix64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Dataset data;
    data.function = test_function_name(id);
    data.rsnr = rsnr;
    data.seed = seed;
    data.xs.resize(static_cast<std::size_t>(n));
    data.ys.resize(static_cast<std::size_t>(n));
    for (auto& x : data.xs) x = u01(rng);

    if (mode == StandardizeMode::Truth) {
        // Unit-spread truth makes the noise sd exactly 1/rsnr.
        const StandardizedTruth st = standardized_truth(id);
        data.center = st.center;
        data.scale = st.scale;
        data.sigma0 = 1.0 / rsnr;
        data.standardization = "truth";
        for (std::size_t i = 0; i < data.xs.size(); ++i)
            data.ys[i] = st.f(data.xs[i]) + data.sigma0 * gauss(rng);
    } else {
        // Raw signal plus noise, then the realized observations themselves
        // are centered and scaled.
        const auto [c_raw, s_raw] = grid_center_scale(id, 8192);
        (void)c_raw;
        const double sigma_raw = s_raw / rsnr;
        for (std::size_t i = 0; i < data.xs.size(); ++i)
            data.ys[i] = eval_test_function(id, data.xs[i]) + sigma_raw * gauss(rng);
        const double c = mean(data.ys);
        const double s = std::sqrt(variance(data.ys));
        if (!(s > 1e-12))
            throw std::invalid_argument("generate_dataset: realized sample is degenerate");
        for (auto& y : data.ys) y = (y - c) / s;
        data.center = c;
        data.scale = s;
        data.sigma0 = sigma_raw / s;
        data.standardization = "empirical";
    }
    return data;
}

std::vector<double> dataset_truth(const Dataset& data) {
    if (data.function.empty())
        throw std::invalid_argument("dataset_truth: dataset has no recorded generating function");
    const TestFunctionId id = test_function_from_name(data.function);
    std::vector<double> truth(data.n());
    for (std::size_t i = 0; i < data.n(); ++i)
        truth[i] = (eval_test_function(id, data.xs[i]) - data.center) / data.scale;
    return truth;
}

double mse(std::span<const double> truth, std::span<const double> fitted) {
    if (truth.size() != fitted.size())
        throw std::invalid_argument("mse: sequences differ in length");
    if (truth.empty()) throw std::invalid_argument("mse: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = truth[i] - fitted[i];
        acc += d * d;
    }
    return acc / static_cast<double>(truth.size());
}

namespace {

std::string sidecar_path(const std::string& csv_path) {
    return std::filesystem::path(csv_path).replace_extension(".json").string();
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void write_dataset_csv(const Dataset& data, const std::string& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot open '" + csv_path + "' for writing");
    out << "x,y\n";
    for (std::size_t i = 0; i < data.n(); ++i)
        out << format_double(data.xs[i]) << ',' << format_double(data.ys[i]) << '\n';
    if (!out) throw std::runtime_error("failed while writing '" + csv_path + "'");

    nlohmann::json j{{"id", data.function},
                     {"n", data.n()},
                     {"rsnr", data.rsnr},
                     {"sigma0", data.sigma0},
                     {"seed", data.seed},
                     {"standardization",
                      {{"mode", data.standardization},
                       {"center", data.center},
                       {"scale", data.scale}}}};
    std::ofstream side(sidecar_path(csv_path));
    if (!side) throw std::runtime_error("cannot open dataset sidecar for writing");
    side << j.dump(2) << '\n';
}

Dataset read_dataset_csv(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("cannot open '" + csv_path + "'");
    Dataset data;
    std::string line;
    if (!std::getline(in, line) || line.rfind("x,y", 0) != 0)
        throw std::runtime_error("dataset CSV '" + csv_path + "' lacks the x,y header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("malformed dataset row: " + line);
        data.xs.push_back(std::stod(line.substr(0, comma)));
        data.ys.push_back(std::stod(line.substr(comma + 1)));
    }

    const std::string side = sidecar_path(csv_path);
    std::ifstream sj(side);
    if (sj) {
        nlohmann::json j;
        sj >> j;
        data.function = j.value("id", std::string{});
        data.rsnr = j.value("rsnr", 0.0);
        data.sigma0 = j.value("sigma0", 0.0);
        data.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("standardization")) {
            const auto& s = j.at("standardization");
            data.standardization = s.value("mode", std::string{});
            data.center = s.value("center", 0.0);
            data.scale = s.value("scale", 1.0);
        }
    }
    return data;
}

} // namespace labsr
