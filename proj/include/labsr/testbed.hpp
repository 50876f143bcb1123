#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "labsr/dataset.hpp"

namespace labsr {

/// The four classical wavelet-shrinkage benchmark signals.
enum class TestFunctionId { Blocks, Bumps, HeaviSine, Doppler };

TestFunctionId test_function_from_name(const std::string& name);
std::string test_function_name(TestFunctionId id);

/** Raw (unstandardized) benchmark signal value at x in [0, 1].
 *  The sign convention sgn(0) = 0 applies to the jump terms.
 */
double eval_test_function(TestFunctionId id, double x);

/** A generating truth rescaled to mean 0, sd 1 across a uniform evaluation
 *  grid, plus the (center, scale) pair that achieves it.
 */
struct StandardizedTruth {
    std::function<double(double)> f; // x -> (raw(x) - center) / scale
    double center = 0.0;
    double scale = 1.0;
};

/** Standardizes a benchmark signal over a midpoint grid of `grid_size` cells
 *  (grid_size >= 1000; the population sd over the grid is used).  Throws if
 *  the signal is degenerate (zero variance) on the grid.
 */
StandardizedTruth standardized_truth(TestFunctionId id, int grid_size = 8192);

/// Which side of the pipeline gets rescaled to unit spread.
enum class StandardizeMode {
    Truth,    // rescale the generating function; noise sd is exactly 1/rsnr
    Empirical // rescale the realized observations by their own mean/sd
};

/** Draws n design points uniformly on [0, 1] and responses truth + Gaussian
 *  noise calibrated so the root signal-to-noise ratio equals `rsnr`.
 *  Deterministic in `seed` via a counter-based stream, independent of any
 *  other generator in the process.  Throws on n < 1 or rsnr <= 0.
 */
Dataset generate_dataset(TestFunctionId id, long n, double rsnr, std::uint64_t seed,
                         StandardizeMode mode = StandardizeMode::Truth);

/** Truth values on the analysis scale at the dataset's own design points,
 *  reconstructed from the recorded function name and standardization.
 *  Throws if the dataset has no recorded generating function.
 */
std::vector<double> dataset_truth(const Dataset& data);

/** Mean squared error between two equal-length value sequences.
 *  Throws on length mismatch or empty input.
 */
double mse(std::span<const double> truth, std::span<const double> fitted);

/** Writes `data` as a two-column CSV (x,y) plus a JSON sidecar holding the
 *  generating metadata next to it (same path with extension .json).
 */
void write_dataset_csv(const Dataset& data, const std::string& csv_path);

/** Reads a dataset written by write_dataset_csv; the sidecar is optional
 *  (missing sidecar yields a dataset with empty provenance).
 */
Dataset read_dataset_csv(const std::string& csv_path);

} // namespace labsr
