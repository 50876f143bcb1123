#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace labsr {

/** A regression sample on [0, 1] plus the bookkeeping needed to reconstruct
 *  the generating truth.
 *
 *  `center` and `scale` map the raw generating function onto the analysis
 *  scale: truth(x) = (f_raw(x) - center) / scale.  For synthetic data the
 *  noise sd `sigma0` is recorded on that same analysis scale, so downstream
 *  error metrics never have to re-derive it.
 */
struct Dataset {
    std::vector<double> xs;
    std::vector<double> ys;
    double sigma0 = 0.0;
    double center = 0.0;
    double scale = 1.0;

    // Provenance (empty/zero for externally supplied data).
    std::string function;        // generating test-function name
    double rsnr = 0.0;           // root signal-to-noise ratio requested
    std::uint64_t seed = 0;      // sub-seed the draw came from
    std::string standardization; // "truth", "empirical", or "none"

    std::size_t n() const { return xs.size(); }
};

} // namespace labsr
