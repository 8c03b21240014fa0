#pragma once

#include <cmath>
#include <vector>

namespace qdetect {

template <class PathFn>
MCEstimate monte_carlo(const MCConfig& mc, PathFn&& fn) {
    if (mc.n_paths < 2) throw std::invalid_argument("MCConfig: n_paths must be >= 2");
    MCEstimate est;
    double mean = 0.0, m2 = 0.0;
    std::size_t count = 0;
    std::vector<PathResult> batch(mc.n_paths);
    for (std::size_t b = 0; b < std::max<std::size_t>(1, mc.max_batches); ++b) {
        const std::uint64_t base = static_cast<std::uint64_t>(b) * mc.n_paths;
        parallel_for(mc.n_paths, mc.workers, [&](std::size_t i) {
            Rng rng = Rng::for_path(mc.master_seed, base + i);
            batch[i] = fn(rng);
        });
        for (const auto& r : batch) {
            ++count;
            const double d = r.value - mean;
            mean += d / static_cast<double>(count);
            m2 += d * (r.value - mean);
            if (r.truncated) ++est.truncated;
        }
        est.mean = mean;
        est.n_paths = count;
        est.stderr_ = std::sqrt(m2 / static_cast<double>(count - 1) / static_cast<double>(count));
        if (!mc.target_rel_stderr) break;
        if (est.stderr_ <= *mc.target_rel_stderr * std::fabs(est.mean)) break;
    }
    est.warning = static_cast<double>(est.truncated) > 1e-3 * static_cast<double>(est.n_paths);
    return est;
}

}  // namespace qdetect
