#pragma once

// Independent checks on the analytic bounds: a dense-grid quadratic program
// over many simultaneous constraints, and a Monte Carlo simulator of the
// many-sources queue.

#include <cstddef>
#include <cstdint>
#include <variant>
#include <vector>

#include "gaussq/fifo.hpp"
#include "gaussq/priority.hpp"
#include "gaussq/tandem.hpp"

namespace gaussq {

struct GridOracleConfig {
    std::vector<double> t_grid;  // level-0 horizons; each level inserts midpoints
    std::size_t s_points = 16;   // level-0 inner constraints per horizon, doubled per level
    int levels = 5;
    double convergence = 0.005;  // relative change between successive levels
};

struct GridOracleResult {
    std::vector<double> level_values;
    std::vector<double> level_t_arg;
    std::vector<std::size_t> level_s_points;
    std::vector<std::size_t> level_t_points;
    double estimate = 0.0;
    bool converged = false;
};

/// Horizons spread over [t0, ...] around the FIFO horizon, including t0.
GridOracleConfig default_grid_config(const TandemSystem& sys);
GridOracleConfig default_grid_config(const PrioritySystem& sys);

/// Per-horizon value with the given inner constraint count (s = t j / S).
double grid_qp_value(const TandemSystem& sys, double t, std::size_t s_points);
double grid_qp_value(const PrioritySystem& sys, double t, std::size_t s_points);

GridOracleResult grid_qp_decay(const TandemSystem& sys, const GridOracleConfig& cfg);
GridOracleResult grid_qp_decay(const PrioritySystem& sys, const GridOracleConfig& cfg);

using McSystem = std::variant<FifoSystem, TandemSystem, PrioritySystem>;

struct McConfig {
    std::vector<int> n_values;
    double dt = 0.01;
    double horizon = 5.0;
    std::size_t samples = 100000;
    std::uint64_t seed = 1;
    unsigned workers = 0;  // 0: hardware concurrency
};

/// dt = t*/50 and horizon = max(4 t*, 20 t0) from the analytic optimizer.
McConfig default_mc_config(const McSystem& sys);

struct McEstimate {
    int n = 0;
    double p_hat = 0.0;
    double half_width = 0.0;  // 95% normal-approximation binomial
    std::size_t hits = 0;
    std::size_t samples = 0;
    double lindley_gap = 0.0;  // max |supremum form - recursion| over all samples
};

/// Overflow probability of the queue of interest (FIFO queue, second tandem
/// queue, low-priority queue) for n sources and buffer n b.
McEstimate mc_overflow(const McSystem& sys, int n, const McConfig& cfg);

struct McFit {
    double slope = 0.0;
    double std_error = 0.0;
    double intercept = 0.0;
    std::vector<McEstimate> points;
};

/// Weighted least squares slope of -log p_hat against n.
McFit mc_decay_fit(const McSystem& sys, const McConfig& cfg);

/// Mixes (seed, n, block) into a 64-bit stream seed.
std::uint64_t block_seed(std::uint64_t seed, std::uint64_t n, std::uint64_t block);

}  // namespace gaussq
