#pragma once

// Grid scan + golden-section scalar optimizers and the nested inf-sup search.

#include <cstddef>
#include <functional>
#include <variant>
#include <vector>

namespace gaussq {

struct FixedUpper {
    double hi;
};

/// Upper end doubles from `initial` until the running minimum stops improving
/// for three doublings.
struct ExpandUpper {
    double initial;
};

using UpperPolicy = std::variant<FixedUpper, ExpandUpper>;

inline constexpr std::size_t kDefaultGrid = 256;
inline constexpr double kDefaultRelTol = 1e-10;

struct ScalarOptResult {
    double arg = 0.0;
    double value = 0.0;
    std::size_t evaluations = 0;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> ties;  // other grid minima within tolerance, not adjacent to arg
};

/// NaN values are treated as +inf.  Ties resolve to the smallest argument.
ScalarOptResult minimize_scalar(const std::function<double(double)>& f, double lo, UpperPolicy hi,
                                double rel_tol = kDefaultRelTol, std::size_t grid = kDefaultGrid);

ScalarOptResult maximize_scalar(const std::function<double(double)>& f, double lo, double hi,
                                double rel_tol = kDefaultRelTol, std::size_t grid = kDefaultGrid);

struct SaddleResult {
    double t_star = 0.0;
    double s_star = 0.0;
    double value = 0.0;
    std::size_t evaluations = 0;
    std::vector<double> t_ties;
    std::vector<double> s_ties;
};

struct SaddleOptions {
    double rel_tol = kDefaultRelTol;
    std::size_t outer_grid = kDefaultGrid;
    std::size_t inner_grid = kDefaultGrid;
};

/// inf over t >= t_lo of sup over s in [0, t] of upsilon(s, t).  The objective
/// is responsible for handling the open endpoints of the inner interval.
SaddleResult saddle_search(const std::function<double(double, double)>& upsilon, double t_lo, UpperPolicy hi,
                           const SaddleOptions& opts = {});

}  // namespace gaussq
