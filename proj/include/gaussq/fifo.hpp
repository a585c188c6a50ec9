#pragma once

#include <cstddef>
#include <vector>

#include "gaussq/path.hpp"
#include "gaussq/variance_models.hpp"

namespace gaussq {

struct FifoSystem {
    double b = 0.0;
    double c = 0.0;
    SourceModel source;
};

struct FifoResult {
    double J = 0.0;
    double t_F = 0.0;
    std::vector<double> ties;
    std::size_t evaluations = 0;
};

/// (b + c t)^2 / (2 v(t)) with c already centered.
double fifo_cost(const VarianceModel& model, double b, double c_centered, double t);

/// Throws InputError unless b > 0 and c > mean rate.
FifoResult fifo_decay(double b, double c, const SourceModel& source, double rel_tol = 1e-10);

/// One-constraint conditional path on [-t_F, 0], `grid` points.
SampledPath fifo_mpp(double b, double c, const SourceModel& source, const FifoResult& result, std::size_t grid);

}  // namespace gaussq
