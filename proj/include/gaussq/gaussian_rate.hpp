#pragma once

// Rate functions of finite-dimensional Gaussian vectors and conditional-mean
// paths.

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "gaussq/variance_models.hpp"

namespace gaussq {

/// min 1/2 (x - mean)' cov^{-1} (x - mean)  subject to  x >= thresholds.
struct QuadrantProblem {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    Eigen::VectorXd thresholds;
};

struct RateSolution {
    double value = 0.0;
    Eigen::VectorXd argmin;
    std::vector<int> active;      // ascending constraint indices met with equality
    Eigen::VectorXd multipliers;  // KKT multipliers, zero off the active set
    bool regularized = false;     // jitter was added to an active block
};

/// Throws InputError on shape mismatch, asymmetry beyond 1e-12 or (for m <= 32)
/// an eigenvalue below -1e-10 * trace.
void check_problem(const QuadrantProblem& p);

/// Exhaustive active-set enumeration for m <= 4, active-set NNLS on the dual
/// otherwise.
RateSolution quadrant_rate(const QuadrantProblem& p);

/// All 2^m candidate sets, smaller sets first, lexicographic within a size.
/// Usable up to m = 20; intended as a reference.
RateSolution quadrant_rate_enumerate(const QuadrantProblem& p);

/// Lawson-Hanson style active set on max l'd - 1/2 l' cov l, l >= 0.
RateSolution quadrant_rate_active_set(const QuadrantProblem& p);

/// 1/2 x' cov^{-1} x for a nonsingular 2x2 block.
double bivariate_rate(const Eigen::Matrix2d& cov, const Eigen::Vector2d& x);

/// Relative distance from the endpoints of (0, t) used for clamping.
inline constexpr double kEndpointEps = 1e-9;

/// Clamp s into [eps t, (1 - eps) t].  Sets *clamped when s moved.
double clamp_inner(double s, double t, bool* clamped = nullptr);

struct Sigma2 {
    Eigen::Matrix2d cov;  // [[v(t), Gamma(s,t)], [Gamma(s,t), v(s)]]
    double s = 0.0;       // after clamping
    bool clamped = false;
    bool near_singular = false;  // correlation within 1e-6 of one
};

Sigma2 sigma2(const VarianceModel& model, double s, double t);

struct PathConstraint {
    double time = 0.0;   // tau > 0: the constraint is on A(-tau, 0)
    double value = 0.0;  // centered level x
};

/// f(r) = -E(A(r, 0) | A(-tau_j, 0) = x_j) for a centered source, r <= 0.
class ConditionalPath {
public:
    ConditionalPath(VarianceModel model, std::vector<PathConstraint> constraints);

    double value(double r) const;
    /// f'(r), the input rate along the path.
    double rate(double r) const;

    const Eigen::VectorXd& theta() const { return theta_; }
    const std::vector<PathConstraint>& constraints() const { return constraints_; }

private:
    VarianceModel model_;
    std::vector<PathConstraint> constraints_;
    Eigen::VectorXd theta_;
};

double conditional_path_value(const VarianceModel& model, const std::vector<PathConstraint>& constraints, double r);

}  // namespace gaussq
