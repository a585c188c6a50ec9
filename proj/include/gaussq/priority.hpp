#pragma once

// Two-class priority queue: the low-priority class overflows at level b while
// the high-priority class is served first from a link of rate c.

#include <optional>
#include <vector>

#include "gaussq/numerics.hpp"
#include "gaussq/path.hpp"
#include "gaussq/variance_models.hpp"

namespace gaussq {

class PrioritySystem {
public:
    /// alpha rescales the low-priority class (mean and variance) for unequal
    /// source counts.  Throws InputError unless b > 0, alpha > 0 and the
    /// aggregate mean rate is below c.
    PrioritySystem(double b, double c, SourceModel high, SourceModel low, double alpha = 1.0);

    double b() const { return b_; }
    double c() const { return c_; }
    double alpha() const { return alpha_; }
    const SourceModel& high() const { return high_; }
    const SourceModel& low() const { return low_; }  // after rescaling
    double mu() const { return high_.mean_rate + low_.mean_rate; }
    /// Both classes as one source with v = v_h + v_l.
    const SourceModel& aggregate() const { return aggregate_; }

private:
    double b_;
    double c_;
    double alpha_;
    SourceModel high_;
    SourceModel low_;
    SourceModel aggregate_;
};

/// E(A_h(s) | A_h(t) + A_l(t) = b + c t), means explicit.
double kp_func(const PrioritySystem& sys, double s, double t);

/// Quadrant rate for A(-t,0) >= b + c t and A_h(-t,-s) + A_l(-t,0) >= b + c (t - s),
/// s in (0, t].
double upsilon_p(const PrioritySystem& sys, double s, double t);

struct PriorityReport {
    double J_I = 0.0;
    Regime regime = Regime::A;
    double t_star = 0.0;
    std::optional<double> s_star;
    double J_II = 0.0;
    double t_II = 0.0;
    double J_III = 0.0;
    double t_III = 0.0;
    double s_III = 0.0;
    double t_F = 0.0;
    std::optional<double> closed_form;  // both classes brownian
    std::vector<double> t_ties;
};

PriorityReport priority_decay(const PrioritySystem& sys, const SaddleOptions& opts = {});

/// Regime test on the FIFO horizon: k_p(s, t_F) <= c s on a 512-point grid and
/// in the limit s -> 0.
bool priority_regime_a(const PrioritySystem& sys, double t_F);

/// Closed form for two brownian classes.  Throws InputError otherwise.
double priority_brownian(const PrioritySystem& sys);

/// True when the closed-form dichotomy selects the FIFO branch.
bool priority_brownian_fifo_branch(const PrioritySystem& sys);

}  // namespace gaussq
