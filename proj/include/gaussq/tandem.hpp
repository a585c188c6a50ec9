#pragma once

// Two-node tandem: lower bound on the decay rate of the second queue, regime
// classification, tightness and most probable paths.
//
// Internally every rate is centered (mean rate subtracted); reports carry both
// centered and original values where they differ.

#include <cstddef>
#include <optional>
#include <vector>

#include "gaussq/fifo.hpp"
#include "gaussq/numerics.hpp"
#include "gaussq/path.hpp"
#include "gaussq/variance_models.hpp"

namespace gaussq {

class TandemSystem {
public:
    /// Throws InputError unless b > 0, c1 > c2 > mean rate.
    TandemSystem(double b, double c1, double c2, SourceModel source);

    double b() const { return b_; }
    double c1() const { return c1_; }
    double c2() const { return c2_; }
    double mu() const { return source_.mean_rate; }
    double c1_centered() const { return c1_ - source_.mean_rate; }
    double c2_centered() const { return c2_ - source_.mean_rate; }
    /// b / (c1 - c2): the second queue cannot reach b faster.
    double t0() const { return b_ / (c1_ - c2_); }
    const SourceModel& source() const { return source_; }
    const VarianceModel& model() const { return source_.variance; }

    TandemSystem with_c1(double c1) const { return TandemSystem(b_, c1, c2_, source_); }

private:
    double b_;
    double c1_;
    double c2_;
    SourceModel source_;
};

enum class Tightness { Tight, NotTight, Unknown };

std::string to_string(Tightness t);

/// E(A(s) | A(t) = b + c2 t), centered.
double k_func(const TandemSystem& sys, double s, double t);

/// Conditional variance Var(A(s) | A(t)).
double conditional_variance(const TandemSystem& sys, double s, double t);

/// Branch form: single-constraint cost when k <= c1 s, corner rate otherwise.
double upsilon(const TandemSystem& sys, double s, double t);
/// L_{c2}(t) + max(k - c1 s, 0)^2 / (2 Var(A(s) | A(t))).
double upsilon_decomposition(const TandemSystem& sys, double s, double t);
/// Generic quadrant solver on the joint law of (A(-t,0), A(-t,-s)).
double upsilon_quadrant(const TandemSystem& sys, double s, double t);

struct CriticalRate {
    double centered = 0.0;
    double original = 0.0;
    double t_F = 0.0;      // FIFO horizon at c2
    double s_arg = 0.0;    // maximizing s
    bool infinite = false; // v'(0+) = +inf
};

CriticalRate c1_critical(const TandemSystem& sys);

struct TightnessReport {
    bool holds = false;
    double worst_margin = 0.0;  // min over the grid of n(r) - pi(r)
    double worst_r = 0.0;
    bool condition24 = false;
    double condition24_value = 0.0;
    bool degenerate = false;  // E A(-s*, 0) - c1 s* <= 0 under the first constraint
    std::vector<double> r;
    std::vector<double> m;    // normalized m(r)
    std::vector<double> rho;
    std::vector<double> pi;
    std::vector<double> n;
};

inline constexpr std::size_t kTightnessGrid = 2048;

TightnessReport tightness_check(const TandemSystem& sys, double s_star, double t_star,
                                std::size_t grid = kTightnessGrid);

struct Residuals {
    double r1 = 0.0;
    double r2 = 0.0;
};

/// Stationarity residuals of the corner rate in t and s (centered rates).
Residuals first_order_residuals(const TandemSystem& sys, double s, double t);

struct DecayReport {
    double J_lower = 0.0;
    double t_star = 0.0;
    std::optional<double> s_star;
    bool s_at_boundary = false;  // inner sup attained at the clamped endpoint s -> 0
    Regime regime = Regime::A;
    Tightness tight = Tightness::Unknown;
    double tight_margin = 0.0;
    double tight_worst_r = 0.0;
    CriticalRate c1_critical;
    double cost_fifo = 0.0;         // L_{c2}(t*)
    double cost_conditional = 0.0;  // L(s* | t*)
    double J_fifo = 0.0;            // floor: FIFO rate at c2
    double t_F = 0.0;
    std::optional<double> refined_bound;  // best multi-constraint bound when not tight
    int refined_m = 0;
    std::vector<double> t_ties;
    std::vector<double> s_ties;
    std::optional<TightnessReport> tightness;
};

struct TandemOptions {
    SaddleOptions saddle;
    std::size_t tightness_grid = kTightnessGrid;
    bool refine_when_not_tight = true;
};

DecayReport tandem_decay(const TandemSystem& sys, const TandemOptions& opts = {});

/// Conditional path on [-t*, 0] (one constraint in regime A or when the second
/// does not bind, two otherwise); -s* is inserted into the grid.
SampledPath tandem_mpp(const TandemSystem& sys, const DecayReport& report, std::size_t grid);

struct MultiConstraintOptions {
    std::size_t coarse_grid = 64;
    int restarts = 3;
    unsigned long long seed = 20240611ULL;
    int sweeps = 30;
};

/// inf over t of sup over m inner times of the quadrant rate with m + 1
/// constraints.  With `t` given, only the inner sup at that horizon.
double multi_constraint_bound(const TandemSystem& sys, int m, std::optional<double> t = std::nullopt,
                              const MultiConstraintOptions& opts = {});

/// Inner value at fixed horizon t and inner times s (all in (0, t)).
double multi_constraint_value(const TandemSystem& sys, double t, const std::vector<double>& s);

struct ReducedRates {
    double c1 = 0.0;
    double c2 = 0.0;
};

/// Effective two-node rates for node `target` (1-based) of a chain.
ReducedRates reduce_tandem(const std::vector<double>& rates, std::size_t target, double mean_rate = 0.0);

}  // namespace gaussq
