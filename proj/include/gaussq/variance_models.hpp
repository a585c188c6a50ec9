#pragma once

// Variance functions v(t) of Gaussian sources with stationary increments.
//
// A source is characterised by v(t) = Var A(s, s + t).  Everything else in the
// library (covariances, conditional paths, decay rates) is built from v and its
// first two derivatives.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace gaussq {

enum class ModelKind {
    brownian,
    fbm,
    mg_exp,
    mg_hyper,
    mg_pareto,
    mg_general,
    superposition,  // sum of independent components, built by VarianceModel::superpose
};

enum class DerivativeMode { analytic, numeric };

/// Survival function P(D > t) of an M/G/infinity session length.
using TailFunction = std::function<double(double)>;

struct ModelSpec {
    ModelKind kind = ModelKind::brownian;
    double sigma2 = 1.0;  // brownian, fbm
    double hurst = 0.5;   // fbm
    double lambda = 0.0;  // mg_*: session arrival rate
    double delta = 0.0;   // mg_*: mean session length
    double p1 = 0.0;      // mg_hyper
    double nu1 = 0.0;     // mg_hyper
    TailFunction tail;    // mg_general
    DerivativeMode derivative_mode = DerivativeMode::analytic;
};

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// Immutable evaluator for v, v', v''.  Cheap to copy; safe to share between
/// threads.  Negative arguments evaluate the even extension v(|t|).
class VarianceModel {
public:
    double v(double t) const;
    double dv(double t) const;
    double d2v(double t) const;

    /// Right limits at the origin; +inf where the model has a cusp
    /// (fbm with H < 1/2 for v', H < 1 for v'').
    double dv_at_zero() const;
    double d2v_at_zero() const;

    ModelKind kind() const;
    const ModelSpec& spec() const;
    DerivativeMode derivative_mode() const;

    /// fbm with H <= 1/2: v'(0+) is not zero, so the input-rate path
    /// identities do not apply.  Decay rates still evaluate.
    bool flagged() const;

    /// Mean rate lambda*delta for M/G/infinity kinds, 0 otherwise.
    double natural_mean_rate() const;

    /// Multiply v by alpha > 0 (class rescaling for unequal source counts).
    VarianceModel scaled(double alpha) const;
    double scale() const;

    /// Same function, derivatives by central differences.
    VarianceModel with_numeric_derivatives() const;

    static VarianceModel superpose(const VarianceModel& a, const VarianceModel& b);

    std::string describe() const;

    struct Impl;

private:
    explicit VarianceModel(std::shared_ptr<const Impl> impl, double scale = 1.0,
                           DerivativeMode mode = DerivativeMode::analytic);
    double raw_v(double t) const;
    double raw_dv(double t) const;
    double raw_d2v(double t) const;

    std::shared_ptr<const Impl> impl_;
    double scale_ = 1.0;
    DerivativeMode mode_ = DerivativeMode::analytic;

    friend VarianceModel make_model(const ModelSpec& spec);
};

/// Throws InputError naming the offending parameter.
VarianceModel make_model(const ModelSpec& spec);

/// Gamma(s,t) = Cov(A(s), A(t)) = (v(t) - v(|t-s|) + v(s)) / 2.
double gamma_cov(const VarianceModel& model, double s, double t);

/// Cov(A(l1,u1), A(l2,u2)) for intervals l < u.
double increment_cov(const VarianceModel& model, double l1, double u1, double l2, double u2);

struct SourceModel {
    VarianceModel variance;
    double mean_rate = 0.0;
};

struct CheckResult {
    bool passed = true;
    double worst_t = 0.0;       // witness location of the worst margin
    double worst_margin = 0.0;  // >= 0 when the check passes
};

struct ValidationReport {
    CheckResult positive;      // v(0) = 0, v(t) > 0
    CheckResult increasing;    // strictly increasing on the grid
    CheckResult sqrt_concave;  // second differences of sqrt(v) <= tolerance
    CheckResult subquadratic;  // v(t)/t^2 -> 0 on a geometric tail grid
    bool flagged = false;      // fbm with H <= 1/2
    std::size_t grid_points = 0;

    bool all_passed() const {
        return positive.passed && increasing.passed && sqrt_concave.passed && subquadratic.passed;
    }
};

ValidationReport validate_model(const VarianceModel& model, double horizon, std::size_t grid_size);

/// Variance of the M/G/infinity workload over an interval of length t, by
/// quadrature of the session-length tail.  Throws InputError when delta is
/// inconsistent with the tail (more than 1%), NumericalError when the
/// quadrature does not converge.
double mg_general_variance(double lambda, const TailFunction& tail, double delta, double t);

}  // namespace gaussq
