#include "gaussq/variance_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "gaussq/errors.hpp"

namespace gaussq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = std::numeric_limits<double>::epsilon();

// x - 1 + exp(-x), accurate for small x.
double phi(double x) {
    if (std::abs(x) < 1e-3) {
        const double x2 = x * x;
        return x2 * (0.5 - x / 6.0 + x2 / 24.0 - x2 * x / 120.0 + x2 * x2 / 720.0);
    }
    return x + std::expm1(-x);
}

// 1 + beta*t - (1+t)^beta, accurate for small t.
double pareto_core(double beta, double t) {
    if (t < 1e-3) {
        // -sum_{k>=2} binom(beta, k) t^k
        double coef = beta;
        double term = t;
        double sum = 0.0;
        for (int k = 2; k <= 7; ++k) {
            coef *= (beta - (k - 1)) / k;
            term *= t;
            sum += coef * term;
        }
        return -sum;
    }
    return 1.0 + beta * t - std::exp(beta * std::log1p(t));
}

double integrate_finite(const std::function<double(double)>& f, double a, double b) {
    if (!(b > a)) return 0.0;
    double err = 0.0;
    double l1 = 0.0;
    const double r = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 20, 1e-13, &err, &l1);
    if (!(err <= 1e-8 * std::max(1.0, l1))) {
        std::ostringstream os;
        os << "quadrature on [" << a << ", " << b << "] did not converge (residual " << err << ")";
        throw NumericalError(os.str());
    }
    return r;
}

bool try_exp_sinh(const std::function<double(double)>& f, double a, double& out) {
    thread_local boost::math::quadrature::exp_sinh<double> integrator;
    double err = 0.0;
    double l1 = 0.0;
    out = integrator.integrate(f, a, kInf, 1e-12, &err, &l1);
    return std::isfinite(out) && err <= 1e-7 * std::max(1.0, l1);
}

// exp_sinh alone struggles with kinks (tabulated or compactly supported tails):
// integrate doubling segments by Gauss-Kronrod until the remainder is smooth.
double integrate_to_infinity(const std::function<double(double)>& f, double a) {
    double rest = 0.0;
    if (try_exp_sinh(f, a, rest)) return rest;
    double sum = 0.0;
    double lo = a;
    double width = 1.0;
    for (int k = 0; k < 60; ++k) {
        sum += integrate_finite(f, lo, lo + width);
        lo += width;
        width *= 2.0;
        if (try_exp_sinh(f, lo, rest)) return sum + rest;
    }
    std::ostringstream os;
    os << "tail quadrature from " << a << " did not converge";
    throw NumericalError(os.str());
}

void require(bool ok, const char* param, const std::string& what) {
    if (!ok) throw InputError(std::string("invalid parameter '") + param + "': " + what);
}

}  // namespace

struct VarianceModel::Impl {
    ModelSpec spec;
    double p2 = 0.0;
    double nu2 = 0.0;
    double alpha = 0.0;     // pareto tail index
    double pareto_k = 0.0;  // 2 lambda / ((3-a)(2-a)(1-a))
    double delta_q = 0.0;   // integral of the general tail
    std::vector<VarianceModel> parts;
};

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::brownian: return "brownian";
        case ModelKind::fbm: return "fbm";
        case ModelKind::mg_exp: return "mg_exp";
        case ModelKind::mg_hyper: return "mg_hyper";
        case ModelKind::mg_pareto: return "mg_pareto";
        case ModelKind::mg_general: return "mg_general";
        case ModelKind::superposition: return "superposition";
    }
    return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
    for (auto k : {ModelKind::brownian, ModelKind::fbm, ModelKind::mg_exp, ModelKind::mg_hyper,
                   ModelKind::mg_pareto, ModelKind::mg_general}) {
        if (to_string(k) == name) return k;
    }
    throw InputError("unknown variance model type '" + name + "'");
}

VarianceModel::VarianceModel(std::shared_ptr<const Impl> impl, double scale, DerivativeMode mode)
    : impl_(std::move(impl)), scale_(scale), mode_(mode) {}

VarianceModel make_model(const ModelSpec& spec) {
    auto impl = std::make_shared<VarianceModel::Impl>();
    impl->spec = spec;
    switch (spec.kind) {
        case ModelKind::brownian:
            require(std::isfinite(spec.sigma2) && spec.sigma2 > 0, "sigma2", "must be > 0");
            break;
        case ModelKind::fbm:
            require(std::isfinite(spec.sigma2) && spec.sigma2 > 0, "sigma2", "must be > 0");
            require(spec.hurst > 0 && spec.hurst < 1, "hurst", "must lie in (0, 1)");
            break;
        case ModelKind::mg_exp:
            require(std::isfinite(spec.lambda) && spec.lambda > 0, "lambda", "must be > 0");
            require(std::isfinite(spec.delta) && spec.delta > 0, "delta", "must be > 0");
            break;
        case ModelKind::mg_hyper: {
            require(std::isfinite(spec.lambda) && spec.lambda > 0, "lambda", "must be > 0");
            require(std::isfinite(spec.delta) && spec.delta > 0, "delta", "must be > 0");
            require(spec.p1 > 0 && spec.p1 < 1, "p1", "must lie in (0, 1)");
            require(std::isfinite(spec.nu1) && spec.nu1 > 0, "nu1", "must be > 0");
            impl->p2 = 1.0 - spec.p1;
            const double denom = spec.delta - spec.p1 / spec.nu1;
            require(denom > 0, "nu2", "p2/(delta - p1/nu1) must be > 0 (need delta > p1/nu1)");
            impl->nu2 = impl->p2 / denom;
            break;
        }
        case ModelKind::mg_pareto: {
            require(std::isfinite(spec.lambda) && spec.lambda > 0, "lambda", "must be > 0");
            require(std::isfinite(spec.delta) && spec.delta > 0, "delta", "must be > 0");
            require(std::abs(spec.delta - 1.0) > 1e-9 && std::abs(spec.delta - 0.5) > 1e-9, "delta",
                    "values 1 and 1/2 are excluded");
            impl->alpha = (1.0 + spec.delta) / spec.delta;
            const double a = impl->alpha;
            impl->pareto_k = 2.0 * spec.lambda / ((3.0 - a) * (2.0 - a) * (1.0 - a));
            break;
        }
        case ModelKind::mg_general: {
            require(std::isfinite(spec.lambda) && spec.lambda > 0, "lambda", "must be > 0");
            require(static_cast<bool>(spec.tail), "tail", "a tail function is required");
            require(std::isfinite(spec.delta) && spec.delta > 0, "delta", "must be > 0");
            require(std::abs(spec.tail(0.0) - 1.0) < 1e-9, "tail", "P(D > 0) must equal 1");
            double prev = 1.0;
            for (int i = 1; i <= 400; ++i) {
                const double t = spec.delta * 50.0 * i / 400.0;
                const double p = spec.tail(t);
                require(p <= prev + 1e-12 && p >= 0.0, "tail", "must be nonincreasing and nonnegative");
                prev = p;
            }
            impl->delta_q = integrate_to_infinity(spec.tail, 0.0);
            if (std::abs(impl->delta_q - spec.delta) > 0.01 * spec.delta) {
                std::ostringstream os;
                os << "mean session length " << spec.delta << " inconsistent with tail integral "
                   << impl->delta_q;
                throw InputError("invalid parameter 'delta': " + os.str());
            }
            break;
        }
        case ModelKind::superposition:
            throw InputError("superposition models are built with VarianceModel::superpose");
    }
    const DerivativeMode mode = spec.derivative_mode;
    return VarianceModel(std::move(impl), 1.0, mode);
}

VarianceModel VarianceModel::superpose(const VarianceModel& a, const VarianceModel& b) {
    auto impl = std::make_shared<Impl>();
    impl->spec.kind = ModelKind::superposition;
    impl->parts = {a, b};
    return VarianceModel(std::move(impl));
}

VarianceModel VarianceModel::scaled(double alpha) const {
    if (!(alpha > 0) || !std::isfinite(alpha)) throw InputError("invalid parameter 'alpha': must be > 0");
    return VarianceModel(impl_, scale_ * alpha, mode_);
}

VarianceModel VarianceModel::with_numeric_derivatives() const {
    return VarianceModel(impl_, scale_, DerivativeMode::numeric);
}

double VarianceModel::scale() const { return scale_; }
ModelKind VarianceModel::kind() const { return impl_->spec.kind; }
const ModelSpec& VarianceModel::spec() const { return impl_->spec; }
DerivativeMode VarianceModel::derivative_mode() const { return mode_; }

bool VarianceModel::flagged() const {
    if (kind() == ModelKind::fbm) return impl_->spec.hurst <= 0.5;
    if (kind() == ModelKind::superposition) {
        return std::any_of(impl_->parts.begin(), impl_->parts.end(),
                           [](const VarianceModel& m) { return m.flagged(); });
    }
    return false;
}

double VarianceModel::natural_mean_rate() const {
    switch (kind()) {
        case ModelKind::mg_exp:
        case ModelKind::mg_hyper:
        case ModelKind::mg_pareto:
        case ModelKind::mg_general:
            return scale_ * impl_->spec.lambda * impl_->spec.delta;
        case ModelKind::superposition: {
            double m = 0.0;
            for (const auto& p : impl_->parts) m += p.natural_mean_rate();
            return scale_ * m;
        }
        default:
            return 0.0;
    }
}

double VarianceModel::raw_v(double t) const {
    t = std::abs(t);
    const ModelSpec& s = impl_->spec;
    switch (s.kind) {
        case ModelKind::brownian:
            return s.sigma2 * t;
        case ModelKind::fbm:
            return t == 0.0 ? 0.0 : s.sigma2 * std::pow(t, 2.0 * s.hurst);
        case ModelKind::mg_exp:
            return 2.0 * s.lambda * s.delta * s.delta * s.delta * phi(t / s.delta);
        case ModelKind::mg_hyper: {
            const double n1 = s.nu1;
            const double n2 = impl_->nu2;
            return 2.0 * s.lambda * (s.p1 / (n1 * n1 * n1) * phi(n1 * t) + impl_->p2 / (n2 * n2 * n2) * phi(n2 * t));
        }
        case ModelKind::mg_pareto:
            return impl_->pareto_k * pareto_core(3.0 - impl_->alpha, t);
        case ModelKind::mg_general: {
            if (t == 0.0) return 0.0;
            const auto& tail = s.tail;
            // Moments on [0, 1] after u = t x keep the quadrature tolerance relative.
            const double moment = integrate_finite([&](double x) { return (1.0 - x) * (1.0 - x) * tail(t * x); }, 0.0, 1.0);
            return s.lambda * t * t * (impl_->delta_q - t * moment);
        }
        case ModelKind::superposition: {
            double sum = 0.0;
            for (const auto& p : impl_->parts) sum += p.v(t);
            return sum;
        }
    }
    return 0.0;
}

double VarianceModel::raw_dv(double t) const {
    const double sign = t < 0 ? -1.0 : 1.0;
    t = std::abs(t);
    const ModelSpec& s = impl_->spec;
    double d = 0.0;
    switch (s.kind) {
        case ModelKind::brownian:
            d = s.sigma2;
            break;
        case ModelKind::fbm:
            if (t == 0.0) return dv_at_zero() / scale_;
            d = s.sigma2 * 2.0 * s.hurst * std::pow(t, 2.0 * s.hurst - 1.0);
            break;
        case ModelKind::mg_exp:
            d = -2.0 * s.lambda * s.delta * s.delta * std::expm1(-t / s.delta);
            break;
        case ModelKind::mg_hyper: {
            const double n1 = s.nu1;
            const double n2 = impl_->nu2;
            d = -2.0 * s.lambda * (s.p1 / (n1 * n1) * std::expm1(-n1 * t) + impl_->p2 / (n2 * n2) * std::expm1(-n2 * t));
            break;
        }
        case ModelKind::mg_pareto: {
            const double a = impl_->alpha;
            d = -2.0 * s.lambda * std::expm1((2.0 - a) * std::log1p(t)) / ((2.0 - a) * (1.0 - a));
            break;
        }
        case ModelKind::mg_general: {
            if (t == 0.0) return 0.0;
            const auto& tail = s.tail;
            const double moment = integrate_finite([&](double x) { return (1.0 - x) * tail(t * x); }, 0.0, 1.0);
            d = 2.0 * s.lambda * t * (impl_->delta_q - t * moment);
            break;
        }
        case ModelKind::superposition:
            for (const auto& p : impl_->parts) d += p.dv(t);
            break;
    }
    return sign * d;
}

double VarianceModel::raw_d2v(double t) const {
    t = std::abs(t);
    const ModelSpec& s = impl_->spec;
    switch (s.kind) {
        case ModelKind::brownian:
            return 0.0;
        case ModelKind::fbm: {
            if (t == 0.0) return d2v_at_zero() / scale_;
            const double h = s.hurst;
            return s.sigma2 * 2.0 * h * (2.0 * h - 1.0) * std::pow(t, 2.0 * h - 2.0);
        }
        case ModelKind::mg_exp:
            return 2.0 * s.lambda * s.delta * std::exp(-t / s.delta);
        case ModelKind::mg_hyper:
            return 2.0 * s.lambda * (s.p1 / s.nu1 * std::exp(-s.nu1 * t) + impl_->p2 / impl_->nu2 * std::exp(-impl_->nu2 * t));
        case ModelKind::mg_pareto: {
            const double a = impl_->alpha;
            return 2.0 * s.lambda * std::exp((1.0 - a) * std::log1p(t)) / (a - 1.0);
        }
        case ModelKind::mg_general:
            return 2.0 * s.lambda * integrate_to_infinity(s.tail, t);
        case ModelKind::superposition: {
            double sum = 0.0;
            for (const auto& p : impl_->parts) sum += p.d2v(t);
            return sum;
        }
    }
    return 0.0;
}

double VarianceModel::v(double t) const { return scale_ * raw_v(t); }

double VarianceModel::dv(double t) const {
    if (mode_ == DerivativeMode::numeric) {
        const double h = std::max(1.0, std::abs(t)) * std::cbrt(kEps);
        return (v(t + h) - v(t - h)) / (2.0 * h);
    }
    return scale_ * raw_dv(t);
}

double VarianceModel::d2v(double t) const {
    if (mode_ == DerivativeMode::numeric) {
        // eps^(1/4) balances truncation and rounding for a second difference.
        const double h = std::max(1.0, std::abs(t)) * std::sqrt(std::sqrt(kEps));
        return (v(t + h) - 2.0 * v(t) + v(t - h)) / (h * h);
    }
    return scale_ * raw_d2v(t);
}

double VarianceModel::dv_at_zero() const {
    const ModelSpec& s = impl_->spec;
    switch (s.kind) {
        case ModelKind::brownian:
            return scale_ * s.sigma2;
        case ModelKind::fbm:
            if (s.hurst > 0.5) return 0.0;
            if (s.hurst == 0.5) return scale_ * s.sigma2;
            return kInf;
        case ModelKind::superposition: {
            double sum = 0.0;
            for (const auto& p : impl_->parts) sum += p.dv_at_zero();
            return scale_ * sum;
        }
        default:
            return 0.0;
    }
}

double VarianceModel::d2v_at_zero() const {
    const ModelSpec& s = impl_->spec;
    switch (s.kind) {
        case ModelKind::brownian:
            return 0.0;
        case ModelKind::fbm:
            if (s.hurst == 0.5) return 0.0;
            return s.hurst > 0.5 ? kInf : -kInf;
        case ModelKind::mg_exp:
        case ModelKind::mg_hyper:
        case ModelKind::mg_pareto:
            return scale_ * raw_d2v(0.0);
        case ModelKind::mg_general:
            return scale_ * 2.0 * s.lambda * impl_->delta_q;
        case ModelKind::superposition: {
            double sum = 0.0;
            for (const auto& p : impl_->parts) sum += p.d2v_at_zero();
            return scale_ * sum;
        }
    }
    return 0.0;
}

std::string VarianceModel::describe() const {
    const ModelSpec& s = impl_->spec;
    std::ostringstream os;
    os << to_string(s.kind);
    switch (s.kind) {
        case ModelKind::brownian: os << "(sigma2=" << s.sigma2 << ")"; break;
        case ModelKind::fbm: os << "(sigma2=" << s.sigma2 << ", H=" << s.hurst << ")"; break;
        case ModelKind::mg_exp:
        case ModelKind::mg_pareto:
        case ModelKind::mg_general: os << "(lambda=" << s.lambda << ", delta=" << s.delta << ")"; break;
        case ModelKind::mg_hyper:
            os << "(lambda=" << s.lambda << ", delta=" << s.delta << ", p1=" << s.p1 << ", nu1=" << s.nu1
               << ", nu2=" << impl_->nu2 << ")";
            break;
        case ModelKind::superposition:
            os << "(" << impl_->parts[0].describe() << " + " << impl_->parts[1].describe() << ")";
            break;
    }
    if (scale_ != 1.0) os << " x" << scale_;
    return os.str();
}

double gamma_cov(const VarianceModel& model, double s, double t) {
    return 0.5 * (model.v(t) - model.v(std::abs(t - s)) + model.v(s));
}

double increment_cov(const VarianceModel& model, double l1, double u1, double l2, double u2) {
    return 0.5 * (model.v(u1 - l2) + model.v(l1 - u2) - model.v(u1 - u2) - model.v(l1 - l2));
}

ValidationReport validate_model(const VarianceModel& model, double horizon, std::size_t grid_size) {
    if (!(horizon > 0)) throw InputError("invalid parameter 'horizon': must be > 0");
    if (grid_size < 16) throw InputError("invalid parameter 'grid_size': must be >= 16");

    // Half linear, half geometric down to 1e-4 * horizon.
    std::vector<double> grid;
    const std::size_t half = grid_size / 2;
    for (std::size_t i = 1; i <= half; ++i) grid.push_back(horizon * static_cast<double>(i) / static_cast<double>(half));
    const std::size_t geo = grid_size - half;
    for (std::size_t i = 0; i < geo; ++i) {
        grid.push_back(horizon * std::pow(1e-4, 1.0 - static_cast<double>(i) / static_cast<double>(geo - 1)));
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end(), [](double a, double b) { return std::abs(a - b) <= 1e-12 * b; }),
               grid.end());

    ValidationReport rep;
    rep.flagged = model.flagged();
    rep.grid_points = grid.size();

    std::vector<double> vals(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) vals[i] = model.v(grid[i]);

    // v(0) = 0 and v > 0
    const double v0 = model.v(0.0);
    rep.positive.worst_margin = kInf;
    if (std::abs(v0) > 1e-14) {
        rep.positive = {false, 0.0, -std::abs(v0)};
    } else {
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (vals[i] < rep.positive.worst_margin) rep.positive.worst_margin = vals[i], rep.positive.worst_t = grid[i];
        }
        rep.positive.passed = rep.positive.worst_margin > 0;
    }

    rep.increasing.worst_margin = kInf;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        const double m = vals[i + 1] - vals[i];
        if (m < rep.increasing.worst_margin) rep.increasing.worst_margin = m, rep.increasing.worst_t = grid[i + 1];
    }
    rep.increasing.passed = rep.increasing.worst_margin > 0;

    // sqrt(v) concave: successive chord slopes do not increase.
    std::vector<double> slope;
    slope.reserve(grid.size());
    double prev_t = 0.0;
    double prev_r = std::sqrt(std::max(v0, 0.0));
    double max_slope = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double r = std::sqrt(std::max(vals[i], 0.0));
        slope.push_back((r - prev_r) / (grid[i] - prev_t));
        max_slope = std::max(max_slope, std::abs(slope.back()));
        prev_t = grid[i];
        prev_r = r;
    }
    rep.sqrt_concave.worst_margin = kInf;
    const double tol = 1e-7 * max_slope;
    for (std::size_t i = 1; i < slope.size(); ++i) {
        const double m = slope[i - 1] - slope[i];
        if (m < rep.sqrt_concave.worst_margin) rep.sqrt_concave.worst_margin = m, rep.sqrt_concave.worst_t = grid[i];
    }
    // fbm with H < 1/2 has an infinite initial slope; the chord from 0 still orders correctly.
    rep.sqrt_concave.passed = rep.sqrt_concave.worst_margin >= -tol;

    // v(t)/t^2 decreasing on horizon * 10^k and local growth exponent below 2.
    rep.subquadratic.worst_margin = kInf;
    double prev_ratio = kInf;
    double prev_v = 0.0;
    for (int k = 0; k <= 6; ++k) {
        const double t = horizon * std::pow(10.0, k);
        const double vt = model.v(t);
        const double ratio = vt / (t * t);
        if (k > 0) {
            const double exponent = std::log(vt / prev_v) / std::log(10.0);
            const double m = 2.0 - exponent;
            if (m < rep.subquadratic.worst_margin) rep.subquadratic.worst_margin = m, rep.subquadratic.worst_t = t;
            if (!(ratio < prev_ratio)) rep.subquadratic.passed = false;
        }
        prev_ratio = ratio;
        prev_v = vt;
    }
    if (rep.subquadratic.worst_margin < 1e-3) rep.subquadratic.passed = false;
    return rep;
}

double mg_general_variance(double lambda, const TailFunction& tail, double delta, double t) {
    if (!(t >= 0)) throw InputError("invalid parameter 't': must be >= 0");
    ModelSpec spec;
    spec.kind = ModelKind::mg_general;
    spec.lambda = lambda;
    spec.delta = delta;
    spec.tail = tail;
    return make_model(spec).v(t);
}

}  // namespace gaussq
