#include "gaussq/priority.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "gaussq/errors.hpp"
#include "gaussq/fifo.hpp"
#include "gaussq/gaussian_rate.hpp"

namespace gaussq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kRegimeGrid = 512;

double total_v(const PrioritySystem& sys, double t) {
    return sys.high().variance.v(t) + sys.low().variance.v(t);
}

double brownian_intensity(const SourceModel& s) {
    if (s.variance.kind() != ModelKind::brownian) throw InputError("priority_brownian: both classes must be brownian");
    return s.variance.spec().sigma2 * s.variance.scale();
}

}  // namespace

PrioritySystem::PrioritySystem(double b, double c, SourceModel high, SourceModel low, double alpha)
    : b_(b), c_(c), alpha_(alpha), high_(std::move(high)), low_(std::move(low)), aggregate_{high_.variance, 0.0} {
    if (!(b > 0) || !std::isfinite(b)) throw InputError("priority: buffer b must be > 0");
    if (!(alpha > 0) || !std::isfinite(alpha)) throw InputError("priority: alpha must be > 0");
    if (!(high_.mean_rate >= 0) || !(low_.mean_rate >= 0)) throw InputError("priority: mean rates must be >= 0");
    low_.variance = low_.variance.scaled(alpha);
    low_.mean_rate *= alpha;
    if (!(c > mu())) {
        std::ostringstream os;
        os << "priority: stability constraint c > mu_h + mu_l violated (c = " << c << ", mu = " << mu() << ")";
        throw InputError(os.str());
    }
    aggregate_.variance = VarianceModel::superpose(high_.variance, low_.variance);
    aggregate_.mean_rate = mu();
}

double kp_func(const PrioritySystem& sys, double s, double t) {
    const double gh = gamma_cov(sys.high().variance, s, t);
    return sys.high().mean_rate * s + gh / total_v(sys, t) * (sys.b() + (sys.c() - sys.mu()) * t);
}

double upsilon_p(const PrioritySystem& sys, double s, double t) {
    s = std::clamp(s, kEndpointEps * t, t);
    const VarianceModel& vh = sys.high().variance;
    const VarianceModel& vl = sys.low().variance;
    const double mh = sys.high().mean_rate;
    const double ml = sys.low().mean_rate;
    const double vlt = vl.v(t);
    QuadrantProblem p;
    p.mean = Eigen::Vector2d(sys.mu() * t, mh * (t - s) + ml * t);
    p.cov.resize(2, 2);
    const double cross = gamma_cov(vh, t - s, t) + vlt;
    p.cov << vh.v(t) + vlt, cross, cross, vh.v(t - s) + vlt;
    p.thresholds = Eigen::Vector2d(sys.b() + sys.c() * t, sys.b() + sys.c() * (t - s));
    return quadrant_rate(p).value;
}

bool priority_regime_a(const PrioritySystem& sys, double t_F) {
    const double c = sys.c();
    const double tol = 1e-12 * std::max(1.0, c);
    const VarianceModel& vh = sys.high().variance;
    const double dv0 = vh.dv_at_zero();
    if (!std::isfinite(dv0)) return false;
    const double x = sys.b() + (c - sys.mu()) * t_F;
    const double limit = sys.high().mean_rate + 0.5 * (vh.dv(t_F) + dv0) / total_v(sys, t_F) * x;
    if (limit > c + tol) return false;
    for (std::size_t i = 1; i <= kRegimeGrid; ++i) {
        const double s = t_F * static_cast<double>(i) / static_cast<double>(kRegimeGrid);
        if (kp_func(sys, s, t_F) > (c + tol) * s) return false;
    }
    return true;
}

PriorityReport priority_decay(const PrioritySystem& sys, const SaddleOptions& opts) {
    PriorityReport rep;
    const FifoResult fifo = fifo_decay(sys.b(), sys.c(), sys.aggregate(), opts.rel_tol);
    rep.t_F = fifo.t_F;
    const double hi0 = 4.0 * sys.b() / (sys.c() - sys.mu());

    if (priority_regime_a(sys, fifo.t_F)) {
        rep.regime = Regime::A;
        rep.J_I = fifo.J;
        rep.t_star = fifo.t_F;
        rep.t_ties = fifo.ties;
    } else {
        rep.regime = Regime::B;
        const auto res =
            saddle_search([&](double s, double t) { return upsilon_p(sys, s, t); }, 0.0, ExpandUpper{hi0}, opts);
        rep.J_I = res.value;
        rep.t_star = res.t_star;
        rep.s_star = std::clamp(res.s_star, kEndpointEps * res.t_star, res.t_star);
        rep.t_ties = res.t_ties;
    }

    const auto two = minimize_scalar([&](double t) { return t > 0 ? upsilon_p(sys, t, t) : kInf; }, 0.0,
                                     ExpandUpper{hi0}, opts.rel_tol, opts.outer_grid);
    rep.J_II = two.value;
    rep.t_II = two.arg;

    double s_arg = 0.0;
    auto inner_min = [&](double t) {
        if (!(t > 0)) return kInf;
        const auto r =
            minimize_scalar([&](double s) { return upsilon_p(sys, s, t); }, 0.0, FixedUpper{t}, opts.rel_tol, opts.inner_grid);
        s_arg = r.arg;
        return r.value;
    };
    const auto three = minimize_scalar(inner_min, 0.0, ExpandUpper{hi0}, opts.rel_tol, opts.outer_grid);
    rep.J_III = three.value;
    rep.t_III = three.arg;
    inner_min(three.arg);
    rep.s_III = std::clamp(s_arg, kEndpointEps * three.arg, three.arg);

    if (sys.high().variance.kind() == ModelKind::brownian && sys.low().variance.kind() == ModelKind::brownian) {
        rep.closed_form = priority_brownian(sys);
    }
    return rep;
}

bool priority_brownian_fifo_branch(const PrioritySystem& sys) {
    const double lh = brownian_intensity(sys.high());
    const double ll = brownian_intensity(sys.low());
    const double mh = sys.high().mean_rate;
    const double ml = sys.low().mean_rate;
    return (lh - ll) * sys.c() <= lh * (mh + 2.0 * ml) - ll * mh;
}

double priority_brownian(const PrioritySystem& sys) {
    const double lh = brownian_intensity(sys.high());
    const double ll = brownian_intensity(sys.low());
    const double mh = sys.high().mean_rate;
    const double ml = sys.low().mean_rate;
    const double c = sys.c();
    const double b = sys.b();
    if (priority_brownian_fifo_branch(sys)) return 2.0 * b * (c - sys.mu()) / (lh + ll);
    const double xi = std::sqrt(ml * ml + (ll / lh) * (c - mh) * (c - mh));
    return b * (xi - ml) / ll;
}

}  // namespace gaussq
