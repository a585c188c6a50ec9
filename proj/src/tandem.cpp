#include "gaussq/tandem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "gaussq/errors.hpp"
#include "gaussq/gaussian_rate.hpp"

namespace gaussq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double level(const TandemSystem& sys, double t) { return sys.b() + sys.c2_centered() * t; }

// Solve Sigma(s,t) theta = (b + c2 t, c1 s).
Eigen::Vector2d corner_theta(const TandemSystem& sys, double s, double t) {
    const Sigma2 sig = sigma2(sys.model(), s, t);
    const Eigen::Vector2d x(level(sys, t), sys.c1_centered() * sig.s);
    return sig.cov.fullPivLu().solve(x);
}

}  // namespace

TandemSystem::TandemSystem(double b, double c1, double c2, SourceModel source)
    : b_(b), c1_(c1), c2_(c2), source_(std::move(source)) {
    if (!(b > 0) || !std::isfinite(b)) throw InputError("tandem: buffer b must be > 0");
    if (!std::isfinite(c1) || !std::isfinite(c2)) throw InputError("tandem: service rates must be finite");
    if (!(c1 > c2)) {
        std::ostringstream os;
        os << "tandem: constraint c1 > c2 violated (c1 = " << c1 << ", c2 = " << c2 << ")";
        throw InputError(os.str());
    }
    if (!(c2 > source_.mean_rate)) {
        std::ostringstream os;
        os << "tandem: stability constraint c2 > mean rate violated (c2 = " << c2 << ", mean rate = "
           << source_.mean_rate << ")";
        throw InputError(os.str());
    }
    if (!(source_.mean_rate >= 0) || !std::isfinite(source_.mean_rate)) {
        throw InputError("tandem: mean rate must be finite and >= 0");
    }
}

std::string to_string(Tightness t) {
    switch (t) {
        case Tightness::Tight: return "tight";
        case Tightness::NotTight: return "not_tight";
        case Tightness::Unknown: return "unknown";
    }
    return "unknown";
}

double k_func(const TandemSystem& sys, double s, double t) {
    return gamma_cov(sys.model(), s, t) / sys.model().v(t) * level(sys, t);
}

double conditional_variance(const TandemSystem& sys, double s, double t) {
    const double g = gamma_cov(sys.model(), s, t);
    return sys.model().v(s) - g * g / sys.model().v(t);
}

double upsilon(const TandemSystem& sys, double s, double t) {
    s = clamp_inner(s, t);
    const double x = level(sys, t);
    const double vt = sys.model().v(t);
    if (k_func(sys, s, t) <= sys.c1_centered() * s) return x * x / (2.0 * vt);
    const double g = gamma_cov(sys.model(), t - s, t);
    Eigen::Matrix2d cov;
    cov << vt, g, g, sys.model().v(t - s);
    return bivariate_rate(cov, Eigen::Vector2d(x, x - sys.c1_centered() * s));
}

double upsilon_decomposition(const TandemSystem& sys, double s, double t) {
    s = clamp_inner(s, t);
    const double x = level(sys, t);
    const double base = x * x / (2.0 * sys.model().v(t));
    const double gap = k_func(sys, s, t) - sys.c1_centered() * s;
    if (gap <= 0) return base;
    const double var = conditional_variance(sys, s, t);
    if (!(var > 0)) return kInf;
    return base + gap * gap / (2.0 * var);
}

double upsilon_quadrant(const TandemSystem& sys, double s, double t) {
    s = clamp_inner(s, t);
    const double x = level(sys, t);
    const double g = gamma_cov(sys.model(), t - s, t);
    QuadrantProblem p;
    p.mean = Eigen::Vector2d::Zero();
    p.cov.resize(2, 2);
    p.cov << sys.model().v(t), g, g, sys.model().v(t - s);
    p.thresholds = Eigen::Vector2d(x, x - sys.c1_centered() * s);
    return quadrant_rate(p).value;
}

CriticalRate c1_critical(const TandemSystem& sys) {
    const FifoResult fifo = fifo_decay(sys.b(), sys.c2(), sys.source());
    CriticalRate out;
    out.t_F = fifo.t_F;
    const double t = fifo.t_F;
    const VarianceModel& m = sys.model();
    const double dv0 = m.dv_at_zero();
    if (!std::isfinite(dv0)) {
        out.infinite = true;
        out.centered = kInf;
        out.original = kInf;
        return out;
    }
    const double x = level(sys, t);
    const double vt = m.v(t);
    auto ratio = [&](double s) {
        if (s <= 0) return 0.5 * (m.dv(t) + dv0) / vt * x;
        return gamma_cov(m, s, t) / vt * x / s;
    };
    const auto res = maximize_scalar(ratio, 0.0, t);
    out.centered = res.value;
    out.original = res.value + sys.mu();
    out.s_arg = res.arg;
    return out;
}

TightnessReport tightness_check(const TandemSystem& sys, double s_star, double t_star, std::size_t grid) {
    if (grid < 2) throw InputError("tightness: grid must have at least 2 points");
    const VarianceModel& m = sys.model();
    const double c1 = sys.c1_centered();
    const double x = level(sys, t_star);
    const double vt = m.v(t_star);

    // Moments under the first constraint A(-t*, 0) = b + c2 t*.
    auto mean_bar = [&](double r) { return gamma_cov(m, -r, t_star) / vt * x; };
    auto var_bar = [&](double r) {
        const double g = gamma_cov(m, -r, t_star);
        return m.v(-r) - g * g / vt;
    };
    auto cov_bar = [&](double r) {
        const double raw = 0.5 * (m.v(-r) + m.v(s_star) - m.v(std::abs(-r - s_star)));
        return raw - gamma_cov(m, -r, t_star) * gamma_cov(m, s_star, t_star) / vt;
    };

    TightnessReport rep;
    const bool has_s = s_star > 0 && s_star < t_star;
    const double h = has_s ? mean_bar(-s_star) - c1 * s_star : 0.0;
    rep.degenerate = !(h > 0);
    const double vs_bar = has_s ? var_bar(-s_star) : 0.0;
    const double pi_s = has_s ? mean_bar(-s_star) - c1 * s_star : 0.0;

    rep.worst_margin = kInf;
    for (std::size_t i = 0; i < grid; ++i) {
        double r = -t_star + t_star * static_cast<double>(i) / static_cast<double>(grid - 1);
        r = std::clamp(r, -(1.0 - kEndpointEps) * t_star, -kEndpointEps * t_star);
        const double pi = mean_bar(r) + c1 * r;
        const double vb = var_bar(r);
        const double n = rep.degenerate ? 0.0 : cov_bar(r) / vs_bar * h;
        const double margin = n - pi;
        rep.r.push_back(r);
        rep.pi.push_back(pi);
        rep.n.push_back(n);
        if (!rep.degenerate && vb > 0) {
            rep.m.push_back((pi / std::sqrt(vb)) / (pi_s / std::sqrt(vs_bar)));
            rep.rho.push_back(cov_bar(r) / std::sqrt(vb * vs_bar));
        } else {
            rep.m.push_back(vb > 0 ? pi / std::sqrt(vb) : 0.0);
            rep.rho.push_back(0.0);
        }
        if (margin < rep.worst_margin) {
            rep.worst_margin = margin;
            rep.worst_r = r;
        }
    }
    rep.holds = rep.worst_margin >= -1e-9 * std::max(1.0, x);

    if (has_s) {
        const Eigen::Vector2d theta = corner_theta(sys, s_star, t_star);
        const double d0 = m.d2v_at_zero();
        const double part1 = theta(0) * (m.d2v(t_star - s_star) - m.d2v(s_star));
        double part2;
        if (std::isinf(d0)) {
            part2 = theta(1) == 0.0 ? 0.0 : (theta(1) > 0 ? d0 : -d0);
        } else {
            part2 = theta(1) * (d0 - m.d2v(s_star));
        }
        rep.condition24_value = part1 + part2;
        rep.condition24 = rep.condition24_value >= 0.0;
    } else {
        rep.condition24_value = 0.0;
        rep.condition24 = true;
    }
    return rep;
}

Residuals first_order_residuals(const TandemSystem& sys, double s, double t) {
    s = clamp_inner(s, t);
    const VarianceModel& m = sys.model();
    const Eigen::Vector2d th = corner_theta(sys, s, t);
    Residuals out;
    out.r1 = 2.0 * sys.c2_centered() - (th(0) * m.dv(t) + th(1) * (m.dv(t) - m.dv(t - s)));
    out.r2 = 2.0 * sys.c1_centered() - (th(1) * m.dv(s) + th(0) * (m.dv(s) + m.dv(t - s)));
    return out;
}

DecayReport tandem_decay(const TandemSystem& sys, const TandemOptions& opts) {
    DecayReport rep;
    const FifoResult fifo = fifo_decay(sys.b(), sys.c2(), sys.source(), opts.saddle.rel_tol);
    rep.J_fifo = fifo.J;
    rep.t_F = fifo.t_F;
    rep.c1_critical = c1_critical(sys);

    const double crit = rep.c1_critical.centered;
    const bool regime_a = !rep.c1_critical.infinite && sys.c1_centered() >= crit - 1e-9 * std::max(1.0, std::abs(crit));
    if (regime_a) {
        rep.regime = Regime::A;
        rep.J_lower = fifo.J;
        rep.t_star = fifo.t_F;
        rep.t_ties = fifo.ties;
        rep.tight = Tightness::Tight;
        rep.cost_fifo = fifo.J;
        rep.cost_conditional = 0.0;
        return rep;
    }

    rep.regime = Regime::B;
    const double t0 = sys.t0();
    const auto res = saddle_search([&](double s, double t) { return upsilon_decomposition(sys, s, t); }, t0,
                                   ExpandUpper{t0 + 4.0 * sys.b() / sys.c2_centered()}, opts.saddle);
    rep.J_lower = res.value;
    rep.t_star = res.t_star;
    rep.t_ties = res.t_ties;
    rep.s_ties = res.s_ties;
    double s = clamp_inner(res.s_star, res.t_star);
    if (s <= 1e-6 * res.t_star) {
        rep.s_at_boundary = true;
        s = 0.0;
    }
    rep.s_star = s;
    rep.cost_fifo = fifo_cost(sys.model(), sys.b(), sys.c2_centered(), rep.t_star);
    rep.cost_conditional = std::max(0.0, rep.J_lower - rep.cost_fifo);

    TightnessReport tr = tightness_check(sys, s, rep.t_star, opts.tightness_grid);
    rep.tight_margin = tr.worst_margin;
    rep.tight_worst_r = tr.worst_r;
    if (tr.holds) {
        rep.tight = Tightness::Tight;
    } else {
        rep.tight = tr.degenerate ? Tightness::Unknown : Tightness::NotTight;
    }
    rep.tightness = std::move(tr);

    if (rep.tight == Tightness::NotTight && opts.refine_when_not_tight) {
        double best = rep.J_lower;
        int best_m = 1;
        for (int m = 2; m <= 3; ++m) {
            const double v = multi_constraint_bound(sys, m);
            if (v > best) best = v, best_m = m;
        }
        rep.refined_bound = best;
        rep.refined_m = best_m;
    }
    return rep;
}

SampledPath tandem_mpp(const TandemSystem& sys, const DecayReport& report, std::size_t grid) {
    if (grid < 2) throw InputError("path: grid must have at least 2 points");
    const double mu = sys.mu();
    const double t = report.t_star;
    std::vector<PathConstraint> cons = {{t, level(sys, t)}};
    double s = 0.0;
    if (report.regime == Regime::B && report.s_star && !report.s_at_boundary) {
        s = *report.s_star;
        if (k_func(sys, s, t) > sys.c1_centered() * s) cons.push_back({s, sys.c1_centered() * s});
    }
    const ConditionalPath path(sys.model(), cons);

    SampledPath out;
    out.regime = report.regime;
    out.flagged = sys.model().flagged();
    for (const auto& c : cons) out.constraint_times.push_back(c.time);
    std::vector<double> rs;
    for (std::size_t i = 0; i < grid; ++i) {
        rs.push_back(i + 1 == grid ? 0.0 : -t + t * static_cast<double>(i) / static_cast<double>(grid - 1));
    }
    if (cons.size() == 2) rs.push_back(-s);
    std::sort(rs.begin(), rs.end());
    rs.erase(std::unique(rs.begin(), rs.end()), rs.end());
    for (double r : rs) {
        out.r.push_back(r);
        out.f.push_back(path.value(r) + mu * r);
        out.g.push_back(path.rate(r) + mu);
    }
    return out;
}

double multi_constraint_value(const TandemSystem& sys, double t, const std::vector<double>& s) {
    const auto m = static_cast<Eigen::Index>(s.size());
    const VarianceModel& model = sys.model();
    const double x = level(sys, t);
    // Coordinates: A(-t, 0), then A(-t, -s_i).
    std::vector<double> lower(static_cast<std::size_t>(m + 1), -t);
    std::vector<double> upper(static_cast<std::size_t>(m + 1), 0.0);
    QuadrantProblem p;
    p.mean = Eigen::VectorXd::Zero(m + 1);
    p.thresholds.resize(m + 1);
    p.thresholds(0) = x;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double si = clamp_inner(s[static_cast<std::size_t>(i)], t);
        upper[static_cast<std::size_t>(i + 1)] = -si;
        p.thresholds(i + 1) = x - sys.c1_centered() * si;
    }
    p.cov.resize(m + 1, m + 1);
    for (Eigen::Index i = 0; i <= m; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double c = increment_cov(model, lower[static_cast<std::size_t>(i)], upper[static_cast<std::size_t>(i)],
                                           lower[static_cast<std::size_t>(j)], upper[static_cast<std::size_t>(j)]);
            p.cov(i, j) = c;
            p.cov(j, i) = c;
        }
    }
    return quadrant_rate(p).value;
}

namespace {

double inner_sup(const TandemSystem& sys, int m, double t, const MultiConstraintOptions& opts) {
    const double tol = 1e-7;
    auto ascend = [&](std::vector<double> s) {
        double best = multi_constraint_value(sys, t, s);
        for (int sweep = 0; sweep < opts.sweeps; ++sweep) {
            const double before = best;
            for (int j = 0; j < m; ++j) {
                auto f = [&](double sj) {
                    std::vector<double> trial = s;
                    trial[static_cast<std::size_t>(j)] = sj;
                    return multi_constraint_value(sys, t, trial);
                };
                const auto r = maximize_scalar(f, 0.0, t, tol, opts.coarse_grid);
                if (r.value > best) {
                    best = r.value;
                    s[static_cast<std::size_t>(j)] = r.arg;
                }
            }
            if (best - before <= 1e-10 * std::max(1.0, best)) break;
        }
        return best;
    };

    const auto single = maximize_scalar([&](double s) { return upsilon_decomposition(sys, s, t); }, 0.0, t, tol,
                                        opts.coarse_grid);
    double best = ascend(std::vector<double>(static_cast<std::size_t>(m), single.arg));
    std::mt19937_64 rng(opts.seed ^ static_cast<unsigned long long>(m));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int k = 0; k < opts.restarts; ++k) {
        std::vector<double> s(static_cast<std::size_t>(m));
        for (auto& v : s) v = unif(rng) * t;
        best = std::max(best, ascend(std::move(s)));
    }
    return best;
}

}  // namespace

double multi_constraint_bound(const TandemSystem& sys, int m, std::optional<double> t,
                              const MultiConstraintOptions& opts) {
    if (m < 1 || m > 8) throw InputError("multi_constraint_bound: m must lie in [1, 8]");
    if (t) {
        if (!(*t > sys.t0())) throw InputError("multi_constraint_bound: t must exceed t0");
        return inner_sup(sys, m, *t, opts);
    }
    const double t0 = sys.t0();
    const double span = t0 + 4.0 * sys.b() / sys.c2_centered();
    const auto res = minimize_scalar([&](double tt) { return inner_sup(sys, m, tt, opts); }, t0, ExpandUpper{span}, 1e-7,
                                     opts.coarse_grid);
    return res.value;
}

ReducedRates reduce_tandem(const std::vector<double>& rates, std::size_t target, double mean_rate) {
    if (rates.size() < 2) throw InputError("tandem chain: need at least two rates");
    if (target < 2 || target > rates.size()) throw InputError("tandem chain: target must be a node index in [2, m]");
    for (double c : rates) {
        if (!(c > mean_rate)) throw InputError("tandem chain: every rate must exceed the mean rate");
    }
    ReducedRates out;
    out.c2 = rates[target - 1];
    out.c1 = *std::min_element(rates.begin(), rates.begin() + static_cast<std::ptrdiff_t>(target - 1));
    if (!(out.c1 > out.c2)) {
        std::ostringstream os;
        os << "tandem chain: upstream minimum rate " << out.c1 << " does not exceed target rate " << out.c2
           << "; the target queue never builds";
        throw InputError(os.str());
    }
    return out;
}

}  // namespace gaussq
