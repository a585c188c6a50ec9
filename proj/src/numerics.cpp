#include "gaussq/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "gaussq/errors.hpp"

namespace gaussq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kGolden = 0.3819660112501051;  // 2 - phi
constexpr int kStall = 3;
constexpr double kExpandCap = 1099511627776.0;  // 2^40

struct Sample {
    double x;
    double f;
};

double clean(double y) { return std::isnan(y) ? kInf : y; }

void scan(const std::function<double(double)>& f, double a, double b, std::size_t n, bool include_a,
          std::vector<Sample>& out) {
    for (std::size_t i = include_a ? 0 : 1; i < n; ++i) {
        const double x = i + 1 == n ? b : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
        out.push_back({x, clean(f(x))});
    }
}

bool within(double y, double best, double rel_tol) {
    if (y == best) return true;
    if (!std::isfinite(y) || !std::isfinite(best)) return false;
    return y - best <= rel_tol * std::max(1.0, std::abs(best));
}

// Golden-section search on [a, b]; returns the best point seen.
Sample golden(const std::function<double(double)>& f, double a, double b, double rel_tol, std::size_t& evals) {
    double x1 = a + kGolden * (b - a);
    double x2 = b - kGolden * (b - a);
    double f1 = clean(f(x1));
    double f2 = clean(f(x2));
    evals += 2;
    Sample best = f1 <= f2 ? Sample{x1, f1} : Sample{x2, f2};
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + b);
        if (b - a < rel_tol * std::max(1.0, std::abs(mid))) break;
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + kGolden * (b - a);
            f1 = clean(f(x1));
            if (f1 < best.f || (f1 == best.f && x1 < best.x)) best = {x1, f1};
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = b - kGolden * (b - a);
            f2 = clean(f(x2));
            if (f2 < best.f || (f2 == best.f && x2 < best.x)) best = {x2, f2};
        }
        ++evals;
    }
    return best;
}

ScalarOptResult refine(const std::function<double(double)>& f, std::vector<Sample> pts, double rel_tol) {
    std::sort(pts.begin(), pts.end(), [](const Sample& a, const Sample& b) { return a.x < b.x; });
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (pts[i].f < pts[best].f) best = i;
    }
    if (pts[best].f == kInf) throw NumericalError("scalar optimizer: objective is not finite on the search grid");

    // Smallest argument among the grid points tying with the minimum.
    const double fbest = pts[best].f;
    std::size_t chosen = best;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (within(pts[i].f, fbest, rel_tol)) {
            chosen = i;
            break;
        }
    }

    ScalarOptResult res;
    res.evaluations = pts.size();
    res.lo = pts.front().x;
    res.hi = pts.back().x;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i + 1 < chosen || i > chosen + 1) {
            const bool local = (i == 0 || pts[i].f <= pts[i - 1].f) && (i + 1 == pts.size() || pts[i].f <= pts[i + 1].f);
            if (local && within(pts[i].f, fbest, rel_tol)) res.ties.push_back(pts[i].x);
        }
    }

    if (pts[chosen].f == -kInf) {
        res.arg = pts[chosen].x;
        res.value = pts[chosen].f;
        return res;
    }
    const double a = pts[chosen == 0 ? 0 : chosen - 1].x;
    const double b = pts[std::min(chosen + 1, pts.size() - 1)].x;
    Sample out = pts[chosen];
    if (b > a) {
        const Sample g = golden(f, a, b, rel_tol, res.evaluations);
        if (g.f < out.f) out = g;
    }
    res.arg = out.x;
    res.value = out.f;
    return res;
}

}  // namespace

ScalarOptResult minimize_scalar(const std::function<double(double)>& f, double lo, UpperPolicy hi, double rel_tol,
                                std::size_t grid) {
    if (!(rel_tol >= 1e-12)) throw InputError("minimize_scalar: rel_tol must be >= 1e-12");
    if (grid < 4) throw InputError("minimize_scalar: grid must have at least 4 points");
    std::vector<Sample> pts;
    if (const auto* fixed = std::get_if<FixedUpper>(&hi)) {
        if (!(fixed->hi > lo)) throw InputError("minimize_scalar: empty bracket");
        scan(f, lo, fixed->hi, grid, true, pts);
        return refine(f, std::move(pts), rel_tol);
    }
    double upper = std::get<ExpandUpper>(hi).initial;
    if (!(upper > lo)) throw InputError("minimize_scalar: initial upper end must exceed lo");
    const double cap = kExpandCap * std::max({1.0, std::abs(lo), upper});
    scan(f, lo, upper, grid, true, pts);
    double running = kInf;
    for (const auto& p : pts) running = std::min(running, p.f);
    int stall = 0;
    while (stall < kStall) {
        const double next = 2.0 * upper;
        if (next > cap) {
            std::ostringstream os;
            os << "minimize_scalar: no bracket found below " << cap;
            throw NumericalError(os.str());
        }
        scan(f, upper, next, grid / 2, false, pts);
        double seg = kInf;
        for (std::size_t i = pts.size() - (grid / 2 - 1); i < pts.size(); ++i) seg = std::min(seg, pts[i].f);
        if (seg < running) {
            running = seg;
            stall = 0;
        } else {
            ++stall;
        }
        upper = next;
    }
    return refine(f, std::move(pts), rel_tol);
}

ScalarOptResult maximize_scalar(const std::function<double(double)>& f, double lo, double hi, double rel_tol,
                                std::size_t grid) {
    auto neg = [&f](double x) {
        const double y = f(x);
        return std::isnan(y) ? y : -y;
    };
    ScalarOptResult r = minimize_scalar(neg, lo, FixedUpper{hi}, rel_tol, grid);
    r.value = -r.value;
    return r;
}

SaddleResult saddle_search(const std::function<double(double, double)>& upsilon, double t_lo, UpperPolicy hi,
                           const SaddleOptions& opts) {
    SaddleResult out;
    std::size_t inner_evals = 0;
    auto outer = [&](double t) {
        if (!(t > 0)) return kInf;
        const auto in = maximize_scalar([&](double s) { return upsilon(s, t); }, 0.0, t, opts.rel_tol, opts.inner_grid);
        inner_evals += in.evaluations;
        return in.value;
    };
    const ScalarOptResult res = minimize_scalar(outer, t_lo, hi, opts.rel_tol, opts.outer_grid);
    const auto in = maximize_scalar([&](double s) { return upsilon(s, res.arg); }, 0.0, res.arg, opts.rel_tol,
                                    opts.inner_grid);
    out.t_star = res.arg;
    out.s_star = in.arg;
    out.value = res.value;
    out.t_ties = res.ties;
    out.s_ties = in.ties;
    out.evaluations = inner_evals + in.evaluations;
    return out;
}

}  // namespace gaussq
