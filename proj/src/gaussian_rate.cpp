#include "gaussq/gaussian_rate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "gaussq/errors.hpp"

namespace gaussq {

namespace {

constexpr double kJitterRel = 1e-12;

struct Candidate {
    Eigen::VectorXd w;
    bool regularized = false;
};

// Solve cov(S,S) w = d(S), retrying once with jitter on failure.
std::optional<Candidate> solve_block(const Eigen::MatrixXd& cov, const std::vector<int>& set, const Eigen::VectorXd& d,
                                     double trace) {
    const auto k = static_cast<Eigen::Index>(set.size());
    Eigen::MatrixXd block(k, k);
    Eigen::VectorXd rhs(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        rhs(i) = d(set[i]);
        for (Eigen::Index j = 0; j < k; ++j) block(i, j) = cov(set[i], set[j]);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(block);
    const double floor = 1e-14 * std::max(trace, std::numeric_limits<double>::min());
    auto usable = [&](const Eigen::LLT<Eigen::MatrixXd>& f) {
        if (f.info() != Eigen::Success) return false;
        const auto diag = f.matrixLLT().diagonal();
        return diag.minCoeff() > 0 && diag.minCoeff() * diag.minCoeff() > floor;
    };
    if (usable(llt)) return Candidate{llt.solve(rhs), false};
    block.diagonal().array() += kJitterRel * trace;
    llt.compute(block);
    if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0) return Candidate{llt.solve(rhs), true};
    return std::nullopt;
}

RateSolution finish(const QuadrantProblem& p, const std::vector<int>& set, const Eigen::VectorXd& w, bool regularized) {
    const Eigen::Index m = p.mean.size();
    RateSolution sol;
    sol.multipliers = Eigen::VectorXd::Zero(m);
    for (std::size_t i = 0; i < set.size(); ++i) sol.multipliers(set[i]) = w(static_cast<Eigen::Index>(i));
    sol.argmin = p.mean + p.cov * sol.multipliers;
    const Eigen::VectorXd d = p.thresholds - p.mean;
    double value = 0.0;
    for (int i : set) value += d(i) * sol.multipliers(i);
    sol.value = std::max(0.0, 0.5 * value);
    sol.regularized = regularized;
    // Clean rounding on the active coordinates.
    for (int i : set) sol.argmin(i) = std::max(sol.argmin(i), p.thresholds(i));
    // Weakly active constraints (zero multiplier, met with equality) are reported too.
    const double tol = 1e-10 * std::max(1.0, d.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < m; ++i) {
        if (std::abs(sol.argmin(i) - p.thresholds(i)) <= tol) sol.active.push_back(static_cast<int>(i));
    }
    return sol;
}

double scale_of(const Eigen::VectorXd& d) { return std::max(1.0, d.cwiseAbs().maxCoeff()); }

}  // namespace

void check_problem(const QuadrantProblem& p) {
    const Eigen::Index m = p.mean.size();
    if (m < 1) throw InputError("quadrant problem: dimension must be >= 1");
    if (p.cov.rows() != m || p.cov.cols() != m || p.thresholds.size() != m) {
        throw InputError("quadrant problem: mean, covariance and thresholds have inconsistent sizes");
    }
    if (!p.mean.allFinite() || !p.cov.allFinite() || !p.thresholds.allFinite()) {
        throw InputError("quadrant problem: non-finite entries");
    }
    const double scale = std::max(1.0, p.cov.cwiseAbs().maxCoeff());
    if ((p.cov - p.cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw InputError("quadrant problem: covariance is not symmetric");
    }
    if (m <= 32) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.cov, Eigen::EigenvaluesOnly);
        const double trace = p.cov.trace();
        if (es.eigenvalues().minCoeff() < -1e-10 * std::abs(trace)) {
            std::ostringstream os;
            os << "quadrant problem: covariance is not positive semidefinite (eigenvalue "
               << es.eigenvalues().minCoeff() << ")";
            throw InputError(os.str());
        }
    }
}

RateSolution quadrant_rate_enumerate(const QuadrantProblem& p) {
    check_problem(p);
    const int m = static_cast<int>(p.mean.size());
    if (m > 20) throw InputError("quadrant_rate_enumerate: dimension above 20");
    const Eigen::VectorXd d = p.thresholds - p.mean;
    const double trace = p.cov.trace();
    const double tol_x = 1e-10 * scale_of(d);

    if ((d.array() <= 0.0).all()) {
        RateSolution sol;
        sol.argmin = p.mean;
        sol.multipliers = Eigen::VectorXd::Zero(m);
        return sol;
    }

    bool any_singular = false;
    std::vector<int> set;
    for (int size = 1; size <= m; ++size) {
        // Lexicographic combinations of the given size.
        std::vector<int> idx(static_cast<std::size_t>(size));
        for (int i = 0; i < size; ++i) idx[static_cast<std::size_t>(i)] = i;
        while (true) {
            const auto cand = solve_block(p.cov, idx, d, trace);
            if (!cand) {
                any_singular = true;
            } else {
                const double wscale = std::max(1.0, cand->w.cwiseAbs().maxCoeff());
                bool ok = (cand->w.array() >= -1e-12 * wscale).all();
                if (ok) {
                    Eigen::VectorXd lam = Eigen::VectorXd::Zero(m);
                    for (int i = 0; i < size; ++i) lam(idx[static_cast<std::size_t>(i)]) = cand->w(i);
                    const Eigen::VectorXd y = p.cov * lam;
                    ok = ((y - d).array() >= -tol_x).all();
                }
                if (ok) return finish(p, idx, cand->w, cand->regularized);
            }
            int i = size - 1;
            while (i >= 0 && idx[static_cast<std::size_t>(i)] == m - size + i) --i;
            if (i < 0) break;
            ++idx[static_cast<std::size_t>(i)];
            for (int j = i + 1; j < size; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
        }
    }
    throw NumericalError(any_singular ? "quadrant_rate: covariance singular on every candidate active set"
                                     : "quadrant_rate: no active set satisfies the optimality conditions");
}

RateSolution quadrant_rate_active_set(const QuadrantProblem& p) {
    check_problem(p);
    const Eigen::Index m = p.mean.size();
    const Eigen::VectorXd d = p.thresholds - p.mean;
    const double trace = p.cov.trace();
    const double tol = 1e-11 * scale_of(d);

    Eigen::VectorXd lam = Eigen::VectorXd::Zero(m);
    std::vector<char> in_set(static_cast<std::size_t>(m), 0);
    bool regularized = false;
    const int max_iter = static_cast<int>(10 * m + 100);

    for (int outer = 0; outer < max_iter; ++outer) {
        const Eigen::VectorXd grad = d - p.cov * lam;
        Eigen::Index best = -1;
        double best_g = tol;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (!in_set[static_cast<std::size_t>(j)] && grad(j) > best_g) best_g = grad(j), best = j;
        }
        if (best < 0) {
            std::vector<int> set;
            Eigen::VectorXd w;
            for (Eigen::Index j = 0; j < m; ++j) {
                if (in_set[static_cast<std::size_t>(j)]) set.push_back(static_cast<int>(j));
            }
            w.resize(static_cast<Eigen::Index>(set.size()));
            for (std::size_t i = 0; i < set.size(); ++i) w(static_cast<Eigen::Index>(i)) = lam(set[i]);
            return finish(p, set, w, regularized);
        }
        in_set[static_cast<std::size_t>(best)] = 1;

        for (int inner = 0; inner < max_iter; ++inner) {
            std::vector<int> set;
            for (Eigen::Index j = 0; j < m; ++j) {
                if (in_set[static_cast<std::size_t>(j)]) set.push_back(static_cast<int>(j));
            }
            const auto cand = solve_block(p.cov, set, d, trace);
            if (!cand) throw NumericalError("quadrant_rate: singular covariance on the active set after jitter");
            regularized = regularized || cand->regularized;
            if ((cand->w.array() > 0.0).all()) {
                lam.setZero();
                for (std::size_t i = 0; i < set.size(); ++i) lam(set[i]) = cand->w(static_cast<Eigen::Index>(i));
                break;
            }
            // Step towards the unconstrained block solution until a multiplier hits zero.
            double alpha = 1.0;
            for (std::size_t i = 0; i < set.size(); ++i) {
                const double z = cand->w(static_cast<Eigen::Index>(i));
                const double l = lam(set[i]);
                if (z <= 0.0) alpha = std::min(alpha, l / (l - z));
            }
            for (std::size_t i = 0; i < set.size(); ++i) {
                const double z = cand->w(static_cast<Eigen::Index>(i));
                double& l = lam(set[i]);
                l += alpha * (z - l);
                if (l <= 1e-15 * std::max(1.0, std::abs(z))) {
                    l = 0.0;
                    in_set[static_cast<std::size_t>(set[i])] = 0;
                }
            }
        }
    }
    throw NumericalError("quadrant_rate: active-set iteration did not terminate");
}

RateSolution quadrant_rate(const QuadrantProblem& p) {
    if (p.mean.size() > 4) return quadrant_rate_active_set(p);
    try {
        return quadrant_rate_enumerate(p);
    } catch (const NumericalError&) {
        // Nearly dependent constraints can defeat the exact KKT test on every
        // subset; the iterative solver tolerates them.
        return quadrant_rate_active_set(p);
    }
}

double bivariate_rate(const Eigen::Matrix2d& cov, const Eigen::Vector2d& x) {
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    const double q = cov(1, 1) * x(0) * x(0) - 2.0 * cov(0, 1) * x(0) * x(1) + cov(0, 0) * x(1) * x(1);
    return 0.5 * q / det;
}

double clamp_inner(double s, double t, bool* clamped) {
    const double lo = kEndpointEps * t;
    const double hi = (1.0 - kEndpointEps) * t;
    const double out = std::clamp(s, lo, hi);
    if (clamped) *clamped = out != s;
    return out;
}

Sigma2 sigma2(const VarianceModel& model, double s, double t) {
    Sigma2 out;
    out.s = clamp_inner(s, t, &out.clamped);
    const double vt = model.v(t);
    const double vs = model.v(out.s);
    const double g = gamma_cov(model, out.s, t);
    out.cov << vt, g, g, vs;
    const double corr = g / std::sqrt(vt * vs);
    out.near_singular = out.clamped || std::abs(1.0 - corr) < 1e-6;
    return out;
}

ConditionalPath::ConditionalPath(VarianceModel model, std::vector<PathConstraint> constraints)
    : model_(std::move(model)), constraints_(std::move(constraints)) {
    const auto k = static_cast<Eigen::Index>(constraints_.size());
    if (k < 1 || k > 2) throw InputError("conditional path: need one or two constraints");
    for (const auto& c : constraints_) {
        if (!(c.time > 0) || !std::isfinite(c.time)) throw InputError("conditional path: constraint times must be > 0");
    }
    if (k == 2 && constraints_[0].time == constraints_[1].time) {
        throw InputError("conditional path: constraint times must be distinct");
    }
    Eigen::MatrixXd cov(k, k);
    Eigen::VectorXd x(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        x(i) = constraints_[static_cast<std::size_t>(i)].value;
        for (Eigen::Index j = 0; j < k; ++j) {
            cov(i, j) = gamma_cov(model_, constraints_[static_cast<std::size_t>(i)].time,
                                  constraints_[static_cast<std::size_t>(j)].time);
        }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(cov);
    lu.setThreshold(1e-13);
    if (!lu.isInvertible()) throw NumericalError("conditional path: constraint covariance is singular");
    theta_ = lu.solve(x);
}

double ConditionalPath::value(double r) const {
    if (r == 0.0) return 0.0;
    double f = 0.0;
    for (std::size_t j = 0; j < constraints_.size(); ++j) {
        f -= theta_(static_cast<Eigen::Index>(j)) * gamma_cov(model_, -r, constraints_[j].time);
    }
    return f;
}

double ConditionalPath::rate(double r) const {
    // d/dr Gamma(-r, tau) = -(v'(tau + r) + v'(-r)) / 2 with v' odd.
    const double edge = r == 0.0 ? model_.dv_at_zero() : model_.dv(-r);
    double g = 0.0;
    for (std::size_t j = 0; j < constraints_.size(); ++j) {
        g += 0.5 * theta_(static_cast<Eigen::Index>(j)) * (model_.dv(constraints_[j].time + r) + edge);
    }
    return g;
}

double conditional_path_value(const VarianceModel& model, const std::vector<PathConstraint>& constraints, double r) {
    if (r > 0) throw InputError("conditional path: r must be <= 0");
    return ConditionalPath(model, constraints).value(r);
}

}  // namespace gaussq
