#include "gaussq/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include <Eigen/Dense>
#include <boost/random/normal_distribution.hpp>
#include <unsupported/Eigen/FFT>

#include "gaussq/errors.hpp"
#include "gaussq/gaussian_rate.hpp"

namespace gaussq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kBlock = 1024;

// ---------------------------------------------------------------- grid QP

struct GridNode {
    double t;
    double lower;  // value at the previous inner resolution (a lower bound now)
    double value;
    std::size_t s_points;
};

template <class ValueFn>
GridOracleResult run_grid(const GridOracleConfig& cfg, ValueFn value_at) {
    if (cfg.t_grid.empty()) throw InputError("grid oracle: t_grid is empty");
    if (cfg.s_points < 8) throw InputError("grid oracle: s_points must be >= 8");
    if (cfg.levels < 1) throw InputError("grid oracle: levels must be >= 1");

    std::vector<GridNode> nodes;
    for (double t : cfg.t_grid) nodes.push_back({t, 0.0, kInf, 0});
    std::sort(nodes.begin(), nodes.end(), [](const GridNode& a, const GridNode& b) { return a.t < b.t; });

    GridOracleResult out;
    std::size_t best = 0;
    for (int level = 0; level < cfg.levels; ++level) {
        const std::size_t S = cfg.s_points << level;
        if (level > 0) {
            // Midpoints of the two intervals on either side of the incumbent.
            std::vector<double> fresh;
            const std::size_t lo = best >= 2 ? best - 2 : 0;
            const std::size_t hi = std::min(best + 2, nodes.size() - 1);
            for (std::size_t i = lo; i < hi; ++i) fresh.push_back(0.5 * (nodes[i].t + nodes[i + 1].t));
            for (double t : fresh) nodes.push_back({t, 0.0, kInf, 0});
            std::sort(nodes.begin(), nodes.end(), [](const GridNode& a, const GridNode& b) { return a.t < b.t; });
        }
        std::vector<std::size_t> order(nodes.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return nodes[a].lower < nodes[b].lower; });
        double incumbent = kInf;
        std::size_t arg = order.front();
        for (std::size_t idx : order) {
            GridNode& node = nodes[idx];
            if (node.lower >= incumbent) break;
            try {
                node.value = value_at(node.t, S);
            } catch (const std::exception& e) {
                std::ostringstream os;
                os << "grid oracle: level " << level << " failed at t = " << node.t << ": " << e.what();
                throw NumericalError(os.str());
            }
            node.s_points = S;
            if (node.value < incumbent) incumbent = node.value, arg = idx;
        }
        // Nodes not re-evaluated keep their previous value as a lower bound.
        for (auto& node : nodes) {
            if (node.s_points == S) node.lower = node.value;
        }
        best = arg;
        out.level_values.push_back(incumbent);
        out.level_t_arg.push_back(nodes[best].t);
        out.level_s_points.push_back(S);
        out.level_t_points.push_back(nodes.size());
        if (level >= 2) {
            const double prev = out.level_values[out.level_values.size() - 2];
            if (std::abs(incumbent - prev) < cfg.convergence * std::abs(incumbent)) {
                out.converged = true;
                break;
            }
        }
    }
    out.estimate = out.level_values.back();
    return out;
}

std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
    return out;
}

// ---------------------------------------------------------------- Monte Carlo

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stationary Gaussian increment sequences of length K, two per draw.
class IncrementSampler {
public:
    IncrementSampler(const VarianceModel& model, double var_scale, double dt, std::size_t K) : K_(K) {
        auto gamma = [&](std::size_t j) {
            const double jd = static_cast<double>(j);
            return var_scale * 0.5 *
                   (model.v((jd + 1.0) * dt) + model.v(std::abs(jd - 1.0) * dt) - 2.0 * model.v(jd * dt));
        };
        std::size_t m = 1;
        while (m < K) m <<= 1;
        M_ = 2 * m;
        std::vector<std::complex<double>> c(M_);
        for (std::size_t j = 0; j < M_; ++j) c[j] = gamma(std::min(j, M_ - j));
        Eigen::FFT<double> fft;
        std::vector<std::complex<double>> lam;
        fft.fwd(lam, c);
        double lmax = 0.0;
        double lmin = kInf;
        for (const auto& l : lam) lmax = std::max(lmax, l.real()), lmin = std::min(lmin, l.real());
        if (lmin >= -1e-10 * lmax) {
            circulant_ = true;
            root_.resize(M_);
            for (std::size_t k = 0; k < M_; ++k) root_[k] = std::sqrt(std::max(lam[k].real(), 0.0) / static_cast<double>(M_));
            return;
        }
        // Dense fallback.
        Eigen::MatrixXd cov(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
        for (std::size_t i = 0; i < K; ++i) {
            for (std::size_t j = 0; j < K; ++j) cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = gamma(i > j ? i - j : j - i);
        }
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success) {
            cov.diagonal().array() += 1e-12 * cov.trace();
            llt.compute(cov);
            if (llt.info() != Eigen::Success) throw NumericalError("monte carlo: increment covariance is not positive definite");
        }
        chol_ = llt.matrixL();
    }

    template <class Rng>
    void draw(Rng& rng, Eigen::FFT<double>& fft, std::vector<double>& a, std::vector<double>& b) const {
        boost::random::normal_distribution<double> z;
        a.resize(K_);
        b.resize(K_);
        if (circulant_) {
            std::vector<std::complex<double>> xi(M_);
            for (std::size_t k = 0; k < M_; ++k) {
                const double re = z(rng);
                const double im = z(rng);
                xi[k] = root_[k] * std::complex<double>(re, im);
            }
            std::vector<std::complex<double>> y;
            fft.fwd(y, xi);
            for (std::size_t i = 0; i < K_; ++i) a[i] = y[i].real(), b[i] = y[i].imag();
            return;
        }
        Eigen::VectorXd u(static_cast<Eigen::Index>(K_));
        Eigen::VectorXd w(static_cast<Eigen::Index>(K_));
        for (std::size_t i = 0; i < K_; ++i) u(static_cast<Eigen::Index>(i)) = z(rng);
        for (std::size_t i = 0; i < K_; ++i) w(static_cast<Eigen::Index>(i)) = z(rng);
        const Eigen::VectorXd ua = chol_ * u;
        const Eigen::VectorXd wb = chol_ * w;
        for (std::size_t i = 0; i < K_; ++i) a[i] = ua(static_cast<Eigen::Index>(i)), b[i] = wb(static_cast<Eigen::Index>(i));
    }

private:
    std::size_t K_;
    std::size_t M_ = 0;
    bool circulant_ = false;
    std::vector<double> root_;
    Eigen::MatrixXd chol_;
};

struct QueueSample {
    double value;
    double gap;
};

// y[0] is the most recent increment A(-dt, 0); drift already included.
// Supremum form and forward Lindley recursion of a queue drained at rate c.
QueueSample queue_length(const std::vector<double>& y, double c, double dt) {
    double s = 0.0;
    double sup = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
        s += y[k] - c * dt;
        sup = std::max(sup, s);
    }
    double q = 0.0;
    for (std::size_t k = y.size(); k-- > 0;) q = std::max(0.0, q + y[k] - c * dt);
    return {sup, std::abs(q - sup)};
}

double t_star_estimate(const McSystem& sys) {
    if (const auto* f = std::get_if<FifoSystem>(&sys)) return fifo_decay(f->b, f->c, f->source).t_F;
    if (const auto* t = std::get_if<TandemSystem>(&sys)) {
        return std::max(fifo_decay(t->b(), t->c2(), t->source()).t_F, t->t0());
    }
    const auto& p = std::get<PrioritySystem>(sys);
    return fifo_decay(p.b(), p.c(), p.aggregate()).t_F;
}

}  // namespace

// ---------------------------------------------------------------- grid QP API

double grid_qp_value(const TandemSystem& sys, double t, std::size_t S) {
    // Coordinate j is A(-t, -s_j) with s_j = t j / S, j = 0..S-1.
    std::vector<double> v(S + 1);
    for (std::size_t k = 0; k <= S; ++k) v[k] = sys.model().v(t * static_cast<double>(k) / static_cast<double>(S));
    const auto n = static_cast<Eigen::Index>(S);
    QuadrantProblem p;
    p.mean = Eigen::VectorXd::Zero(n);
    p.thresholds.resize(n);
    p.cov.resize(n, n);
    const double x = sys.b() + sys.c2_centered() * t;
    for (std::size_t i = 0; i < S; ++i) {
        p.thresholds(static_cast<Eigen::Index>(i)) = x - sys.c1_centered() * t * static_cast<double>(i) / static_cast<double>(S);
        for (std::size_t j = 0; j <= i; ++j) {
            const double c = 0.5 * (v[S - i] + v[S - j] - v[i - j]);
            p.cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c;
            p.cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = c;
        }
    }
    return quadrant_rate(p).value;
}

double grid_qp_value(const PrioritySystem& sys, double t, std::size_t S) {
    // Coordinate j is A_h(-t, -s_j) + A_l(-t, 0), s_j = t j / S, j = 0..S.
    std::vector<double> vh(S + 1);
    for (std::size_t k = 0; k <= S; ++k) vh[k] = sys.high().variance.v(t * static_cast<double>(k) / static_cast<double>(S));
    const double vl = sys.low().variance.v(t);
    const auto n = static_cast<Eigen::Index>(S + 1);
    QuadrantProblem p;
    p.mean.resize(n);
    p.thresholds.resize(n);
    p.cov.resize(n, n);
    for (std::size_t i = 0; i <= S; ++i) {
        const double s = t * static_cast<double>(i) / static_cast<double>(S);
        p.mean(static_cast<Eigen::Index>(i)) = sys.high().mean_rate * (t - s) + sys.low().mean_rate * t;
        p.thresholds(static_cast<Eigen::Index>(i)) = sys.b() + sys.c() * (t - s);
        for (std::size_t j = 0; j <= i; ++j) {
            const double c = 0.5 * (vh[S - i] + vh[S - j] - vh[i - j]) + vl;
            p.cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c;
            p.cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = c;
        }
    }
    return quadrant_rate(p).value;
}

GridOracleConfig default_grid_config(const TandemSystem& sys) {
    const double tF = fifo_decay(sys.b(), sys.c2(), sys.source()).t_F;
    const double t0 = sys.t0();
    GridOracleConfig cfg;
    cfg.t_grid = linspace(t0, t0 + 3.0 * std::max(tF, t0), 25);
    cfg.t_grid.erase(cfg.t_grid.begin());
    cfg.t_grid.insert(cfg.t_grid.begin(), t0 * (1.0 + 1e-12));
    return cfg;
}

GridOracleConfig default_grid_config(const PrioritySystem& sys) {
    const double tF = fifo_decay(sys.b(), sys.c(), sys.aggregate()).t_F;
    GridOracleConfig cfg;
    cfg.t_grid = linspace(0.05 * tF, 4.0 * tF, 25);
    return cfg;
}

GridOracleResult grid_qp_decay(const TandemSystem& sys, const GridOracleConfig& cfg) {
    return run_grid(cfg, [&](double t, std::size_t S) { return grid_qp_value(sys, t, S); });
}

GridOracleResult grid_qp_decay(const PrioritySystem& sys, const GridOracleConfig& cfg) {
    return run_grid(cfg, [&](double t, std::size_t S) { return grid_qp_value(sys, t, S); });
}

// ---------------------------------------------------------------- Monte Carlo API

std::uint64_t block_seed(std::uint64_t seed, std::uint64_t n, std::uint64_t block) {
    return splitmix64(splitmix64(splitmix64(seed) ^ n) ^ block);
}

McConfig default_mc_config(const McSystem& sys) {
    const double ts = t_star_estimate(sys);
    McConfig cfg;
    cfg.dt = ts / 50.0;
    double t0 = 0.0;
    if (const auto* t = std::get_if<TandemSystem>(&sys)) t0 = t->t0();
    cfg.horizon = std::max(4.0 * ts, 20.0 * t0);
    return cfg;
}

McEstimate mc_overflow(const McSystem& sys, int n, const McConfig& cfg) {
    if (n < 1) throw InputError("monte carlo: source count must be >= 1");
    if (cfg.samples < 10000) throw InputError("monte carlo: samples must be >= 10000");
    if (!(cfg.dt > 0) || !(cfg.horizon > 0)) throw InputError("monte carlo: dt and horizon must be > 0");
    const double ts = t_star_estimate(sys);
    if (cfg.dt > ts / 50.0 * (1.0 + 1e-9)) {
        std::ostringstream os;
        os << "monte carlo: dt = " << cfg.dt << " exceeds t*/50 = " << ts / 50.0;
        throw InputError(os.str());
    }
    if (cfg.horizon < 4.0 * ts * (1.0 - 1e-9)) {
        std::ostringstream os;
        os << "monte carlo: horizon = " << cfg.horizon << " is below 4 t* = " << 4.0 * ts;
        throw InputError(os.str());
    }
    const auto K = static_cast<std::size_t>(std::ceil(cfg.horizon / cfg.dt - 1e-9));
    const double scale = 1.0 / static_cast<double>(n);

    // Streams: one aggregate stream, or high then low for priority.
    std::vector<IncrementSampler> samplers;
    std::vector<double> drift;
    double b = 0.0;
    if (const auto* f = std::get_if<FifoSystem>(&sys)) {
        if (!(f->c > f->source.mean_rate)) throw InputError("monte carlo: unstable fifo system");
        samplers.emplace_back(f->source.variance, scale, cfg.dt, K);
        drift.push_back(f->source.mean_rate * cfg.dt);
        b = f->b;
    } else if (const auto* t = std::get_if<TandemSystem>(&sys)) {
        samplers.emplace_back(t->model(), scale, cfg.dt, K);
        drift.push_back(t->mu() * cfg.dt);
        b = t->b();
    } else {
        const auto& p = std::get<PrioritySystem>(sys);
        samplers.emplace_back(p.high().variance, scale, cfg.dt, K);
        samplers.emplace_back(p.low().variance, scale, cfg.dt, K);
        drift.push_back(p.high().mean_rate * cfg.dt);
        drift.push_back(p.low().mean_rate * cfg.dt);
        b = p.b();
    }

    const std::size_t blocks = (cfg.samples + kBlock - 1) / kBlock;
    unsigned workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, blocks));

    struct Partial {
        std::size_t hits = 0;
        double gap = 0.0;
    };
    std::vector<Partial> partial(workers);

    auto work = [&](unsigned w) {
        Eigen::FFT<double> fft;
        std::vector<std::vector<double>> pa(samplers.size());
        std::vector<std::vector<double>> pb(samplers.size());
        std::vector<double> tot(K);
        Partial acc;
        auto evaluate = [&](const std::vector<double>& hi, const std::vector<double>* lo) {
            if (const auto* f = std::get_if<FifoSystem>(&sys)) {
                const auto q = queue_length(hi, f->c, cfg.dt);
                acc.gap = std::max(acc.gap, q.gap);
                return q.value >= b;
            }
            if (const auto* t = std::get_if<TandemSystem>(&sys)) {
                const auto total = queue_length(hi, t->c2(), cfg.dt);
                const auto first = queue_length(hi, t->c1(), cfg.dt);
                acc.gap = std::max({acc.gap, total.gap, first.gap});
                return total.value - first.value >= b;
            }
            const auto& p = std::get<PrioritySystem>(sys);
            for (std::size_t k = 0; k < K; ++k) tot[k] = hi[k] + (*lo)[k];
            const auto total = queue_length(tot, p.c(), cfg.dt);
            const auto high = queue_length(hi, p.c(), cfg.dt);
            acc.gap = std::max({acc.gap, total.gap, high.gap});
            return total.value - high.value >= b;
        };
        for (std::size_t blk = w; blk < blocks; blk += workers) {
            std::mt19937_64 rng(block_seed(cfg.seed, static_cast<std::uint64_t>(n), blk));
            const std::size_t count = std::min(kBlock, cfg.samples - blk * kBlock);
            for (std::size_t i = 0; i < count; i += 2) {
                for (std::size_t c = 0; c < samplers.size(); ++c) {
                    samplers[c].draw(rng, fft, pa[c], pb[c]);
                    for (auto& y : pa[c]) y += drift[c];
                    for (auto& y : pb[c]) y += drift[c];
                }
                const bool two = samplers.size() == 2;
                if (evaluate(pa[0], two ? &pa[1] : nullptr)) ++acc.hits;
                if (i + 1 < count && evaluate(pb[0], two ? &pb[1] : nullptr)) ++acc.hits;
            }
        }
        partial[w] = acc;
    };

    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& th : pool) th.join();
    }

    McEstimate est;
    est.n = n;
    est.samples = cfg.samples;
    for (const auto& p : partial) {
        est.hits += p.hits;
        est.lindley_gap = std::max(est.lindley_gap, p.gap);
    }
    const double N = static_cast<double>(cfg.samples);
    est.p_hat = static_cast<double>(est.hits) / N;
    est.half_width = est.hits == 0 ? 3.0 / N : 1.96 * std::sqrt(est.p_hat * (1.0 - est.p_hat) / N);
    return est;
}

McFit mc_decay_fit(const McSystem& sys, const McConfig& cfg) {
    McFit fit;
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (int n : cfg.n_values) {
        const McEstimate e = mc_overflow(sys, n, cfg);
        fit.points.push_back(e);
    }
    std::vector<const McEstimate*> usable;
    for (const auto& e : fit.points) {
        if (e.hits > 0 && e.hits < e.samples) usable.push_back(&e);
    }
    if (usable.size() < 3) {
        std::ostringstream os;
        os << "monte carlo fit: " << usable.size() << " source counts with nonzero overflow estimates; need 3";
        throw NumericalError(os.str());
    }
    for (const auto* e : usable) {
        const double w = static_cast<double>(e->hits) / (1.0 - e->p_hat);
        sw += w;
        sx += w * e->n;
        sy += w * -std::log(e->p_hat);
    }
    const double xm = sx / sw;
    const double ym = sy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (const auto* e : usable) {
        const double w = static_cast<double>(e->hits) / (1.0 - e->p_hat);
        sxx += w * (e->n - xm) * (e->n - xm);
        sxy += w * (e->n - xm) * (-std::log(e->p_hat) - ym);
    }
    fit.slope = sxy / sxx;
    fit.intercept = ym - fit.slope * xm;
    fit.std_error = std::sqrt(1.0 / sxx);
    return fit;
}

}  // namespace gaussq
