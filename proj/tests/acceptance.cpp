// Acceptance run: one PASS/FAIL line per criterion, failure details indented
// below it.  Exit status is nonzero when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gaussq/fifo.hpp"
#include "gaussq/oracle.hpp"
#include "gaussq/priority.hpp"
#include "gaussq/tandem.hpp"

using namespace gaussq;

namespace {

class Checks {
public:
    void require(bool ok, const std::string& what) {
        if (!ok) failures_.push_back(what);
    }
    void near(double got, double want, double abs_tol, const std::string& what) {
        std::ostringstream os;
        os.precision(10);
        os << what << ": got " << got << ", want " << want << " +- " << abs_tol;
        require(std::abs(got - want) <= abs_tol, os.str());
    }
    void near_rel(double got, double want, double rel_tol, const std::string& what) {
        std::ostringstream os;
        os.precision(12);
        os << what << ": got " << got << ", want " << want << " within " << rel_tol << " relative";
        require(std::abs(got - want) <= rel_tol * std::abs(want), os.str());
    }
    void note(const std::string& text) { notes_.push_back(text); }

    const std::vector<std::string>& failures() const { return failures_; }
    const std::vector<std::string>& notes() const { return notes_; }

private:
    std::vector<std::string> failures_;
    std::vector<std::string> notes_;
};

struct Criterion {
    int id;
    std::string title;
    double budget_seconds;  // 0: no runtime limit
    std::function<void(Checks&)> body;
};

std::string str(double x) {
    std::ostringstream os;
    os.precision(8);
    os << x;
    return os.str();
}

SourceModel brownian(double intensity = 1.0, double mean = 0.0) {
    ModelSpec s;
    s.sigma2 = intensity;
    return {make_model(s), mean};
}

SourceModel fbm(double h) {
    ModelSpec s;
    s.kind = ModelKind::fbm;
    s.hurst = h;
    return {make_model(s), 0.0};
}

SourceModel mg(ModelKind kind) {
    ModelSpec s;
    s.kind = kind;
    s.lambda = 0.125;
    s.delta = 2.0;
    if (kind == ModelKind::mg_hyper) {
        s.p1 = 0.25;
        s.nu1 = 5.0;
    }
    return {make_model(s), 0.25};
}

const ModelKind kSessionKinds[] = {ModelKind::mg_exp, ModelKind::mg_hyper, ModelKind::mg_pareto};

TandemSystem session_tandem(ModelKind kind, double b = 0.5, double c1 = 1.1) {
    return TandemSystem(b, c1, 1.0, mg(kind));
}

// Regime-B fbm instance halfway between c2 and the critical rate.
TandemSystem fbm_regime_b(double h) {
    const double critical = c1_critical(TandemSystem(1.0, 2.0, 1.0, fbm(h))).original;
    return TandemSystem(1.0, 0.5 * (1.0 + critical), 1.0, fbm(h));
}

struct SessionCase {
    ModelKind kind;
    double c1_critical, s_star, t_star;
};

void session_instance(Checks& ck, const SessionCase& c) {
    const std::string name = to_string(c.kind);
    const TandemSystem sys = session_tandem(c.kind);
    ck.near(c1_critical(sys).original, c.c1_critical, 0.005, name + " c1 critical");
    const DecayReport r = tandem_decay(sys);
    ck.require(r.regime == Regime::B, name + ": expected regime B");
    ck.require(r.s_star.has_value(), name + ": no inner optimizer");
    if (r.s_star) ck.near(*r.s_star, c.s_star, 0.02, name + " s*");
    ck.near(r.t_star, c.t_star, 0.02, name + " t*");
    const TightnessReport t = tightness_check(sys, r.s_star.value_or(0.0), r.t_star);
    ck.require(t.holds, name + ": tightness check does not hold (worst margin " + str(t.worst_margin) + ")");
    ck.require(t.worst_margin >= -1e-9, name + ": worst margin " + str(t.worst_margin) + " below -1e-9");
    ck.note(name + ": J = " + str(r.J_lower) + ", worst margin " + str(t.worst_margin));
}

double brownian_priority_closed(double lh, double ll, double mh, double ml, double b, double c) {
    if ((lh - ll) * c <= lh * (mh + 2 * ml) - ll * mh) return 2 * b * (c - mh - ml) / (lh + ll);
    const double xi = std::sqrt(ml * ml + (ll / lh) * (c - mh) * (c - mh));
    return b * (xi - ml) / ll;
}

std::vector<Criterion> criteria() {
    std::vector<Criterion> list;

    list.push_back({1, "brownian tandem closed forms", 1.0, [](Checks& ck) {
                        const TandemSystem probe(0.5, 1.5, 1.0, brownian());
                        ck.near(c1_critical(probe).original, 2.0, 1e-6, "c1 critical");
                        for (double c1 : {2.0, 3.0}) {
                            ck.near(tandem_decay(probe.with_c1(c1)).J_lower, 1.0, 1e-6, "J at c1 = " + str(c1));
                        }
                        for (double c1 : {1.2, 1.5}) {
                            ck.near(tandem_decay(probe.with_c1(c1)).J_lower, 0.5 * c1 * c1 / (2 * (c1 - 1.0)), 1e-6,
                                    "J at c1 = " + str(c1));
                        }
                    }});

    list.push_back({2, "fbm FIFO", 1.0, [](Checks& ck) {
                        const double b = 1.0, c = 1.0;
                        for (double h : {0.6, 0.75, 0.9}) {
                            const FifoResult r = fifo_decay(b, c, fbm(h));
                            const double expected =
                                0.5 * std::pow(b / (1 - h), 2 - 2 * h) * std::pow(c / h, 2 * h);
                            ck.near(r.t_F, (b / c) * h / (1 - h), 1e-6, "t_F at H = " + str(h));
                            ck.near_rel(r.J, expected, 1e-8, "J at H = " + str(h));
                        }
                    }});

    list.push_back({3, "M/G/infinity exponential sessions", 5.0,
                    [](Checks& ck) { session_instance(ck, {ModelKind::mg_exp, 1.195, 4.756, 5.169}); }});

    list.push_back({4, "M/G/infinity hyperexponential sessions", 5.0,
                    [](Checks& ck) { session_instance(ck, {ModelKind::mg_hyper, 1.173, 4.700, 5.210}); }});

    list.push_back({5, "M/G/infinity Pareto sessions", 10.0, [](Checks& ck) {
                        session_instance(ck, {ModelKind::mg_pareto, 1.115, 4.373, 5.432});
                        const TandemSystem sys = session_tandem(ModelKind::mg_pareto, 1.0);
                        TandemOptions opts;
                        opts.refine_when_not_tight = false;
                        const DecayReport r = tandem_decay(sys, opts);
                        const TightnessReport t = tightness_check(sys, r.s_star.value_or(0.0), r.t_star);
                        ck.note("pareto b = 1: s* = " + str(r.s_star.value_or(0.0)) + ", t* = " + str(r.t_star) +
                                ", worst margin " + str(t.worst_margin) + " at r = " + str(t.worst_r));
                        ck.require(!t.holds, "pareto b = 1: tightness check reports holds = true, expected false");
                    }});

    list.push_back({6, "session-model derivatives at the origin", 0.0, [](Checks& ck) {
                        for (ModelKind k : kSessionKinds) {
                            const VarianceModel m = mg(k).variance;
                            const std::string name = to_string(k);
                            ck.near(m.dv(0.0), 0.0, 1e-6, name + " v'(0)");
                            ck.near(m.dv_at_zero(), 0.0, 1e-6, name + " v'(0+)");
                            ck.near(m.d2v(0.0), 2 * 0.125 * 2.0, 1e-6, name + " v''(0)");
                            ck.near(m.d2v_at_zero(), 2 * 0.125 * 2.0, 1e-6, name + " v''(0+)");
                        }
                    }});

    list.push_back({7, "brownian priority closed form", 0.0, [](Checks& ck) {
                        const double b = 1.0, c = 1.0, mh = 0.25, ml = 0.25;
                        for (double lh : {0.5, 1.0, 1.5, 2.0, 3.0}) {
                            for (double ll : {0.25, 0.5, 1.0, 2.0, 4.0}) {
                                const PrioritySystem sys(b, c, brownian(lh, mh), brownian(ll, ml));
                                const PriorityReport r = priority_decay(sys);
                                const std::string at = " at (" + str(lh) + ", " + str(ll) + ")";
                                const double closed = priority_brownian(sys);
                                ck.near_rel(closed, brownian_priority_closed(lh, ll, mh, ml, b, c), 1e-12,
                                            "closed form" + at);
                                ck.near_rel(r.J_I, closed, 1e-6, "saddle value" + at);
                                const double lhs = (lh - ll) * c, rhs = lh * (mh + 2 * ml) - ll * mh;
                                if (std::abs(lhs - rhs) > 1e-9) {
                                    ck.require((r.regime == Regime::A) == (lhs <= rhs), "regime" + at);
                                }
                            }
                        }
                    }});

    list.push_back({8, "priority bound ordering", 0.0, [](Checks& ck) {
                        std::mt19937_64 rng(8);
                        std::uniform_real_distribution<double> u(0.0, 1.0);
                        for (int i = 0; i < 20; ++i) {
                            const bool session = i % 2 == 1;
                            SourceModel high = session ? mg(kSessionKinds[i % 3])
                                                       : brownian(0.2 + 2 * u(rng), 0.3 * u(rng));
                            SourceModel low = session ? mg(kSessionKinds[(i / 3) % 3])
                                                      : brownian(0.2 + 2 * u(rng), 0.3 * u(rng));
                            if (session) {
                                high.mean_rate *= 0.5 + u(rng);
                                low.mean_rate *= 0.5 + u(rng);
                            }
                            const double c = high.mean_rate + low.mean_rate + 0.2 + u(rng);
                            const PrioritySystem sys(0.2 + 2 * u(rng), c, high, low);
                            const PriorityReport r = priority_decay(sys);
                            const double tol = 1e-9 * std::max(std::abs(r.J_I), 1e-300);
                            const std::string at = "instance " + std::to_string(i);
                            ck.require(r.J_III <= r.J_II + tol, at + ": J_III " + str(r.J_III) + " > J_II " + str(r.J_II));
                            ck.require(r.J_II <= r.J_I + tol, at + ": J_II " + str(r.J_II) + " > J_I " + str(r.J_I));
                        }
                    }});

    list.push_back({9, "property suite", 0.0, [](Checks& ck) {
                        std::mt19937_64 rng(9);
                        std::uniform_real_distribution<double> u(0.0, 1.0);
                        std::vector<TandemSystem> systems = {TandemSystem(0.5, 1.5, 1.0, brownian()),
                                                             TandemSystem(1.0, 1.2, 1.0, fbm(0.75))};
                        for (ModelKind k : kSessionKinds) systems.push_back(session_tandem(k));
                        for (const auto& sys : systems) {
                            const std::string name = to_string(sys.model().kind());
                            int bad_branch = 0, bad_decomp = 0;
                            for (int i = 0; i < 1000; ++i) {
                                const double t = sys.t0() * (1.0 + 1e-6) + 20.0 * u(rng);
                                const double s = t * (0.01 + 0.98 * u(rng));
                                const double quad = upsilon_quadrant(sys, s, t);
                                if (std::abs(upsilon(sys, s, t) - quad) > 1e-9 * std::max(1.0, quad)) ++bad_branch;
                                if (std::abs(upsilon_decomposition(sys, s, t) - quad) > 1e-9 * std::max(1.0, quad)) {
                                    ++bad_decomp;
                                }
                            }
                            ck.require(bad_branch == 0, name + ": branch form differs from the quadrant rate at " +
                                                            std::to_string(bad_branch) + " of 1000 points");
                            ck.require(bad_decomp == 0, name + ": decomposition differs from the quadrant rate at " +
                                                            std::to_string(bad_decomp) + " of 1000 points");
                        }
                        for (ModelKind k : kSessionKinds) {
                            const std::string name = to_string(k);
                            const TandemSystem sys = session_tandem(k);
                            const DecayReport r = tandem_decay(sys);
                            if (!r.s_star) {
                                ck.require(false, name + ": no inner optimizer");
                                continue;
                            }
                            const double s = *r.s_star, t = r.t_star;
                            const Residuals res = first_order_residuals(sys, s, t);
                            ck.near(res.r1, 0.0, 1e-4, name + " residual in t");
                            ck.near(res.r2, 0.0, 1e-4, name + " residual in s");
                            const SampledPath p = tandem_mpp(sys, r, 512);
                            ck.near(p.f.back(), 0.0, 1e-9, name + " f(0)");
                            ck.near_rel(p.f.front(), -(sys.b() + sys.c2() * t), 1e-9, name + " f(-t*)");
                            ck.near(p.g.front(), sys.c2(), 1e-6, name + " g(-t*)");
                            const auto it = std::find(p.r.begin(), p.r.end(), -s);
                            ck.require(it != p.r.end(), name + ": -s* missing from the path grid");
                            if (it != p.r.end()) {
                                const std::size_t i = static_cast<std::size_t>(it - p.r.begin());
                                ck.near_rel(p.f[i], -sys.c1() * s, 1e-9, name + " f(-s*)");
                                ck.near(p.g[i], sys.c1(), 1e-6, name + " g(-s*)");
                            }
                            const double floor = fifo_decay(sys.b(), sys.c2(), sys.source()).J;
                            double prev = INFINITY;
                            TandemOptions opts;
                            opts.refine_when_not_tight = false;
                            for (double c1 : {1.02, 1.05, 1.1, 1.15, 1.2, 1.3, 2.0}) {
                                const double J = tandem_decay(sys.with_c1(c1), opts).J_lower;
                                ck.require(J <= prev + 1e-12, name + ": J increases at c1 = " + str(c1));
                                ck.require(J >= floor - 1e-12, name + ": J below the FIFO floor at c1 = " + str(c1));
                                prev = J;
                            }
                        }
                    }});

    list.push_back({10, "oracle agreement", 0.0, [](Checks& ck) {
                        using clock = std::chrono::steady_clock;
                        const auto grid_start = clock::now();
                        for (double c1 : {1.2, 1.5, 2.0, 3.0}) {
                            const TandemSystem sys(0.5, c1, 1.0, brownian());
                            const double J = tandem_decay(sys).J_lower;
                            const GridOracleResult g = grid_qp_decay(sys, default_grid_config(sys));
                            ck.require(g.converged, "grid oracle did not converge at brownian c1 = " + str(c1));
                            ck.near_rel(g.estimate, J, 0.01, "grid oracle at brownian c1 = " + str(c1));
                        }
                        for (ModelKind k : kSessionKinds) {
                            const TandemSystem sys = session_tandem(k);
                            const double J = tandem_decay(sys).J_lower;
                            const GridOracleResult g = grid_qp_decay(sys, default_grid_config(sys));
                            ck.require(g.converged, "grid oracle did not converge for " + to_string(k));
                            ck.near_rel(g.estimate, J, 0.01, "grid oracle for " + to_string(k));
                        }
                        const double grid_seconds = std::chrono::duration<double>(clock::now() - grid_start).count();
                        ck.require(grid_seconds < 60.0, "grid oracle took " + str(grid_seconds) + " s (budget 60 s)");

                        const auto mc_start = clock::now();
                        const TandemSystem sys(0.5, 3.0, 1.0, brownian());
                        const double J = tandem_decay(sys).J_lower;
                        McConfig cfg;
                        cfg.n_values = {2, 3, 4, 5, 6, 7, 8};  // n J <= 8
                        cfg.samples = 100000;
                        cfg.dt = 0.01;
                        cfg.horizon = 5.0;
                        cfg.seed = 10;
                        const McFit fit = mc_decay_fit(sys, cfg);
                        const double mc_seconds = std::chrono::duration<double>(clock::now() - mc_start).count();
                        ck.near_rel(fit.slope, J, 0.15, "Monte Carlo slope");
                        ck.require(mc_seconds < 120.0, "Monte Carlo took " + str(mc_seconds) + " s (budget 120 s)");
                        ck.note("grid " + str(grid_seconds) + " s, Monte Carlo slope " + str(fit.slope) + " +- " +
                                str(fit.std_error) + " against " + str(J) + " in " + str(mc_seconds) + " s");
                    }});

    list.push_back({11, "fbm non-tightness", 0.0, [](Checks& ck) {
                        TandemOptions opts;
                        opts.refine_when_not_tight = false;
                        for (double h : {0.6, 0.75, 0.9}) {
                            const TandemSystem sys = fbm_regime_b(h);
                            const DecayReport r = tandem_decay(sys, opts);
                            const std::string at = "H = " + str(h);
                            ck.require(r.regime == Regime::B, at + ": expected regime B");
                            const TightnessReport t = tightness_check(sys, r.s_star.value_or(0.0), r.t_star);
                            ck.require(!t.condition24, at + ": condition24 reports true");
                        }
                        const TandemSystem sys = fbm_regime_b(0.75);
                        const double m1 = multi_constraint_bound(sys, 1);
                        const double m2 = multi_constraint_bound(sys, 2);
                        ck.require(m2 >= m1, "two-constraint bound " + str(m2) + " below one-constraint " + str(m1));
                        ck.note("H = 0.75: m = 1 bound " + str(m1) + ", m = 2 bound " + str(m2) + ", improvement " +
                                str(m2 - m1));
                    }});

    return list;
}

}  // namespace

int main() {
    int failed = 0;
    for (const Criterion& c : criteria()) {
        Checks ck;
        const auto start = std::chrono::steady_clock::now();
        try {
            c.body(ck);
        } catch (const std::exception& e) {
            ck.require(false, std::string("exception: ") + e.what());
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.budget_seconds > 0 && seconds >= c.budget_seconds) {
            ck.require(false, "runtime " + str(seconds) + " s exceeds " + str(c.budget_seconds) + " s");
        }
        const bool ok = ck.failures().empty();
        if (!ok) ++failed;
        std::printf("%s  criterion %2d  %-42s %8.2f s\n", ok ? "PASS" : "FAIL", c.id, c.title.c_str(), seconds);
        for (const auto& f : ck.failures()) std::printf("        failed: %s\n", f.c_str());
        for (const auto& n : ck.notes()) std::printf("        %s\n", n.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of 11 criteria passed\n", 11 - failed);
    return failed == 0 ? 0 : 1;
}
