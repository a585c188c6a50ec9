#include <doctest.h>

#include <cmath>

#include "gaussq/errors.hpp"
#include "gaussq/fifo.hpp"

using namespace gaussq;

namespace {

SourceModel source(ModelKind kind, double mean = 0.0, double hurst = 0.5) {
    ModelSpec s;
    s.kind = kind;
    s.hurst = hurst;
    s.lambda = 0.125;
    s.delta = 2.0;
    if (kind == ModelKind::mg_hyper) {
        s.p1 = 0.25;
        s.nu1 = 5.0;
    }
    return {make_model(s), mean};
}

// Dense scan of the cost, refined once around the best node.
double brute_min(const VarianceModel& m, double b, double c, double hi) {
    auto cost = [&](double t) { return (b + c * t) * (b + c * t) / (2 * m.v(t)); };
    double best = INFINITY, arg = 0;
    for (int i = 1; i <= 20000; ++i) {
        const double t = hi * i / 20000.0;
        if (cost(t) < best) best = cost(t), arg = t;
    }
    const double step = hi / 20000.0;
    for (int i = -1000; i <= 1000; ++i) {
        const double t = arg + step * i / 1000.0;
        if (t > 0) best = std::min(best, cost(t));
    }
    return best;
}

}  // namespace

TEST_CASE("brownian FIFO closed form") {
    const FifoResult r = fifo_decay(0.5, 1.0, source(ModelKind::brownian));
    CHECK(r.J == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(r.t_F == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("fbm FIFO closed form") {
    for (double h : {0.6, 0.75, 0.9}) {
        const FifoResult r = fifo_decay(1.0, 1.0, source(ModelKind::fbm, 0.0, h));
        const double expected = 0.5 * std::pow(1.0 / (1 - h), 2 - 2 * h) * std::pow(1.0 / h, 2 * h);
        CHECK(r.t_F == doctest::Approx(h / (1 - h)).epsilon(1e-6));
        CHECK(r.J == doctest::Approx(expected).epsilon(1e-8));
    }
    CHECK(fifo_decay(1.0, 1.0, source(ModelKind::fbm, 0.0, 0.75)).J == doctest::Approx(1.5396).epsilon(1e-4));
}

TEST_CASE("small buffers have small decay rates") {
    double prev = INFINITY;
    for (double b : {1e-1, 1e-2, 1e-3, 1e-4}) {
        const double J = fifo_decay(b, 1.0, source(ModelKind::brownian)).J;
        CHECK(J < prev);
        CHECK(J == doctest::Approx(2 * b).epsilon(1e-8));
        prev = J;
    }
}

TEST_CASE("decay rate matches a brute-force scan") {
    for (ModelKind k : {ModelKind::mg_exp, ModelKind::mg_hyper, ModelKind::mg_pareto}) {
        const SourceModel src = source(k, 0.25);
        const FifoResult r = fifo_decay(0.5, 1.0, src);
        CHECK(r.J == doctest::Approx(brute_min(src.variance, 0.5, 0.75, 40.0)).epsilon(1e-7));
        CHECK(fifo_cost(src.variance, 0.5, 0.75, r.t_F) == doctest::Approx(r.J).epsilon(1e-10));
    }
}

TEST_CASE("stability and buffer are validated") {
    CHECK_THROWS_AS(fifo_decay(0.5, 0.25, source(ModelKind::mg_exp, 0.25)), InputError);
    CHECK_THROWS_AS(fifo_decay(-1.0, 1.0, source(ModelKind::brownian)), InputError);
}

TEST_CASE("most probable path of a brownian FIFO queue") {
    const SourceModel src = source(ModelKind::brownian);
    const FifoResult r = fifo_decay(0.5, 1.0, src);
    const SampledPath p = fifo_mpp(0.5, 1.0, src, r, 257);
    REQUIRE(p.r.size() == 257);
    CHECK(p.f.back() == doctest::Approx(0.0).scale(1.0));
    CHECK(p.f.front() == doctest::Approx(-(0.5 + 1.0 * r.t_F)).epsilon(1e-9));
    for (std::size_t i = 1; i + 1 < p.g.size(); ++i) CHECK(p.g[i] == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("rate path endpoints and symmetry for smooth sources") {
    for (ModelKind k : {ModelKind::mg_exp, ModelKind::mg_hyper, ModelKind::mg_pareto}) {
        const SourceModel src = source(k, 0.25);
        const FifoResult r = fifo_decay(0.5, 1.0, src);
        const SampledPath p = fifo_mpp(0.5, 1.0, src, r, 401);
        CHECK(p.r.front() == doctest::Approx(-r.t_F));
        CHECK(p.r.back() == 0.0);
        CHECK(p.g.front() == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(p.g.back() == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(p.f.back() == doctest::Approx(0.0).scale(1.0));
        // Centered rate is symmetric about -t_F / 2.
        for (std::size_t i = 0; i < p.g.size(); ++i) {
            CHECK(p.g[i] == doctest::Approx(p.g[p.g.size() - 1 - i]).epsilon(1e-9));
        }
    }
    const SourceModel f = source(ModelKind::fbm, 0.0, 0.75);
    const FifoResult r = fifo_decay(1.0, 1.0, f);
    const SampledPath p = fifo_mpp(1.0, 1.0, f, r, 201);
    CHECK(p.g.front() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(p.g.back() == doctest::Approx(1.0).epsilon(1e-6));
}
