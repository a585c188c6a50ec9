#include "gaussq/fifo.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "gaussq/errors.hpp"
#include "gaussq/gaussian_rate.hpp"
#include "gaussq/numerics.hpp"

namespace gaussq {

double fifo_cost(const VarianceModel& model, double b, double c_centered, double t) {
    const double x = b + c_centered * t;
    const double vt = model.v(t);
    if (!(vt > 0)) return std::numeric_limits<double>::infinity();
    return x * x / (2.0 * vt);
}

FifoResult fifo_decay(double b, double c, const SourceModel& source, double rel_tol) {
    if (!(b > 0) || !std::isfinite(b)) throw InputError("fifo: buffer b must be > 0");
    if (!(c > source.mean_rate)) {
        std::ostringstream os;
        os << "fifo: service rate c = " << c << " must exceed the mean rate " << source.mean_rate;
        throw InputError(os.str());
    }
    const double cc = c - source.mean_rate;
    const auto res = minimize_scalar([&](double t) { return fifo_cost(source.variance, b, cc, t); }, 0.0,
                                     ExpandUpper{4.0 * b / cc}, rel_tol);
    FifoResult out;
    out.J = res.value;
    out.t_F = res.arg;
    out.ties = res.ties;
    out.evaluations = res.evaluations;
    return out;
}

SampledPath fifo_mpp(double b, double c, const SourceModel& source, const FifoResult& result, std::size_t grid) {
    if (grid < 2) throw InputError("path: grid must have at least 2 points");
    const double mu = source.mean_rate;
    const double t = result.t_F;
    const ConditionalPath path(source.variance, {{t, b + (c - mu) * t}});
    SampledPath out;
    out.regime = Regime::A;
    out.constraint_times = {t};
    out.flagged = source.variance.flagged();
    for (std::size_t i = 0; i < grid; ++i) {
        const double r = i + 1 == grid ? 0.0 : -t + t * static_cast<double>(i) / static_cast<double>(grid - 1);
        out.r.push_back(r);
        out.f.push_back(path.value(r) + mu * r);
        out.g.push_back(path.rate(r) + mu);
    }
    return out;
}

}  // namespace gaussq
