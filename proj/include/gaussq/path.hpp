#pragma once

#include <string>
#include <vector>

namespace gaussq {

enum class Regime { A, B };

inline std::string to_string(Regime r) { return r == Regime::A ? "A" : "B"; }

/// Most probable path sampled on nonpositive times, in original units.
/// f is the cumulative path (f(r) = -A(r, 0)), g its derivative, the input rate.
struct SampledPath {
    std::vector<double> r;
    std::vector<double> f;
    std::vector<double> g;
    Regime regime = Regime::A;
    std::vector<double> constraint_times;  // horizons tau with A(-tau, 0) pinned
    bool flagged = false;                  // rate formula not valid for this model (v'(0+) != 0 cusp)
};

}  // namespace gaussq
