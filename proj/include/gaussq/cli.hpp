#pragma once

// Batch front end: JSON job files in, text reports and CSV out.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gaussq/variance_models.hpp"

namespace gaussq::cli {

enum ExitCode { kOk = 0, kInputError = 1, kNumericalError = 2, kOracleDisagreement = 3 };

enum class SystemKind { fifo, tandem, tandem_chain, priority };

struct ClassSpec {
    ModelSpec model;
    double mean_rate = 0.0;
};

struct JobOptions {
    double rel_tol = 1e-10;
    std::size_t outer_grid = 256;
    std::size_t inner_grid = 256;
    std::size_t tightness_grid = 2048;
    std::size_t path_grid = 512;
    bool oracle = true;  // grid oracle in verify
    bool mc = false;     // Monte Carlo in verify
    std::uint64_t seed = 1;
    double oracle_tolerance = 0.01;
    double mc_tolerance = 0.15;
    std::size_t grid_s_points = 16;
    int grid_levels = 5;
    std::vector<int> mc_n = {2, 3, 4, 5, 6, 7, 8};
    std::size_t mc_samples = 100000;
    std::optional<double> mc_dt;
    std::optional<double> mc_horizon;
};

struct JobSpec {
    SystemKind kind = SystemKind::fifo;
    std::optional<ClassSpec> source;  // fifo, tandem, tandem_chain
    double b = 0.0;
    double c = 0.0;   // fifo, priority
    double c1 = 0.0;  // tandem
    double c2 = 0.0;  // tandem
    std::vector<double> rates;  // tandem_chain
    std::size_t target = 0;     // tandem_chain, 1-based; 0 means last
    std::optional<ClassSpec> high;  // priority
    std::optional<ClassSpec> low;   // priority
    double alpha = 1.0;
    JobOptions options;
};

/// Parse and validate a job from JSON text.  Throws InputError.
JobSpec parse_job(const std::string& json_text);
JobSpec load_job(const std::string& path);

/// Fixed 9-significant-digit, locale-independent formatting.
std::string format_number(double x);

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace gaussq::cli
