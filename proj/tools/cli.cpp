#include "gaussq/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gaussq/errors.hpp"
#include "gaussq/fifo.hpp"
#include "gaussq/oracle.hpp"
#include "gaussq/priority.hpp"
#include "gaussq/tandem.hpp"

namespace gaussq::cli {

using nlohmann::json;

namespace {

// ------------------------------------------------------------------ parsing

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw InputError(where + " must be a JSON object");
    for (const auto& item : obj.items()) {
        if (!allowed.count(item.key())) throw InputError("unknown key '" + item.key() + "' in " + where);
    }
}

double get_number(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) throw InputError("missing field '" + key + "' in " + where);
    const json& v = obj.at(key);
    if (!v.is_number()) throw InputError("field '" + key + "' in " + where + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw InputError("field '" + key + "' in " + where + " must be finite");
    return x;
}

double get_number_or(const json& obj, const std::string& key, const std::string& where, double fallback) {
    return obj.contains(key) ? get_number(obj, key, where) : fallback;
}

std::size_t get_count(const json& obj, const std::string& key, const std::string& where, std::size_t fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 1) {
        throw InputError("field '" + key + "' in " + where + " must be a positive integer");
    }
    return static_cast<std::size_t>(v.get<long long>());
}

std::vector<double> get_numbers(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key) || !obj.at(key).is_array()) throw InputError("field '" + key + "' in " + where + " must be an array");
    std::vector<double> out;
    for (const auto& v : obj.at(key)) {
        if (!v.is_number()) throw InputError("field '" + key + "' in " + where + " must contain numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

TailFunction parse_tail(const json& t) {
    const std::string where = "model.tail";
    if (!t.is_object() || !t.contains("kind") || !t.at("kind").is_string()) {
        throw InputError(where + " must be an object with a string 'kind'");
    }
    const std::string kind = t.at("kind").get<std::string>();
    if (kind == "exp") {
        check_keys(t, where, {"kind", "mean"});
        const double m = get_number(t, "mean", where);
        if (!(m > 0)) throw InputError("invalid parameter 'tail.mean': must be > 0");
        return [m](double x) { return std::exp(-x / m); };
    }
    if (kind == "pareto") {
        check_keys(t, where, {"kind", "alpha"});
        const double a = get_number(t, "alpha", where);
        if (!(a > 1)) throw InputError("invalid parameter 'tail.alpha': must be > 1");
        return [a](double x) { return std::pow(1.0 + x, -a); };
    }
    if (kind == "hyperexp") {
        check_keys(t, where, {"kind", "p1", "nu1", "nu2"});
        const double p1 = get_number(t, "p1", where);
        const double n1 = get_number(t, "nu1", where);
        const double n2 = get_number(t, "nu2", where);
        if (!(p1 > 0 && p1 < 1)) throw InputError("invalid parameter 'tail.p1': must lie in (0, 1)");
        if (!(n1 > 0) || !(n2 > 0)) throw InputError("invalid parameter 'tail.nu': rates must be > 0");
        return [p1, n1, n2](double x) { return p1 * std::exp(-n1 * x) + (1.0 - p1) * std::exp(-n2 * x); };
    }
    if (kind == "table") {
        check_keys(t, where, {"kind", "t", "survival"});
        auto ts = get_numbers(t, "t", where);
        auto ps = get_numbers(t, "survival", where);
        if (ts.size() < 2 || ts.size() != ps.size()) {
            throw InputError("invalid parameter 'tail.t': need matching arrays of at least two points");
        }
        if (ts.front() != 0.0 || ps.front() != 1.0) throw InputError("invalid parameter 'tail.t': table must start at (0, 1)");
        if (ps.back() != 0.0) throw InputError("invalid parameter 'tail.survival': table must end at survival 0");
        for (std::size_t i = 1; i < ts.size(); ++i) {
            if (!(ts[i] > ts[i - 1])) throw InputError("invalid parameter 'tail.t': times must increase");
            if (ps[i] > ps[i - 1]) throw InputError("invalid parameter 'tail.survival': must be nonincreasing");
        }
        auto tv = std::make_shared<std::vector<double>>(std::move(ts));
        auto pv = std::make_shared<std::vector<double>>(std::move(ps));
        return [tv, pv](double x) {
            if (x <= 0.0) return 1.0;
            if (x >= tv->back()) return 0.0;
            const auto it = std::upper_bound(tv->begin(), tv->end(), x);
            const std::size_t i = static_cast<std::size_t>(it - tv->begin());
            const double w = (x - (*tv)[i - 1]) / ((*tv)[i] - (*tv)[i - 1]);
            return (*pv)[i - 1] + w * ((*pv)[i] - (*pv)[i - 1]);
        };
    }
    throw InputError("unknown tail kind '" + kind + "' (expected exp, pareto, hyperexp or table)");
}

ModelSpec parse_model(const json& m, const std::string& where) {
    if (!m.is_object() || !m.contains("type") || !m.at("type").is_string()) {
        throw InputError(where + " must be an object with a string 'type'");
    }
    ModelSpec spec;
    spec.kind = model_kind_from_string(m.at("type").get<std::string>());
    switch (spec.kind) {
        case ModelKind::brownian:
            check_keys(m, where, {"type", "sigma2", "derivatives"});
            spec.sigma2 = get_number_or(m, "sigma2", where, 1.0);
            break;
        case ModelKind::fbm:
            check_keys(m, where, {"type", "sigma2", "hurst", "derivatives"});
            spec.sigma2 = get_number_or(m, "sigma2", where, 1.0);
            spec.hurst = get_number(m, "hurst", where);
            break;
        case ModelKind::mg_exp:
        case ModelKind::mg_pareto:
            check_keys(m, where, {"type", "lambda", "delta", "derivatives"});
            spec.lambda = get_number(m, "lambda", where);
            spec.delta = get_number(m, "delta", where);
            break;
        case ModelKind::mg_hyper:
            check_keys(m, where, {"type", "lambda", "delta", "p1", "nu1", "derivatives"});
            spec.lambda = get_number(m, "lambda", where);
            spec.delta = get_number(m, "delta", where);
            spec.p1 = get_number(m, "p1", where);
            spec.nu1 = get_number(m, "nu1", where);
            break;
        case ModelKind::mg_general:
            check_keys(m, where, {"type", "lambda", "delta", "tail", "derivatives"});
            spec.lambda = get_number(m, "lambda", where);
            spec.delta = get_number(m, "delta", where);
            if (!m.contains("tail")) throw InputError("missing field 'tail' in " + where);
            spec.tail = parse_tail(m.at("tail"));
            break;
        case ModelKind::superposition:
            throw InputError("model type 'superposition' is not configurable");
    }
    if (m.contains("derivatives")) {
        const json& d = m.at("derivatives");
        if (d == "analytic") {
            spec.derivative_mode = DerivativeMode::analytic;
        } else if (d == "numeric") {
            spec.derivative_mode = DerivativeMode::numeric;
        } else {
            throw InputError("field 'derivatives' in " + where + " must be \"analytic\" or \"numeric\"");
        }
    }
    return spec;
}

double default_mean(const ModelSpec& m) {
    switch (m.kind) {
        case ModelKind::mg_exp:
        case ModelKind::mg_hyper:
        case ModelKind::mg_pareto:
        case ModelKind::mg_general:
            return m.lambda * m.delta;
        default:
            return 0.0;
    }
}

ClassSpec parse_class(const json& obj, const std::string& where) {
    check_keys(obj, where, {"model", "mean_rate"});
    if (!obj.contains("model")) throw InputError("missing field 'model' in " + where);
    ClassSpec out;
    out.model = parse_model(obj.at("model"), where + ".model");
    out.mean_rate = get_number_or(obj, "mean_rate", where, default_mean(out.model));
    if (!(out.mean_rate >= 0)) throw InputError("invalid parameter 'mean_rate' in " + where + ": must be >= 0");
    return out;
}

JobOptions parse_options(const json& o) {
    const std::string where = "options";
    check_keys(o, where,
               {"rel_tol", "outer_grid", "inner_grid", "tightness_grid", "path_grid", "oracle", "mc", "seed",
                "oracle_tolerance", "mc_tolerance", "grid_s_points", "grid_levels", "mc_n", "mc_samples", "mc_dt",
                "mc_horizon"});
    JobOptions opt;
    opt.rel_tol = get_number_or(o, "rel_tol", where, opt.rel_tol);
    if (!(opt.rel_tol >= 1e-12)) throw InputError("invalid parameter 'options.rel_tol': must be >= 1e-12");
    opt.outer_grid = get_count(o, "outer_grid", where, opt.outer_grid);
    opt.inner_grid = get_count(o, "inner_grid", where, opt.inner_grid);
    opt.tightness_grid = get_count(o, "tightness_grid", where, opt.tightness_grid);
    opt.path_grid = get_count(o, "path_grid", where, opt.path_grid);
    for (const char* key : {"oracle", "mc"}) {
        if (o.contains(key) && !o.at(key).is_boolean()) throw InputError(std::string("field '") + key + "' in options must be a boolean");
    }
    opt.oracle = o.value("oracle", opt.oracle);
    opt.mc = o.value("mc", opt.mc);
    if (o.contains("seed")) {
        if (!o.at("seed").is_number_unsigned()) throw InputError("field 'seed' in options must be a nonnegative integer");
        opt.seed = o.at("seed").get<std::uint64_t>();
    }
    opt.oracle_tolerance = get_number_or(o, "oracle_tolerance", where, opt.oracle_tolerance);
    opt.mc_tolerance = get_number_or(o, "mc_tolerance", where, opt.mc_tolerance);
    opt.grid_s_points = get_count(o, "grid_s_points", where, opt.grid_s_points);
    opt.grid_levels = static_cast<int>(get_count(o, "grid_levels", where, static_cast<std::size_t>(opt.grid_levels)));
    if (o.contains("mc_n")) {
        opt.mc_n.clear();
        for (double n : get_numbers(o, "mc_n", where)) {
            if (!(n >= 1) || n != std::floor(n)) throw InputError("field 'mc_n' in options must hold positive integers");
            opt.mc_n.push_back(static_cast<int>(n));
        }
    }
    opt.mc_samples = get_count(o, "mc_samples", where, opt.mc_samples);
    if (o.contains("mc_dt")) opt.mc_dt = get_number(o, "mc_dt", where);
    if (o.contains("mc_horizon")) opt.mc_horizon = get_number(o, "mc_horizon", where);
    return opt;
}

// ------------------------------------------------------------------ systems

SourceModel make_source(const ClassSpec& c) { return {make_model(c.model), c.mean_rate}; }

TandemSystem make_tandem(const JobSpec& job) {
    const SourceModel src = make_source(*job.source);
    if (job.kind == SystemKind::tandem_chain) {
        const std::size_t target = job.target ? job.target : job.rates.size();
        const ReducedRates r = reduce_tandem(job.rates, target, src.mean_rate);
        return TandemSystem(job.b, r.c1, r.c2, src);
    }
    return TandemSystem(job.b, job.c1, job.c2, src);
}

PrioritySystem make_priority(const JobSpec& job) {
    return PrioritySystem(job.b, job.c, make_source(*job.high), make_source(*job.low), job.alpha);
}

SaddleOptions saddle_options(const JobOptions& o) {
    SaddleOptions s;
    s.rel_tol = o.rel_tol;
    s.outer_grid = o.outer_grid;
    s.inner_grid = o.inner_grid;
    return s;
}

TandemOptions tandem_options(const JobOptions& o) {
    TandemOptions t;
    t.saddle = saddle_options(o);
    t.tightness_grid = o.tightness_grid;
    return t;
}

// ------------------------------------------------------------------ output

struct Report {
    std::vector<std::pair<std::string, std::string>> rows;
    json data = json::object();

    void add(const std::string& key, double v) {
        rows.emplace_back(key, format_number(v));
        data[key] = std::isfinite(v) ? json(v) : json(format_number(v));
    }
    void add(const std::string& key, const std::string& v) {
        rows.emplace_back(key, v);
        data[key] = v;
    }
    void add_count(const std::string& key, std::size_t v) {
        rows.emplace_back(key, std::to_string(v));
        data[key] = v;
    }
    void add(const std::string& key, bool v) {
        rows.emplace_back(key, v ? "true" : "false");
        data[key] = v;
    }
};

std::string options_line(const JobOptions& o) {
    std::ostringstream os;
    os << "# options: rel_tol=" << format_number(o.rel_tol) << " outer_grid=" << o.outer_grid
       << " inner_grid=" << o.inner_grid << " tightness_grid=" << o.tightness_grid << " path_grid=" << o.path_grid
       << " oracle=" << (o.oracle ? "on" : "off") << " mc=" << (o.mc ? "on" : "off") << " seed=" << o.seed
       << " oracle_tolerance=" << format_number(o.oracle_tolerance) << " mc_tolerance=" << format_number(o.mc_tolerance)
       << " grid_s_points=" << o.grid_s_points << " grid_levels=" << o.grid_levels << " mc_samples=" << o.mc_samples;
    return os.str();
}

void print_report(std::ostream& out, const std::string& title, const JobOptions& o, const Report& r) {
    out << "# gaussq " << title << " report\n" << options_line(o) << "\n";
    std::size_t width = 0;
    for (const auto& row : r.rows) width = std::max(width, row.first.size());
    for (const auto& row : r.rows) {
        out << row.first << ":" << std::string(width + 2 - row.first.size(), ' ') << row.second << "\n";
    }
}

void write_json(const std::string& path, const std::string& title, const JobOptions& o, const Report& r) {
    if (path.empty()) return;
    std::ofstream f(path);
    if (!f) throw InputError("cannot open '" + path + "' for writing");
    json doc = r.data;
    doc["report"] = title;
    doc["options"] = {{"rel_tol", o.rel_tol},           {"outer_grid", o.outer_grid}, {"inner_grid", o.inner_grid},
                      {"tightness_grid", o.tightness_grid}, {"path_grid", o.path_grid}, {"seed", o.seed}};
    f << doc.dump(2) << "\n";
}

Report fifo_report(const JobSpec& job) {
    const SourceModel src = make_source(*job.source);
    const FifoResult res = fifo_decay(job.b, job.c, src, job.options.rel_tol);
    Report r;
    r.add("model", src.variance.describe());
    r.add("mean_rate", src.mean_rate);
    r.add("b", job.b);
    r.add("c", job.c);
    r.add("c_centered", job.c - src.mean_rate);
    r.add("J", res.J);
    r.add("t_F", res.t_F);
    r.add_count("ties", res.ties.size());
    r.add("model_flagged", src.variance.flagged());
    return r;
}

Report tandem_report(const TandemSystem& sys, const DecayReport& rep) {
    Report r;
    r.add("model", sys.model().describe());
    r.add("mean_rate", sys.mu());
    r.add("b", sys.b());
    r.add("c1", sys.c1());
    r.add("c2", sys.c2());
    r.add("c1_centered", sys.c1_centered());
    r.add("c2_centered", sys.c2_centered());
    r.add("t0", sys.t0());
    r.add("c1_critical", rep.c1_critical.original);
    r.add("c1_critical_centered", rep.c1_critical.centered);
    r.add("c1_critical_infinite", rep.c1_critical.infinite);
    r.add("regime", to_string(rep.regime));
    r.add("J_lower", rep.J_lower);
    r.add("J_fifo_c2", rep.J_fifo);
    r.add("t_F", rep.t_F);
    r.add("t_star", rep.t_star);
    if (rep.s_star) {
        r.add("s_star", *rep.s_star);
        r.add("s_star_at_boundary", rep.s_at_boundary);
    }
    r.add("cost_fifo", rep.cost_fifo);
    r.add("cost_conditional", rep.cost_conditional);
    r.add("tight", to_string(rep.tight));
    if (rep.tightness) {
        r.add("tightness_margin", rep.tight_margin);
        r.add("tightness_worst_r", rep.tight_worst_r);
        r.add("condition24", rep.tightness->condition24);
        r.add("condition24_value", rep.tightness->condition24_value);
    }
    if (rep.refined_bound) {
        r.add("refined_bound", *rep.refined_bound);
        r.add_count("refined_constraints", static_cast<std::size_t>(rep.refined_m));
    }
    r.add_count("optimizer_ties", rep.t_ties.size() + rep.s_ties.size());
    r.add("model_flagged", sys.model().flagged());
    return r;
}

Report priority_report(const PrioritySystem& sys, const PriorityReport& rep) {
    Report r;
    r.add("high_model", sys.high().variance.describe());
    r.add("low_model", sys.low().variance.describe());
    r.add("high_mean_rate", sys.high().mean_rate);
    r.add("low_mean_rate", sys.low().mean_rate);
    r.add("alpha", sys.alpha());
    r.add("b", sys.b());
    r.add("c", sys.c());
    r.add("c_centered", sys.c() - sys.mu());
    r.add("regime", to_string(rep.regime));
    r.add("J_I", rep.J_I);
    r.add("t_star", rep.t_star);
    if (rep.s_star) r.add("s_star", *rep.s_star);
    r.add("t_F", rep.t_F);
    r.add("J_II", rep.J_II);
    r.add("t_II", rep.t_II);
    r.add("J_III", rep.J_III);
    r.add("t_III", rep.t_III);
    r.add("s_III", rep.s_III);
    if (rep.closed_form) r.add("closed_form", *rep.closed_form);
    return r;
}

void write_path_csv(std::ostream& out, const SampledPath& p) {
    out << "r,f,g\n";
    for (std::size_t i = 0; i < p.r.size(); ++i) {
        out << format_number(p.r[i]) << "," << format_number(p.f[i]) << "," << format_number(p.g[i]) << "\n";
    }
}

// Open `path` or fall back to `out` when empty.
struct Sink {
    std::ofstream file;
    std::ostream* stream;
    Sink(const std::string& path, std::ostream& out) : stream(&out) {
        if (!path.empty()) {
            file.open(path, std::ios::binary);
            if (!file) throw InputError("cannot open '" + path + "' for writing");
            stream = &file;
        }
    }
};

// ------------------------------------------------------------------ commands

int cmd_fifo(const JobSpec& job, const std::string& json_out, std::ostream& out) {
    if (job.kind != SystemKind::fifo) throw InputError("config has no 'fifo' block");
    const Report r = fifo_report(job);
    print_report(out, "fifo", job.options, r);
    write_json(json_out, "fifo", job.options, r);
    return kOk;
}

int cmd_tandem(const JobSpec& job, const std::string& json_out, std::ostream& out) {
    if (job.kind != SystemKind::tandem && job.kind != SystemKind::tandem_chain) {
        throw InputError("config has no 'tandem' or 'tandem_chain' block");
    }
    const TandemSystem sys = make_tandem(job);
    const DecayReport rep = tandem_decay(sys, tandem_options(job.options));
    const Report r = tandem_report(sys, rep);
    print_report(out, "tandem", job.options, r);
    write_json(json_out, "tandem", job.options, r);
    return kOk;
}

int cmd_priority(const JobSpec& job, const std::string& json_out, std::ostream& out) {
    if (job.kind != SystemKind::priority) throw InputError("config has no 'priority' block");
    const PrioritySystem sys = make_priority(job);
    const PriorityReport rep = priority_decay(sys, saddle_options(job.options));
    const Report r = priority_report(sys, rep);
    print_report(out, "priority", job.options, r);
    write_json(json_out, "priority", job.options, r);
    return kOk;
}

int cmd_path(const JobSpec& job, std::size_t grid, const std::string& path, std::ostream& out) {
    if (grid == 0) grid = job.options.path_grid;
    SampledPath p;
    if (job.kind == SystemKind::fifo) {
        const SourceModel src = make_source(*job.source);
        const FifoResult res = fifo_decay(job.b, job.c, src, job.options.rel_tol);
        p = fifo_mpp(job.b, job.c, src, res, grid);
    } else if (job.kind == SystemKind::priority) {
        throw InputError("path is defined for fifo and tandem configs only");
    } else {
        const TandemSystem sys = make_tandem(job);
        TandemOptions opts = tandem_options(job.options);
        opts.refine_when_not_tight = false;
        p = tandem_mpp(sys, tandem_decay(sys, opts), grid);
    }
    Sink sink(path, out);
    write_path_csv(*sink.stream, p);
    return kOk;
}

JobSpec with_param(JobSpec job, const std::string& param, double value) {
    auto set = [&](double& field) { field = value; };
    if (param == "b") {
        set(job.b);
    } else if (param == "c" && (job.kind == SystemKind::fifo || job.kind == SystemKind::priority)) {
        set(job.c);
    } else if (param == "c1" && job.kind == SystemKind::tandem) {
        set(job.c1);
    } else if (param == "c2" && job.kind == SystemKind::tandem) {
        set(job.c2);
    } else if (param == "mean_rate" && job.source) {
        set(job.source->mean_rate);
    } else if (param == "alpha" && job.kind == SystemKind::priority) {
        set(job.alpha);
    } else {
        throw InputError("sweep parameter '" + param + "' is not defined for this config");
    }
    return job;
}

int cmd_sweep(const JobSpec& base, const std::string& param, double from, double to, std::size_t steps,
              const std::string& path, std::ostream& out) {
    if (steps < 1) throw InputError("sweep: steps must be >= 1");
    Sink sink(path, out);
    std::ostream& csv = *sink.stream;
    csv << "param,J,t_star,s_star,regime,tight\n";
    for (std::size_t i = 0; i < steps; ++i) {
        const double x = steps == 1 ? from : from + (to - from) * static_cast<double>(i) / static_cast<double>(steps - 1);
        const JobSpec job = with_param(base, param, x);
        std::string J, t, s, regime, tight;
        if (job.kind == SystemKind::fifo) {
            const FifoResult r = fifo_decay(job.b, job.c, make_source(*job.source), job.options.rel_tol);
            J = format_number(r.J), t = format_number(r.t_F), regime = "A", tight = to_string(Tightness::Tight);
        } else if (job.kind == SystemKind::priority) {
            const PriorityReport r = priority_decay(make_priority(job), saddle_options(job.options));
            J = format_number(r.J_I), t = format_number(r.t_star), regime = to_string(r.regime);
            if (r.s_star) s = format_number(*r.s_star);
            tight = to_string(r.regime == Regime::A ? Tightness::Tight : Tightness::Unknown);
        } else {
            TandemOptions opts = tandem_options(job.options);
            opts.refine_when_not_tight = false;
            const DecayReport r = tandem_decay(make_tandem(job), opts);
            J = format_number(r.J_lower), t = format_number(r.t_star), regime = to_string(r.regime);
            if (r.s_star) s = format_number(*r.s_star);
            tight = to_string(r.tight);
        }
        csv << format_number(x) << "," << J << "," << t << "," << s << "," << regime << "," << tight << "\n";
    }
    return kOk;
}

McConfig mc_config(const McSystem& sys, const JobOptions& o) {
    McConfig cfg = default_mc_config(sys);
    cfg.n_values = o.mc_n;
    cfg.samples = o.mc_samples;
    cfg.seed = o.seed;
    if (o.mc_dt) cfg.dt = *o.mc_dt;
    if (o.mc_horizon) cfg.horizon = *o.mc_horizon;
    return cfg;
}

int cmd_verify(const JobSpec& job, bool force_grid, bool force_mc, std::ostream& out) {
    const bool use_grid = force_grid || job.options.oracle;
    const bool use_mc = force_mc || job.options.mc;
    const JobOptions& o = job.options;
    out << "# gaussq verify report\n" << options_line(o) << "\n";
    out << "check,analytic,oracle,relative_difference,status\n";
    bool disagree = false;
    auto line = [&](const std::string& name, double analytic, double oracle, bool ok) {
        const double rel = (oracle - analytic) / std::abs(analytic);
        out << name << "," << format_number(analytic) << "," << format_number(oracle) << "," << format_number(rel) << ","
            << (ok ? "ok" : "DISAGREE") << "\n";
        disagree = disagree || !ok;
    };

    double analytic = 0.0;
    bool exact = false;  // analytic value is the decay rate, not only a lower bound
    std::unique_ptr<McSystem> mc_sys;
    if (job.kind == SystemKind::fifo) {
        const SourceModel src = make_source(*job.source);
        analytic = fifo_decay(job.b, job.c, src, o.rel_tol).J;
        exact = true;
        mc_sys = std::make_unique<McSystem>(FifoSystem{job.b, job.c, src});
    } else if (job.kind == SystemKind::priority) {
        const PrioritySystem sys = make_priority(job);
        const PriorityReport rep = priority_decay(sys, saddle_options(o));
        analytic = rep.J_I;
        exact = rep.regime == Regime::A;
        if (use_grid) {
            GridOracleConfig g = default_grid_config(sys);
            g.s_points = o.grid_s_points;
            g.levels = o.grid_levels;
            const GridOracleResult res = grid_qp_decay(sys, g);
            line("grid_qp", analytic, res.estimate, res.estimate >= analytic * (1.0 - o.oracle_tolerance));
        }
        mc_sys = std::make_unique<McSystem>(sys);
    } else {
        const TandemSystem sys = make_tandem(job);
        TandemOptions topts = tandem_options(o);
        topts.refine_when_not_tight = false;
        const DecayReport rep = tandem_decay(sys, topts);
        analytic = rep.J_lower;
        exact = rep.tight == Tightness::Tight;
        if (use_grid) {
            GridOracleConfig g = default_grid_config(sys);
            g.s_points = o.grid_s_points;
            g.levels = o.grid_levels;
            const GridOracleResult res = grid_qp_decay(sys, g);
            const double rel = (res.estimate - analytic) / analytic;
            const bool ok = exact ? std::abs(rel) <= o.oracle_tolerance : rel >= -o.oracle_tolerance;
            line(exact ? "grid_qp" : "grid_qp_bound", analytic, res.estimate, ok);
        }
        mc_sys = std::make_unique<McSystem>(sys);
    }
    if (use_mc) {
        const McFit fit = mc_decay_fit(*mc_sys, mc_config(*mc_sys, o));
        const double rel = (fit.slope - analytic) / analytic;
        const bool ok = exact ? std::abs(rel) <= o.mc_tolerance : true;
        line(exact ? "mc_slope" : "mc_slope_unchecked", analytic, fit.slope, ok);
        for (const auto& p : fit.points) {
            out << "# mc n=" << p.n << " p_hat=" << format_number(p.p_hat) << " half_width=" << format_number(p.half_width)
                << " hits=" << p.hits << "\n";
        }
    }
    if (!use_grid && !use_mc) out << "# no oracle enabled\n";
    return disagree ? kOracleDisagreement : kOk;
}

void print_check(std::ostream& out, const std::string& name, const CheckResult& c) {
    out << name << ": " << (c.passed ? "pass" : "FAIL") << " worst_margin=" << format_number(c.worst_margin)
        << " at t=" << format_number(c.worst_t) << "\n";
}

int cmd_validate(const JobSpec& job, double horizon, std::size_t grid, std::ostream& out) {
    std::vector<std::pair<std::string, ClassSpec>> models;
    if (job.source) models.emplace_back("model", *job.source);
    if (job.high) models.emplace_back("high", *job.high);
    if (job.low) models.emplace_back("low", *job.low);
    out << "# gaussq validate-model report\n# horizon=" << format_number(horizon) << " grid_size=" << grid << "\n";
    for (const auto& [name, spec] : models) {
        const VarianceModel m = make_model(spec.model);
        const ValidationReport rep = validate_model(m, horizon, grid);
        out << name << ": " << m.describe() << "\n";
        print_check(out, "  positive", rep.positive);
        print_check(out, "  increasing", rep.increasing);
        print_check(out, "  sqrt_concave", rep.sqrt_concave);
        print_check(out, "  subquadratic", rep.subquadratic);
        out << "  flagged: " << (rep.flagged ? "true" : "false") << "\n";
        out << "  all_passed: " << (rep.all_passed() ? "true" : "false") << "\n";
    }
    return kOk;
}

}  // namespace

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    if (x == 0.0) return "0";
    // The scientific form fixes the decimal exponent after rounding to 9 digits.
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::scientific, 8);
    const std::string sci(buf, res.ptr);
    const int exponent = std::stoi(sci.substr(sci.find('e') + 1));
    if (exponent < -4 || exponent >= 15) return sci;
    res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::fixed, std::max(0, 8 - exponent));
    return std::string(buf, res.ptr);
}

JobSpec parse_job(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(doc, "config", {"model", "mean_rate", "fifo", "tandem", "tandem_chain", "priority", "options"});
    int blocks = 0;
    for (const char* k : {"fifo", "tandem", "tandem_chain", "priority"}) blocks += doc.contains(k) ? 1 : 0;
    if (blocks != 1) throw InputError("config must contain exactly one of 'fifo', 'tandem', 'tandem_chain', 'priority'");

    JobSpec job;
    if (doc.contains("options")) job.options = parse_options(doc.at("options"));

    if (doc.contains("priority")) {
        job.kind = SystemKind::priority;
        if (doc.contains("model") || doc.contains("mean_rate")) {
            throw InputError("priority configs take models inside 'priority.hp' and 'priority.lp'");
        }
        const json& p = doc.at("priority");
        check_keys(p, "priority", {"b", "c", "hp", "lp", "alpha"});
        job.b = get_number(p, "b", "priority");
        job.c = get_number(p, "c", "priority");
        job.alpha = get_number_or(p, "alpha", "priority", 1.0);
        if (!p.contains("hp") || !p.contains("lp")) throw InputError("priority needs 'hp' and 'lp' classes");
        job.high = parse_class(p.at("hp"), "priority.hp");
        job.low = parse_class(p.at("lp"), "priority.lp");
        return job;
    }

    if (!doc.contains("model")) throw InputError("missing field 'model' in config");
    ClassSpec src;
    src.model = parse_model(doc.at("model"), "model");
    src.mean_rate = get_number_or(doc, "mean_rate", "config", default_mean(src.model));
    if (!(src.mean_rate >= 0)) throw InputError("invalid parameter 'mean_rate': must be >= 0");
    job.source = src;

    if (doc.contains("fifo")) {
        job.kind = SystemKind::fifo;
        const json& f = doc.at("fifo");
        check_keys(f, "fifo", {"b", "c"});
        job.b = get_number(f, "b", "fifo");
        job.c = get_number(f, "c", "fifo");
    } else if (doc.contains("tandem")) {
        job.kind = SystemKind::tandem;
        const json& t = doc.at("tandem");
        check_keys(t, "tandem", {"b", "c1", "c2"});
        job.b = get_number(t, "b", "tandem");
        job.c1 = get_number(t, "c1", "tandem");
        job.c2 = get_number(t, "c2", "tandem");
    } else {
        job.kind = SystemKind::tandem_chain;
        const json& t = doc.at("tandem_chain");
        check_keys(t, "tandem_chain", {"b", "rates", "target"});
        job.b = get_number(t, "b", "tandem_chain");
        job.rates = get_numbers(t, "rates", "tandem_chain");
        job.target = get_count(t, "target", "tandem_chain", 0);
    }
    return job;
}

JobSpec load_job(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot read config '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_job(ss.str());
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Decay rates of overflow probabilities for Gaussian many-sources queues", "gaussq"};
    app.require_subcommand(1);

    std::string config;
    std::string json_out;
    std::string csv_out;
    std::size_t grid = 0;
    std::string param;
    double from = 0.0, to = 0.0;
    std::size_t steps = 11;
    bool force_grid = false, force_mc = false;
    double horizon = 100.0;
    std::size_t grid_size = 256;

    auto add_config = [&](CLI::App* sub) { sub->add_option("-c,--config", config, "JSON job file")->required(); };
    CLI::App* fifo = app.add_subcommand("fifo", "Single FIFO queue decay rate");
    CLI::App* tandem = app.add_subcommand("tandem", "Tandem second-queue decay rate, regime and tightness");
    CLI::App* priority = app.add_subcommand("priority", "Low-priority decay rate and comparison bounds");
    for (CLI::App* sub : {fifo, tandem, priority}) {
        add_config(sub);
        sub->add_option("--json", json_out, "Also write the report as JSON");
    }
    CLI::App* path = app.add_subcommand("path", "Most probable path as CSV r,f,g");
    add_config(path);
    path->add_option("--grid", grid, "Number of r samples (default: options.path_grid)");
    path->add_option("-o,--out", csv_out, "CSV file (default: standard output)");
    CLI::App* sweep = app.add_subcommand("sweep", "Vary one parameter, CSV param,J,t_star,s_star,regime,tight");
    add_config(sweep);
    sweep->add_option("--param", param, "b, c, c1, c2, mean_rate or alpha")->required();
    sweep->add_option("--from", from, "First value")->required();
    sweep->add_option("--to", to, "Last value")->required();
    sweep->add_option("--steps", steps, "Number of values");
    sweep->add_option("-o,--out", csv_out, "CSV file (default: standard output)");
    CLI::App* verify = app.add_subcommand("verify", "Compare against the grid and Monte Carlo oracles");
    add_config(verify);
    verify->add_flag("--grid-oracle", force_grid, "Run the grid oracle regardless of options.oracle");
    verify->add_flag("--mc", force_mc, "Run the Monte Carlo fit regardless of options.mc");
    CLI::App* validate = app.add_subcommand("validate-model", "Check the variance function assumptions");
    add_config(validate);
    validate->add_option("--horizon", horizon, "Largest time on the check grid");
    validate->add_option("--grid-size", grid_size, "Number of grid points (>= 16)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kInputError;
    }

    try {
        const JobSpec job = load_job(config);
        if (fifo->parsed()) return cmd_fifo(job, json_out, out);
        if (tandem->parsed()) return cmd_tandem(job, json_out, out);
        if (priority->parsed()) return cmd_priority(job, json_out, out);
        if (path->parsed()) return cmd_path(job, grid, csv_out, out);
        if (sweep->parsed()) return cmd_sweep(job, param, from, to, steps, csv_out, out);
        if (verify->parsed()) return cmd_verify(job, force_grid, force_mc, out);
        if (validate->parsed()) return cmd_validate(job, horizon, grid_size, out);
    } catch (const InputError& e) {
        err << "input error: " << e.what() << "\n";
        return kInputError;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return kNumericalError;
    }
    return kInputError;
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, std::cout, std::cerr);
}

}  // namespace gaussq::cli
