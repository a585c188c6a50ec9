#include <doctest.h>

#include <clocale>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gaussq/cli.hpp"
#include "gaussq/errors.hpp"

using namespace gaussq;
using namespace gaussq::cli;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome call(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "gaussq_cli_tests";
    fs::create_directories(dir);
    return dir / name;
}

std::string write(const std::string& name, const std::string& text) {
    const fs::path p = scratch(name);
    std::ofstream(p) << text;
    return p.string();
}

std::string doc(const std::string& name) { return std::string(GAUSSQ_DOCS) + "/configs/" + name; }

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream f(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(f, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

double field(const std::string& report, const std::string& key) {
    const auto pos = report.find("\n" + key + ":");
    REQUIRE(pos != std::string::npos);
    return std::stod(report.substr(report.find(':', pos) + 1));
}

}  // namespace

TEST_CASE("number formatting") {
    CHECK(format_number(0.5) == "0.500000000");
    CHECK(format_number(1234.56789123) == "1234.56789");
    CHECK(format_number(-4.75559259) == "-4.75559259");
    CHECK(format_number(0.99999999999) == "1.00000000");
    CHECK(format_number(1e-7) == "1.00000000e-07");
    CHECK(format_number(0.0) == "0");
    CHECK(format_number(1.0 / 0.0) == "inf");
}

TEST_CASE("job parsing") {
    SUBCASE("defaults") {
        const JobSpec j = parse_job(R"({"model": {"type": "mg_exp", "lambda": 0.125, "delta": 2},
                                        "tandem": {"b": 0.5, "c1": 1.1, "c2": 1}})");
        CHECK(j.kind == SystemKind::tandem);
        REQUIRE(j.source);
        CHECK(j.source->mean_rate == doctest::Approx(0.25));
        CHECK(j.options.rel_tol == 1e-10);
        CHECK(j.options.outer_grid == 256);
    }
    SUBCASE("options override") {
        const JobSpec j = parse_job(R"({"model": {"type": "brownian"}, "fifo": {"b": 1, "c": 1},
                                        "options": {"rel_tol": 1e-8, "seed": 9, "mc_n": [2, 4, 6]}})");
        CHECK(j.options.rel_tol == 1e-8);
        CHECK(j.options.seed == 9);
        CHECK(j.options.mc_n == std::vector<int>{2, 4, 6});
    }
    SUBCASE("priority classes") {
        const JobSpec j = parse_job(R"({"priority": {"b": 1, "c": 1, "alpha": 2,
            "hp": {"model": {"type": "brownian", "sigma2": 2}, "mean_rate": 0.25},
            "lp": {"model": {"type": "mg_exp", "lambda": 0.125, "delta": 2}}}})");
        CHECK(j.kind == SystemKind::priority);
        CHECK(j.high->model.sigma2 == 2.0);
        CHECK(j.low->mean_rate == doctest::Approx(0.25));
        CHECK(j.alpha == 2.0);
    }
    SUBCASE("general tail kinds") {
        for (const char* tail : {R"({"kind": "exp", "mean": 2})", R"({"kind": "pareto", "alpha": 1.5})",
                                 R"({"kind": "hyperexp", "p1": 0.25, "nu1": 5, "nu2": 0.4})",
                                 R"({"kind": "table", "t": [0, 2, 4], "survival": [1, 0.5, 0]})"}) {
            const JobSpec j = parse_job(std::string(R"({"model": {"type": "mg_general", "lambda": 0.125, "delta": 2, "tail": )") +
                                        tail + R"(}, "fifo": {"b": 1, "c": 1}})");
            REQUIRE(j.source->model.tail);
            CHECK(j.source->model.tail(0.0) == doctest::Approx(1.0));
        }
    }
    SUBCASE("rejections") {
        CHECK_THROWS_AS(parse_job("{not json"), InputError);
        CHECK_THROWS_AS(parse_job(R"({"model": {"type": "brownian"}})"), InputError);
        CHECK_THROWS_AS(parse_job(R"({"model": {"type": "brownian"}, "fifo": {"b": 1, "c": 1},
                                      "tandem": {"b": 1, "c1": 2, "c2": 1}})"),
                        InputError);
        CHECK_THROWS_AS(parse_job(R"({"model": {"type": "brownian", "hurst": 0.7}, "fifo": {"b": 1, "c": 1}})"),
                        InputError);
        CHECK_THROWS_AS(parse_job(R"({"model": {"type": "cauchy"}, "fifo": {"b": 1, "c": 1}})"), InputError);
        CHECK_THROWS_AS(parse_job(R"({"model": {"type": "brownian"}, "fifo": {"b": "1", "c": 1}})"), InputError);
        CHECK_THROWS_AS(parse_job(R"({"model": {"type": "brownian"}, "fifo": {"b": 1}})"), InputError);
        CHECK_THROWS_AS(parse_job(R"({"model": {"type": "brownian"}, "fifo": {"b": 1, "c": 1}, "extra": 1})"),
                        InputError);
        CHECK_THROWS_AS(parse_job(R"({"model": {"type": "brownian"}, "fifo": {"b": 1, "c": 1},
                                      "options": {"outer_grid": -3}})"),
                        InputError);
    }
}

TEST_CASE("tandem report on the exponential-session example") {
    const Outcome o = call({"tandem", "--config", doc("mg_exp_tandem.json")});
    CHECK(o.code == kOk);
    CHECK(std::abs(field(o.out, "c1_critical") - 1.195) <= 0.005);
    CHECK(std::abs(field(o.out, "s_star") - 4.756) <= 0.02);
    CHECK(std::abs(field(o.out, "t_star") - 5.169) <= 0.02);
    CHECK(field(o.out, "c1_centered") == doctest::Approx(0.85));
    CHECK(o.out.find("tight:                 tight") != std::string::npos);
    CHECK(o.out.find("# options: rel_tol=") != std::string::npos);
    // Deterministic.
    CHECK(call({"tandem", "--config", doc("mg_exp_tandem.json")}).out == o.out);
}

TEST_CASE("json report") {
    const std::string out = scratch("report.json").string();
    const Outcome o = call({"priority", "--config", doc("brownian_priority.json"), "--json", out});
    CHECK(o.code == kOk);
    std::ifstream f(out);
    const nlohmann::json j = nlohmann::json::parse(f);
    CHECK(j.at("report") == "priority");
    CHECK(j.at("J_I").get<double>() == doctest::Approx(j.at("closed_form").get<double>()).epsilon(1e-6));
    CHECK(j.at("J_III").get<double>() <= j.at("J_II").get<double>() + 1e-9);
}

TEST_CASE("path CSV reproduces the rate endpoints") {
    std::setlocale(LC_ALL, "de_DE.UTF-8");  // output must not depend on the locale when one is available
    const std::string out = scratch("path.csv").string();
    const Outcome o = call({"path", "--config", doc("mg_exp_tandem.json"), "--grid", "512", "--out", out});
    std::setlocale(LC_ALL, "C");
    REQUIRE(o.code == kOk);
    const auto rows = read_csv(out);
    REQUIRE(rows.size() >= 513);
    CHECK(rows[0] == std::vector<std::string>{"r", "f", "g"});
    for (std::size_t i = 1; i < rows.size(); ++i) {
        REQUIRE(rows[i].size() == 3);
        for (const auto& cell : rows[i]) CHECK(cell.find_first_not_of("0123456789.-e+") == std::string::npos);
    }
    CHECK(std::stod(rows[1][2]) == doctest::Approx(1.0).epsilon(1e-6));  // g(-t*) = c2
    bool seen = false;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (std::abs(std::stod(rows[i][0]) + 4.7556) < 1e-3) {
            CHECK(std::stod(rows[i][2]) == doctest::Approx(1.1).epsilon(1e-6));  // g(-s*) = c1
            seen = true;
        }
    }
    CHECK(seen);
    std::ifstream raw(out, std::ios::binary);
    const std::string text((std::istreambuf_iterator<char>(raw)), std::istreambuf_iterator<char>());
    CHECK(text.find('\r') == std::string::npos);
    CHECK(call({"path", "--config", doc("brownian_priority.json")}).code == kInputError);
}

TEST_CASE("sweep CSV") {
    const std::string out = scratch("sweep.csv").string();
    const Outcome o = call({"sweep", "--config", doc("mg_exp_tandem.json"), "--param", "c1", "--from", "1.05", "--to",
                            "1.3", "--steps", "6", "--out", out});
    REQUIRE(o.code == kOk);
    const auto rows = read_csv(out);
    REQUIRE(rows.size() == 7);
    CHECK(rows[0] == std::vector<std::string>{"param", "J", "t_star", "s_star", "regime", "tight"});
    CHECK(rows[1][4] == "B");
    CHECK(rows[6][4] == "A");
    for (std::size_t i = 2; i < rows.size(); ++i) CHECK(std::stod(rows[i][1]) <= std::stod(rows[i - 1][1]) + 1e-12);
    CHECK(call({"sweep", "--config", doc("mg_exp_tandem.json"), "--param", "alpha", "--from", "1", "--to", "2"}).code ==
          kInputError);
}

TEST_CASE("verify against the grid oracle") {
    const Outcome ok = call({"verify", "--config", doc("mg_exp_tandem.json")});
    CHECK(ok.code == kOk);
    CHECK(ok.out.find("grid_qp,") != std::string::npos);
    const std::string strict = write("strict.json", R"({"model": {"type": "mg_exp", "lambda": 0.125, "delta": 2},
        "tandem": {"b": 0.5, "c1": 1.1, "c2": 1}, "options": {"oracle_tolerance": 1e-9}})");
    const Outcome bad = call({"verify", "--config", strict});
    CHECK(bad.code == kOracleDisagreement);
    CHECK(bad.out.find("DISAGREE") != std::string::npos);
}

TEST_CASE("validate-model") {
    const Outcome o = call({"validate-model", "--config", doc("mg_pareto_tandem.json")});
    CHECK(o.code == kOk);
    CHECK(o.out.find("all_passed: true") != std::string::npos);
}

TEST_CASE("exit codes") {
    const std::string bad = write("bad.json", R"({"model": {"type": "brownian"}, "tandem": {"b": 1, "c1": 1, "c2": 1}})");
    const Outcome o = call({"tandem", "--config", bad});
    CHECK(o.code == kInputError);
    CHECK(o.err.find("c1 > c2") != std::string::npos);
    CHECK(call({"tandem", "--config", scratch("missing.json").string()}).code == kInputError);
    CHECK(call({"frobnicate"}).code == kInputError);
    CHECK(call({"tandem"}).code == kInputError);
    CHECK(call({"--help"}).code == kOk);
    const std::string slow = write("slow.json", R"({"model": {"type": "mg_general", "lambda": 0.125, "delta": 10000,
        "tail": {"kind": "pareto", "alpha": 1.0001}}, "fifo": {"b": 1, "c": 2000}})");
    CHECK(call({"fifo", "--config", slow}).code == kNumericalError);
}

TEST_CASE("every shipped example config runs") {
    for (const auto& entry : fs::directory_iterator(std::string(GAUSSQ_DOCS) + "/configs")) {
        const std::string name = entry.path().filename().string();
        std::string cmd = "tandem";
        if (name.find("fifo") != std::string::npos) cmd = "fifo";
        if (name.find("priority") != std::string::npos) cmd = "priority";
        CAPTURE(name);
        CHECK(call({cmd, "--config", entry.path().string()}).code == kOk);
    }
}

TEST_CASE("the installed binary returns the same exit codes") {
    const std::string bad = write("bad_bin.json", R"({"model": {"type": "brownian"}, "tandem": {"b": 1, "c1": 0.5, "c2": 1}})");
    const std::string quiet = " > " + scratch("stdout.txt").string() + " 2> " + scratch("stderr.txt").string();
    const int ok = std::system((std::string(GAUSSQ_TOOL) + " fifo --config " + doc("brownian_fifo.json") + quiet).c_str());
    const int fail = std::system((std::string(GAUSSQ_TOOL) + " tandem --config " + bad + quiet).c_str());
    CHECK(WEXITSTATUS(ok) == 0);
    CHECK(WEXITSTATUS(fail) == 1);
}
