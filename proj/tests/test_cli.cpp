#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mvf/blaschke.hpp"
#include "mvf/cli.hpp"
#include "mvf/factor.hpp"
#include "mvf/json_io.hpp"
#include "mvf/random.hpp"

using namespace mvf;
using mvf::cli::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("mvf_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::vector<std::vector<double>> read_csv(const fs::path& p) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(slurp(p));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(row);
    }
    return rows;
}

int run_job(const std::string& cmd, const json& spec, const fs::path& out) {
    std::ostringstream log;
    return cli::run(cli::make_job(cmd, spec, out.string()), log);
}

const json cosh_spec = {
    {"schema", 1},
    {"tol", 1e-12},
    {"inputs",
     {{"kernel", {{"type", "constant"}, {"value", 1}}},
      {"integrator", {{"type", "linear"}, {"domain", {0, 1}}, {"slope", {{0, 1}, {1, 0}}}}}}}};

}  // namespace

TEST_CASE("json round trips") {
    rnd::Rng g(71);
    const CMat m = rnd::gaussian(g, 3, 2);
    CHECK(spectral_norm(CMat(io::matrix_from_json(io::to_json(m)) - m)) == 0);
    CHECK(io::complex_from_json(json::parse("[0.5, -2]")) == Complex(0.5, -2));
    CHECK(io::complex_from_json(json::parse("3")) == Complex(3, 0));

    const auto B = rnd::bp_product(g, 3, 2);
    const auto B2 = io::bp_from_json(io::to_json(B));
    for (Complex z : {Complex(0.1, 0.2), Complex(-0.5, 0.3)})
        CHECK(spectral_norm(CMat(eval_product(B, z) - eval_product(B2, z))) <= 1e-14);

    const auto R = bp_to_repr(rnd::sorted_by_angle(B));
    const auto R2 = io::repr_from_json(io::to_json(R));
    CHECK(R2.L == R.L);
    CHECK(spectral_norm(CMat(repr_eval_exact(R, 0.3) - repr_eval_exact(R2, 0.3))) == 0);

    const auto E = IntegratorSpec::step(0, 1, {0.3, 0.8}, {identity(2), CMat(2 * identity(2))});
    const auto E2 = io::integrator_from_json(io::to_json(E));
    CHECK(spectral_norm(CMat(E2.value(0.9) - E.value(0.9))) == 0);
    const auto f = KernelSpec::tabulated({0, 1}, {Complex(1, 2), 3.0});
    CHECK(io::kernel_from_json(io::to_json(f))(0.5) == f(0.5));
}

TEST_CASE("json rejects malformed input") {
    CHECK_THROWS_AS(io::matrix_from_json(json::parse("[[1, 2], [3]]")), SpecError);
    CHECK_THROWS_AS(io::kernel_from_json(json::parse(R"({"type": "mystery"})")), SpecError);
    CHECK_THROWS_AS(io::integrator_from_json(json::parse(R"({"type": "linear", "domain": [1, 0], "slope": 1})")),
                    SpecError);
    CHECK_THROWS_AS(io::function_from_json(json::parse(R"({"type": "polynomial"})"), 1e-8), SpecError);
}

TEST_CASE("job validation") {
    CHECK_THROWS_AS(cli::make_job("prodint", json{{"schema", 2}}, "x"), SpecError);
    CHECK_THROWS_AS(cli::make_job("prodint", json::array(), "x"), SpecError);
    CHECK_THROWS_AS(cli::make_job("nope", json{{"schema", 1}}, "x"), SpecError);
    CHECK_THROWS_AS(cli::make_job("prodint", json{{"schema", 1}, {"command", "ode"}}, "x"), SpecError);
    CHECK_THROWS_AS(cli::make_job("prodint", json{{"schema", 1}, {"tol", -1}}, "x"), SpecError);
    CHECK_THROWS_AS(cli::make_job("prodint", json{{"schema", 1}, {"grid", {{"radii", {1.5}}}}}, "x"), SpecError);
    const auto job = cli::make_job("prodint", json{{"schema", 1}, {"seed", 5}}, "x");
    CHECK(job.seed == 5);
    CHECK(job.tol == 1e-8);
}

TEST_CASE("prodint job reproduces cosh and sinh") {
    const auto out = scratch("prodint");
    REQUIRE(run_job("prodint", cosh_spec, out) == cli::exit_ok);
    const auto rows = read_csv(out / "prodint.csv");
    REQUIRE(rows.size() == 1);
    CHECK(std::abs(rows[0][0] - std::cosh(1.0)) <= 1e-10);
    CHECK(std::abs(rows[0][2] - std::sinh(1.0)) <= 1e-10);
    CHECK(std::abs(rows[0][4] - std::sinh(1.0)) <= 1e-10);
    CHECK(std::abs(rows[0][6] - std::cosh(1.0)) <= 1e-10);
    const auto rep = read_json(out / "report.json");
    CHECK(rep["status"] == "ok");
    CHECK(rep["certificates"].contains("prodint"));
    bool has_det = false;
    for (const auto& c : rep["checks"]) has_det = has_det || c["id"] == "determinant-formula";
    CHECK(has_det);
}

TEST_CASE("output is byte-identical across runs and thread counts") {
    const json spec = {{"schema", 1},
                       {"inputs", {{"kind", "pp"}, {"spec", {{"blocks", {{{"length", 1}, {"angle", 0.4},
                                                                          {"integrator", {{"type", "linear"}, {"domain", {0, 1}}, {"slope", {{0.5, 0}, {0, 0.5}}}}}}}}}}}},
                       {"grid", {{"radii", {0.2, 0.7}}, {"angles", 9}}}};
    const auto a = scratch("det_a"), b = scratch("det_b");
    setenv("MVFTOOL_MAX_THREADS", "3", 1);
    REQUIRE(run_job("construct", spec, a) == cli::exit_ok);
    setenv("MVFTOOL_MAX_THREADS", "1", 1);
    REQUIRE(run_job("construct", spec, b) == cli::exit_ok);
    unsetenv("MVFTOOL_MAX_THREADS");
    CHECK(slurp(a / "grid.csv") == slurp(b / "grid.csv"));
    CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
    CHECK(slurp(a / "grid.csv").find('\r') == std::string::npos);

    const json v = {{"schema", 1}, {"seed", 3}, {"inputs", {{"suite", "splitting"}, {"count", 5}}}};
    const auto va = scratch("ver_a"), vb = scratch("ver_b");
    REQUIRE(run_job("verify", v, va) == cli::exit_ok);
    REQUIRE(run_job("verify", v, vb) == cli::exit_ok);
    CHECK(slurp(va / "verify.csv") == slurp(vb / "verify.csv"));
    CHECK(read_json(va / "report.json")["exercises"].get<std::string>().size() > 0);
}

TEST_CASE("exit codes") {
    const auto out = scratch("codes");
    json bad = cosh_spec;
    bad["inputs"]["kernel"]["type"] = "unknown";
    CHECK(run_job("prodint", bad, out) == cli::exit_malformed);
    json missing = cosh_spec;
    missing["inputs"].erase("integrator");
    CHECK(run_job("prodint", missing, out) == cli::exit_malformed);
    CHECK(run_job("prodint", cosh_spec, "/proc/mvf_not_writable") == cli::exit_io);
    // An unattainable certificate is a numerical failure.
    json tight = cosh_spec;
    tight["tol"] = 1e-300;
    CHECK(run_job("prodint", tight, out) == cli::exit_numerical);
    CHECK(read_json(out / "report.json")["status"] == "failed");
}

TEST_CASE("bp-factor with an empty product emits the identity") {
    const auto out = scratch("bp_empty");
    const json spec = {{"schema", 1},
                       {"inputs", {{"function", {{"type", "bp_product"}, {"dim", 2}, {"factors", json::array()}}}}}};
    REQUIRE(run_job("bp-factor", spec, out) == cli::exit_ok);
    const auto B = io::bp_from_json(read_json(out / "factors.json"));
    CHECK(B.factors.empty());
    CHECK(spectral_norm(CMat(B.tail - identity(2))) == 0);
}

TEST_CASE("demo-nonuniqueness job") {
    const auto out = scratch("demo");
    REQUIRE(run_job("demo-nonuniqueness", json{{"schema", 1}}, out) == cli::exit_ok);
    const auto r = read_json(out / "report.json")["results"];
    CHECK(r["function_gap"].get<double>() <= 1e-8);
    CHECK(r["integrator_gap"].get<double>() >= 0.2);
}

TEST_CASE("emit_grid columns") {
    const auto dir = scratch("grid");
    fs::create_directories(dir);
    cli::GridSpec gs;
    cli::emit_grid(MatrixFunction::constant(identity(2)), gs, (dir / "id.csv").string());
    for (const auto& row : read_csv(dir / "id.csv")) {
        REQUIRE(row.size() == 2 + 8 + 3);
        CHECK(row[10] == doctest::Approx(1).epsilon(1e-15));
        CHECK(row[11] == 0);
    }

    rnd::Rng g(72);
    const auto b = as_function(BPProduct{{BPFactor::from_subspace(Complex(0.3, 0.4), rnd::gaussian(g, 2, 1))}, identity(2)});
    cli::GridSpec ring{{1 - 1e-6}, 32, 0.1};
    cli::emit_grid(b, ring, (dir / "ring.csv").string());
    for (const auto& row : read_csv(dir / "ring.csv")) CHECK(row[11] <= 1e-4);

    const auto O = make_outer(identity(2), [](double p) { return CMat((0.4 + 0.2 * std::cos(p)) * identity(2)); }, 2);
    cli::emit_grid(as_function(O, 1e-9), gs, (dir / "outer.csv").string());
    for (const auto& row : read_csv(dir / "outer.csv")) CHECK(row[12] > 0);
}

TEST_CASE("number formatting") {
    CHECK(cli::fmt(0.1) == "0.10000000000000001");
    CHECK(cli::fmt(1) == "1");
    CHECK(std::stod(cli::fmt(std::numbers::pi)) == std::numbers::pi);
}
