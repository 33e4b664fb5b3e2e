#include "mvf/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "mvf/blaschke.hpp"
#include "mvf/factor.hpp"
#include "mvf/json_io.hpp"
#include "mvf/potapov.hpp"
#include "mvf/prodint.hpp"
#include "mvf/suites.hpp"

namespace mvf::cli {

namespace {

constexpr double two_pi = 2 * std::numbers::pi;
namespace fs = std::filesystem;

class Report {
public:
    explicit Report(const Job& job) {
        j_ = {{"schema", 1}, {"command", job.command}, {"tol", job.tol}, {"seed", job.seed}};
        j_["checks"] = json::array();
        j_["certificates"] = json::object();
        j_["results"] = json::object();
        j_["artifacts"] = json::array();
    }
    // passed when value <= limit (or value >= limit for at_least)
    void check(const std::string& id, double value, double limit, bool at_least = false) {
        const bool ok = at_least ? value >= limit : value <= limit;
        j_["checks"].push_back({{"id", id}, {"passed", ok}, {"value", finite_or_null(value)}, {"limit", limit},
                                {"relation", at_least ? ">=" : "<="}});
        passed_ = passed_ && ok;
    }
    void flag(const std::string& id, bool ok) {
        j_["checks"].push_back({{"id", id}, {"passed", ok}});
        passed_ = passed_ && ok;
    }
    void certificate(const std::string& key, double v) { j_["certificates"][key] = finite_or_null(v); }
    json& results() { return j_["results"]; }
    void artifact(const std::string& name) { j_["artifacts"].push_back(name); }
    void set(const std::string& key, json v) { j_[key] = std::move(v); }
    bool passed() const { return passed_; }
    json finish() {
        j_["status"] = passed_ ? "ok" : "failed";
        return j_;
    }

private:
    static json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
    json j_;
    bool passed_ = true;
};

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    return f;
}

void write_text(const std::string& path, const std::string& text) {
    auto f = open_out(path);
    f << text;
    if (!f) throw IoError("cannot write " + path);
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
    out += "\n";
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + fmt(r[i]);
        out += "\n";
    }
    write_text(path, out);
}

std::vector<std::string> entry_header(int rows, int cols) {
    std::vector<std::string> h;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            const std::string e = "a" + std::to_string(i + 1) + std::to_string(j + 1);
            h.push_back(e + "_re");
            h.push_back(e + "_im");
        }
    return h;
}

void append_entries(std::vector<double>& row, const CMat& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j).real());
            row.push_back(m(i, j).imag());
        }
}

std::string path_in(const Job& job, const std::string& name) { return (fs::path(job.out_dir) / name).string(); }

// 200 interior points: 10 radii x 20 angles.
std::vector<Complex> reconstruction_grid(double rmax) {
    std::vector<Complex> z;
    for (int i = 1; i <= 10; ++i)
        for (int j = 0; j < 20; ++j) z.push_back(std::polar(rmax * i / 10, two_pi * (j + 0.25) / 20));
    return z;
}

void emit(const Job& job, Report& rep, const MatrixFunction& A, const std::string& name) {
    emit_grid(A, GridSpec::from_json(job.grid), path_in(job, name));
    rep.artifact(name);
}

// ---------------------------------------------------------------- commands

void cmd_prodint(const Job& job, Report& rep) {
    const auto f = io::kernel_from_json(io::field(job.inputs, "kernel"));
    const auto E = io::integrator_from_json(io::field(job.inputs, "integrator"));
    ProdIntOptions opt;
    opt.check_invariants = true;
    ProdIntResult r;
    if (job.inputs.contains("interval")) {
        const auto iv = io::reals_from_json(job.inputs["interval"]);
        if (iv.size() != 2) throw SpecError("spec: 'interval' must be [lo, hi]");
        r = prod_integral(f, E, iv[0], iv[1], job.tol, opt);
    } else {
        r = prod_integral(f, E, job.tol, opt);
    }
    rep.results()["value"] = io::to_json(r.value);
    rep.results()["cells"] = r.partitions_used;
    rep.results()["levels"] = r.levels;
    rep.certificate("prodint", r.error_certificate);
    rep.check("prodint-certificate", r.error_certificate, job.tol);
    rep.check("determinant-formula", r.det_residual, 1e-8);
    rep.check("norm-bound", spectral_norm(r.value) - r.norm_bound, 1e-12 * std::max(1.0, r.norm_bound));

    auto header = entry_header(static_cast<int>(r.value.rows()), static_cast<int>(r.value.cols()));
    for (const char* h : {"certificate", "cells", "levels", "det_residual", "norm_bound"}) header.push_back(h);
    std::vector<double> row;
    append_entries(row, r.value);
    row.insert(row.end(), {r.error_certificate, static_cast<double>(r.partitions_used), static_cast<double>(r.levels),
                           r.det_residual, r.norm_bound});
    write_csv(path_in(job, "prodint.csv"), header, {row});
    rep.artifact("prodint.csv");
}

void cmd_ode(const Job& job, Report& rep) {
    const auto f = job.inputs.contains("kernel") ? io::kernel_from_json(job.inputs["kernel"]) : KernelSpec::constant(1.0);
    const auto E = io::integrator_from_json(io::field(job.inputs, "integrator"));
    const int steps = io::int_field(job.inputs, "steps", 1000);
    if (steps < 1) throw SpecError("spec: 'steps' must be positive");
    CMat F = identity(E.dim());
    for (const auto& p : E.pieces(E.a(), E.b())) {
        if (p.kind == Piece::Kind::atom) {
            F = F * mat_exp(CMat(f(p.s0) * p.D));
            continue;
        }
        std::vector<double> cuts{p.s0};
        for (double t : f.breakpoints(p.s0, p.s1)) cuts.push_back(t);
        cuts.push_back(p.s1);
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
            std::function<CMat(double)> A;
            if (p.kind == Piece::Kind::linear) {
                const CMat D = p.D;
                A = [&f, D](double t) { return CMat(f(t) * D); };
            } else {
                const auto* M = p.M;
                A = [&f, M](double t) { return CMat(f(t) * (*M)(t)); };
            }
            F = F * ode_integral(A, cuts[i], cuts[i + 1], steps);
        }
    }
    const auto r = prod_integral(f, E, job.tol);
    const double gap = spectral_norm(CMat(F - r.value));
    rep.results()["ode"] = io::to_json(F);
    rep.results()["prodint"] = io::to_json(r.value);
    rep.certificate("prodint", r.error_certificate);
    rep.check("ode-agreement", gap, 1e-6);

    auto header = entry_header(static_cast<int>(F.rows()), static_cast<int>(F.cols()));
    header.push_back("gap");
    std::vector<double> row;
    append_entries(row, F);
    row.push_back(gap);
    write_csv(path_in(job, "ode.csv"), header, {row});
    rep.artifact("ode.csv");
}

double reconstruction_error(const MatrixFunction& A, const std::function<CMat(Complex)>& BR, double rmax) {
    double e = 0;
    for (Complex z : reconstruction_grid(rmax)) e = std::max(e, spectral_norm(CMat(A(z) - BR(z))));
    return e;
}

void cmd_bp_factor(const Job& job, Report& rep) {
    const auto A = io::function_from_json(io::field(job.inputs, "function"), job.tol);
    const double R = io::number_field(job.inputs, "search_radius", 0.9);
    std::vector<Complex> zeros;
    if (job.inputs.contains("zeros")) {
        for (const auto& z : job.inputs["zeros"]) zeros.push_back(io::complex_from_json(z));
    } else {
        zeros = find_det_zeros(A, R, io::int_field(job.inputs, "grid_density", 64));
    }
    const auto fr = factor_out_zeros(A, zeros);
    json zj = json::array();
    for (Complex z : zeros) zj.push_back(io::to_json(z));
    rep.results()["zeros"] = zj;
    rep.results()["factors"] = fr.product.factors.size();
    rep.results()["blaschke_sum"] = fr.product.blaschke_sum();
    write_json(path_in(job, "factors.json"), io::to_json(fr.product));
    rep.artifact("factors.json");

    const auto BR = [&](Complex z) { return CMat(eval_product(fr.product, z) * fr.remainder(z)); };
    rep.check("bp-reconstruction", reconstruction_error(A, BR, 0.95), 1e-7);
    rep.check("unconsumed-zeros", static_cast<double>(fr.unconsumed.size()), 0);
    // Zero-free remainder inside the search disk.
    rep.check("remainder-zero-count", std::abs(winding_count(fr.remainder, 0.0, R)), 0);
    emit(job, rep, fr.remainder, "remainder_grid.csv");
}

void cmd_bp_detach(const Job& job, Report& rep) {
    const auto A = io::function_from_json(io::field(job.inputs, "function"), job.tol);
    const Complex z0 = io::complex_from_json(io::field(job.inputs, "zero"));
    const auto d = detach_max(A, z0);
    BPProduct B{{d.factor}, identity(A.dim)};
    write_json(path_in(job, "factor.json"), io::to_json(B));
    rep.artifact("factor.json");
    rep.results()["rank"] = d.factor.rank;
    const auto t = detach_test(A, d.factor, z0);
    rep.check("detachability", t.residual, t.tol);
    const auto BR = [&](Complex z) { return CMat(eval_factor(d.factor, z) * d.remainder(z)); };
    rep.check("bp-reconstruction", reconstruction_error(A, BR, 0.95), 1e-7);
    emit(job, rep, d.remainder, "remainder_grid.csv");
}

void cmd_potapov_repr(const Job& job, Report& rep) {
    const json& spec = job.inputs.contains("product") ? job.inputs["product"] : io::field(job.inputs, "function");
    const auto B = io::bp_from_json(spec);
    const auto R = bp_to_repr(B);
    write_json(path_in(job, "repr.json"), io::to_json(R));
    rep.artifact("repr.json");
    rep.results()["L"] = R.L;

    double trace_defect = 0;
    for (double t : R.breakpoints) trace_defect = std::max(trace_defect, std::abs(R.E(t).trace().real() - t));
    rep.check("trace-normalization", trace_defect, 1e-12);

    auto mpe = modified_product_error(B, R, io::number_field(job.inputs, "radius", 0.5), std::min(job.tol, 1e-10));
    rep.results()["modified_product_error"] = mpe.measured;
    rep.results()["modified_product_bound"] = mpe.bound;
    rep.results()["grid_radius"] = mpe.radius;
    rep.check("modified-product-bound", mpe.measured, mpe.bound);

    double det_gap = 0, step_gap = 0, cert = 0;
    std::vector<std::vector<double>> rows;
    for (int j = 0; j < 8; ++j) {
        const Complex z = std::polar(0.6, two_pi * (j + 0.5) / 8);
        const auto ev = repr_eval_checked(R, z, job.tol);
        Complex s = 0;
        for (std::size_t k = 0; k < R.jumps.size(); ++k)
            s += herglotz_kernel(z, R.angles[k]) * (R.breakpoints[k + 1] - R.breakpoints[k]);
        const Complex want = std::exp(s) * R.tail.determinant();
        det_gap = std::max(det_gap, std::abs(ev.value.determinant() - want) / std::abs(want));
        step_gap = std::max(step_gap, ev.exact_gap);
        cert = std::max(cert, ev.certificate);
    }
    rep.certificate("repr_eval", cert);
    rep.check("determinant-formula", det_gap, 1e-9);
    rep.check("step-product-agreement", step_gap, std::max(job.tol, 10 * cert) + 1e-12);

    for (std::size_t k = 0; k < R.jumps.size(); ++k)
        rows.push_back({static_cast<double>(k + 1), R.breakpoints[k + 1], R.angles[k], R.jumps[k].trace().real()});
    write_csv(path_in(job, "breakpoints.csv"), {"j", "t", "theta", "trace_H"}, rows);
    rep.artifact("breakpoints.csv");
}

double sup_error_half_disk(const MatrixFunction& A, const RationalApproximant& ak) {
    double e = 0;
    for (int j = 0; j <= 8; ++j)
        for (int l = 0; l < (j ? 32 : 1); ++l) {
            const Complex z = std::polar(0.5 * j / 8, two_pi * l / 32 + 0.01);
            e = std::max(e, spectral_norm(CMat(A(z) - ak(z))));
        }
    return e;
}

double boundary_unitarity(const RationalApproximant& ak) {
    double e = 0;
    for (int l = 0; l < 32; ++l) e = std::max(e, unitarity_residual(ak(std::polar(1.0, two_pi * (l + 0.37) / 32))));
    return e;
}

double interior_norm_excess(const RationalApproximant& ak) {
    double e = 0;
    for (int j = 1; j <= 6; ++j)
        for (int l = 0; l < 16; ++l) e = std::max(e, spectral_norm(ak(std::polar(0.98 * j / 6, two_pi * l / 16 + 0.2))) - 1);
    return e;
}

void cmd_cayley_approx(const Job& job, Report& rep) {
    const auto A = io::function_from_json(io::field(job.inputs, "function"), job.tol);
    const int kmax = io::int_field(job.inputs, "kmax", 8);
    if (kmax < 1 || kmax > 12) throw SpecError("spec: 'kmax' must be in [1, 12]");
    const auto chain = approximant_chain(A, kmax);
    std::vector<std::vector<double>> rows;
    double worst_cert = 0, worst_bd = 0, worst_in = -1, first = 0, prev = 0;
    bool monotone = true, certified = true;
    for (const auto& ak : chain) {
        const double err = sup_error_half_disk(A, ak);
        const double bd = boundary_unitarity(ak);
        const double in = interior_norm_excess(ak);
        if (ak.k == 1) first = err;
        else if (err > prev + 1e-13) monotone = false;
        prev = err;
        certified = certified && ak.certificate <= 1.0 / ak.k;
        worst_cert = std::max(worst_cert, ak.certificate * ak.k);
        worst_bd = std::max(worst_bd, bd);
        worst_in = std::max(worst_in, in);
        rows.push_back({static_cast<double>(ak.k), ak.r_k, ak.rho, static_cast<double>(ak.num_angles),
                        static_cast<double>(ak.cells.size() - 1), ak.certificate, err, bd});
    }
    write_csv(path_in(job, "approximants.csv"),
              {"k", "r_k", "rho", "angles", "cells", "certificate", "sup_error_half_disk", "boundary_unitarity"}, rows);
    rep.artifact("approximants.csv");
    write_json(path_in(job, "cayley.json"), io::to_json(chain.back().cayley));
    rep.artifact("cayley.json");
    rep.certificate("k_times_certificate", worst_cert);
    rep.flag("approximant-certificate", certified);
    rep.flag("monotone-sup-error", monotone);
    rep.check("error-reduction", prev, first / 4);
    rep.check("boundary-unitarity", worst_bd, 1e-7);
    rep.check("interior-contractive", worst_in, 1e-8);
}

void cmd_construct(const Job& job, Report& rep) {
    const std::string kind = io::string_field(job.inputs, "kind");
    const json& spec = io::field(job.inputs, "spec");
    const double tol = std::min(job.tol, 1e-10);
    MatrixFunction A;
    std::function<Complex(Complex)> det;
    bool contractive = true;
    if (kind == "pp") {
        const auto s = io::pp_inner_from_json(spec);
        A = as_function(s, tol);
        det = [s](Complex z) { return det_pp_inner(s, z); };
    } else if (kind == "sc") {
        const auto s = io::sc_inner_from_json(spec);
        A = as_function(s, tol);
        det = [s](Complex z) { return det_sc_inner(s, z); };
    } else if (kind == "outer") {
        const auto s = io::outer_from_json(spec);
        A = as_function(s, tol);
        det = [s](Complex z) { return det_outer(s, z); };
        contractive = s.lower_bound >= 0;
    } else {
        throw SpecError("spec: construct kind must be pp, sc or outer");
    }
    const GridSpec grid = GridSpec::from_json(job.grid);
    double det_gap = 0, excess = -1, min_absdet = std::numeric_limits<double>::infinity();
    for (double r : grid.radii)
        for (int l = 0; l < grid.angles; ++l) {
            const Complex z = std::polar(r, two_pi * l / grid.angles + grid.offset);
            const CMat v = A(z);
            const Complex want = det(z);
            det_gap = std::max(det_gap, std::abs(v.determinant() - want) / std::max(std::abs(want), 1e-300));
            excess = std::max(excess, spectral_norm(v) - 1);
            min_absdet = std::min(min_absdet, std::abs(v.determinant()));
        }
    rep.check("determinant-formula", det_gap, 1e-8);
    if (contractive) rep.check("contractive", excess, 1e-8);
    if (kind == "outer") rep.check("invertible", min_absdet, 0, true);
    rep.results()["min_absdet"] = min_absdet;
    emit(job, rep, A, "grid.csv");
}

void cmd_classify(const Job& job, Report& rep) {
    const auto A = io::function_from_json(io::field(job.inputs, "function"), job.tol);
    const auto c = classify_by_det(A);
    rep.results()["label"] = to_string(c.label);
    rep.results()["inner_test"] = c.inner_test;
    rep.results()["outer_test"] = c.outer_test;
    rep.results()["inner_pass_fraction"] = c.inner_pass_fraction;
    rep.results()["mean_deviation"] = c.mean_deviation;
    rep.results()["outer_gap"] = c.outer_gap;
    if (job.inputs.contains("expected")) rep.flag("expected-label", io::string_field(job.inputs, "expected") == to_string(c.label));
}

void cmd_demo(const Job& job, Report& rep) {
    const auto r = nonuniqueness_demo(std::min(job.tol, 1e-10));
    rep.results()["function_gap"] = r.function_gap;
    rep.results()["closed_form_gap"] = r.closed_form_gap;
    rep.results()["integrator_gap"] = r.integrator_gap;
    rep.results()["grid_points"] = r.grid_points;
    rep.check("function-gap", r.function_gap, 1e-8);
    rep.check("closed-form", r.closed_form_gap, 1e-8);
    rep.check("integrator-gap", r.integrator_gap, 0.2, true);
    rep.check("trace-normalization", r.trace_defect, 1e-12);
    write_csv(path_in(job, "nonuniqueness.csv"), {"grid_points", "function_gap", "closed_form_gap", "integrator_gap"},
              {{static_cast<double>(r.grid_points), r.function_gap, r.closed_form_gap, r.integrator_gap}});
    rep.artifact("nonuniqueness.csv");
}

void cmd_verify(const Job& job, Report& rep) {
    const std::string name = io::string_field(job.inputs, "suite");
    const int count = io::int_field(job.inputs, "count", name == "matrix-norm" ? 1000 : 50);
    if (count < 1) throw SpecError("spec: 'count' must be positive");
    const auto s = suites::run(name, job.seed, count, std::min(job.tol, 1e-10));
    rep.set("suite", name);
    rep.set("exercises", s.statement);
    rep.results()["instances"] = count;
    rep.results()["failures"] = s.failures();
    rep.check(name, s.worst(), s.limit);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < s.residuals.size(); ++i) rows.push_back({static_cast<double>(i), s.residuals[i]});
    write_csv(path_in(job, "verify.csv"), {"instance", "residual"}, rows);
    rep.artifact("verify.csv");
}

}  // namespace

// ------------------------------------------------------------------ public

const std::vector<std::string>& commands() {
    static const std::vector<std::string> c{"prodint",       "ode",       "bp-factor", "bp-detach",
                                            "potapov-repr",  "cayley-approx", "construct", "classify",
                                            "demo-nonuniqueness", "verify"};
    return c;
}

Job make_job(const std::string& command, const json& spec, const std::string& out_dir) {
    if (std::find(commands().begin(), commands().end(), command) == commands().end())
        throw SpecError("unknown command '" + command + "'");
    if (!spec.is_object()) throw SpecError("spec: top level must be an object");
    if (!spec.contains("schema") || !spec["schema"].is_number_integer() || spec["schema"].get<int>() != 1)
        throw SpecError("spec: unsupported or missing schema (expected 1)");
    if (spec.contains("command") && (!spec["command"].is_string() || spec["command"].get<std::string>() != command))
        throw SpecError("spec: command field does not match the invoked command");
    Job job;
    job.command = command;
    job.out_dir = out_dir;
    if (spec.contains("inputs")) {
        if (!spec["inputs"].is_object()) throw SpecError("spec: 'inputs' must be an object");
        job.inputs = spec["inputs"];
    }
    if (spec.contains("grid")) job.grid = spec["grid"];
    job.tol = io::number_field(spec, "tol", 1e-8);
    if (spec.contains("seed")) {
        if (!spec["seed"].is_number_integer() || spec["seed"].get<std::int64_t>() < 0)
            throw SpecError("spec: 'seed' must be a nonnegative integer");
        job.seed = spec["seed"].get<std::uint64_t>();
    }
    if (!(job.tol > 0)) throw SpecError("spec: 'tol' must be positive");
    GridSpec::from_json(job.grid);
    return job;
}

GridSpec GridSpec::from_json(const json& j) {
    GridSpec g;
    if (j.is_null()) return g;
    if (!j.is_object()) throw SpecError("spec: 'grid' must be an object");
    if (j.contains("radii")) g.radii = io::reals_from_json(j["radii"]);
    g.angles = io::int_field(j, "angles", g.angles);
    g.offset = io::number_field(j, "offset", 0.0);
    if (g.radii.empty() || g.angles < 1) throw SpecError("spec: grid needs radii and a positive angle count");
    for (double r : g.radii)
        if (!(r >= 0 && r < 1)) throw SpecError("spec: grid radii must lie in [0, 1)");
    return g;
}

std::string fmt(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

int max_threads() {
    int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (const char* env = std::getenv("MVFTOOL_MAX_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) n = std::min(n, cap);
    }
    return n;
}

void emit_grid(const MatrixFunction& A, const GridSpec& grid, const std::string& path) {
    std::vector<std::pair<double, double>> pts;
    for (double r : grid.radii)
        for (int l = 0; l < grid.angles; ++l) pts.emplace_back(r, two_pi * l / grid.angles + grid.offset);
    std::vector<std::vector<double>> rows(pts.size());
    std::vector<std::exception_ptr> errors(pts.size());
    auto work = [&](std::size_t i) {
        try {
            const CMat v = A(std::polar(pts[i].first, pts[i].second));
            std::vector<double> row{pts[i].first, pts[i].second};
            append_entries(row, v);
            row.push_back(spectral_norm(v));
            row.push_back(unitarity_residual(v));
            row.push_back(std::abs(v.determinant()));
            rows[i] = std::move(row);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    const int threads = std::min<int>(max_threads(), static_cast<int>(pts.size()));
    if (threads <= 1) {
        for (std::size_t i = 0; i < pts.size(); ++i) work(i);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t i = t; i < pts.size(); i += threads) work(i);
            });
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<std::string> header{"r", "phi"};
    for (auto& h : entry_header(A.dim, A.dim)) header.push_back(h);
    for (const char* h : {"norm", "unitarity_residual", "absdet"}) header.push_back(h);
    write_csv(path, header, rows);
}

int run(const Job& job, std::ostream& log) {
    bool have_dir = false;
    try {
        std::error_code ec;
        fs::create_directories(job.out_dir, ec);
        if (ec || !fs::is_directory(job.out_dir)) throw IoError("cannot create output directory " + job.out_dir);
        have_dir = true;
        Report rep(job);
        const std::string& c = job.command;
        if (c == "prodint") cmd_prodint(job, rep);
        else if (c == "ode") cmd_ode(job, rep);
        else if (c == "bp-factor") cmd_bp_factor(job, rep);
        else if (c == "bp-detach") cmd_bp_detach(job, rep);
        else if (c == "potapov-repr") cmd_potapov_repr(job, rep);
        else if (c == "cayley-approx") cmd_cayley_approx(job, rep);
        else if (c == "construct") cmd_construct(job, rep);
        else if (c == "classify") cmd_classify(job, rep);
        else if (c == "demo-nonuniqueness") cmd_demo(job, rep);
        else if (c == "verify") cmd_verify(job, rep);
        const bool ok = rep.passed();
        write_json(path_in(job, "report.json"), rep.finish());
        if (job.verbose) log << job.command << ": " << (ok ? "ok" : "checks failed") << "\n";
        return ok ? exit_ok : exit_numerical;
    } catch (const SpecError& e) {
        log << "error: " << e.what() << "\n";
        return exit_malformed;
    } catch (const nlohmann::json::exception& e) {
        log << "error: spec: " << e.what() << "\n";
        return exit_malformed;
    } catch (const NumericalError& e) {
        log << "numerical failure: " << e.what() << "\n";
        if (have_dir) {
            try {
                Report rep(job);
                rep.set("error", e.what());
                rep.flag("completed", false);
                write_json(path_in(job, "report.json"), rep.finish());
            } catch (const IoError&) {
                return exit_io;
            }
        }
        return exit_numerical;
    } catch (const IoError& e) {
        log << "i/o error: " << e.what() << "\n";
        return exit_io;
    }
}

int main(int argc, char** argv) {
    CLI::App app{"Matrix-valued function toolkit: product integrals, B.P. factors, inner/outer constructions"};
    std::string command, spec_path, out_dir;
    std::optional<double> tol;
    std::optional<std::uint64_t> seed;
    bool verbose = false;
    app.add_option("command", command, "Command to run")->required()->check(CLI::IsMember(commands()));
    app.add_option("--spec", spec_path, "JSON job specification")->required();
    app.add_option("--out", out_dir, "Output directory")->required();
    app.add_option("--tol", tol, "Tolerance (default 1e-8)")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "Seed for randomized suites");
    app.add_flag("--verbose", verbose, "Print a status line");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_malformed;
    }

    json spec;
    {
        std::ifstream in(spec_path, std::ios::binary);
        if (!in) {
            std::cerr << "i/o error: cannot read " << spec_path << "\n";
            return exit_io;
        }
        try {
            spec = json::parse(in);
        } catch (const json::exception& e) {
            std::cerr << "error: spec: " << e.what() << "\n";
            return exit_malformed;
        }
    }
    Job job;
    try {
        job = make_job(command, spec, out_dir);
    } catch (const SpecError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_malformed;
    } catch (const json::exception& e) {
        std::cerr << "error: spec: " << e.what() << "\n";
        return exit_malformed;
    }
    if (tol) job.tol = *tol;
    if (seed) job.seed = *seed;
    job.verbose = verbose;
    return run(job, std::cerr);
}

}  // namespace mvf::cli
