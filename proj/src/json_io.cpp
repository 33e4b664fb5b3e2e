#include "mvf/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace mvf::io {

namespace {

constexpr double two_pi = 2 * std::numbers::pi;

[[noreturn]] void bad(const std::string& what) { throw SpecError("spec: " + what); }

const json& array_field(const json& j, const char* key) {
    const json& v = field(j, key);
    if (!v.is_array()) bad(std::string("'") + key + "' must be an array");
    return v;
}

std::pair<double, double> domain_field(const json& j) {
    const auto d = reals_from_json(field(j, "domain"));
    if (d.size() != 2) bad("'domain' must be [a, b]");
    return {d[0], d[1]};
}

CMat tail_or_identity(const json& j, int dim) {
    if (j.contains("tail")) return matrix_from_json(j["tail"]);
    if (dim < 1) bad("cannot infer the dimension; give 'tail' or 'dim'");
    return CMat::Identity(dim, dim);
}

StepFunction step_function_from_json(const json& j) {
    StepFunction s{reals_from_json(field(j, "points")), reals_from_json(field(j, "values"))};
    s.validate();
    return s;
}

}  // namespace

const json& field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) bad(std::string("missing field '") + key + "'");
    return j.at(key);
}

double number_field(const json& j, const char* key) {
    const json& v = field(j, key);
    if (!v.is_number()) bad(std::string("'") + key + "' must be a number");
    return v.get<double>();
}

double number_field(const json& j, const char* key, double fallback) {
    return j.is_object() && j.contains(key) ? number_field(j, key) : fallback;
}

int int_field(const json& j, const char* key, int fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_number_integer()) bad(std::string("'") + key + "' must be an integer");
    return v.get<int>();
}

std::string string_field(const json& j, const char* key) {
    const json& v = field(j, key);
    if (!v.is_string()) bad(std::string("'") + key + "' must be a string");
    return v.get<std::string>();
}

Complex complex_from_json(const json& j) {
    if (j.is_number()) return {j.get<double>(), 0.0};
    if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
        return {j[0].get<double>(), j[1].get<double>()};
    bad("complex number must be a number or [re, im]");
}

json to_json(Complex c) { return json::array({c.real(), c.imag()}); }

CMat matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty()) bad("matrix must be a non-empty array of rows");
    const auto rows = j.size(), cols = j[0].size();
    CMat m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) bad("matrix rows must have equal length");
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = complex_from_json(j[r][c]);
    }
    if (!all_finite(m)) bad("matrix entries must be finite");
    return m;
}

json to_json(const CMat& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(to_json(m(r, c)));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<double> reals_from_json(const json& j) {
    if (!j.is_array()) bad("expected an array of numbers");
    std::vector<double> out;
    for (const auto& v : j) {
        if (!v.is_number()) bad("expected an array of numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

std::vector<CMat> matrices_from_json(const json& j) {
    if (!j.is_array()) bad("expected an array of matrices");
    std::vector<CMat> out;
    for (const auto& v : j) out.push_back(matrix_from_json(v));
    return out;
}

// ---------------------------------------------------------------- kernels

KernelSpec kernel_from_json(const json& j) {
    const std::string type = string_field(j, "type");
    if (type == "constant") return KernelSpec::constant(complex_from_json(field(j, "value")));
    if (type == "herglotz") {
        const Complex z = complex_from_json(field(j, "z"));
        if (j.contains("theta")) return KernelSpec::herglotz(z, step_function_from_json(j["theta"]));
        return KernelSpec::herglotz(z);
    }
    if (type == "tabulated") {
        std::vector<Complex> values;
        for (const auto& v : array_field(j, "values")) values.push_back(complex_from_json(v));
        return KernelSpec::tabulated(reals_from_json(field(j, "points")), values);
    }
    bad("unknown kernel type '" + type + "'");
}

json to_json(const KernelSpec& f) {
    return std::visit(
        [](const auto& v) -> json {
            using V = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<V, KernelSpec::Constant>) {
                return {{"type", "constant"}, {"value", to_json(v.c)}};
            } else if constexpr (std::is_same_v<V, KernelSpec::Herglotz>) {
                json out = {{"type", "herglotz"}, {"z", to_json(v.z)}};
                if (v.theta) out["theta"] = {{"points", v.theta->points}, {"values", v.theta->values}};
                return out;
            } else if constexpr (std::is_same_v<V, KernelSpec::Tabulated>) {
                json vals = json::array();
                for (Complex c : v.values) vals.push_back(to_json(c));
                return {{"type", "tabulated"}, {"points", v.points}, {"values", vals}};
            } else {
                throw SpecError("spec: callable kernels are not serializable");
            }
        },
        f.variant());
}

// ------------------------------------------------------------ integrators

IntegratorSpec integrator_from_json(const json& j) {
    const std::string type = string_field(j, "type");
    const bool inc = j.is_object() && j.contains("increasing") && j["increasing"].get<bool>();
    if (type == "step") {
        const auto [a, b] = domain_field(j);
        return IntegratorSpec::step(a, b, reals_from_json(field(j, "points")), matrices_from_json(field(j, "jumps")),
                                    inc);
    }
    if (type == "piecewise_linear")
        return IntegratorSpec::piecewise_linear(reals_from_json(field(j, "points")),
                                                matrices_from_json(field(j, "values")), inc);
    if (type == "linear") {
        const auto [a, b] = domain_field(j);
        return IntegratorSpec::linear(a, b, matrix_from_json(field(j, "slope")));
    }
    if (type == "density")
        return IntegratorSpec::density_samples(reals_from_json(field(j, "nodes")), matrices_from_json(field(j, "values")));
    if (type == "cantor_singular") {
        const auto [a, b] = domain_field(j);
        return IntegratorSpec::cantor(a, b, matrix_from_json(field(j, "scale")), int_field(j, "depth", 12));
    }
    bad("unknown integrator type '" + type + "'");
}

json to_json(const IntegratorSpec& E) {
    return std::visit(
        [&](const auto& v) -> json {
            using V = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<V, IntegratorSpec::Step>) {
                json jumps = json::array();
                for (const auto& m : v.jumps) jumps.push_back(to_json(m));
                return {{"type", "step"}, {"domain", {v.a, v.b}}, {"points", v.points}, {"jumps", jumps}};
            } else if constexpr (std::is_same_v<V, IntegratorSpec::PiecewiseLinear>) {
                json vals = json::array();
                for (const auto& m : v.values) vals.push_back(to_json(m));
                return {{"type", "piecewise_linear"}, {"points", v.points}, {"values", vals}};
            } else if constexpr (std::is_same_v<V, IntegratorSpec::Density>) {
                if (!v.samples) throw SpecError("spec: callable densities are not serializable");
                json vals = json::array();
                for (const auto& m : v.samples->second) vals.push_back(to_json(m));
                return {{"type", "density"}, {"nodes", v.samples->first}, {"values", vals}};
            } else {
                return {{"type", "cantor_singular"}, {"domain", {v.a, v.b}}, {"scale", to_json(v.scale)},
                        {"depth", v.depth}};
            }
        },
        E.variant());
}

// ------------------------------------------------------------ B.P. data

BPProduct bp_from_json(const json& j) {
    std::vector<BPFactor> factors;
    if (j.contains("factors"))
        for (const auto& f : array_field(j, "factors")) {
            const Complex z = complex_from_json(field(f, "zero"));
            if (f.contains("basis")) {
                factors.push_back(BPFactor::from_subspace(z, matrix_from_json(f["basis"])));
            } else {
                BPFactor b{z, matrix_from_json(field(f, "frame")), int_field(f, "rank", 1)};
                b.validate();
                factors.push_back(b);
            }
        }
    const int dim = factors.empty() ? int_field(j, "dim", 0) : factors.front().dim();
    BPProduct B{factors, tail_or_identity(j, dim)};
    B.validate();
    return B;
}

json to_json(const BPProduct& B) {
    json factors = json::array();
    for (const auto& f : B.factors)
        factors.push_back({{"zero", to_json(f.zero)}, {"frame", to_json(f.frame)}, {"rank", f.rank}});
    return {{"type", "bp_product"}, {"dim", B.dim()}, {"factors", factors}, {"tail", to_json(B.tail)}};
}

PotapovRepr repr_from_json(const json& j) {
    PotapovRepr R;
    R.L = number_field(j, "L");
    R.breakpoints = reals_from_json(field(j, "breakpoints"));
    R.jumps = matrices_from_json(field(j, "jumps"));
    R.angles = reals_from_json(field(j, "angles"));
    R.tail = matrix_from_json(field(j, "tail"));
    R.validate();
    return R;
}

json to_json(const PotapovRepr& R) {
    json jumps = json::array();
    for (const auto& h : R.jumps) jumps.push_back(to_json(h));
    return {{"L", R.L}, {"breakpoints", R.breakpoints}, {"jumps", jumps}, {"angles", R.angles}, {"tail", to_json(R.tail)}};
}

json to_json(const CayleyData& c) {
    json masses = json::array();
    for (const auto& m : c.masses) masses.push_back({{"angle", m.angle}, {"jump", to_json(m.jump)}});
    return {{"w", to_json(c.w)}, {"T0", to_json(c.T0)}, {"masses", masses}};
}

// ---------------------------------------------------------- constructors

PpInnerSpec pp_inner_from_json(const json& j) {
    std::vector<PpBlock> blocks;
    for (const auto& b : array_field(j, "blocks"))
        blocks.push_back({number_field(b, "length"), number_field(b, "angle"), integrator_from_json(field(b, "integrator"))});
    const int dim = blocks.empty() ? int_field(j, "dim", 0) : blocks.front().E.dim();
    PpInnerSpec s{tail_or_identity(j, dim), blocks};
    s.validate();
    return s;
}

ScInnerSpec sc_inner_from_json(const json& j) {
    IntegratorSpec S = integrator_from_json(field(j, "integrator"));
    ScInnerSpec s{tail_or_identity(j, S.dim()), S};
    s.validate();
    return s;
}

OuterSpec outer_from_json(const json& j) {
    const json& d = field(j, "density");
    auto nodes = reals_from_json(field(d, "nodes"));
    const auto values = matrices_from_json(field(d, "values"));
    if (nodes.size() < 2 || std::abs(nodes.front()) > 1e-9 || std::abs(nodes.back() - two_pi) > 1e-9)
        bad("outer density nodes must span [0, 2 pi]");
    nodes.front() = 0;
    nodes.back() = two_pi;
    OuterSpec s{CMat(), IntegratorSpec::density_samples(nodes, values), 0};
    s.tail = tail_or_identity(j, s.density.dim());
    // The least eigenvalue is concave, so its minimum over the linear
    // interpolant is attained at a node.
    s.lower_bound = min_eigenvalue(values.front());
    for (const auto& v : values) s.lower_bound = std::min(s.lower_bound, min_eigenvalue(v));
    s.validate();
    return s;
}

// ----------------------------------------------------------- functions

MatrixFunction function_from_json(const json& j, double tol) {
    const std::string type = string_field(j, "type");
    if (type == "constant") return MatrixFunction::constant(matrix_from_json(field(j, "value")));
    if (type == "polynomial") {
        const auto coeffs = matrices_from_json(field(j, "coeffs"));
        if (coeffs.empty()) bad("polynomial needs at least one coefficient");
        for (const auto& c : coeffs)
            if (c.rows() != coeffs[0].rows() || c.cols() != coeffs[0].rows()) bad("polynomial coefficients must be n x n");
        const bool contractive = j.contains("contractive") && j["contractive"].get<bool>();
        return {static_cast<int>(coeffs[0].rows()),
                [coeffs](Complex z) {
                    CMat acc = coeffs.back();
                    for (auto it = coeffs.rbegin() + 1; it != coeffs.rend(); ++it) acc = CMat(acc * z + *it);
                    return acc;
                },
                contractive, "polynomial"};
    }
    if (type == "bp_product") return as_function(bp_from_json(j));
    if (type == "pp_inner") return as_function(pp_inner_from_json(j), tol);
    if (type == "sc_inner") return as_function(sc_inner_from_json(j), tol);
    if (type == "outer") return as_function(outer_from_json(j), tol);
    if (type == "product") {
        const json& fs = array_field(j, "factors");
        if (fs.empty()) bad("product needs at least one factor");
        MatrixFunction acc = function_from_json(fs[0], tol);
        for (std::size_t i = 1; i < fs.size(); ++i) acc = acc * function_from_json(fs[i], tol);
        return acc;
    }
    bad("unknown function type '" + type + "'");
}

}  // namespace mvf::io
