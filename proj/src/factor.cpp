#include "mvf/factor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace mvf {

namespace {

constexpr double two_pi = 2 * std::numbers::pi;

void check_tail(const CMat& tail, const char* what) {
    if (tail.rows() < 1 || tail.rows() != tail.cols()) throw SpecError(std::string(what) + ": tail must be square");
    if (unitarity_residual(tail) > 1e-10) throw SpecError(std::string(what) + ": tail must be unitary");
}

void check_disk(Complex z, const char* what) {
    if (!(std::abs(z) < 1)) throw SpecError(std::string(what) + ": z must lie in the open disk");
}

bool on_full_circle(const IntegratorSpec& E) {
    return std::abs(E.a()) <= 1e-12 && std::abs(E.b() - two_pi) <= 1e-12;
}

}  // namespace

// ------------------------------------------------------------ validation

void PpInnerSpec::validate() const {
    check_tail(tail, "PpInnerSpec");
    for (const auto& b : blocks) {
        if (!(b.length > 0) || !std::isfinite(b.length)) throw SpecError("PpInnerSpec: block lengths must be positive");
        if (b.angle < 0 || b.angle >= two_pi) throw SpecError("PpInnerSpec: angles must lie in [0, 2 pi)");
        if (b.E.dim() != dim()) throw SpecError("PpInnerSpec: integrator dimension mismatch");
        if (std::abs(b.E.a()) > 1e-14 || std::abs(b.E.b() - b.length) > 1e-12 * std::max(1.0, b.length))
            throw SpecError("PpInnerSpec: integrator must live on [0, length]");
        if (!b.E.increasing() && !sampled_increasing(b.E, 64, 1e-12))
            throw SpecError("PpInnerSpec: integrator must be increasing");
        for (int j = 0; j <= 32; ++j) {
            const double t = b.length * j / 32;
            if (std::abs(b.E.value(t).trace().real() - t) > 1e-12 * std::max(1.0, b.length))
                throw SpecError("PpInnerSpec: integrator must satisfy tr E(t) = t");
        }
    }
}

void ScInnerSpec::validate() const {
    check_tail(tail, "ScInnerSpec");
    if (S.dim() != dim()) throw SpecError("ScInnerSpec: integrator dimension mismatch");
    if (!on_full_circle(S)) throw SpecError("ScInnerSpec: integrator must live on [0, 2 pi]");
    if (std::holds_alternative<IntegratorSpec::Step>(S.variant()))
        throw SpecError("ScInnerSpec: integrator must be continuous");
    if (!S.increasing() && !sampled_increasing(S, 256, 1e-12))
        throw SpecError("ScInnerSpec: integrator must be increasing");
}

const std::function<CMat(double)>& OuterSpec::M() const {
    const auto* d = std::get_if<IntegratorSpec::Density>(&density.variant());
    if (!d) throw SpecError("OuterSpec: integrator must be a density");
    return d->M;
}

void OuterSpec::validate(int samples) const {
    check_tail(tail, "OuterSpec");
    if (density.dim() != dim()) throw SpecError("OuterSpec: density dimension mismatch");
    if (!on_full_circle(density)) throw SpecError("OuterSpec: density must live on [0, 2 pi]");
    const auto& m = M();
    for (int j = 0; j < samples; ++j) {
        const CMat v = m(two_pi * (j + 0.5) / samples);
        if (!all_finite(v) || !is_hermitian(v, 1e-10)) throw SpecError("OuterSpec: density must be Hermitian");
        if (min_eigenvalue(v) < lower_bound - 1e-9) throw SpecError("OuterSpec: density below its lower bound");
    }
}

ScInnerSpec cantor_sc_inner(const CMat& tail, const CMat& scale, int depth) {
    ScInnerSpec s{tail, IntegratorSpec::cantor(0, two_pi, scale, depth)};
    s.validate();
    return s;
}

OuterSpec make_outer(const CMat& tail, std::function<CMat(double)> M, int dim, std::vector<double> hints) {
    OuterSpec s{tail, IntegratorSpec::density(0, two_pi, dim, M, std::move(hints)), 0};
    double lo = std::numeric_limits<double>::infinity();
    for (int j = 0; j < 256; ++j) lo = std::min(lo, min_eigenvalue(M(two_pi * (j + 0.5) / 256)));
    s.lower_bound = lo;
    s.validate();
    return s;
}

// ----------------------------------------------------------- evaluation

EvalResult eval_pp_inner_checked(const PpInnerSpec& spec, Complex z, double tol) {
    check_disk(z, "eval_pp_inner");
    EvalResult out{spec.tail, 0};
    const double t = tol / std::max<std::size_t>(1, spec.blocks.size());
    for (const auto& b : spec.blocks) {
        const auto r = prod_integral(KernelSpec::constant(herglotz_kernel(z, b.angle)), b.E, t);
        out.value = out.value * r.value;
        out.certificate += r.error_certificate;
    }
    return out;
}

EvalResult eval_sc_inner_checked(const ScInnerSpec& spec, Complex z, double tol) {
    check_disk(z, "eval_sc_inner");
    const auto r = prod_integral(KernelSpec::herglotz(z), spec.S, tol);
    return {spec.tail * r.value, r.error_certificate};
}

EvalResult eval_outer_checked(const OuterSpec& spec, Complex z, double tol) {
    check_disk(z, "eval_outer");
    const auto r = prod_integral(KernelSpec::herglotz(z), spec.density, tol);
    return {spec.tail * r.value, r.error_certificate};
}

CMat eval_pp_inner(const PpInnerSpec& spec, Complex z, double tol) { return eval_pp_inner_checked(spec, z, tol).value; }
CMat eval_sc_inner(const ScInnerSpec& spec, Complex z, double tol) { return eval_sc_inner_checked(spec, z, tol).value; }
CMat eval_outer(const OuterSpec& spec, Complex z, double tol) { return eval_outer_checked(spec, z, tol).value; }

Complex det_pp_inner(const PpInnerSpec& spec, Complex z) {
    Complex s = 0;
    for (const auto& b : spec.blocks) s += herglotz_kernel(z, b.angle) * b.E.value(b.length).trace().real();
    return spec.tail.determinant() * std::exp(s);
}

Complex det_sc_inner(const ScInnerSpec& spec, Complex z) {
    return spec.tail.determinant() * std::exp(stieltjes_trace(KernelSpec::herglotz(z), spec.S, 0, two_pi));
}

Complex det_outer(const OuterSpec& spec, Complex z) {
    return spec.tail.determinant() * std::exp(stieltjes_trace(KernelSpec::herglotz(z), spec.density, 0, two_pi));
}

MatrixFunction as_function(const PpInnerSpec& spec, double tol) {
    return {spec.dim(), [spec, tol](Complex z) { return eval_pp_inner(spec, z, tol); }, true, "pp_inner"};
}

MatrixFunction as_function(const ScInnerSpec& spec, double tol) {
    return {spec.dim(), [spec, tol](Complex z) { return eval_sc_inner(spec, z, tol); }, true, "sc_inner"};
}

MatrixFunction as_function(const OuterSpec& spec, double tol) {
    return {spec.dim(), [spec, tol](Complex z) { return eval_outer(spec, z, tol); }, spec.lower_bound >= 0, "outer"};
}

// ------------------------------------------------ scalar inner-outer oracle

Complex ScalarFactorization::blaschke(Complex z) const {
    Complex p = 1.0;
    for (Complex a : zeros) p *= beta(a, z);
    return p;
}

Complex ScalarFactorization::singular_part(Complex z) const {
    Complex s = 0;
    for (const auto& m : singular) s += m.mass * herglotz_kernel(z, m.angle);
    return std::exp(s);
}

Complex ScalarFactorization::outer(Complex z) const {
    Complex s = 0;
    for (auto it = outer_coeffs.rbegin(); it != outer_coeffs.rend(); ++it) s = s * z + *it;
    return std::exp(s);
}

ScalarFactorization scalar_inner_outer(const std::vector<double>& log_modulus, const std::vector<Complex>& zeros,
                                       const std::vector<PointMass>& singular) {
    const int K = static_cast<int>(log_modulus.size());
    if (K < 2) throw SpecError("scalar_inner_outer: need at least two boundary samples");
    double integral = 0;
    for (double v : log_modulus) {
        if (!std::isfinite(v)) throw SpecError("scalar_inner_outer: log-integrability violation");
        integral += v * two_pi / K;
    }
    if (integral < -1e6) throw SpecError("scalar_inner_outer: log-integrability violation");
    for (Complex a : zeros)
        if (!(std::abs(a) < 1)) throw SpecError("scalar_inner_outer: zeros must lie in the open disk");
    for (const auto& m : singular)
        if (!(m.mass >= 0) || m.angle < 0 || m.angle >= two_pi)
            throw SpecError("scalar_inner_outer: singular masses must be nonnegative with angles in [0, 2 pi)");

    ScalarFactorization out{zeros, singular, {}};
    const int half = K / 2;
    out.outer_coeffs.resize(half + 1);
    for (int k = 0; k <= half; ++k) {
        Complex c = 0;
        for (int j = 0; j < K; ++j) c += log_modulus[j] * std::polar(1.0, -two_pi * static_cast<double>(k) * j / K);
        c /= K;
        const bool nyquist = (K % 2 == 0) && k == half;
        out.outer_coeffs[k] = (k == 0 || nyquist) ? c : 2.0 * c;
    }
    return out;
}

SingularRecovery recover_singular_part(const std::function<Complex(Complex)>& f, const std::vector<Complex>& zeros,
                                       int boundary_samples) {
    double rmin = 1;
    for (Complex a : zeros)
        if (a != Complex(0)) rmin = std::min(rmin, std::abs(a));
    ScalarFactorization B{zeros, {}, {}};
    // (f/B)(0) by the mean value property on a small circle.
    const double r0 = 0.25 * rmin;
    Complex g0 = 0;
    for (int j = 0; j < 64; ++j) {
        const Complex z = std::polar(r0, two_pi * j / 64);
        g0 += f(z) / B.blaschke(z);
    }
    g0 /= 64.0;
    double mean = 0;
    for (int j = 0; j < boundary_samples; ++j) mean += std::log(std::abs(f(std::polar(1.0, two_pi * (j + 0.5) / boundary_samples))));
    mean /= boundary_samples;
    SingularRecovery out;
    out.mass = mean - std::log(std::abs(g0));
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < boundary_samples; ++j) {
        const double phi = two_pi * j / boundary_samples;
        const Complex z = std::polar(0.999, phi);
        const double v = std::log(std::abs(f(z) / B.blaschke(z)));
        if (v < best) {
            best = v;
            out.atom_angle = phi;
        }
    }
    return out;
}

// ---------------------------------------------------------- classification

std::string to_string(DetClass c) {
    switch (c) {
        case DetClass::inner_like: return "inner-like";
        case DetClass::outer_like: return "outer-like";
        case DetClass::mixed: return "mixed";
        case DetClass::undetermined: return "undetermined";
    }
    return "undetermined";
}

ClassifyReport classify_by_det(const MatrixFunction& A, const ClassifyOptions& opt,
                               const std::function<Complex(Complex)>& det_eval) {
    auto det = [&](Complex z) { return det_eval ? det_eval(z) : A(z).determinant(); };
    ClassifyReport rep;
    std::vector<std::vector<double>> absdet(opt.radii.size());
    for (std::size_t i = 0; i < opt.radii.size(); ++i) {
        double dev = 0;
        for (int j = 0; j < opt.angles; ++j) {
            const double a = std::abs(det(std::polar(opt.radii[i], two_pi * j / opt.angles + 0.1234)));
            absdet[i].push_back(a);
            dev += std::abs(1 - a);
        }
        rep.mean_deviation.push_back(dev / opt.angles);
    }
    const auto& last = absdet.back();
    const auto pass = std::count_if(last.begin(), last.end(), [&](double a) { return std::abs(1 - a) <= opt.inner_tol; });
    rep.inner_pass_fraction = static_cast<double>(pass) / opt.angles;
    bool trend = true;
    for (std::size_t i = 1; i < rep.mean_deviation.size(); ++i)
        if (rep.mean_deviation[i] > rep.mean_deviation[i - 1] + 1e-12) trend = false;
    rep.inner_test = rep.mean_deviation.back() <= opt.inner_tol && trend;

    double mean = 0;
    for (double a : last) mean += std::log(a);
    mean /= opt.angles;
    rep.outer_gap = std::abs(mean - std::log(std::abs(det(0.0))));
    rep.outer_test = rep.outer_gap <= opt.outer_tol;

    if (rep.inner_test && !rep.outer_test) rep.label = DetClass::inner_like;
    else if (rep.outer_test && !rep.inner_test) rep.label = DetClass::outer_like;
    else if (!rep.inner_test && !rep.outer_test) rep.label = DetClass::mixed;
    else rep.label = DetClass::undetermined;
    return rep;
}

MaximalityReport outer_maximality_check(const MatrixFunction& A, const MatrixFunction& B,
                                        const std::vector<Complex>& interior, double boundary_radius,
                                        int boundary_samples) {
    MaximalityReport rep;
    for (int j = 0; j < boundary_samples; ++j) {
        const Complex z = std::polar(boundary_radius, two_pi * (j + 0.5) / boundary_samples);
        const CMat a = A(z), b = B(z);
        rep.boundary_residual = std::max(rep.boundary_residual, spectral_norm(CMat(a.adjoint() * a - b.adjoint() * b)));
    }
    if (rep.boundary_residual > 1e-6)
        throw SpecError("outer_maximality_check: boundary Gram data of A and B differ");
    rep.min_eigenvalue = std::numeric_limits<double>::infinity();
    for (Complex z : interior) {
        const CMat a = A(z), b = B(z);
        rep.min_eigenvalue = std::min(rep.min_eigenvalue, min_eigenvalue(CMat(a.adjoint() * a - b.adjoint() * b)));
    }
    rep.holds = rep.min_eigenvalue >= -1e-7;
    return rep;
}

std::pair<PpInnerSpec, PpInnerSpec> nonuniqueness_pair() {
    auto M1 = [](double t) {
        CMat m = CMat::Zero(2, 2);
        m(0, 0) = t;
        m(1, 1) = 1 - t;
        return m;
    };
    auto M2 = [](double t) {
        CMat m = CMat::Zero(2, 2);
        m(0, 0) = 1 - t;
        m(1, 1) = t;
        return m;
    };
    const CMat I = CMat::Identity(2, 2);
    PpInnerSpec a{I, {PpBlock{1.0, 0.0, IntegratorSpec::density(0, 1, 2, M1)}}};
    PpInnerSpec b{I, {PpBlock{1.0, 0.0, IntegratorSpec::density(0, 1, 2, M2)}}};
    a.validate();
    b.validate();
    return {a, b};
}

NonuniquenessReport nonuniqueness_demo(double tol) {
    const auto [a, b] = nonuniqueness_pair();
    NonuniquenessReport rep;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 10; ++j) {
            const Complex z = std::polar(0.1 + 0.2 * i, two_pi * j / 10 + 0.05);
            const CMat va = eval_pp_inner(a, z, tol), vb = eval_pp_inner(b, z, tol);
            const CMat closed = std::exp(0.5 * herglotz_kernel(z, 0.0)) * CMat::Identity(2, 2);
            rep.function_gap = std::max(rep.function_gap, spectral_norm(CMat(va - vb)));
            rep.closed_form_gap = std::max({rep.closed_form_gap, spectral_norm(CMat(va - closed)),
                                            spectral_norm(CMat(vb - closed))});
            ++rep.grid_points;
        }
    const auto& E1 = a.blocks[0].E;
    const auto& E2 = b.blocks[0].E;
    for (int k = 0; k <= 100; ++k) {
        const double t = k / 100.0;
        const CMat e1 = E1.value(t), e2 = E2.value(t);
        rep.integrator_gap = std::max(rep.integrator_gap, spectral_norm(CMat(e1 - e2)));
        rep.trace_defect = std::max({rep.trace_defect, std::abs(e1.trace().real() - t), std::abs(e2.trace().real() - t)});
    }
    return rep;
}

}  // namespace mvf
