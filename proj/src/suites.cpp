#include "mvf/suites.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <Eigen/Eigenvalues>

#include "mvf/prodint.hpp"
#include "mvf/random.hpp"

namespace mvf::suites {

int SuiteResult::failures() const {
    return static_cast<int>(std::count_if(residuals.begin(), residuals.end(), [&](double r) { return !(r <= limit); }));
}

double SuiteResult::worst() const {
    double w = 0;
    for (double r : residuals) w = std::isnan(r) ? r : std::max(w, r);
    return w;
}

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }
double excess(double lhs, double rhs) { return std::max(0.0, lhs - rhs) / std::max(std::abs(rhs), 1e-300); }

CMat random_unit_vector(rnd::Rng& g, int n) {
    CMat v = rnd::gaussian(g, n, 1);
    return v / v.norm();
}

// Kernel and integrator pair for the product-integral suites. Odd
// instances use f(t) = c0 + c1 e^{i w t}, even ones a tabulated kernel.
struct Instance {
    KernelSpec f;
    IntegratorSpec E;
    int n;
    Complex c0 = 0, c1 = 0;
    double w = 0;
    bool smooth = false;
};

Instance random_instance(rnd::Rng& g, double amp = 1) {
    const int n = 2 + static_cast<int>(g() % 3);
    Instance in{{}, rnd::piecewise_integrator(g, n), n};
    if (g() % 2) {
        in.smooth = true;
        in.c0 = std::polar(rnd::uniform(g, 0, 0.5 * amp), rnd::uniform(g, 0, 6.283185307179586));
        in.c1 = std::polar(rnd::uniform(g, 0, 0.5 * amp), rnd::uniform(g, 0, 6.283185307179586));
        in.w = rnd::uniform(g, 1, 8);
        in.f = KernelSpec::function([c0 = in.c0, c1 = in.c1, w = in.w](double t) {
            return c0 + c1 * std::exp(Complex(0, w * t));
        });
    } else {
        in.f = rnd::tabulated_kernel(g, amp);
    }
    return in;
}

// int f d tr E in closed form. tr dE/dt is constant on each piece; a
// tabulated f is linear between merged nodes (trapezoid exact), the smooth
// f has an elementary antiderivative.
Complex trace_integral(const Instance& in) {
    const auto& pl = std::get<IntegratorSpec::PiecewiseLinear>(in.E.variant());
    std::vector<double> t = pl.points;
    if (const auto* tab = std::get_if<KernelSpec::Tabulated>(&in.f.variant()))
        t.insert(t.end(), tab->points.begin(), tab->points.end());
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    Complex s = 0;
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
        const double a = t[i], b = t[i + 1];
        if (a < in.E.a() || b > in.E.b() || b <= a) continue;
        const double slope = (in.E.value(b) - in.E.value(a)).trace().real() / (b - a);
        if (in.smooth)
            s += slope * (in.c0 * (b - a) + in.c1 * (std::exp(Complex(0, in.w * b)) - std::exp(Complex(0, in.w * a))) /
                                                Complex(0, in.w));
        else
            s += slope * 0.5 * (in.f(a) + in.f(b)) * (b - a);
    }
    return s;
}

template <typename F>
SuiteResult collect(std::string name, std::string statement, double limit, int count, F&& each) {
    SuiteResult r{std::move(name), std::move(statement), limit, {}};
    for (int i = 0; i < count; ++i) r.residuals.push_back(each(i));
    return r;
}

}  // namespace

std::array<double, 13> matrix_norm_clauses(const CMat& A, const CMat& B, const CMat& U, const CMat& D,
                                           std::uint64_t probe_seed) {
    rnd::Rng g(probe_seed);
    const int n = static_cast<int>(A.rows());
    const double nA = spectral_norm(A), nB = spectral_norm(B);
    std::array<double, 13> c{};
    c[0] = excess(spectral_norm(CMat(A * B)), nA * nB);
    c[1] = rel(spectral_norm(CMat(A.adjoint())), nA);
    c[2] = std::max(rel(spectral_norm(CMat(A * U)), nA), rel(spectral_norm(CMat(U * A)), nA));
    c[3] = rel(spectral_norm(D), D.diagonal().cwiseAbs().maxCoeff());
    const CMat H = A + A.adjoint();
    Eigen::SelfAdjointEigenSolver<CMat> es(H);
    c[4] = rel(spectral_norm(H), es.eigenvalues().cwiseAbs().maxCoeff());
    const CMat G = A * A.adjoint();
    Eigen::SelfAdjointEigenSolver<CMat> eg(G);
    c[5] = std::max(rel(nA, std::sqrt(eg.eigenvalues().maxCoeff())), rel(nA, std::sqrt(spectral_norm(G))));
    c[6] = std::abs(spectral_norm(U) - 1);
    c[7] = excess(spectral_norm(G), G.trace().real());
    // (9), (10): the supremum is attained at the top singular vectors and no
    // probe vector exceeds it.
    Eigen::JacobiSVD<CMat> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const CMat u1 = svd.matrixU().col(0), v1 = svd.matrixV().col(0);
    double c9 = rel(std::sqrt(std::abs((u1.adjoint() * G * u1)(0, 0))), nA);
    double c10 = rel(std::abs((u1.adjoint() * A * v1)(0, 0)), nA);
    for (int k = 0; k < 8; ++k) {
        const CMat x = random_unit_vector(g, n), y = random_unit_vector(g, n);
        c9 = std::max(c9, excess(std::sqrt(std::abs((x.adjoint() * G * x)(0, 0))), nA));
        c10 = std::max(c10, excess(std::abs((x.adjoint() * A * y)(0, 0)), nA));
    }
    c[8] = c9;
    c[9] = c10;
    c[10] = excess(A.rowwise().norm().maxCoeff(), nA);
    c[11] = excess(A.cwiseAbs().maxCoeff(), nA);
    const double det = std::abs(A.determinant());
    if (det > 0) {
        const double bound = std::pow(nA, n - 1) / det;
        c[12] = excess(spectral_norm(CMat(A.inverse())), bound);
    }
    return c;
}

SuiteResult determinant_formula(std::uint64_t seed, int count, double tol) {
    rnd::Rng g(seed);
    return collect("determinant-formula", "det of the product integral equals exp of int f d tr E", 1e-8, count,
                   [&](int) {
                       const auto in = random_instance(g);
                       const CMat P = prod_integral(in.f, in.E, tol).value;
                       const Complex e = std::exp(trace_integral(in));
                       return std::abs(P.determinant() - e) / std::abs(e);
                   });
}

SuiteResult splitting(std::uint64_t seed, int count, double tol) {
    rnd::Rng g(seed);
    return collect("splitting", "product integral over [a,b] equals the product over [a,c] and [c,b]", 1e-7, count,
                   [&](int) {
                       const auto in = random_instance(g);
                       const double c = rnd::uniform(g, 0.2, 0.8);
                       const CMat P = prod_integral(in.f, in.E, tol).value;
                       const auto [l, r] = split_product(in.f, in.E, tol, c);
                       return spectral_norm(CMat(P - l.value * r.value)) / std::max(1.0, spectral_norm(P));
                   });
}

SuiteResult gram_identity(std::uint64_t seed, int count, double tol) {
    rnd::Rng g(seed);
    return collect("gram-identity", "P P* equals the product integral of 2 Re f", 1e-7, count, [&](int) {
        const auto in = random_instance(g);
        const CMat P = prod_integral(in.f, in.E, tol).value;
        const CMat G = gram_product(in.f, in.E, tol);
        return spectral_norm(CMat(P * P.adjoint() - G)) / std::max(1.0, spectral_norm(G));
    });
}

SuiteResult gram_commuting(std::uint64_t seed, int count, double tol) {
    rnd::Rng g(seed);
    return collect("gram-commuting", "P P* equals the product integral of 2 Re f for commuting increments", 1e-7, count,
                   [&](int) {
                       const int n = 2 + static_cast<int>(g() % 3);
                       const CMat U = rnd::unitary(g, n);
                       std::vector<double> t{0, rnd::uniform(g, 0.2, 0.8), 1};
                       std::vector<CMat> v{CMat::Zero(n, n)};
                       for (int i = 0; i < 2; ++i) {
                           CMat d = CMat::Zero(n, n);
                           for (int k = 0; k < n; ++k) d(k, k) = rnd::uniform(g, 0, 1.0 / n);
                           v.push_back(v.back() + U * d * U.adjoint());
                       }
                       const auto E = IntegratorSpec::piecewise_linear(t, v, true);
                       const auto f = rnd::tabulated_kernel(g);
                       const CMat P = prod_integral(f, E, tol).value;
                       const CMat G = gram_product(f, E, tol);
                       return spectral_norm(CMat(P * P.adjoint() - G)) / std::max(1.0, spectral_norm(G));
                   });
}

SuiteResult unitary_imaginary_kernel(std::uint64_t seed, int count, double tol) {
    rnd::Rng g(seed);
    return collect("unitary-imaginary-kernel", "purely imaginary f gives a unitary product integral", 1e-7, count,
                   [&](int) {
                       const int n = 2 + static_cast<int>(g() % 3);
                       const auto E = rnd::piecewise_integrator(g, n);
                       std::vector<double> t;
                       std::vector<Complex> v;
                       for (int i = 0; i < 5; ++i) {
                           t.push_back(i / 4.0);
                           v.push_back(Complex(0, rnd::uniform(g, -2, 2)));
                       }
                       const CMat P = prod_integral(KernelSpec::tabulated(t, v), E, tol).value;
                       return unitarity_residual(P);
                   });
}

SuiteResult norm_bound(std::uint64_t seed, int count, double tol) {
    rnd::Rng g(seed);
    return collect("norm-bound", "||P|| <= exp(int |f| d|E|)", 1e-7, count, [&](int) {
        const auto in = random_instance(g, 2);
        const CMat P = prod_integral(in.f, in.E, tol).value;
        const double s = stieltjes_variation(in.f, in.E, in.E.a(), in.E.b());
        return excess(spectral_norm(P), std::exp(s));
    });
}

SuiteResult taylor_certificate(std::uint64_t seed, int count, double tol) {
    rnd::Rng g(seed);
    return collect("taylor-certificate", "||P - I - int f dE|| <= e^s - 1 - s", 1e-7, count, [&](int) {
        const auto in = random_instance(g, 0.5);
        const CMat P = prod_integral(in.f, in.E, tol).value;
        const auto tc = taylor_certificate(in.f, in.E, in.E.a(), in.E.b());
        return std::max(0.0, spectral_norm(CMat(P - tc.linear_part)) - tc.remainder_bound);
    });
}

SuiteResult ode_agreement(std::uint64_t seed, int count, double tol) {
    rnd::Rng g(seed);
    return collect("ode-agreement", "RK4 solution of F' = F f M matches the product integral", 1e-6, count, [&](int) {
        const int n = 2 + static_cast<int>(g() % 3);
        const auto E = rnd::smooth_density(g, n);
        const Complex c0 = std::polar(rnd::uniform(g, 0, 1), rnd::uniform(g, 0, 6.283185307179586));
        const Complex c1 = std::polar(rnd::uniform(g, 0, 1), rnd::uniform(g, 0, 6.283185307179586));
        auto fn = [c0, c1](double t) { return c0 + c1 * std::sin(2 * t); };
        const auto& M = std::get<IntegratorSpec::Density>(E.variant()).M;
        const CMat F = ode_integral([&](double t) { return CMat(fn(t) * M(t)); }, 0, 1, 400);
        const CMat P = prod_integral(KernelSpec::function(fn), E, tol).value;
        return spectral_norm(CMat(F - P));
    });
}

SuiteResult matrix_norm(std::uint64_t seed, int count) {
    rnd::Rng g(seed);
    return collect("matrix-norm", "the thirteen spectral-norm clauses", 1e-10, count, [&](int i) {
        const int n = 2 + static_cast<int>(g() % 5);
        const CMat A = rnd::gaussian(g, n, n), B = rnd::gaussian(g, n, n), U = rnd::unitary(g, n);
        CMat D = CMat::Zero(n, n);
        for (int k = 0; k < n; ++k) D(k, k) = rnd::gaussian(g, 1, 1)(0, 0);
        const auto c = matrix_norm_clauses(A, B, U, D, seed + static_cast<std::uint64_t>(i));
        return *std::max_element(c.begin(), c.end());
    });
}

const std::vector<std::string>& names() {
    static const std::vector<std::string> n{"determinant-formula", "splitting",      "gram-identity",
                                            "gram-commuting",      "unitary-imaginary-kernel", "norm-bound",
                                            "taylor-certificate",  "ode-agreement",  "matrix-norm"};
    return n;
}

SuiteResult run(const std::string& name, std::uint64_t seed, int count, double tol) {
    if (name == "determinant-formula") return determinant_formula(seed, count, tol);
    if (name == "splitting") return splitting(seed, count, tol);
    if (name == "gram-identity") return gram_identity(seed, count, tol);
    if (name == "gram-commuting") return gram_commuting(seed, count, tol);
    if (name == "unitary-imaginary-kernel") return unitary_imaginary_kernel(seed, count, tol);
    if (name == "norm-bound") return norm_bound(seed, count, tol);
    if (name == "taylor-certificate") return taylor_certificate(seed, count, tol);
    if (name == "ode-agreement") return ode_agreement(seed, count, tol);
    if (name == "matrix-norm") return matrix_norm(seed, count);
    throw SpecError("verify: unknown suite '" + name + "'");
}

}  // namespace mvf::suites
