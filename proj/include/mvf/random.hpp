#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "mvf/blaschke.hpp"
#include "mvf/prodint.hpp"

// Seeded random instances shared by the verify suites, tests and the
// acceptance binary.
namespace mvf::rnd {

using Rng = std::mt19937_64;

inline double uniform(Rng& g, double a = 0, double b = 1) { return std::uniform_real_distribution<double>(a, b)(g); }

inline CMat gaussian(Rng& g, int rows, int cols) {
    std::normal_distribution<double> nd;
    CMat m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = Complex(nd(g), nd(g));
    return m;
}

inline CMat positive(Rng& g, int n, double scale = 1) {
    const CMat x = gaussian(g, n, n);
    const CMat p = x * x.adjoint();
    return p * (scale / p.trace().real());
}

inline CMat unitary(Rng& g, int n) {
    Eigen::HouseholderQR<CMat> qr(gaussian(g, n, n));
    return qr.householderQ();
}

// Strict contraction with norm `norm`.
inline CMat contraction(Rng& g, int n, double norm) {
    const CMat x = gaussian(g, n, n);
    return x * (norm / spectral_norm(x));
}

// Increasing piecewise-linear integrator on [0, 1] with 1-3 pieces.
inline IntegratorSpec piecewise_integrator(Rng& g, int n, double total = 1) {
    const int pieces = 1 + static_cast<int>(g() % 3);
    std::vector<double> t{0};
    for (int i = 1; i < pieces; ++i) t.push_back(uniform(g, 0.2, 0.8));
    std::sort(t.begin() + 1, t.end());
    t.push_back(1);
    std::vector<CMat> v{CMat::Zero(n, n)};
    for (int i = 0; i < pieces; ++i) v.push_back(v.back() + positive(g, n, total / pieces));
    return IntegratorSpec::piecewise_linear(t, v, true);
}

// Smooth positive density on [0, 1]: M(t) = P0 + t P1 + sin(pi t) P2.
inline IntegratorSpec smooth_density(Rng& g, int n, double total = 1) {
    const CMat p0 = positive(g, n, total / 3), p1 = positive(g, n, total / 3), p2 = positive(g, n, total / 3);
    return IntegratorSpec::density(0, 1, n, [p0, p1, p2](double t) {
        return CMat(p0 + t * p1 + std::sin(3.14159265358979323846 * t) * p2);
    });
}

// Tabulated complex kernel with values of modulus <= amp.
inline KernelSpec tabulated_kernel(Rng& g, double amp = 1, int nodes = 5) {
    std::vector<double> t;
    std::vector<Complex> v;
    for (int i = 0; i < nodes; ++i) {
        t.push_back(static_cast<double>(i) / (nodes - 1));
        v.push_back(std::polar(uniform(g, 0, amp), uniform(g, 0, 6.283185307179586)));
    }
    return KernelSpec::tabulated(t, v);
}

// Finite B.P. product with `count` factors of random rank, zeros with
// modulus in [rmin, rmax].
inline BPProduct bp_product(Rng& g, int n, int count, double rmin = 0.2, double rmax = 0.8) {
    BPProduct B = BPProduct::identity(n);
    for (int i = 0; i < count; ++i) {
        const int r = 1 + static_cast<int>(g() % n);
        const Complex z = std::polar(uniform(g, rmin, rmax), uniform(g, 0, 6.283185307179586));
        B.factors.push_back(BPFactor::from_subspace(z, gaussian(g, n, r)));
    }
    B.tail = unitary(g, n);
    return B;
}

// Factors reordered by nondecreasing zero argument in [0, 2 pi), the order
// the step-data representation needs.
inline BPProduct sorted_by_angle(BPProduct B) {
    const auto key = [](const BPFactor& f) {
        const double a = std::arg(f.zero);
        return a < 0 ? a + 6.283185307179586 : a;
    };
    std::stable_sort(B.factors.begin(), B.factors.end(),
                     [&](const BPFactor& x, const BPFactor& y) { return key(x) < key(y); });
    return B;
}

}  // namespace mvf::rnd
