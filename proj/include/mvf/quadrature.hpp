#pragma once

#include <cmath>
#include <complex>
#include <type_traits>

#include <Eigen/Dense>

namespace mvf {
namespace detail {

inline double quad_norm(double x) { return std::abs(x); }
inline double quad_norm(std::complex<double> x) { return std::abs(x); }
template <typename Derived>
double quad_norm(const Eigen::MatrixBase<Derived>& m) {
    return m.size() ? m.cwiseAbs().maxCoeff() : 0.0;
}

template <typename F, typename T>
T simpson_step(const F& f, double a, double b, const T& fa, const T& fm, const T& fb, T whole, double tol,
               int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const T flm = f(lm), frm = f(rm);
    const T left = ((m - a) / 6.0) * (fa + 4.0 * flm + fm);
    const T right = ((b - m) / 6.0) * (fm + 4.0 * frm + fb);
    const T both = left + right;
    const T diff = both - whole;
    // Accept at the rounding floor too, otherwise an unreachable absolute
    // tolerance would recurse to full depth everywhere.
    const double err = quad_norm(diff);
    if (depth <= 0 || err <= 15.0 * tol || err <= 1e-12 * quad_norm(both) ||
        (b - a) <= 1e-12 * (1.0 + std::abs(a)))
        return T(both + diff / 15.0);
    return T(simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
             simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1));
}

}  // namespace detail

// Adaptive Simpson with Richardson correction. The error test uses the
// largest entry, so matrix integrands are controlled per entry. The interval
// is first cut into `panels` pieces so narrow features are not skipped.
template <typename F>
auto adaptive_simpson(const F& f, double a, double b, double tol, int panels = 4, int max_depth = 24) {
    using T = std::decay_t<decltype(f(a))>;
    const double h = (b - a) / panels;
    T fa = f(a);
    T total = T(fa * 0.0);
    for (int p = 0; p < panels; ++p) {
        const double x0 = a + p * h;
        const double x1 = (p + 1 == panels) ? b : a + (p + 1) * h;
        const T fb = f(x1);
        const T fm = f(0.5 * (x0 + x1));
        const T whole = ((x1 - x0) / 6.0) * (fa + 4.0 * fm + fb);
        total = T(total + detail::simpson_step(f, x0, x1, fa, fm, fb, whole, tol / panels, max_depth));
        fa = fb;
    }
    return total;
}

}  // namespace mvf
