#pragma once

#include <cmath>
#include <complex>
#include <functional>

#include "mvf/matcore.hpp"

// Independent reference computations used only by the tests.
namespace oracle {

using mvf::CMat;
using mvf::Complex;

// Largest singular value via power iteration on A A*.
inline double power_norm(const CMat& a, double tol = 1e-13) {
    const CMat g = a * a.adjoint();
    Eigen::VectorXcd v = Eigen::VectorXcd::Ones(g.rows()) + Complex(0, 0.37) * Eigen::VectorXcd::LinSpaced(g.rows(), 0, 1);
    double lam = 0;
    for (int it = 0; it < 100000; ++it) {
        Eigen::VectorXcd w = g * v;
        const double nw = w.norm();
        if (nw == 0) return 0;
        w /= nw;
        const double next = (w.adjoint() * g * w)(0).real();
        v = w;
        if (std::abs(next - lam) <= tol * std::max(1.0, next)) {
            lam = next;
            break;
        }
        lam = next;
    }
    return std::sqrt(std::max(lam, 0.0));
}

// Composite Simpson rule with n (even) panels.
inline Complex simpson(const std::function<Complex(double)>& f, double a, double b, int n = 2000) {
    const double h = (b - a) / n;
    Complex s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * (h / 3);
}

// Taylor series exp, independent of Eigen's Pade implementation.
inline CMat taylor_exp(const CMat& a) {
    int sq = 0;
    double n = a.cwiseAbs().rowwise().sum().maxCoeff();
    while (n > 0.5) {
        n /= 2;
        ++sq;
    }
    const CMat b = a / std::pow(2.0, sq);
    CMat term = CMat::Identity(a.rows(), a.cols()), sum = term;
    for (int k = 1; k < 30; ++k) {
        term = term * b / double(k);
        sum += term;
    }
    for (int i = 0; i < sq; ++i) sum = sum * sum;
    return sum;
}

}  // namespace oracle
