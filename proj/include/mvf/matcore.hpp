#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

#include "mvf/errors.hpp"

namespace mvf {

using Complex = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

inline constexpr Complex I_unit{0.0, 1.0};
inline constexpr double exp_norm_cap = 1e3;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& a) {
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            if (!std::isfinite(std::real(a(i, j))) || !std::isfinite(std::imag(a(i, j)))) return false;
    return true;
}

template <typename Derived>
typename Derived::RealScalar spectral_norm(const Eigen::MatrixBase<Derived>& a) {
    if (a.size() == 0) return 0;
    Eigen::JacobiSVD<typename Derived::PlainObject> svd(a.eval());
    return svd.singularValues()(0);
}

// Relative tolerance used for Hermitian tests, with an absolute floor.
template <typename Derived>
typename Derived::RealScalar hermitian_tol(const Eigen::MatrixBase<Derived>& a) {
    return std::max<typename Derived::RealScalar>(1e-12 * spectral_norm(a), 1e-14);
}

template <typename Derived>
typename Derived::PlainObject hermitian_part(const Eigen::MatrixBase<Derived>& a) {
    return (a + a.adjoint()) / typename Derived::RealScalar(2);
}

// (a - a*)/(2i); Hermitian for any a.
template <typename Derived>
typename Derived::PlainObject imag_part(const Eigen::MatrixBase<Derived>& a) {
    using S = typename Derived::Scalar;
    return (a - a.adjoint()) / S(0, 2);
}

template <typename Derived>
bool is_hermitian(const Eigen::MatrixBase<Derived>& a, typename Derived::RealScalar tol) {
    if (a.rows() != a.cols()) return false;
    return spectral_norm(a - a.adjoint()) <= tol;
}

template <typename Derived>
typename Derived::RealScalar min_eigenvalue(const Eigen::MatrixBase<Derived>& a) {
    Eigen::SelfAdjointEigenSolver<typename Derived::PlainObject> es(hermitian_part(a), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

template <typename Derived>
bool is_positive(const Eigen::MatrixBase<Derived>& a, typename Derived::RealScalar tol) {
    if (a.size() == 0) return true;
    return is_hermitian(a, tol) && min_eigenvalue(a) >= -tol;
}

// ||A A* - I||
template <typename Derived>
typename Derived::RealScalar unitarity_residual(const Eigen::MatrixBase<Derived>& a) {
    using M = typename Derived::PlainObject;
    return spectral_norm((a * a.adjoint() - M::Identity(a.rows(), a.cols())).eval());
}

template <typename Derived>
typename Derived::PlainObject mat_exp(const Eigen::MatrixBase<Derived>& a) {
    if (a.rows() != a.cols()) throw SpecError("mat_exp: matrix not square");
    if (!all_finite(a)) throw NumericalError("mat_exp: non-finite input");
    // Frobenius norm bounds the spectral norm; only pay for the SVD near the cap.
    if (a.norm() > exp_norm_cap) {
        const auto nrm = spectral_norm(a);
        if (nrm > exp_norm_cap) throw NumericalError("mat_exp: norm " + std::to_string(nrm) + " exceeds cap");
    }
    typename Derived::PlainObject r = a.derived().eval().exp();
    if (!all_finite(r)) throw NumericalError("mat_exp: overflow");
    return r;
}

// a = U diag(s) V with U, V unitary and s nonincreasing.
template <typename Scalar>
struct Svd {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Mat U;
    Eigen::Matrix<typename Eigen::NumTraits<Scalar>::Real, Eigen::Dynamic, 1> s;
    Mat V;
};

template <typename Derived>
Svd<typename Derived::Scalar> svd(const Eigen::MatrixBase<Derived>& a) {
    using Mat = typename Svd<typename Derived::Scalar>::Mat;
    if (!all_finite(a)) throw NumericalError("svd: non-finite input");
    Mat m = a;
    Eigen::JacobiSVD<Mat> dec(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (dec.info() != Eigen::Success) throw NumericalError("svd: no convergence");
    Svd<typename Derived::Scalar> out{dec.matrixU(), dec.singularValues(), dec.matrixV().adjoint()};
    const auto scale = out.s.size() ? out.s(0) : 0;
    const auto resid = spectral_norm((m - out.U * out.s.asDiagonal() * out.V).eval());
    if (!(resid <= 1e-10 * scale + 1e-300)) throw NumericalError("svd: reconstruction check failed");
    return out;
}

// Count of singular values above rel_tol * sigma_max.
template <typename Derived>
int numerical_rank(const Eigen::MatrixBase<Derived>& a, double rel_tol = 1e-8) {
    if (a.size() == 0) return 0;
    Eigen::JacobiSVD<typename Derived::PlainObject> s(a.eval());
    const auto& sv = s.singularValues();
    if (sv(0) == 0) return 0;
    int r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > rel_tol * sv(0)) ++r;
    return r;
}

struct ContractionRoutes {
    bool by_norm = false;
    bool by_gram = false;
};

// ||a|| <= 1 + tol, and I - a a* >= 0 with the tolerance mapped through
// lambda_min(I - aa*) = 1 - ||a||^2.
template <typename Derived>
ContractionRoutes contraction_routes(const Eigen::MatrixBase<Derived>& a, double tol) {
    using M = typename Derived::PlainObject;
    ContractionRoutes r;
    r.by_norm = spectral_norm(a) <= 1 + tol;
    const M g = M::Identity(a.rows(), a.rows()) - a * a.adjoint();
    r.by_gram = min_eigenvalue(g) >= -(2 * tol + tol * tol);
    return r;
}

template <typename Derived>
bool is_contraction(const Eigen::MatrixBase<Derived>& a, double tol) {
    return contraction_routes(a, tol).by_norm;
}

inline CMat identity(int n) { return CMat::Identity(n, n); }

}  // namespace mvf
