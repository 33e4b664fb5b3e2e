#pragma once

#include <functional>
#include <vector>

#include "mvf/blaschke.hpp"
#include "mvf/function.hpp"
#include "mvf/prodint.hpp"

namespace mvf {

// T(z) = i (wI - A)^{-1} (wI + A) and its inverse A = w (T - iI)(T + iI)^{-1}.
CMat cayley_forward(const CMat& a, Complex w);
CMat cayley_forward(const MatrixFunction& A, Complex z, Complex w);
CMat cayley_inverse(const CMat& t, Complex w);

// Among the n+1 roots of unity, the w maximizing |det(wI - a0)|.
Complex choose_rotation(const CMat& a0);

struct HerglotzMasses {
    double radius = 0;
    std::vector<double> angles;  // num_angles + 1 points from 0 to 2 pi
    std::vector<CMat> sigma;     // cumulative (1/2pi) int_0^t Im T(r e^{is}) ds
};

// Trapezoid cumulative quadrature; num_angles must be a power of two.
// Throws NumericalError when Im T has an eigenvalue below -1e-9 on the circle.
HerglotzMasses herglotz_extract(const std::function<CMat(Complex)>& T, double radius, int num_angles);

struct CayleyMass {
    double angle = 0;
    CMat jump;
};

// T(z) = T0 + i sum_nu (e^{i theta_nu} + z)/(e^{i theta_nu} - z) jump_nu.
struct CayleyData {
    Complex w = 1.0;
    CMat T0;
    std::vector<CayleyMass> masses;

    int dim() const { return static_cast<int>(T0.rows()); }
    CMat eval_T(Complex z) const;
    CMat eval(Complex z) const;  // w (T - iI)(T + iI)^{-1}
    void validate() const;
};

struct RationalApproximant {
    CayleyData cayley;
    int k = 1;
    double r_k = 0;            // certified radius
    double rho = 0;            // Herglotz extraction radius
    int num_angles = 0;
    double certificate = 0;    // max over the certificate grid of ||T - T_k||
    std::vector<double> cells; // partition of [0, 1] in units of 2 pi

    CMat operator()(Complex z) const { return cayley.eval(z); }
};

struct ApproximantOptions {
    int max_escalations = 6;   // rho and num_angles pushed toward the boundary
    int max_cells = 1 << 16;
    int max_rounds = 400;
    int log2_max_angles = 24;
};

// Builds T_k from Herglotz masses on an adaptively refined angle partition
// and certifies ||T - T_k|| <= 1/k on a 16 x 16 polar grid of |z| <= r_k with
// r_k = 1 - 2^{-k-1}. Passing the previous approximant refines its partition.
RationalApproximant rational_approximant(const MatrixFunction& A, int k, const ApproximantOptions& opt = {},
                                         const RationalApproximant* previous = nullptr);
std::vector<RationalApproximant> approximant_chain(const MatrixFunction& A, int kmax,
                                                   const ApproximantOptions& opt = {});

// Step data of the multiplicative representation of a finite B.P. product.
struct PotapovRepr {
    double L = 0;
    std::vector<double> breakpoints;  // t_0 = 0, ..., t_m = L
    std::vector<CMat> jumps;          // H_j, tr H_j = t_j - t_{j-1}
    std::vector<double> angles;       // theta_j in [0, 2 pi), nondecreasing
    CMat tail;                        // unitary right factor carried over from B

    int dim() const { return static_cast<int>(tail.rows()); }
    IntegratorSpec integrator() const;   // piecewise-linear cumulative sums
    StepFunction theta() const;          // theta_j on [t_{j-1}, t_j)
    CMat E(double t) const;
    void validate() const;
};

PotapovRepr bp_to_repr(const BPProduct& B);

// prod exp(h_z(theta_j) H_j) * tail.
CMat repr_eval_exact(const PotapovRepr& R, Complex z);

struct ReprEval {
    CMat value;
    double certificate = 0;
    double exact_gap = 0;  // ||prodint path - exact product||
};
// Multiplicative integral through prod_integral, cross-checked against the
// exact product; throws NumericalError if the two disagree by more than
// max(tol, 10 * certificate).
ReprEval repr_eval_checked(const PotapovRepr& R, Complex z, double tol);
CMat repr_eval(const PotapovRepr& R, Complex z, double tol);

struct ModifiedProductError {
    double measured = 0;
    double bound = 0;
    double radius = 0;  // grid radius actually used
};

// Sup over a polar grid of |z| <= r of ||B(z) - repr(z)||, with the bound
// C M(r) max(1 - |z_nu|), C = sum(1 - |z_nu|). The radius is reduced below
// min |z_nu| when needed.
ModifiedProductError modified_product_error(const BPProduct& B, const PotapovRepr& R, double r,
                                            double tol = 1e-12);

}  // namespace mvf
