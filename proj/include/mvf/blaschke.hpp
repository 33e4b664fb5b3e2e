#pragma once

#include <vector>

#include "mvf/function.hpp"
#include "mvf/matcore.hpp"

namespace mvf {

// (z0 - z)/(1 - conj(z0) z) * |z0|/z0, and z for z0 = 0.
Complex beta(Complex z0, Complex z);

// b(z) = U diag(beta I_r, I_{n-r}) U* = I - P + beta(z) P.
struct BPFactor {
    Complex zero;
    CMat frame;  // unitary; its first `rank` columns span Im P
    int rank = 1;

    // Frame completed from the columns of `basis` (n x r, full column rank).
    static BPFactor from_subspace(Complex zero, const CMat& basis);
    int dim() const { return static_cast<int>(frame.rows()); }
    CMat projection() const;
    void validate() const;
};

CMat eval_factor(const BPFactor& b, Complex z);
CMat eval_factor_inverse(const BPFactor& b, Complex z);  // I - P + P / beta(z)

struct BPProduct {
    std::vector<BPFactor> factors;
    CMat tail;  // unitary

    static BPProduct identity(int n) { return {{}, CMat::Identity(n, n)}; }
    int dim() const { return static_cast<int>(tail.rows()); }
    double blaschke_sum() const;  // sum over factors of (1 - |z_i|)
    void validate() const;
};

CMat eval_product(const BPProduct& B, Complex z);
// prod beta_{z_i}(z)^{r_i} det(tail)
Complex scalar_blaschke(const BPProduct& B, Complex z);
MatrixFunction as_function(const BPProduct& B);

struct DetachTest {
    bool detachable = false;
    double residual = 0;  // ||P A(z0)||
    double tol = 0;       // 1e-9 ||A(z0)|| + 1e-12
};
DetachTest detach_test(const MatrixFunction& A, const BPFactor& b, Complex z0);
bool detachable(const MatrixFunction& A, const BPFactor& b, Complex z0);

struct DetachOptions {
    double defect_tol = 1e-8;  // relative to max(sigma_max, 1)
    double sing_radius = 1e-3;
    int cauchy_points = 64;
};

struct DetachResult {
    BPFactor factor;
    MatrixFunction remainder;
};

DetachResult detach_max(const MatrixFunction& A, Complex z0, const DetachOptions& opt = {});

struct FactorResult {
    BPProduct product;
    MatrixFunction remainder;
    std::vector<Complex> unconsumed;  // listed zeros where the remainder still has a defect
};

FactorResult factor_out_zeros(const MatrixFunction& A, const std::vector<Complex>& zeros, double zero_tol = 1e-8,
                              const DetachOptions& opt = {});

struct DetZero {
    Complex z;
    int multiplicity = 1;
    bool unreliable = false;  // close to the search circle or the unit circle
    double residual = 0;      // |det A(z)|
};

struct ZeroSearchOptions {
    long max_evaluations = 4'000'000;
    int circle_points = 128;
};

// Argument-principle quadtree on |z| <= search_radius; leaf boxes have side
// 2 * search_radius / grid_density.
std::vector<DetZero> locate_det_zeros(const MatrixFunction& A, double search_radius, int grid_density,
                                      const ZeroSearchOptions& opt = {});
// Zeros repeated by multiplicity.
std::vector<Complex> find_det_zeros(const MatrixFunction& A, double search_radius, int grid_density);

// Number of zeros of det A inside |z - c| = radius (argument principle).
int winding_count(const MatrixFunction& A, Complex c, double radius, int samples = 256);

// Sampled analytic-function checks.
std::vector<int> rank_profile(const MatrixFunction& A, const std::vector<Complex>& points, double rel_tol = 1e-8);

struct MaxPrincipleReport {
    bool triggered = false;         // some interior sample has ||A|| >= 1 - 1e-12
    bool constant_unitary = false;  // A equals a unitary constant on all samples
    double max_norm = 0;
};
MaxPrincipleReport maximum_principle_check(const MatrixFunction& A, const std::vector<Complex>& points);

// ||A(c)|| minus the mean of ||A|| over the circle |z - c| = radius; <= 0 for
// analytic A up to quadrature error.
double subharmonic_excess(const MatrixFunction& A, Complex c, double radius, int samples = 64);

}  // namespace mvf
