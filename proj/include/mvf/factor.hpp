#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mvf/blaschke.hpp"
#include "mvf/function.hpp"
#include "mvf/prodint.hpp"

namespace mvf {

// ------------------------------------------------------------ constructors

struct PpBlock {
    double length = 0;
    double angle = 0;
    IntegratorSpec E;  // on [0, length], tr E(t) = t
};

// U prod_k int_0^{l_k} exp(h_z(theta_k) dE_k(t)).
struct PpInnerSpec {
    CMat tail;
    std::vector<PpBlock> blocks;

    int dim() const { return static_cast<int>(tail.rows()); }
    void validate() const;
};

// U int_0^{2 pi} exp(h_z(phi) dS(phi)).
struct ScInnerSpec {
    CMat tail;
    IntegratorSpec S;  // increasing, continuous, on [0, 2 pi]

    int dim() const { return static_cast<int>(tail.rows()); }
    void validate() const;
};

// U int_0^{2 pi} exp(h_z(phi) M(phi) dphi).
struct OuterSpec {
    CMat tail;
    IntegratorSpec density;  // Density variant on [0, 2 pi]
    double lower_bound = 0;  // least eigenvalue of M

    int dim() const { return static_cast<int>(tail.rows()); }
    const std::function<CMat(double)>& M() const;
    void validate(int samples = 64) const;
};

ScInnerSpec cantor_sc_inner(const CMat& tail, const CMat& scale, int depth = 14);
OuterSpec make_outer(const CMat& tail, std::function<CMat(double)> M, int dim, std::vector<double> hints = {});

struct EvalResult {
    CMat value;
    double certificate = 0;
};

EvalResult eval_pp_inner_checked(const PpInnerSpec& spec, Complex z, double tol);
EvalResult eval_sc_inner_checked(const ScInnerSpec& spec, Complex z, double tol);
EvalResult eval_outer_checked(const OuterSpec& spec, Complex z, double tol);
CMat eval_pp_inner(const PpInnerSpec& spec, Complex z, double tol);
CMat eval_sc_inner(const ScInnerSpec& spec, Complex z, double tol);
CMat eval_outer(const OuterSpec& spec, Complex z, double tol);

// exp(int h_z d tr E) evaluated as an additive scalar integral, times det U.
Complex det_pp_inner(const PpInnerSpec& spec, Complex z);
Complex det_sc_inner(const ScInnerSpec& spec, Complex z);
Complex det_outer(const OuterSpec& spec, Complex z);

MatrixFunction as_function(const PpInnerSpec& spec, double tol);
MatrixFunction as_function(const ScInnerSpec& spec, double tol);
MatrixFunction as_function(const OuterSpec& spec, double tol);

// ------------------------------------------------ scalar inner-outer oracle

struct PointMass {
    double angle = 0;
    double mass = 0;
};

struct ScalarFactorization {
    std::vector<Complex> zeros;
    std::vector<PointMass> singular;
    std::vector<Complex> outer_coeffs;  // log O(z) = sum_k outer_coeffs[k] z^k

    Complex blaschke(Complex z) const;
    Complex singular_part(Complex z) const;
    Complex outer(Complex z) const;
    Complex operator()(Complex z) const { return blaschke(z) * singular_part(z) * outer(z); }
};

// Boundary log-modulus samples at angles 2 pi j / K. The outer factor is
// exp((1/2pi) int (e^{i phi} + z)/(e^{i phi} - z) log|f| dphi), realised as
// the power series of the discrete Fourier coefficients.
ScalarFactorization scalar_inner_outer(const std::vector<double>& log_modulus, const std::vector<Complex>& zeros,
                                       const std::vector<PointMass>& singular);

struct SingularRecovery {
    double mass = 0;         // total singular mass
    double atom_angle = 0;   // angle where |f / (B O)| is smallest at r = 0.999
};

// Singular mass from log|f(0)| = sum log|z_j| - mass + mean log|f| on the circle.
SingularRecovery recover_singular_part(const std::function<Complex(Complex)>& f, const std::vector<Complex>& zeros,
                                       int boundary_samples = 4096);

// ---------------------------------------------------------- classification

enum class DetClass { inner_like, outer_like, mixed, undetermined };
std::string to_string(DetClass c);

struct ClassifyOptions {
    std::vector<double> radii{0.9, 0.99, 0.999};
    int angles = 73;
    double inner_tol = 1e-2;       // mean |1 - |det|| at the outermost radius
    double outer_tol = 1e-3;       // Poisson-mean test
};

struct ClassifyReport {
    DetClass label = DetClass::undetermined;
    bool inner_test = false;
    bool outer_test = false;
    double inner_pass_fraction = 0;      // share of outermost samples with |1 - |det|| <= inner_tol
    std::vector<double> mean_deviation;  // mean |1 - |det|| per radius
    double outer_gap = 0;                // |mean log|det| - log|det A(0)||
};

// Uses det_eval when given, otherwise the determinant of A.
ClassifyReport classify_by_det(const MatrixFunction& A, const ClassifyOptions& opt = {},
                               const std::function<Complex(Complex)>& det_eval = {});

struct MaximalityReport {
    bool holds = false;
    double boundary_residual = 0;  // max ||A*A - B*B|| on the boundary ring
    double min_eigenvalue = 0;     // over interior points of A*A - B*B
};

// Throws SpecError when the boundary precondition ||A*A - B*B|| <= 1e-6 fails
// on the ring r = boundary_radius.
MaximalityReport outer_maximality_check(const MatrixFunction& A, const MatrixFunction& B,
                                        const std::vector<Complex>& interior, double boundary_radius = 1 - 1e-7,
                                        int boundary_samples = 32);

struct NonuniquenessReport {
    double function_gap = 0;    // max over the grid of ||A_1 - A_2||
    double closed_form_gap = 0; // max distance to exp(h_z(0)/2) I
    double integrator_gap = 0;  // sup_t ||E_1(t) - E_2(t)||
    double trace_defect = 0;    // max |tr E_i(t) - t|
    int grid_points = 0;
};

NonuniquenessReport nonuniqueness_demo(double tol = 1e-10);
std::pair<PpInnerSpec, PpInnerSpec> nonuniqueness_pair();

}  // namespace mvf
