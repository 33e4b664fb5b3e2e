#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mvf/matcore.hpp"

namespace mvf {

// Herglotz kernel (z + e^{i theta}) / (z - e^{i theta}).
Complex herglotz_kernel(Complex z, double theta);

struct TaggedPartition {
    std::vector<double> points;  // t_0 <= ... <= t_m
    std::vector<double> tags;    // tags[i] in [points[i], points[i+1]]

    static TaggedPartition uniform(double a, double b, int cells);  // midpoint tags
    int cells() const { return static_cast<int>(tags.size()); }
    double mesh() const;
    void validate() const;
};

// Right-continuous nondecreasing step function:
// value = values[0] for t < points[0], values[j+1] for points[j] <= t < points[j+1].
struct StepFunction {
    std::vector<double> points;
    std::vector<double> values;

    double operator()(double t) const;
    void validate() const;
};

class KernelSpec {
public:
    struct Constant {
        Complex c;
    };
    // theta empty means theta(t) = t.
    struct Herglotz {
        Complex z;
        std::optional<StepFunction> theta;
    };
    // Linear interpolation between samples, constant extension outside.
    struct Tabulated {
        std::vector<double> points;
        std::vector<Complex> values;
    };
    struct Function {
        std::function<Complex(double)> f;
        std::vector<double> breaks;  // discontinuities or refinement hints
        std::function<std::vector<double>(double, double)> breaks_fn;  // used instead of breaks when set
    };
    using Variant = std::variant<Constant, Herglotz, Tabulated, Function>;

    KernelSpec() : v_(Constant{0.0}) {}
    explicit KernelSpec(Variant v);

    static KernelSpec constant(Complex c) { return KernelSpec(Constant{c}); }
    static KernelSpec herglotz(Complex z, StepFunction theta);
    static KernelSpec herglotz(Complex z);  // theta(t) = t
    static KernelSpec tabulated(std::vector<double> t, std::vector<Complex> v);
    static KernelSpec function(std::function<Complex(double)> f, std::vector<double> breaks = {});

    Complex operator()(double t) const;
    const Variant& variant() const { return v_; }

    // Points in (lo, hi) that must be partition points: jumps and kinks of f,
    // plus a graded cluster around the kernel peak for near-boundary Herglotz
    // kernels with theta(t) = t.
    std::vector<double> breakpoints(double lo, double hi) const;

    KernelSpec twice_real_part() const;
    KernelSpec modulus() const;

private:
    Variant v_;
};

// One segment of the measure dE, as produced by IntegratorSpec::pieces.
struct Piece {
    enum class Kind { atom, linear, density };
    Kind kind = Kind::linear;
    double s0 = 0, s1 = 0;  // atom: s0 == s1 == location
    CMat D;                 // atom: jump; linear: slope dE/dt
    const std::function<CMat(double)>* M = nullptr;  // density
};

class IntegratorSpec {
public:
    // E(t) = sum of jumps at points <= t (right-continuous), jumps in (a, b].
    struct Step {
        double a = 0, b = 1;
        std::vector<double> points;
        std::vector<CMat> jumps;
    };
    struct PiecewiseLinear {
        std::vector<double> points;
        std::vector<CMat> values;
    };
    // E(t) = int_a^t M; hints are kinks of M that must be partition points.
    // Optional samples record a piecewise-linear M for serialization.
    struct Density {
        double a = 0, b = 1;
        int dim = 1;
        std::function<CMat(double)> M;
        std::vector<double> hints;
        std::optional<std::pair<std::vector<double>, std::vector<CMat>>> samples;
    };
    // E(t) = C_depth((t - a)/(b - a)) * scale with C_depth the depth-level
    // piecewise-linear approximant of the Cantor function.
    struct Cantor {
        double a = 0, b = 1;
        CMat scale;
        int depth = 12;
    };
    using Variant = std::variant<Step, PiecewiseLinear, Density, Cantor>;

    IntegratorSpec() = default;
    IntegratorSpec(Variant v, bool increasing = false);

    static IntegratorSpec step(double a, double b, std::vector<double> points, std::vector<CMat> jumps,
                               bool increasing = false);
    static IntegratorSpec piecewise_linear(std::vector<double> points, std::vector<CMat> values,
                                           bool increasing = false);
    static IntegratorSpec linear(double a, double b, const CMat& slope);  // E(t) = (t - a) slope
    static IntegratorSpec density(double a, double b, int dim, std::function<CMat(double)> M,
                                  std::vector<double> hints = {});
    static IntegratorSpec density_samples(std::vector<double> nodes, std::vector<CMat> values);
    static IntegratorSpec cantor(double a, double b, const CMat& scale, int depth);

    const Variant& variant() const { return *v_; }
    int dim() const { return dim_; }
    double a() const { return a_; }
    double b() const { return b_; }
    bool increasing() const { return increasing_; }

    CMat value(double t) const;
    CMat increment(double s, double t) const { return value(t) - value(s); }

    // Decomposition of dE restricted to (lo, hi] in left-to-right order.
    std::vector<Piece> pieces(double lo, double hi) const;

private:
    void init();
    std::shared_ptr<const Variant> v_;
    int dim_ = 0;
    double a_ = 0, b_ = 0;
    bool increasing_ = false;
    std::shared_ptr<const std::vector<std::pair<double, double>>> cantor_cells_;
};

// Finite-depth Cantor function approximant on [0, 1].
double cantor_function(double x, int depth);

struct ProdIntOptions {
    int max_levels = 24;
    int min_levels = 2;
    long max_cells = 1L << 22;  // per level
    bool check_invariants = false;
};

struct ProdIntResult {
    CMat value;
    long partitions_used = 0;  // cells on the finest level
    int levels = 0;
    double error_certificate = 0;
    // Filled when check_invariants is set.
    double det_residual = 0;  // |det value - exp(int f d tr E)| / |exp(...)|
    double norm_bound = 0;    // exp(int |f| d|E|)
};

CMat riemann_product(const KernelSpec& f, const IntegratorSpec& E, const TaggedPartition& tau);

ProdIntResult prod_integral(const KernelSpec& f, const IntegratorSpec& E, double tol,
                            const ProdIntOptions& opt = {});
ProdIntResult prod_integral(const KernelSpec& f, const IntegratorSpec& E, double lo, double hi, double tol,
                            const ProdIntOptions& opt = {});

// RK4 for F' = F A(t), F(a) = I.
CMat ode_integral(const std::function<CMat(double)>& A, double a, double b, int steps);

double variation(const IntegratorSpec& E, double t);

std::pair<ProdIntResult, ProdIntResult> split_product(const KernelSpec& f, const IntegratorSpec& E, double tol,
                                                      double c);

// prod_integral(2 Re f, E).
CMat gram_product(const KernelSpec& f, const IntegratorSpec& E, double tol);

// Additive Stieltjes integrals over (lo, hi].
CMat stieltjes_integral(const KernelSpec& f, const IntegratorSpec& E, double lo, double hi, double tol = 1e-12);
Complex stieltjes_trace(const KernelSpec& f, const IntegratorSpec& E, double lo, double hi, double tol = 1e-12);
double stieltjes_variation(const KernelSpec& f, const IntegratorSpec& E, double lo, double hi, double tol = 1e-12);

struct TaylorCertificate {
    CMat linear_part;  // I + int f dE
    double s = 0;      // int |f| d|E|
    double remainder_bound = 0;  // e^s - 1 - s
};
TaylorCertificate taylor_certificate(const KernelSpec& f, const IntegratorSpec& E, double lo, double hi);

// Strictly increasing map, linear between nodes, with optional jumps:
// on (t[i-1], t[i]) it runs from right[i-1] to left[i]; a jump at t[i]
// goes from left[i] to right[i].
struct IncreasingMap {
    std::vector<double> t;
    std::vector<double> left;
    std::vector<double> right;

    static IncreasingMap linear(double a, double b, double alpha, double beta);
    double operator()(double x) const;
    double inverse(double s) const;  // inf{t : phi(t) >= s}
    double alpha() const { return right.front(); }
    double beta() const { return left.back(); }
    void validate() const;
};

// E o phi^dagger as an integrator on [phi(a), phi(b)].
IntegratorSpec pushforward(const IntegratorSpec& E, const IncreasingMap& phi);

// int exp(f(s) dE(phi^dagger(s))) with f given on the target interval.
ProdIntResult change_of_variables(const KernelSpec& f, const IntegratorSpec& E, const IncreasingMap& phi,
                                  double tol);

struct HellyReport {
    std::vector<double> gaps;          // sup over grid of the product-integral distance, per k
    std::vector<double> certificates;  // combined certificates, per k
    double final_gap = 0;
    double monotone_fraction = 0;      // fraction of k with gap_{k+1} <= gap_k + certificates
    std::vector<std::string> violations;
};

// Compares int_a^t exp(f_k dE_k) with int_a^t exp(f dE) for t in grid.
HellyReport helly_convergence_harness(const std::vector<std::pair<KernelSpec, IntegratorSpec>>& seq,
                                      const std::pair<KernelSpec, IntegratorSpec>& limit,
                                      const std::vector<double>& grid, double tol);

CMat ordered_product(const std::vector<CMat>& factors, int n);

// sum_l (P_1 ... P_{l-1}) (P_l - Q_l) (Q_{l+1} ... Q_m)
CMat telescoping_sum(const std::vector<CMat>& P, const std::vector<CMat>& Q);

// Samples E on a uniform grid and checks E(t_{i+1}) - E(t_i) >= -tol.
bool sampled_increasing(const IntegratorSpec& E, int samples, double tol);

}  // namespace mvf
