#include "mvf/potapov.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/LU>

namespace mvf {

namespace {

constexpr double two_pi = 2 * std::numbers::pi;

CMat solve_checked(const CMat& m, const CMat& rhs, const char* what) {
    Eigen::PartialPivLU<CMat> lu(m);
    if (!(lu.rcond() > 1e-14)) throw NumericalError(std::string(what) + ": singular matrix");
    CMat x = lu.solve(rhs);
    if (!all_finite(x)) throw NumericalError(std::string(what) + ": non-finite result");
    return x;
}

// (e^{i theta} + z) / (e^{i theta} - z) = -h_z(theta)
Complex riesz_kernel(double theta, Complex z) {
    const Complex e = std::polar(1.0, theta);
    return (e + z) / (e - z);
}

}  // namespace

// ----------------------------------------------------------------- Cayley

CMat cayley_forward(const CMat& a, Complex w) {
    const CMat I = CMat::Identity(a.rows(), a.cols());
    return I_unit * solve_checked(CMat(w * I - a), CMat(w * I + a), "cayley_forward");
}

CMat cayley_forward(const MatrixFunction& A, Complex z, Complex w) { return cayley_forward(A(z), w); }

CMat cayley_inverse(const CMat& t, Complex w) {
    const CMat I = CMat::Identity(t.rows(), t.cols());
    // (T + iI)^{-1} and T - iI commute.
    return w * solve_checked(CMat(t + I_unit * I), CMat(t - I_unit * I), "cayley_inverse");
}

Complex choose_rotation(const CMat& a0) {
    const int n = static_cast<int>(a0.rows());
    const CMat I = CMat::Identity(n, n);
    Complex best = 1.0;
    double best_det = -1;
    for (int j = 0; j <= n; ++j) {
        const Complex w = std::polar(1.0, two_pi * j / (n + 1));
        const double d = std::abs(CMat(w * I - a0).determinant());
        if (d > best_det) {
            best_det = d;
            best = w;
        }
    }
    return best;
}

HerglotzMasses herglotz_extract(const std::function<CMat(Complex)>& T, double radius, int num_angles) {
    if (!(radius > 0 && radius < 1)) throw SpecError("herglotz_extract: radius must be in (0, 1)");
    if (num_angles < 2 || (num_angles & (num_angles - 1)) != 0)
        throw SpecError("herglotz_extract: num_angles must be a power of two");
    const double h = two_pi / num_angles;
    HerglotzMasses out;
    out.radius = radius;
    out.angles.resize(num_angles + 1);
    out.sigma.resize(num_angles + 1);
    std::vector<CMat> f(num_angles + 1);
    for (int i = 0; i < num_angles; ++i) {
        const CMat im = imag_part(T(std::polar(radius, i * h)));
        const double floor = -1e-9 * std::max(1.0, im.cwiseAbs().maxCoeff());
        if (min_eigenvalue(im) < floor) throw NumericalError("herglotz_extract: Im T is not positive on the circle");
        f[i] = im / two_pi;
    }
    f[num_angles] = f[0];
    out.angles[0] = 0;
    out.sigma[0] = CMat::Zero(f[0].rows(), f[0].cols());
    // Compensated running sum: cell masses are differences of cumulative
    // values, which would otherwise lose digits over 2^20 terms.
    CMat sum = out.sigma[0], carry = out.sigma[0];
    for (int i = 0; i < num_angles; ++i) {
        out.angles[i + 1] = (i + 1) * h;
        const CMat y = (0.5 * h) * (f[i] + f[i + 1]) - carry;
        const CMat t = sum + y;
        carry = (t - sum) - y;
        sum = t;
        out.sigma[i + 1] = sum;
    }
    return out;
}

CMat CayleyData::eval_T(Complex z) const {
    CMat t = T0;
    for (const auto& m : masses) t += (I_unit * riesz_kernel(m.angle, z)) * m.jump;
    return t;
}

CMat CayleyData::eval(Complex z) const { return cayley_inverse(eval_T(z), w); }

void CayleyData::validate() const {
    if (std::abs(std::abs(w) - 1) > 1e-12) throw SpecError("CayleyData: rotation must be unimodular");
    if (!is_hermitian(T0, hermitian_tol(T0))) throw SpecError("CayleyData: offset must be Hermitian");
    for (const auto& m : masses) {
        if (m.jump.rows() != T0.rows()) throw SpecError("CayleyData: mass dimension mismatch");
        if (!is_positive(m.jump, 1e-10)) throw SpecError("CayleyData: masses must be positive");
    }
}

// ------------------------------------------------------ rational approximants

namespace {

struct Grid {
    std::vector<Complex> z;
    std::vector<CMat> T;
};

Grid certificate_grid(const MatrixFunction& A, Complex w, double& r_k) {
    for (int attempt = 0; attempt < 4; ++attempt, r_k += 1e-4) {
        try {
            Grid g;
            for (int j = 0; j < 16; ++j)
                for (int l = 0; l < 16; ++l) {
                    const Complex z = std::polar(r_k * (j + 1) / 16, two_pi * (l + 0.5) / 16 + 0.0137);
                    g.z.push_back(z);
                    g.T.push_back(cayley_forward(A, z, w));
                }
            return g;
        } catch (const NumericalError&) {
        }
    }
    throw NumericalError("rational_approximant: Cayley transform singular near the certificate grid");
}

}  // namespace

RationalApproximant rational_approximant(const MatrixFunction& A, int k, const ApproximantOptions& opt,
                                         const RationalApproximant* previous) {
    if (k < 1) throw SpecError("rational_approximant: k must be positive");
    const Complex w = previous ? previous->cayley.w : choose_rotation(A(0.0));
    auto T = [&](Complex z) { return cayley_forward(A, z, w); };
    const CMat T0 = hermitian_part(T(0.0));
    const double target = 1.0 / k;

    double r_k = 1 - std::ldexp(1.0, -k - 1);
    const Grid grid = certificate_grid(A, w, r_k);
    const std::size_t G = grid.z.size();

    int e = 0;
    if (previous) {
        const int prev_level = static_cast<int>(std::lround(-std::log2(1 - previous->rho)));
        e = std::max(0, prev_level - (k + 6));
    }
    for (; e <= opt.max_escalations; ++e) {
        const int log2N = k + 11 + e;
        if (log2N > opt.log2_max_angles) break;
        const int N = 1 << log2N;
        const double rho = 1 - std::ldexp(1.0, -(k + 6 + e));

        double rho_err = 0;
        for (std::size_t g = 0; g < G; ++g) rho_err = std::max(rho_err, spectral_norm(CMat(grid.T[g] - T(rho * grid.z[g]))));
        if (rho_err > 0.5 * target) continue;

        const HerglotzMasses hm = herglotz_extract(T, rho, N);

        // Cell breakpoints in units of 2 pi, all on the N-point grid.
        std::vector<double> cells;
        if (previous && !previous->cells.empty()) {
            for (std::size_t i = 0; i + 1 < previous->cells.size(); ++i) {
                cells.push_back(previous->cells[i]);
                cells.push_back(0.5 * (previous->cells[i] + previous->cells[i + 1]));
            }
            cells.push_back(1.0);
        } else {
            const int m = 16 << (k - 1);
            for (int i = 0; i <= m; ++i) cells.push_back(static_cast<double>(i) / m);
        }

        for (int round = 0; round < opt.max_rounds; ++round) {
            const std::size_t m = cells.size() - 1;
            std::vector<CMat> jump(m);
            for (std::size_t i = 0; i < m; ++i) {
                const auto ia = static_cast<std::size_t>(std::llround(cells[i] * N));
                const auto ib = static_cast<std::size_t>(std::llround(cells[i + 1] * N));
                jump[i] = hm.sigma[ib] - hm.sigma[ia];
            }
            double cert = 0;
            for (std::size_t g = 0; g < G; ++g) {
                CMat tk = T0;
                for (std::size_t i = 0; i < m; ++i) tk += (I_unit * riesz_kernel(two_pi * cells[i], grid.z[g])) * jump[i];
                cert = std::max(cert, spectral_norm(CMat(grid.T[g] - tk)));
            }
            if (cert <= target) {
                RationalApproximant out;
                out.cayley.w = w;
                out.cayley.T0 = T0;
                for (std::size_t i = 0; i < m; ++i)
                    if (jump[i].cwiseAbs().maxCoeff() > 0) out.cayley.masses.push_back({two_pi * cells[i], jump[i]});
                out.k = k;
                out.r_k = r_k;
                out.rho = rho;
                out.num_angles = N;
                out.certificate = cert;
                out.cells = std::move(cells);
                return out;
            }
            // Left-tag error indicator: cell mass times kernel variation.
            std::vector<double> ind(m, 0.0);
            double top = 0;
            for (std::size_t i = 0; i < m; ++i) {
                const double mass = jump[i].trace().real();
                if (!(mass > 0)) continue;
                double var = 0;
                for (std::size_t g = 0; g < G; ++g)
                    var = std::max(var, std::abs(riesz_kernel(two_pi * cells[i + 1], grid.z[g]) -
                                                 riesz_kernel(two_pi * cells[i], grid.z[g])));
                ind[i] = mass * var;
                top = std::max(top, ind[i]);
            }
            std::vector<double> next{cells.front()};
            bool refined = false;
            for (std::size_t i = 0; i < m; ++i) {
                const bool wide = (cells[i + 1] - cells[i]) * N >= 2;
                if (top > 0 && ind[i] >= 0.25 * top && wide) {
                    next.push_back(0.5 * (cells[i] + cells[i + 1]));
                    refined = true;
                }
                next.push_back(cells[i + 1]);
            }
            if (!refined || static_cast<int>(next.size()) > opt.max_cells) break;
            cells = std::move(next);
        }
    }
    throw NumericalError("rational_approximant: partition budget exhausted before meeting the 1/k certificate");
}

std::vector<RationalApproximant> approximant_chain(const MatrixFunction& A, int kmax,
                                                   const ApproximantOptions& opt) {
    std::vector<RationalApproximant> out;
    for (int k = 1; k <= kmax; ++k)
        out.push_back(rational_approximant(A, k, opt, out.empty() ? nullptr : &out.back()));
    return out;
}

// ------------------------------------------------------- step representation

IntegratorSpec PotapovRepr::integrator() const {
    std::vector<CMat> values{CMat::Zero(dim(), dim())};
    for (const auto& h : jumps) values.push_back(values.back() + h);
    return IntegratorSpec::piecewise_linear(breakpoints, values, true);
}

StepFunction PotapovRepr::theta() const {
    StepFunction s;
    s.points.assign(breakpoints.begin() + 1, breakpoints.end() - 1);
    s.values = angles;
    return s;
}

CMat PotapovRepr::E(double t) const {
    CMat acc = CMat::Zero(dim(), dim());
    for (std::size_t j = 0; j < jumps.size(); ++j) {
        const double a = breakpoints[j], b = breakpoints[j + 1];
        if (t >= b) {
            acc += jumps[j];
        } else {
            if (t > a) acc += ((t - a) / (b - a)) * jumps[j];
            break;
        }
    }
    return acc;
}

void PotapovRepr::validate() const {
    if (breakpoints.size() != jumps.size() + 1 || angles.size() != jumps.size())
        throw SpecError("PotapovRepr: inconsistent sizes");
    if (breakpoints.front() != 0) throw SpecError("PotapovRepr: breakpoints must start at 0");
    if (unitarity_residual(tail) > 1e-10) throw SpecError("PotapovRepr: tail not unitary");
    for (std::size_t j = 0; j < jumps.size(); ++j) {
        if (!is_positive(jumps[j], 1e-10)) throw SpecError("PotapovRepr: jumps must be positive");
        if (std::abs(jumps[j].trace().real() - (breakpoints[j + 1] - breakpoints[j])) > 1e-12)
            throw SpecError("PotapovRepr: trace normalization violated");
        if (angles[j] < 0 || angles[j] >= two_pi || (j > 0 && angles[j] < angles[j - 1]))
            throw SpecError("PotapovRepr: angles must be nondecreasing in [0, 2 pi)");
    }
    if (std::abs(breakpoints.back() - L) > 1e-12) throw SpecError("PotapovRepr: L must equal the last breakpoint");
}

PotapovRepr bp_to_repr(const BPProduct& B) {
    B.validate();
    PotapovRepr R;
    R.tail = B.tail;
    R.breakpoints.push_back(0);
    for (const auto& f : B.factors) {
        if (f.zero == Complex(0)) throw SpecError("bp_to_repr: zero at the origin");
        double th = std::arg(f.zero);
        if (th < 0) th += two_pi;
        if (th >= two_pi) th = 0;
        if (!R.angles.empty() && th < R.angles.back()) throw SpecError("bp_to_repr: factors not sorted by angle");
        const CMat H = (1 - std::abs(f.zero)) * f.projection();
        R.jumps.push_back(H);
        R.angles.push_back(th);
        R.breakpoints.push_back(R.breakpoints.back() + H.trace().real());
    }
    R.L = R.breakpoints.back();
    return R;
}

CMat repr_eval_exact(const PotapovRepr& R, Complex z) {
    CMat P = CMat::Identity(R.dim(), R.dim());
    for (std::size_t j = 0; j < R.jumps.size(); ++j) P = P * mat_exp(CMat(herglotz_kernel(z, R.angles[j]) * R.jumps[j]));
    return P * R.tail;
}

ReprEval repr_eval_checked(const PotapovRepr& R, Complex z, double tol) {
    if (!(std::abs(z) < 1)) throw SpecError("repr_eval: z must lie in the open disk");
    ReprEval out;
    if (R.jumps.empty()) {
        out.value = R.tail;
        return out;
    }
    const auto res = prod_integral(KernelSpec::herglotz(z, R.theta()), R.integrator(), tol);
    out.value = res.value * R.tail;
    out.certificate = res.error_certificate;
    out.exact_gap = spectral_norm(CMat(out.value - repr_eval_exact(R, z)));
    const double scale = std::max(1.0, spectral_norm(out.value));
    if (out.exact_gap > std::max(tol, 10 * out.certificate) + 1e-12 * scale)
        throw NumericalError("repr_eval: product integral disagrees with the exact step product");
    return out;
}

CMat repr_eval(const PotapovRepr& R, Complex z, double tol) { return repr_eval_checked(R, z, tol).value; }

ModifiedProductError modified_product_error(const BPProduct& B, const PotapovRepr& R, double r, double tol) {
    ModifiedProductError out;
    if (B.factors.empty()) return out;
    double min_mod = 1, C = 0, worst = 0;
    for (const auto& f : B.factors) {
        min_mod = std::min(min_mod, std::abs(f.zero));
        C += 1 - std::abs(f.zero);
        worst = std::max(worst, 1 - std::abs(f.zero));
    }
    if (r >= min_mod) r = 0.99 * min_mod;
    out.radius = r;
    const double q = C * (1 + r) / (1 - r);
    const double M = 2 / ((1 - r) * (1 - r)) * std::exp(q) * std::max(1.0, 2 * std::exp(q));
    out.bound = C * M * worst;

    const int radii = 8, angles = 32;
    out.measured = spectral_norm(CMat(eval_product(B, 0.0) - repr_eval(R, 0.0, tol)));
    for (int j = 1; j <= radii; ++j)
        for (int l = 0; l < angles; ++l) {
            const Complex z = std::polar(r * j / radii, two_pi * l / angles);
            out.measured = std::max(out.measured, spectral_norm(CMat(eval_product(B, z) - repr_eval(R, z, tol))));
        }
    return out;
}

}  // namespace mvf
