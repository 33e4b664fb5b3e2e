#include "mvf/blaschke.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

namespace mvf {

namespace {

constexpr double two_pi = 2 * std::numbers::pi;

struct ZeroOnContour {};

class DetCounter {
public:
    DetCounter(const MatrixFunction& A, long max) : A_(A), max_(max) {}
    Complex operator()(Complex z) {
        if (++count_ > max_) throw NumericalError("find_det_zeros: evaluation budget exhausted");
        return A_(z).determinant();
    }

private:
    const MatrixFunction& A_;
    long max_;
    long count_ = 0;
};

// Singular values at or below tol * max(sigma_max, 1). The floor of 1 is the
// natural scale of contractive functions and catches A(z0) = 0.
int defect_of(const CMat& m, double tol) {
    const RVec s = Eigen::JacobiSVD<CMat>(m).singularValues();
    if (s.size() == 0) return 0;
    const double cut = tol * std::max(s(0), 1.0);
    int d = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) <= cut) ++d;
    return d;
}

}  // namespace

Complex beta(Complex z0, Complex z) {
    if (z0 == Complex(0)) return z;
    const double r = std::abs(z0);
    return (z0 - z) / (1.0 - std::conj(z0) * z) * (r / z0);
}

// ----------------------------------------------------------------- factors

BPFactor BPFactor::from_subspace(Complex zero, const CMat& basis) {
    const int r = static_cast<int>(basis.cols());
    if (r < 1 || r > basis.rows()) throw SpecError("BPFactor: subspace dimension must be in [1, n]");
    Eigen::ColPivHouseholderQR<CMat> qr(basis);
    if (qr.rank() != r) throw SpecError("BPFactor: subspace basis is rank deficient");
    // Householder QR without pivoting keeps span(Q[:, :r]) = span(basis).
    Eigen::HouseholderQR<CMat> h(basis);
    BPFactor b{zero, CMat(h.householderQ()), r};
    b.validate();
    return b;
}

CMat BPFactor::projection() const {
    const auto Ur = frame.leftCols(rank);
    return Ur * Ur.adjoint();
}

void BPFactor::validate() const {
    if (!(std::abs(zero) < 1)) throw SpecError("BPFactor: zero must lie in the open disk");
    if (frame.rows() != frame.cols() || frame.rows() < 1) throw SpecError("BPFactor: frame must be square");
    if (rank < 1 || rank > frame.rows()) throw SpecError("BPFactor: rank must be in [1, n]");
    if (unitarity_residual(frame) > 1e-10) throw SpecError("BPFactor: frame not unitary");
}

CMat eval_factor(const BPFactor& b, Complex z) {
    const CMat P = b.projection();
    return CMat::Identity(b.dim(), b.dim()) - P + beta(b.zero, z) * P;
}

CMat eval_factor_inverse(const BPFactor& b, Complex z) {
    const CMat P = b.projection();
    return CMat::Identity(b.dim(), b.dim()) - P + P / beta(b.zero, z);
}

double BPProduct::blaschke_sum() const {
    double s = 0;
    for (const auto& f : factors) s += 1 - std::abs(f.zero);
    return s;
}

void BPProduct::validate() const {
    if (tail.rows() != tail.cols() || tail.rows() < 1) throw SpecError("BPProduct: tail must be square");
    if (unitarity_residual(tail) > 1e-10) throw SpecError("BPProduct: tail not unitary");
    for (const auto& f : factors) {
        f.validate();
        if (f.dim() != dim()) throw SpecError("BPProduct: dimension mismatch");
    }
}

CMat eval_product(const BPProduct& B, Complex z) {
    CMat P = CMat::Identity(B.dim(), B.dim());
    for (const auto& f : B.factors) P = P * eval_factor(f, z);
    return P * B.tail;
}

Complex scalar_blaschke(const BPProduct& B, Complex z) {
    Complex p = B.tail.determinant();
    for (const auto& f : B.factors) p *= std::pow(beta(f.zero, z), f.rank);
    return p;
}

MatrixFunction as_function(const BPProduct& B) {
    return {B.dim(), [B](Complex z) { return eval_product(B, z); }, true, "bp_product"};
}

// ------------------------------------------------------------- detachment

DetachTest detach_test(const MatrixFunction& A, const BPFactor& b, Complex z0) {
    const CMat a0 = A(z0);
    DetachTest t;
    t.residual = spectral_norm(CMat(b.projection() * a0));
    t.tol = 1e-9 * spectral_norm(a0) + 1e-12;
    t.detachable = t.residual <= t.tol;
    return t;
}

bool detachable(const MatrixFunction& A, const BPFactor& b, Complex z0) { return detach_test(A, b, z0).detachable; }

DetachResult detach_max(const MatrixFunction& A, Complex z0, const DetachOptions& opt) {
    if (!(std::abs(z0) < 1)) throw SpecError("detach_max: z0 must lie in the open disk");
    const CMat a0 = A(z0);
    const int n = static_cast<int>(a0.rows());
    const auto dec = svd(a0);
    const double scale = std::max(dec.s(0), 1.0);
    int r = 0;
    for (int i = 0; i < n; ++i)
        if (dec.s(i) <= opt.defect_tol * scale) ++r;
    if (r == 0) throw NumericalError("detach_max: A(z0) has no defect, z0 is not a zero");
    if (r < n && dec.s(n - r - 1) <= 100 * opt.defect_tol * scale)
        throw NumericalError("detach_max: ill-conditioned frame, rank decision is ambiguous");

    // Columns of U belonging to the zero singular values span ker A(z0)*, the
    // orthogonal complement of Im A(z0); they become Im P.
    CMat frame(n, n);
    frame.leftCols(r) = dec.U.rightCols(r);
    frame.rightCols(n - r) = dec.U.leftCols(n - r);
    BPFactor b{z0, frame, r};
    b.validate();

    const CMat P = b.projection();
    const double inner = std::min(opt.sing_radius, 0.25 * (1 - std::abs(z0)));
    const double rho = 2 * inner;
    const int N = opt.cauchy_points;
    auto direct = [A, P, z0, n](Complex z) -> CMat {
        return (CMat::Identity(n, n) - P + P / beta(z0, z)) * A(z);
    };
    auto rem = [direct, z0, inner, rho, N, n](Complex z) -> CMat {
        if (std::abs(z - z0) >= inner) return direct(z);
        // Removable singularity: Cauchy integral over |zeta - z0| = rho.
        CMat acc = CMat::Zero(n, n);
        for (int j = 0; j < N; ++j) {
            const Complex w = std::polar(rho, two_pi * j / N);
            const Complex zeta = z0 + w;
            acc += direct(zeta) * (w / (zeta - z));
        }
        return acc / static_cast<double>(N);
    };
    MatrixFunction R{n, rem, A.contractive, A.label + "/bp"};
    return {b, R};
}

FactorResult factor_out_zeros(const MatrixFunction& A, const std::vector<Complex>& zeros, double zero_tol,
                              const DetachOptions& opt) {
    DetachOptions o = opt;
    o.defect_tol = zero_tol;
    FactorResult out{BPProduct::identity(A.dim), A, {}};
    for (Complex z : zeros) {
        // A double zero may need several passes: det of the first remainder
        // can still vanish at z.
        for (int pass = 0; pass < A.dim + 1; ++pass) {
            if (defect_of(out.remainder(z), zero_tol) == 0) break;
            auto d = detach_max(out.remainder, z, o);
            out.product.factors.push_back(d.factor);
            out.remainder = d.remainder;
        }
    }
    for (Complex z : zeros)
        if (defect_of(out.remainder(z), zero_tol) > 0) out.unconsumed.push_back(z);
    return out;
}

// ------------------------------------------------------------ zero search

namespace {

struct Box {
    Complex c;
    double hw;
};

class ZeroSearch {
public:
    ZeroSearch(const MatrixFunction& A, double R, int density, const ZeroSearchOptions& opt)
        : f_(A, opt.max_evaluations), R_(R), leaf_(2 * R / density), opt_(opt) {
        r_eval_ = R + 0.5 * (1 - R);
        for (int j = 0; j < 16; ++j) fscale_ = std::max(fscale_, std::abs(f_(std::polar(R, two_pi * j / 16))));
        if (!(fscale_ > 0)) fscale_ = 1;
    }

    std::vector<DetZero> run(Complex offset) {
        clusters_.clear();
        subdivide({offset, 1.02 * R_ + std::abs(offset)});
        std::vector<DetZero> zeros;
        for (const auto& [box, m] : merged_clusters())
            for (auto& z : resolve(box, m)) zeros.push_back(z);
        std::vector<DetZero> kept;
        for (auto& z : zeros) {
            if (std::abs(z.z) > R_ * (1 + 1e-12)) continue;
            z.residual = std::abs(f_(z.z));
            if (std::abs(std::abs(z.z) - R_) < leaf_ || 1 - std::abs(z.z) < 1e-3 || z.residual > 1e-8)
                z.unreliable = true;
            kept.push_back(z);
        }
        std::sort(kept.begin(), kept.end(), [](const DetZero& a, const DetZero& b) {
            return std::abs(a.z) != std::abs(b.z) ? std::abs(a.z) < std::abs(b.z) : std::arg(a.z) < std::arg(b.z);
        });
        return kept;
    }

private:
    // Touching leaf boxes are joined and resolved as one square region; a
    // zero close to a shared edge otherwise spoils the power sums of both.
    std::vector<std::pair<Box, int>> merged_clusters() const {
        struct Region {
            double x0, x1, y0, y1;
            int m;
        };
        std::vector<Region> rs;
        for (const auto& [b, m] : clusters_)
            rs.push_back({b.c.real() - b.hw, b.c.real() + b.hw, b.c.imag() - b.hw, b.c.imag() + b.hw, m});
        const double gap = 1e-9 * leaf_;
        for (bool changed = true; changed;) {
            changed = false;
            for (std::size_t i = 0; i < rs.size() && !changed; ++i)
                for (std::size_t j = i + 1; j < rs.size() && !changed; ++j) {
                    auto& a = rs[i];
                    const auto& c = rs[j];
                    if (a.x0 > c.x1 + gap || c.x0 > a.x1 + gap || a.y0 > c.y1 + gap || c.y0 > a.y1 + gap) continue;
                    a = {std::min(a.x0, c.x0), std::max(a.x1, c.x1), std::min(a.y0, c.y0), std::max(a.y1, c.y1), a.m + c.m};
                    rs.erase(rs.begin() + static_cast<std::ptrdiff_t>(j));
                    changed = true;
                }
        }
        std::vector<std::pair<Box, int>> out;
        for (const auto& r : rs)
            out.push_back({{Complex(0.5 * (r.x0 + r.x1), 0.5 * (r.y0 + r.y1)),
                            0.5 * std::max(r.x1 - r.x0, r.y1 - r.y0)},
                           r.m});
        return out;
    }

    Complex eval_checked(Complex z) {
        const Complex v = f_(z);
        if (std::abs(v) <= 1e-13 * fscale_) throw ZeroOnContour{};
        return v;
    }

    double edge_arg(Complex za, Complex fa, Complex zb, Complex fb, int depth) {
        const double d = std::arg(fb / fa);
        if (depth >= 3 && std::abs(d) < 0.6) return d;
        if (depth >= 40) throw ZeroOnContour{};
        const Complex zm = 0.5 * (za + zb);
        const Complex fm = eval_checked(zm);
        return edge_arg(za, fa, zm, fm, depth + 1) + edge_arg(zm, fm, zb, fb, depth + 1);
    }

    int winding(const Box& b) {
        const Complex h(b.hw, 0), v(0, b.hw);
        const Complex corners[4] = {b.c - h - v, b.c + h - v, b.c + h + v, b.c - h + v};
        Complex fc[4];
        for (int k = 0; k < 4; ++k) fc[k] = eval_checked(corners[k]);
        double total = 0;
        for (int k = 0; k < 4; ++k) total += edge_arg(corners[k], fc[k], corners[(k + 1) % 4], fc[(k + 1) % 4], 0);
        return static_cast<int>(std::lround(total / two_pi));
    }

    void subdivide(const Box& b) {
        const double dx = std::max(0.0, std::abs(b.c.real()) - b.hw);
        const double dy = std::max(0.0, std::abs(b.c.imag()) - b.hw);
        if (std::hypot(dx, dy) > R_) return;
        const double far = std::abs(b.c) + std::sqrt(2.0) * b.hw;
        if (far <= r_eval_) {
            const int w = winding(b);
            if (w <= 0) return;
            if (2 * b.hw <= leaf_) {
                clusters_.push_back({b, w});
                return;
            }
        }
        const double q = 0.5 * b.hw;
        for (Complex d : {Complex(-q, -q), Complex(q, -q), Complex(q, q), Complex(-q, q)}) subdivide({b.c + d, q});
    }

    // Power sums of the zeros inside a circle around the box, via
    // g = log det A - m log(zeta - c), which is periodic on the circle.
    std::vector<DetZero> resolve(const Box& b, int m) {
        const double s2 = std::sqrt(2.0);
        const double cap = 0.9 * (1 - std::abs(b.c));
        for (double fac : {1.5, 1.3, 1.8, 1.15, 2.2}) {
            const double rho = std::min(fac * s2 * b.hw, cap);
            if (rho < 1.01 * s2 * b.hw) break;
            for (int N = opt_.circle_points; N <= 8192; N *= 2) {
                std::vector<Complex> g(N);
                std::vector<double> args(N);
                double prev = 0, total = 0;
                bool smooth = true;
                Complex f0;
                for (int j = 0; j < N; ++j) {
                    const Complex fj = f_(b.c + std::polar(rho, two_pi * j / N));
                    if (j == 0) {
                        f0 = fj;
                        prev = std::arg(fj);
                        args[0] = prev;
                    } else {
                        const double step = std::arg(fj / std::polar(1.0, prev));
                        if (std::abs(step) > 1.0) smooth = false;
                        prev += step;
                        total += step;
                        args[j] = prev;
                    }
                    g[j] = Complex(std::log(std::abs(fj)), args[j]);
                }
                total += std::arg(f0 / std::polar(1.0, prev));
                if (!smooth) continue;
                const int count = static_cast<int>(std::lround(total / two_pi));
                if (count != m) break;
                // Shifted power sums p_k = sum (z_i - c)^k.
                std::vector<Complex> p(m + 1, 0.0);
                for (int j = 0; j < N; ++j) {
                    const Complex e = std::polar(1.0, two_pi * j / N);
                    const Complex gj = g[j] - Complex(m * std::log(rho), m * two_pi * j / N);
                    Complex w = 1.0;
                    for (int k = 1; k <= m; ++k) {
                        p[k] -= static_cast<double>(k) * rho / N * w * gj * e;
                        w *= rho * e;
                    }
                }
                return roots_from_power_sums(b, p, m);
            }
        }
        // Fallback: report the box centre after Newton polishing.
        DetZero z{newton(b.c, b.hw), m, true, 0};
        return {z};
    }

    std::vector<DetZero> roots_from_power_sums(const Box& b, const std::vector<Complex>& p, int m) {
        if (m == 1) return {DetZero{newton(b.c + p[1], b.hw), 1, false, 0}};
        std::vector<Complex> e(m + 1, 0.0);
        e[0] = 1;
        for (int k = 1; k <= m; ++k) {
            Complex s = 0;
            for (int i = 1; i <= k; ++i) s += (i % 2 ? 1.0 : -1.0) * e[k - i] * p[i];
            e[k] = s / static_cast<double>(k);
        }
        // w^m - e1 w^{m-1} + e2 w^{m-2} - ...
        CMat comp = CMat::Zero(m, m);
        for (int i = 1; i < m; ++i) comp(i, i - 1) = 1;
        for (int k = 1; k <= m; ++k) comp(m - k, m - 1) = (k % 2 ? 1.0 : -1.0) * e[k];
        Eigen::ComplexEigenSolver<CMat> es(comp, false);
        std::vector<Complex> w(es.eigenvalues().data(), es.eigenvalues().data() + m);
        // A k-fold root comes back from the companion matrix as k eigenvalues
        // spread like eps^(1/k); their mean stays accurate. Zeros closer than
        // this are below the leaf resolution and are reported as one.
        const double merge = 0.05 * b.hw;
        std::vector<DetZero> out;
        std::vector<bool> used(m, false);
        for (int i = 0; i < m; ++i) {
            if (used[i]) continue;
            Complex sum = w[i];
            int cnt = 1;
            used[i] = true;
            for (int j = i + 1; j < m; ++j)
                if (!used[j] && std::abs(w[j] - w[i]) <= merge) {
                    used[j] = true;
                    sum += w[j];
                    ++cnt;
                }
            Complex z = b.c + sum / static_cast<double>(cnt);
            if (cnt == m) z = b.c + p[1] / static_cast<double>(m);  // coincident cluster: exact centroid
            if (cnt == 1) z = newton(z, b.hw);
            out.push_back({z, cnt, false, 0});
        }
        return out;
    }

    Complex newton(Complex z, double hw) {
        const double h = 1e-5 * std::max(hw, 1e-3);
        Complex fz = f_(z);
        for (int it = 0; it < 8 && std::abs(fz) > 0; ++it) {
            const Complex d = (f_(z + h) - f_(z - h)) / (2 * h);
            if (d == Complex(0)) break;
            const Complex zn = z - fz / d;
            if (std::abs(zn - z) > hw) break;
            const Complex fn = f_(zn);
            if (!(std::abs(fn) < std::abs(fz))) break;
            z = zn;
            fz = fn;
        }
        return z;
    }

    DetCounter f_;
    double R_, leaf_, r_eval_, fscale_ = 0;
    ZeroSearchOptions opt_;
    std::vector<std::pair<Box, int>> clusters_;
};

}  // namespace

std::vector<DetZero> locate_det_zeros(const MatrixFunction& A, double search_radius, int grid_density,
                                      const ZeroSearchOptions& opt) {
    if (!(search_radius > 0 && search_radius < 1)) throw SpecError("find_det_zeros: search radius must be in (0, 1)");
    if (grid_density < 1) throw SpecError("find_det_zeros: grid density must be positive");
    ZeroSearch search(A, search_radius, grid_density, opt);
    // Irrational-looking offsets keep box edges away from lattice-placed zeros;
    // a zero hit on an edge triggers a retry with the next offset.
    const Complex offsets[] = {{0.0123456789, 0.0098765432}, {-0.0271828182, 0.0314159265},
                               {0.0414213562, -0.0173205080}, {-0.0223606797, -0.0264575131}};
    for (Complex off : offsets) {
        try {
            return search.run(off * search_radius);
        } catch (const ZeroOnContour&) {
        }
    }
    throw NumericalError("find_det_zeros: zeros on box contours for every tiling offset");
}

std::vector<Complex> find_det_zeros(const MatrixFunction& A, double search_radius, int grid_density) {
    std::vector<Complex> out;
    for (const auto& z : locate_det_zeros(A, search_radius, grid_density))
        for (int k = 0; k < z.multiplicity; ++k) out.push_back(z.z);
    return out;
}

int winding_count(const MatrixFunction& A, Complex c, double radius, int samples) {
    for (int N = samples; N <= (1 << 16); N *= 2) {
        double total = 0;
        Complex prev = A(c + radius).determinant();
        const Complex first = prev;
        bool smooth = true;
        for (int j = 1; j <= N; ++j) {
            const Complex v = j == N ? first : A(c + std::polar(radius, two_pi * j / N)).determinant();
            const double step = std::arg(v / prev);
            if (std::abs(step) > 1.0) {
                smooth = false;
                break;
            }
            total += step;
            prev = v;
        }
        if (smooth) return static_cast<int>(std::lround(total / two_pi));
    }
    throw NumericalError("winding_count: argument not resolved on the circle");
}

// ------------------------------------------------------------ sampled checks

std::vector<int> rank_profile(const MatrixFunction& A, const std::vector<Complex>& points, double rel_tol) {
    std::vector<int> out;
    for (Complex z : points) {
        const CMat a = A(z);
        const CMat g = CMat::Identity(a.rows(), a.rows()) - a * a.adjoint();
        // Rank relative to 1, the scale of I - AA* for contractions.
        const RVec s = Eigen::JacobiSVD<CMat>(g).singularValues();
        int r = 0;
        for (Eigen::Index i = 0; i < s.size(); ++i)
            if (s(i) > rel_tol) ++r;
        out.push_back(r);
    }
    return out;
}

MaxPrincipleReport maximum_principle_check(const MatrixFunction& A, const std::vector<Complex>& points) {
    MaxPrincipleReport rep;
    if (points.empty()) return rep;
    const CMat first = A(points.front());
    bool constant = unitarity_residual(first) <= 1e-8;
    for (Complex z : points) {
        const CMat a = A(z);
        const double nrm = spectral_norm(a);
        rep.max_norm = std::max(rep.max_norm, nrm);
        if (nrm >= 1 - 1e-12) rep.triggered = true;
        if (spectral_norm(CMat(a - first)) > 1e-8) constant = false;
    }
    rep.constant_unitary = constant;
    return rep;
}

double subharmonic_excess(const MatrixFunction& A, Complex c, double radius, int samples) {
    double mean = 0;
    for (int j = 0; j < samples; ++j) mean += spectral_norm(A(c + std::polar(radius, two_pi * j / samples)));
    return spectral_norm(A(c)) - mean / samples;
}

}  // namespace mvf
