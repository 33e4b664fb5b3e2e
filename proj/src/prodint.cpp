#include "mvf/prodint.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mvf/quadrature.hpp"

namespace mvf {

namespace {

constexpr double two_pi = 2 * std::numbers::pi;

double integrator_tol(const CMat& m) { return 1e-12 * std::max(1.0, spectral_norm(m)); }

void require_hermitian(const CMat& m, const char* what) {
    if (m.rows() != m.cols()) throw SpecError(std::string(what) + ": matrix not square");
    if (!all_finite(m)) throw SpecError(std::string(what) + ": non-finite entries");
    if (!is_hermitian(m, 1e-10 * std::max(1.0, spectral_norm(m))))
        throw SpecError(std::string(what) + ": matrix not Hermitian");
}

void require_sorted(const std::vector<double>& p, const char* what) {
    for (double x : p)
        if (!std::isfinite(x)) throw SpecError(std::string(what) + ": non-finite point");
    for (size_t i = 1; i < p.size(); ++i)
        if (p[i] < p[i - 1]) throw SpecError(std::string(what) + ": points not sorted");
}

// Cells of the depth-d Cantor approximant where it has slope (3/2)^d.
std::vector<std::pair<double, double>> cantor_cells(int depth) {
    std::vector<std::pair<double, double>> cells{{0.0, 1.0}};
    for (int d = 0; d < depth; ++d) {
        std::vector<std::pair<double, double>> next;
        next.reserve(cells.size() * 2);
        for (auto [x0, x1] : cells) {
            const double w = (x1 - x0) / 3;
            next.push_back({x0, x0 + w});
            next.push_back({x1 - w, x1});
        }
        cells.swap(next);
    }
    return cells;
}

std::vector<double> in_range(const std::vector<double>& pts, double lo, double hi) {
    std::vector<double> out;
    for (double x : pts)
        if (x > lo && x < hi) out.push_back(x);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// Continuous pieces cut at the kernel's breakpoints.
std::vector<Piece> split_at_kernel(const std::vector<Piece>& pcs, const KernelSpec& f) {
    std::vector<Piece> out;
    out.reserve(pcs.size());
    for (const auto& p : pcs) {
        if (p.kind == Piece::Kind::atom) {
            out.push_back(p);
            continue;
        }
        auto bp = f.breakpoints(p.s0, p.s1);
        double s = p.s0;
        for (double x : bp) {
            if (x - s <= 1e-15 * std::max(1.0, std::abs(x))) continue;
            Piece q = p;
            q.s0 = s;
            q.s1 = x;
            out.push_back(q);
            s = x;
        }
        if (p.s1 > s) {
            Piece q = p;
            q.s0 = s;
            out.push_back(q);
        }
    }
    return out;
}

CMat density_increment(const std::function<CMat(double)>& M, double s0, double s1, double tol) {
    return adaptive_simpson([&](double t) { return CMat(M(t)); }, s0, s1, tol, 1);
}

}  // namespace

Complex herglotz_kernel(Complex z, double theta) {
    const Complex e = std::polar(1.0, theta);
    return (z + e) / (z - e);
}

// ---------------------------------------------------------------- partitions

TaggedPartition TaggedPartition::uniform(double a, double b, int cells) {
    if (cells < 1) throw SpecError("TaggedPartition: need at least one cell");
    TaggedPartition p;
    const double h = (b - a) / cells;
    for (int i = 0; i <= cells; ++i) p.points.push_back(i == cells ? b : a + i * h);
    for (int i = 0; i < cells; ++i) p.tags.push_back(0.5 * (p.points[i] + p.points[i + 1]));
    return p;
}

double TaggedPartition::mesh() const {
    double m = 0;
    for (size_t i = 1; i < points.size(); ++i) m = std::max(m, points[i] - points[i - 1]);
    return m;
}

void TaggedPartition::validate() const {
    if (points.size() < 2) throw SpecError("TaggedPartition: need at least two points");
    if (tags.size() + 1 != points.size()) throw SpecError("TaggedPartition: one tag per cell required");
    require_sorted(points, "TaggedPartition");
    for (size_t i = 0; i < tags.size(); ++i)
        if (!(tags[i] >= points[i] && tags[i] <= points[i + 1]))
            throw SpecError("TaggedPartition: tag outside its cell");
}

double StepFunction::operator()(double t) const {
    auto it = std::upper_bound(points.begin(), points.end(), t);
    return values[static_cast<size_t>(it - points.begin())];
}

void StepFunction::validate() const {
    if (values.size() != points.size() + 1) throw SpecError("StepFunction: need one more value than points");
    require_sorted(points, "StepFunction");
    for (size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] >= 0 && values[i] <= two_pi)) throw SpecError("StepFunction: value outside [0, 2pi]");
        if (i > 0 && values[i] < values[i - 1]) throw SpecError("StepFunction: values must be nondecreasing");
    }
}

// ------------------------------------------------------------------- kernels

KernelSpec::KernelSpec(Variant v) : v_(std::move(v)) {
    if (auto* h = std::get_if<Herglotz>(&v_)) {
        if (!(std::abs(h->z) < 1)) throw SpecError("KernelSpec: Herglotz kernel needs |z| < 1");
        if (h->theta) h->theta->validate();
    } else if (auto* t = std::get_if<Tabulated>(&v_)) {
        if (t->points.empty() || t->points.size() != t->values.size())
            throw SpecError("KernelSpec: tabulated samples malformed");
        require_sorted(t->points, "KernelSpec");
    } else if (auto* f = std::get_if<Function>(&v_)) {
        if (!f->f) throw SpecError("KernelSpec: empty function");
    }
}

KernelSpec KernelSpec::herglotz(Complex z, StepFunction theta) { return KernelSpec(Herglotz{z, std::move(theta)}); }
KernelSpec KernelSpec::herglotz(Complex z) { return KernelSpec(Herglotz{z, std::nullopt}); }
KernelSpec KernelSpec::tabulated(std::vector<double> t, std::vector<Complex> v) {
    return KernelSpec(Tabulated{std::move(t), std::move(v)});
}
KernelSpec KernelSpec::function(std::function<Complex(double)> f, std::vector<double> breaks) {
    return KernelSpec(Function{std::move(f), std::move(breaks), {}});
}

Complex KernelSpec::operator()(double t) const {
    struct Visitor {
        double t;
        Complex operator()(const Constant& c) const { return c.c; }
        Complex operator()(const Herglotz& h) const { return herglotz_kernel(h.z, h.theta ? (*h.theta)(t) : t); }
        Complex operator()(const Tabulated& s) const {
            const auto& p = s.points;
            if (t <= p.front()) return s.values.front();
            if (t >= p.back()) return s.values.back();
            auto it = std::upper_bound(p.begin(), p.end(), t);
            const size_t j = static_cast<size_t>(it - p.begin());
            const double w = (t - p[j - 1]) / (p[j] - p[j - 1]);
            return (1 - w) * s.values[j - 1] + w * s.values[j];
        }
        Complex operator()(const Function& f) const { return f.f(t); }
    };
    return std::visit(Visitor{t}, v_);
}

std::vector<double> KernelSpec::breakpoints(double lo, double hi) const {
    if (const auto* h = std::get_if<Herglotz>(&v_)) {
        if (h->theta) return in_range(h->theta->points, lo, hi);
        const double r = std::abs(h->z);
        if (r <= 0.5) return {};
        // Peak of h_z(phi) at phi = arg z with width 1 - |z|: grade the
        // partition geometrically towards it.
        double c = std::arg(h->z);
        if (c < 0) c += two_pi;
        const double d = 1 - r;
        std::vector<double> pts;
        for (double shift : {-two_pi, 0.0, two_pi}) {
            const double cc = c + shift;
            pts.push_back(cc);
            for (double w = d; w < std::numbers::pi; w *= 2) {
                pts.push_back(cc - w);
                pts.push_back(cc + w);
            }
        }
        return in_range(pts, lo, hi);
    }
    if (const auto* t = std::get_if<Tabulated>(&v_)) return in_range(t->points, lo, hi);
    if (const auto* f = std::get_if<Function>(&v_)) return f->breaks_fn ? f->breaks_fn(lo, hi) : in_range(f->breaks, lo, hi);
    return {};
}

KernelSpec KernelSpec::twice_real_part() const {
    KernelSpec base = *this;
    Function g;
    g.f = [base](double t) { return Complex(2 * std::real(base(t)), 0.0); };
    g.breaks_fn = [base](double lo, double hi) { return base.breakpoints(lo, hi); };
    return KernelSpec(std::move(g));
}

KernelSpec KernelSpec::modulus() const {
    KernelSpec base = *this;
    Function g;
    g.f = [base](double t) { return Complex(std::abs(base(t)), 0.0); };
    g.breaks_fn = [base](double lo, double hi) { return base.breakpoints(lo, hi); };
    return KernelSpec(std::move(g));
}

// --------------------------------------------------------------- integrators

double cantor_function(double x, int depth) {
    if (x <= 0) return 0;
    if (x >= 1) return 1;
    double scale = 1, offset = 0;
    for (int d = 0; d < depth; ++d) {
        if (x < 1.0 / 3) {
            x = 3 * x;
        } else if (x > 2.0 / 3) {
            x = 3 * x - 2;
            offset += 0.5 * scale;
        } else {
            return offset + 0.5 * scale;
        }
        scale *= 0.5;
    }
    return offset + scale * x;
}

IntegratorSpec::IntegratorSpec(Variant v, bool increasing)
    : v_(std::make_shared<const Variant>(std::move(v))), increasing_(increasing) {
    init();
}

void IntegratorSpec::init() {
    struct Visitor {
        IntegratorSpec& self;
        void operator()(const Step& s) {
            if (!(s.a <= s.b)) throw SpecError("IntegratorSpec: empty domain");
            if (s.points.size() != s.jumps.size()) throw SpecError("IntegratorSpec: one jump per point required");
            if (s.jumps.empty()) throw SpecError("IntegratorSpec: step integrator needs a jump (use a zero jump)");
            require_sorted(s.points, "IntegratorSpec");
            self.dim_ = static_cast<int>(s.jumps.front().rows());
            for (size_t i = 0; i < s.points.size(); ++i) {
                if (s.points[i] <= s.a || s.points[i] > s.b)
                    if (!(s.a == s.b && s.points[i] == s.a))
                        throw SpecError("IntegratorSpec: jump point outside (a, b]");
                if (s.jumps[i].rows() != self.dim_) throw SpecError("IntegratorSpec: dimension mismatch");
                require_hermitian(s.jumps[i], "IntegratorSpec");
                if (self.increasing_ && min_eigenvalue(s.jumps[i]) < -integrator_tol(s.jumps[i]))
                    throw SpecError("IntegratorSpec: jump not positive for increasing integrator");
            }
            self.a_ = s.a;
            self.b_ = s.b;
        }
        void operator()(const PiecewiseLinear& s) {
            if (s.points.size() < 2 || s.points.size() != s.values.size())
                throw SpecError("IntegratorSpec: piecewise-linear needs >= 2 matching nodes");
            require_sorted(s.points, "IntegratorSpec");
            self.dim_ = static_cast<int>(s.values.front().rows());
            for (size_t i = 0; i < s.values.size(); ++i) {
                if (s.values[i].rows() != self.dim_) throw SpecError("IntegratorSpec: dimension mismatch");
                require_hermitian(s.values[i], "IntegratorSpec");
                if (self.increasing_ && i > 0) {
                    const CMat d = s.values[i] - s.values[i - 1];
                    if (min_eigenvalue(d) < -integrator_tol(d))
                        throw SpecError("IntegratorSpec: node differences not positive");
                }
            }
            self.a_ = s.points.front();
            self.b_ = s.points.back();
        }
        void operator()(const Density& s) {
            if (!(s.a <= s.b)) throw SpecError("IntegratorSpec: empty domain");
            if (!s.M) throw SpecError("IntegratorSpec: empty density");
            if (s.dim < 1) throw SpecError("IntegratorSpec: dimension must be positive");
            const CMat m0 = s.M(s.a);
            if (m0.rows() != s.dim || m0.cols() != s.dim) throw SpecError("IntegratorSpec: density dimension mismatch");
            require_hermitian(m0, "IntegratorSpec density");
            self.dim_ = s.dim;
            self.a_ = s.a;
            self.b_ = s.b;
        }
        void operator()(const Cantor& s) {
            if (!(s.a < s.b)) throw SpecError("IntegratorSpec: empty domain");
            if (s.depth < 0 || s.depth > 20) throw SpecError("IntegratorSpec: Cantor depth must be in [0, 20]");
            require_hermitian(s.scale, "IntegratorSpec Cantor scale");
            if (min_eigenvalue(s.scale) < -integrator_tol(s.scale))
                throw SpecError("IntegratorSpec: Cantor scale must be positive");
            self.dim_ = static_cast<int>(s.scale.rows());
            self.a_ = s.a;
            self.b_ = s.b;
            self.increasing_ = true;
            self.cantor_cells_ =
                std::make_shared<const std::vector<std::pair<double, double>>>(cantor_cells(s.depth));
        }
    };
    std::visit(Visitor{*this}, *v_);
    if (dim_ < 1) throw SpecError("IntegratorSpec: dimension must be positive");
}

IntegratorSpec IntegratorSpec::step(double a, double b, std::vector<double> points, std::vector<CMat> jumps,
                                    bool increasing) {
    return IntegratorSpec(Step{a, b, std::move(points), std::move(jumps)}, increasing);
}

IntegratorSpec IntegratorSpec::piecewise_linear(std::vector<double> points, std::vector<CMat> values,
                                                bool increasing) {
    return IntegratorSpec(PiecewiseLinear{std::move(points), std::move(values)}, increasing);
}

IntegratorSpec IntegratorSpec::linear(double a, double b, const CMat& slope) {
    const bool inc = is_positive(slope, hermitian_tol(slope));
    return piecewise_linear({a, b}, {CMat::Zero(slope.rows(), slope.cols()), CMat((b - a) * slope)}, inc);
}

IntegratorSpec IntegratorSpec::density(double a, double b, int dim, std::function<CMat(double)> M,
                                       std::vector<double> hints) {
    return IntegratorSpec(Density{a, b, dim, std::move(M), std::move(hints), std::nullopt});
}

IntegratorSpec IntegratorSpec::density_samples(std::vector<double> nodes, std::vector<CMat> values) {
    if (nodes.size() < 2 || nodes.size() != values.size())
        throw SpecError("IntegratorSpec: density samples need >= 2 matching nodes");
    require_sorted(nodes, "IntegratorSpec");
    for (const auto& v : values) require_hermitian(v, "IntegratorSpec density sample");
    const int dim = static_cast<int>(values.front().rows());
    for (const auto& v : values)
        if (v.rows() != dim) throw SpecError("IntegratorSpec: density dimension mismatch");
    auto M = [nodes, values](double t) -> CMat {
        if (t <= nodes.front()) return values.front();
        if (t >= nodes.back()) return values.back();
        auto it = std::upper_bound(nodes.begin(), nodes.end(), t);
        const size_t j = static_cast<size_t>(it - nodes.begin());
        const double w = (t - nodes[j - 1]) / (nodes[j] - nodes[j - 1]);
        return (1 - w) * values[j - 1] + w * values[j];
    };
    bool inc = true;
    for (const auto& v : values) inc = inc && min_eigenvalue(v) >= -integrator_tol(v);
    Density d{nodes.front(), nodes.back(), dim, M, nodes, std::make_pair(nodes, values)};
    return IntegratorSpec(std::move(d), inc);
}

IntegratorSpec IntegratorSpec::cantor(double a, double b, const CMat& scale, int depth) {
    return IntegratorSpec(Cantor{a, b, scale, depth}, true);
}

CMat IntegratorSpec::value(double t) const {
    struct Visitor {
        const IntegratorSpec& self;
        double t;
        CMat operator()(const Step& s) const {
            CMat e = CMat::Zero(self.dim_, self.dim_);
            for (size_t i = 0; i < s.points.size(); ++i)
                if (s.points[i] <= t) e += s.jumps[i];
            return e;
        }
        CMat operator()(const PiecewiseLinear& s) const {
            const auto& p = s.points;
            if (t < p.front()) return s.values.front();
            if (t >= p.back()) return s.values.back();
            auto it = std::upper_bound(p.begin(), p.end(), t);
            const size_t j = static_cast<size_t>(it - p.begin());
            const double w = (t - p[j - 1]) / (p[j] - p[j - 1]);
            return (1 - w) * s.values[j - 1] + w * s.values[j];
        }
        CMat operator()(const Density& s) const {
            CMat e = CMat::Zero(self.dim_, self.dim_);
            const double hi = std::min(t, s.b);
            if (hi <= s.a) return e;
            double lo = s.a;
            for (double x : in_range(s.hints, s.a, hi)) {
                e += density_increment(s.M, lo, x, 1e-14 * (x - lo));
                lo = x;
            }
            e += density_increment(s.M, lo, hi, 1e-14 * (hi - lo));
            return e;
        }
        CMat operator()(const Cantor& s) const {
            return cantor_function((t - s.a) / (s.b - s.a), s.depth) * s.scale;
        }
    };
    return std::visit(Visitor{*this, t}, *v_);
}

std::vector<Piece> IntegratorSpec::pieces(double lo, double hi) const {
    lo = std::max(lo, a_);
    hi = std::min(hi, b_);
    std::vector<Piece> out;
    if (!(hi > lo)) return out;
    struct Visitor {
        const IntegratorSpec& self;
        double lo, hi;
        std::vector<Piece>& out;
        void operator()(const Step& s) const {
            for (size_t i = 0; i < s.points.size(); ++i)
                if (s.points[i] > lo && s.points[i] <= hi)
                    out.push_back({Piece::Kind::atom, s.points[i], s.points[i], s.jumps[i], nullptr});
        }
        void operator()(const PiecewiseLinear& s) const {
            for (size_t i = 1; i < s.points.size(); ++i) {
                const double p0 = s.points[i - 1], p1 = s.points[i];
                if (p1 == p0) {
                    if (p0 > lo && p0 <= hi)
                        out.push_back({Piece::Kind::atom, p0, p0, CMat(s.values[i] - s.values[i - 1]), nullptr});
                    continue;
                }
                const double x0 = std::max(p0, lo), x1 = std::min(p1, hi);
                if (x1 <= x0) continue;
                out.push_back(
                    {Piece::Kind::linear, x0, x1, CMat((s.values[i] - s.values[i - 1]) / (p1 - p0)), nullptr});
            }
        }
        void operator()(const Density& s) const {
            double x = lo;
            for (double h : in_range(s.hints, lo, hi)) {
                out.push_back({Piece::Kind::density, x, h, CMat(), &s.M});
                x = h;
            }
            out.push_back({Piece::Kind::density, x, hi, CMat(), &s.M});
        }
        void operator()(const Cantor& s) const {
            const double L = s.b - s.a;
            const CMat slope = std::pow(1.5, s.depth) / L * s.scale;
            for (auto [c0, c1] : *self.cantor_cells_) {
                const double x0 = std::max(s.a + L * c0, lo), x1 = std::min(s.a + L * c1, hi);
                if (x1 > x0) out.push_back({Piece::Kind::linear, x0, x1, slope, nullptr});
            }
        }
    };
    std::visit(Visitor{*this, lo, hi, out}, *v_);
    return out;
}

// ---------------------------------------------------------- product integral

CMat riemann_product(const KernelSpec& f, const IntegratorSpec& E, const TaggedPartition& tau) {
    tau.validate();
    const double scale = std::max({1.0, std::abs(E.a()), std::abs(E.b())});
    if (std::abs(tau.points.front() - E.a()) > 1e-14 * scale || std::abs(tau.points.back() - E.b()) > 1e-14 * scale)
        throw SpecError("riemann_product: partition does not span the integrator domain");
    const int n = E.dim();
    CMat P = identity(n);
    CMat prev = E.value(tau.points.front());
    for (int i = 0; i < tau.cells(); ++i) {
        CMat next = E.value(tau.points[i + 1]);
        P = P * mat_exp(CMat(f(tau.tags[i]) * (next - prev)));
        prev.swap(next);
    }
    return P;
}

ProdIntResult prod_integral(const KernelSpec& f, const IntegratorSpec& E, double tol, const ProdIntOptions& opt) {
    return prod_integral(f, E, E.a(), E.b(), tol, opt);
}

ProdIntResult prod_integral(const KernelSpec& f, const IntegratorSpec& E, double lo, double hi, double tol,
                            const ProdIntOptions& opt) {
    if (!(tol > 0)) throw SpecError("prod_integral: tolerance must be positive");
    if (!(lo <= hi)) throw SpecError("prod_integral: empty interval");
    const double span = std::max({1.0, std::abs(E.a()), std::abs(E.b())});
    if (lo < E.a() - 1e-14 * span || hi > E.b() + 1e-14 * span)
        throw SpecError("prod_integral: interval outside integrator domain");
    const int n = E.dim();
    ProdIntResult res;
    res.value = identity(n);
    if (lo == hi) {
        res.norm_bound = 1;
        return res;
    }
    const auto segs = split_at_kernel(E.pieces(lo, hi), f);

    std::vector<CMat> atom_factor(segs.size());
    std::vector<double> seg_len;
    long continuous = 0;
    double cont_len = 0;
    for (size_t i = 0; i < segs.size(); ++i) {
        if (segs[i].kind == Piece::Kind::atom) {
            atom_factor[i] = mat_exp(CMat(f(segs[i].s0) * segs[i].D));
        } else {
            ++continuous;
            cont_len += segs[i].s1 - segs[i].s0;
        }
    }

    auto level_product = [&](int L) {
        const long m = 1L << L;
        CMat P = identity(n);
        for (size_t i = 0; i < segs.size(); ++i) {
            const auto& s = segs[i];
            if (s.kind == Piece::Kind::atom) {
                P = P * atom_factor[i];
                continue;
            }
            const double h = (s.s1 - s.s0) / static_cast<double>(m);
            for (long c = 0; c < m; ++c) {
                const double c0 = s.s0 + c * h;
                const double c1 = (c + 1 == m) ? s.s1 : s.s0 + (c + 1) * h;
                const double xi = 0.5 * (c0 + c1);
                CMat dE = s.kind == Piece::Kind::linear
                              ? CMat((c1 - c0) * s.D)
                              : density_increment(*s.M, c0, c1, 0.1 * tol * (c1 - c0) / cont_len);
                P = P * mat_exp(CMat(f(xi) * dE));
            }
        }
        return P;
    };

    if (continuous == 0) {
        res.value = level_product(0);
    } else {
        // Midpoint products are symmetric in the mesh width, so one Richardson
        // step on consecutive dyadic levels removes the h^2 term.
        CMat P_prev = level_product(0);
        CMat R_prev = P_prev;
        bool done = false;
        for (int L = 1; L <= opt.max_levels; ++L) {
            if (continuous * (1L << L) > opt.max_cells)
                throw NumericalError("prod_integral: cell budget exhausted before certificate met");
            CMat P = level_product(L);
            CMat R = (4.0 * P - P_prev) / 3.0;
            if (L >= 2) {
                res.error_certificate = 2 * spectral_norm(CMat(R - R_prev));
                res.levels = L;
                res.partitions_used = continuous * (1L << L);
                if (res.error_certificate <= tol && L >= opt.min_levels) {
                    res.value = R;
                    done = true;
                    break;
                }
            }
            P_prev = std::move(P);
            R_prev = std::move(R);
        }
        if (!done) throw NumericalError("prod_integral: no convergence within refinement levels");
    }
    if (!all_finite(res.value)) throw NumericalError("prod_integral: non-finite result");

    if (opt.check_invariants) {
        const Complex target = std::exp(stieltjes_trace(f, E, lo, hi));
        res.det_residual = std::abs(res.value.determinant() - target) / std::abs(target);
        res.norm_bound = std::exp(stieltjes_variation(f, E, lo, hi));
    }
    return res;
}

CMat ode_integral(const std::function<CMat(double)>& A, double a, double b, int steps) {
    if (steps < 1) throw SpecError("ode_integral: steps must be >= 1");
    const CMat A0 = A(a);
    const int n = static_cast<int>(A0.rows());
    CMat F = identity(n);
    const double h = (b - a) / steps;
    constexpr double local_cap = 50;
    for (int k = 0; k < steps; ++k) {
        const double t = a + k * h;
        const CMat a0 = k == 0 ? A0 : A(t);
        const CMat am = A(t + 0.5 * h);
        const CMat a1 = A(t + h);
        if (std::abs(h) * std::max({a0.norm(), am.norm(), a1.norm()}) > local_cap)
            throw NumericalError("ode_integral: step overflow, local norm exceeds cap");
        const CMat k1 = F * a0;
        const CMat k2 = (F + 0.5 * h * k1) * am;
        const CMat k3 = (F + 0.5 * h * k2) * am;
        const CMat k4 = (F + h * k3) * a1;
        F += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    if (!all_finite(F)) throw NumericalError("ode_integral: non-finite result");
    return F;
}

// ------------------------------------------------------ additive Stieltjes

namespace {

template <typename OnAtom, typename OnLinear, typename OnDensity>
void for_each_segment(const KernelSpec& f, const IntegratorSpec& E, double lo, double hi, OnAtom atom,
                      OnLinear lin, OnDensity dens) {
    for (const auto& s : split_at_kernel(E.pieces(lo, hi), f)) {
        switch (s.kind) {
            case Piece::Kind::atom: atom(s); break;
            case Piece::Kind::linear: lin(s); break;
            case Piece::Kind::density: dens(s); break;
        }
    }
}

}  // namespace

CMat stieltjes_integral(const KernelSpec& f, const IntegratorSpec& E, double lo, double hi, double tol) {
    CMat acc = CMat::Zero(E.dim(), E.dim());
    const double len = std::max(hi - lo, 1e-300);
    for_each_segment(
        f, E, lo, hi, [&](const Piece& s) { acc += f(s.s0) * s.D; },
        [&](const Piece& s) {
            acc += adaptive_simpson([&](double t) { return f(t); }, s.s0, s.s1, tol * (s.s1 - s.s0) / len) * s.D;
        },
        [&](const Piece& s) {
            acc += adaptive_simpson([&](double t) { return CMat(f(t) * (*s.M)(t)); }, s.s0, s.s1,
                                    tol * (s.s1 - s.s0) / len);
        });
    return acc;
}

Complex stieltjes_trace(const KernelSpec& f, const IntegratorSpec& E, double lo, double hi, double tol) {
    Complex acc = 0;
    const double len = std::max(hi - lo, 1e-300);
    for_each_segment(
        f, E, lo, hi, [&](const Piece& s) { acc += f(s.s0) * s.D.trace(); },
        [&](const Piece& s) {
            acc += adaptive_simpson([&](double t) { return f(t); }, s.s0, s.s1, tol * (s.s1 - s.s0) / len) *
                   s.D.trace();
        },
        [&](const Piece& s) {
            acc += adaptive_simpson([&](double t) { return f(t) * (*s.M)(t).trace(); }, s.s0, s.s1,
                                    tol * (s.s1 - s.s0) / len);
        });
    return acc;
}

double stieltjes_variation(const KernelSpec& f, const IntegratorSpec& E, double lo, double hi, double tol) {
    double acc = 0;
    const double len = std::max(hi - lo, 1e-300);
    for_each_segment(
        f, E, lo, hi, [&](const Piece& s) { acc += std::abs(f(s.s0)) * spectral_norm(s.D); },
        [&](const Piece& s) {
            acc += adaptive_simpson([&](double t) { return std::abs(f(t)); }, s.s0, s.s1,
                                    tol * (s.s1 - s.s0) / len) *
                   spectral_norm(s.D);
        },
        [&](const Piece& s) {
            acc += adaptive_simpson([&](double t) { return std::abs(f(t)) * spectral_norm((*s.M)(t)); }, s.s0,
                                    s.s1, tol * (s.s1 - s.s0) / len);
        });
    return acc;
}

double variation(const IntegratorSpec& E, double t) {
    const double span = std::max({1.0, std::abs(E.a()), std::abs(E.b())});
    if (t < E.a() - 1e-14 * span || t > E.b() + 1e-14 * span) throw SpecError("variation: t outside domain");
    return stieltjes_variation(KernelSpec::constant(1.0), E, E.a(), t);
}

std::pair<ProdIntResult, ProdIntResult> split_product(const KernelSpec& f, const IntegratorSpec& E, double tol,
                                                      double c) {
    if (!(c >= E.a() && c <= E.b())) throw SpecError("split_product: split point outside domain");
    return {prod_integral(f, E, E.a(), c, tol), prod_integral(f, E, c, E.b(), tol)};
}

CMat gram_product(const KernelSpec& f, const IntegratorSpec& E, double tol) {
    return prod_integral(f.twice_real_part(), E, tol).value;
}

TaylorCertificate taylor_certificate(const KernelSpec& f, const IntegratorSpec& E, double lo, double hi) {
    TaylorCertificate c;
    c.linear_part = identity(E.dim()) + stieltjes_integral(f, E, lo, hi);
    c.s = stieltjes_variation(f, E, lo, hi);
    c.remainder_bound = std::expm1(c.s) - c.s;
    return c;
}

// ------------------------------------------------------ change of variables

IncreasingMap IncreasingMap::linear(double a, double b, double alpha, double beta) {
    return IncreasingMap{{a, b}, {alpha, beta}, {alpha, beta}};
}

void IncreasingMap::validate() const {
    if (t.size() < 2 || left.size() != t.size() || right.size() != t.size())
        throw SpecError("IncreasingMap: malformed node data");
    for (size_t i = 0; i < t.size(); ++i) {
        if (left[i] > right[i]) throw SpecError("IncreasingMap: phi not strictly increasing");
        if (i > 0 && !(t[i] > t[i - 1] && left[i] > right[i - 1]))
            throw SpecError("IncreasingMap: phi not strictly increasing");
    }
    if (left.front() != right.front() || left.back() != right.back())
        throw SpecError("IncreasingMap: jumps at the endpoints are not supported");
}

double IncreasingMap::operator()(double x) const {
    if (x <= t.front()) return right.front();
    if (x >= t.back()) return left.back();
    auto it = std::upper_bound(t.begin(), t.end(), x);
    const size_t i = static_cast<size_t>(it - t.begin());
    const double w = (x - t[i - 1]) / (t[i] - t[i - 1]);
    return right[i - 1] + w * (left[i] - right[i - 1]);
}

double IncreasingMap::inverse(double s) const {
    if (s <= right.front()) return t.front();
    for (size_t i = 1; i < t.size(); ++i) {
        if (s <= left[i]) return t[i - 1] + (s - right[i - 1]) / (left[i] - right[i - 1]) * (t[i] - t[i - 1]);
        if (s <= right[i]) return t[i];
    }
    return t.back();
}

IntegratorSpec pushforward(const IntegratorSpec& E, const IncreasingMap& phi) {
    phi.validate();
    if (std::abs(phi.t.front() - E.a()) > 1e-14 || std::abs(phi.t.back() - E.b()) > 1e-14)
        throw SpecError("pushforward: phi domain differs from integrator domain");
    std::vector<double> nodes(phi.left.begin(), phi.left.end());
    nodes.insert(nodes.end(), phi.right.begin(), phi.right.end());
    auto add_images = [&](const std::vector<double>& pts) {
        for (double p : pts) nodes.push_back(phi(p));
    };
    const auto& v = E.variant();
    if (std::holds_alternative<IntegratorSpec::Step>(v))
        throw SpecError("pushforward: integrator must be continuous");
    if (const auto* d = std::get_if<IntegratorSpec::Density>(&v)) {
        add_images(d->hints);
        std::sort(nodes.begin(), nodes.end());
        nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
        IncreasingMap map = phi;
        auto M = d->M;
        const int n = E.dim();
        auto MF = [map, M, n](double s) -> CMat {
            for (size_t i = 1; i < map.t.size(); ++i) {
                if (s <= map.left[i]) {
                    if (s < map.right[i - 1]) return CMat::Zero(n, n);
                    const double slope = (map.t[i] - map.t[i - 1]) / (map.left[i] - map.right[i - 1]);
                    return M(map.inverse(s)) * slope;
                }
                if (s <= map.right[i]) return CMat::Zero(n, n);
            }
            return CMat::Zero(n, n);
        };
        return IntegratorSpec::density(phi.alpha(), phi.beta(), n, MF, nodes);
    }
    // Piecewise-linear and Cantor integrators are linear between their nodes.
    std::vector<double> enodes;
    if (const auto* p = std::get_if<IntegratorSpec::PiecewiseLinear>(&v)) {
        enodes = p->points;
    } else if (const auto* c = std::get_if<IntegratorSpec::Cantor>(&v)) {
        for (const auto& pc : E.pieces(E.a(), E.b())) {
            enodes.push_back(pc.s0);
            enodes.push_back(pc.s1);
        }
        (void)c;
    }
    add_images(enodes);
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    std::vector<CMat> vals;
    vals.reserve(nodes.size());
    for (double s : nodes) vals.push_back(E.value(phi.inverse(s)));
    return IntegratorSpec::piecewise_linear(nodes, vals, E.increasing());
}

ProdIntResult change_of_variables(const KernelSpec& f, const IntegratorSpec& E, const IncreasingMap& phi,
                                  double tol) {
    return prod_integral(f, pushforward(E, phi), tol);
}

// ------------------------------------------------------------------- Helly

bool sampled_increasing(const IntegratorSpec& E, int samples, double tol) {
    CMat prev = E.value(E.a());
    for (int i = 1; i <= samples; ++i) {
        const double t = E.a() + (E.b() - E.a()) * i / samples;
        CMat next = E.value(t);
        if (min_eigenvalue(CMat(next - prev)) < -tol) return false;
        prev.swap(next);
    }
    return true;
}

HellyReport helly_convergence_harness(const std::vector<std::pair<KernelSpec, IntegratorSpec>>& seq,
                                      const std::pair<KernelSpec, IntegratorSpec>& limit,
                                      const std::vector<double>& grid, double tol) {
    HellyReport rep;
    const auto& [f, E] = limit;
    std::vector<ProdIntResult> ref;
    for (double t : grid) ref.push_back(prod_integral(f, E, E.a(), t, tol));
    for (size_t k = 0; k < seq.size(); ++k) {
        const auto& [fk, Ek] = seq[k];
        if (!sampled_increasing(Ek, 64, 1e-12))
            rep.violations.push_back("integrator " + std::to_string(k) + " not increasing");
        if (Ek.dim() != E.dim()) {
            rep.violations.push_back("integrator " + std::to_string(k) + " dimension mismatch");
            rep.gaps.push_back(std::nan(""));
            rep.certificates.push_back(0);
            continue;
        }
        double gap = 0, cert = 0;
        for (size_t g = 0; g < grid.size(); ++g) {
            try {
                const auto r = prod_integral(fk, Ek, Ek.a(), grid[g], tol);
                gap = std::max(gap, spectral_norm(CMat(r.value - ref[g].value)));
                cert = std::max(cert, r.error_certificate + ref[g].error_certificate);
                if (!std::isfinite(std::abs(fk(grid[g]))))
                    rep.violations.push_back("kernel " + std::to_string(k) + " unbounded at sample");
            } catch (const std::exception& e) {
                rep.violations.push_back("term " + std::to_string(k) + ": " + e.what());
                gap = std::nan("");
            }
        }
        rep.gaps.push_back(gap);
        rep.certificates.push_back(cert);
    }
    if (!rep.gaps.empty()) rep.final_gap = rep.gaps.back();
    int ok = 0;
    for (size_t k = 1; k < rep.gaps.size(); ++k)
        if (rep.gaps[k] <= rep.gaps[k - 1] + rep.certificates[k] + rep.certificates[k - 1]) ++ok;
    rep.monotone_fraction = rep.gaps.size() > 1 ? double(ok) / double(rep.gaps.size() - 1) : 1.0;
    return rep;
}

CMat ordered_product(const std::vector<CMat>& factors, int n) {
    CMat P = identity(n);
    for (const auto& f : factors) P = P * f;
    return P;
}

CMat telescoping_sum(const std::vector<CMat>& P, const std::vector<CMat>& Q) {
    if (P.size() != Q.size() || P.empty()) throw SpecError("telescoping_sum: lists must be nonempty and equal length");
    const int n = static_cast<int>(P.front().rows());
    const size_t m = P.size();
    std::vector<CMat> suffix(m + 1, identity(n));
    for (size_t l = m; l-- > 0;) suffix[l] = Q[l] * suffix[l + 1];
    CMat prefix = identity(n);
    CMat acc = CMat::Zero(n, n);
    for (size_t l = 0; l < m; ++l) {
        acc += prefix * (P[l] - Q[l]) * suffix[l + 1];
        prefix = prefix * P[l];
    }
    return acc;
}

}  // namespace mvf
