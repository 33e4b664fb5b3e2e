#include <doctest.h>

#include <numbers>

#include "mvf/potapov.hpp"
#include "mvf/random.hpp"
#include "oracles.hpp"

using namespace mvf;

namespace {

constexpr double two_pi = 2 * std::numbers::pi;

double dist(const CMat& a, const CMat& b) { return spectral_norm(CMat(a - b)); }

double sup_half_disk(const MatrixFunction& A, const RationalApproximant& ak) {
    double e = 0;
    for (int j = 0; j <= 6; ++j)
        for (int l = 0; l < 24; ++l) {
            const Complex z = std::polar(0.5 * j / 6, two_pi * l / 24 + 0.01);
            e = std::max(e, dist(A(z), ak(z)));
        }
    return e;
}

}  // namespace

TEST_CASE("Herglotz extraction") {
    rnd::Rng g(51);
    const CMat M = rnd::positive(g, 2);
    const auto uni = herglotz_extract([&](Complex) { return CMat(I_unit * M); }, 0.9, 1 << 10);
    for (std::size_t i = 0; i < uni.angles.size(); i += 97)
        CHECK(dist(uni.sigma[i], CMat(uni.angles[i] / two_pi * M)) <= 1e-12);

    const CMat H = rnd::gaussian(g, 2, 2);
    const CMat T0 = H + H.adjoint();
    const auto zero = herglotz_extract([&](Complex) { return T0; }, 0.9, 256);
    CHECK(spectral_norm(zero.sigma.back()) <= 1e-14);

    // Point mass C at angle 0: the share of mass within 0.1 rad of the atom
    // follows the scalar Poisson integral over that arc.
    const auto pm = [&](Complex z) { return CMat(I_unit * (1.0 + z) / (1.0 - z) * M); };
    double prev = 0;
    for (double r : {0.9, 0.99, 0.999}) {
        const auto s = herglotz_extract(pm, r, 1 << 16);
        auto at = [&](double phi) {
            const auto k = static_cast<std::size_t>(std::llround(phi / two_pi * (1 << 16)));
            return s.sigma[k].trace().real();
        };
        const double total = s.sigma.back().trace().real();
        const double near = at(0.1) + (total - at(two_pi - 0.1));
        const double poisson = 2 / std::numbers::pi * std::atan((1 + r) / (1 - r) * std::tan(0.05));
        CHECK(std::abs(total - M.trace().real()) <= 1e-6);
        CHECK(near / total == doctest::Approx(poisson).epsilon(1e-3));
        CHECK(near / total > prev);
        prev = near / total;
    }
    CHECK(prev >= 0.95);
    CHECK_THROWS_AS(herglotz_extract(pm, 0.9, 100), SpecError);
    CHECK_THROWS_AS(herglotz_extract([&](Complex) { return CMat(-I_unit * M); }, 0.9, 64), NumericalError);
}

TEST_CASE("Cayley transform") {
    CHECK(dist(cayley_forward(CMat::Zero(2, 2), 1.0), CMat(I_unit * identity(2))) <= 1e-15);
    rnd::Rng g(52);
    for (int i = 0; i < 10; ++i) {
        const CMat A = 0.8 * rnd::unitary(g, 3);
        const Complex w = choose_rotation(A);
        const CMat T = cayley_forward(A, w);
        CHECK(min_eigenvalue(imag_part(T)) >= -1e-12);
        CHECK(dist(cayley_inverse(T, w), A) <= 1e-10);
    }
    CMat hit = CMat::Zero(2, 2);
    hit(0, 0) = 1;
    hit(1, 1) = -0.5;
    const Complex w = choose_rotation(hit);
    CHECK(std::abs(w - 1.0) > 0.5);
    CHECK(std::abs(std::pow(w, 3) - 1.0) <= 1e-14);
    CHECK_THROWS_AS(cayley_forward(hit, 1.0), NumericalError);
}

TEST_CASE("rational approximants of a constant contraction") {
    rnd::Rng g(53);
    const auto A = MatrixFunction::constant(rnd::contraction(g, 2, 0.7));
    const auto chain = approximant_chain(A, 5);
    REQUIRE(chain.size() == 5);
    double prev = 1e300;
    for (const auto& ak : chain) {
        CHECK(ak.certificate <= 1.0 / ak.k);
        CHECK(ak.r_k == doctest::Approx(1 - std::pow(2.0, -ak.k - 1)));
        const double e = sup_half_disk(A, ak);
        CHECK(e <= prev + 1e-13);
        prev = e;
        for (int l = 0; l < 16; ++l) CHECK(unitarity_residual(ak(std::polar(1.0, two_pi * l / 16 + 0.3))) <= 1e-10);
    }
    CHECK(prev <= 1e-6);
}

TEST_CASE("rational approximants of a scalar Blaschke factor") {
    const Complex z0(0.3, 0.4);
    const auto A = MatrixFunction{2, [=](Complex z) { return CMat(beta(z0, z) * identity(2)); }, true};
    const auto chain = approximant_chain(A, 5);
    std::vector<double> err;
    for (const auto& ak : chain) err.push_back(sup_half_disk(A, ak));
    for (std::size_t k = 1; k < err.size(); ++k) CHECK(err[k] <= err[k - 1] + 1e-13);
    CHECK(err.back() <= err.front() / 4);
}

TEST_CASE("Potapov step data") {
    rnd::Rng g(54);
    const auto b1 = BPFactor::from_subspace(0.9, rnd::gaussian(g, 2, 1));
    const auto b2 = BPFactor::from_subspace(std::polar(0.9, 2.0), rnd::gaussian(g, 2, 1));
    const auto R = bp_to_repr(BPProduct{{b1, b2}, identity(2)});
    CHECK(R.L == doctest::Approx(0.2).epsilon(1e-14));
    REQUIRE(R.breakpoints.size() == 3);
    CHECK(R.breakpoints[0] == 0);
    CHECK(R.breakpoints[1] == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(R.breakpoints[2] == doctest::Approx(0.2).epsilon(1e-14));
    for (double t : R.breakpoints) CHECK(std::abs(R.E(t).trace().real() - t) <= 1e-12);
    R.validate();

    const Complex z0 = std::polar(0.6, 1.1);
    const auto b3 = BPFactor::from_subspace(z0, rnd::gaussian(g, 3, 2));
    const auto R3 = bp_to_repr(BPProduct{{b3}, identity(3)});
    REQUIRE(R3.jumps.size() == 1);
    CHECK(R3.jumps[0].trace().real() == doctest::Approx(2 * 0.4).epsilon(1e-14));
    CHECK(R3.L == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(R3.angles[0] == doctest::Approx(1.1).epsilon(1e-14));

    const auto R0 = bp_to_repr(BPProduct::identity(2));
    CHECK(R0.L == 0);
    CHECK(dist(repr_eval(R0, 0.4, 1e-12), identity(2)) == 0);
}

TEST_CASE("Potapov representation evaluation") {
    rnd::Rng g(55);
    const auto B = rnd::sorted_by_angle(rnd::bp_product(g, 3, 3, 0.5, 0.9));
    const auto R = bp_to_repr(B);
    CHECK(std::abs(repr_eval(R, 0.0, 1e-12).determinant() - std::exp(-R.L) * R.tail.determinant()) <= 1e-10);

    const auto b = BPFactor::from_subspace(std::polar(0.7, 0.4), rnd::gaussian(g, 2, 1));
    const auto R1 = bp_to_repr(BPProduct{{b}, identity(2)});
    for (Complex z : {Complex(0.2, 0.1), Complex(-0.5, 0.3)}) {
        const CMat want = oracle::taylor_exp(CMat(herglotz_kernel(z, R1.angles[0]) * R1.jumps[0]));
        CHECK(dist(repr_eval_exact(R1, z), want) <= 1e-12);
        const auto ev = repr_eval_checked(R1, z, 1e-12);
        CHECK(dist(ev.value, want) <= 1e-11);
    }
}

TEST_CASE("modified product error bound") {
    rnd::Rng g(56);
    const auto empty = BPProduct::identity(2);
    CHECK(modified_product_error(empty, bp_to_repr(empty), 0.5).measured == 0);

    const auto one = BPProduct{{BPFactor::from_subspace(0.5, rnd::gaussian(g, 2, 1))}, identity(2)};
    const auto m = modified_product_error(one, bp_to_repr(one), 0.4);
    CHECK(m.measured <= m.bound);
    const double C = 0.5, r = m.radius, q = C * (1 + r) / (1 - r);
    CHECK(m.bound == doctest::Approx(C * 2 / ((1 - r) * (1 - r)) * std::exp(q) * std::max(1.0, 2 * std::exp(q)) * 0.5));

    BPProduct near = BPProduct::identity(2);
    for (int i = 0; i < 3; ++i)
        near.factors.push_back(BPFactor::from_subspace(std::polar(0.999, 2.0 * i), rnd::gaussian(g, 2, 1)));
    const auto mn = modified_product_error(near, bp_to_repr(near), 0.5);
    CHECK(mn.measured <= 1e-2);
    CHECK(mn.measured <= mn.bound);
}

TEST_CASE("invalid representations are rejected") {
    const auto b0 = BPFactor::from_subspace(0.0, identity(2));
    CHECK_THROWS_AS(bp_to_repr(BPProduct{{b0}, identity(2)}), SpecError);
    const auto b1 = BPFactor::from_subspace(std::polar(0.5, 2.0), identity(2));
    const auto b2 = BPFactor::from_subspace(std::polar(0.5, 1.0), identity(2));
    CHECK_THROWS_AS(bp_to_repr(BPProduct{{b1, b2}, identity(2)}), SpecError);
}
