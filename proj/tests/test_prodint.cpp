#include <doctest.h>

#include <numbers>

#include "mvf/prodint.hpp"
#include "mvf/random.hpp"
#include "oracles.hpp"

using namespace mvf;

namespace {

CMat flip() {
    CMat a(2, 2);
    a << 0, 1, 1, 0;
    return a;
}

CMat diag(Complex a, Complex b) {
    CMat d = CMat::Zero(2, 2);
    d(0, 0) = a;
    d(1, 1) = b;
    return d;
}

double dist(const CMat& a, const CMat& b) { return spectral_norm(CMat(a - b)); }

CMat cosh_sinh() {
    CMat c(2, 2);
    c << std::cosh(1.0), std::sinh(1.0), std::sinh(1.0), std::cosh(1.0);
    return c;
}

}  // namespace

TEST_CASE("riemann product basics") {
    const auto E = IntegratorSpec::linear(0, 1, flip());
    const auto tau = TaggedPartition::uniform(0, 1, 7);
    CHECK(dist(riemann_product(KernelSpec::constant(0.0), E, tau), identity(2)) == 0);
    CHECK(dist(riemann_product(KernelSpec::constant(1.0), E, TaggedPartition::uniform(0, 1, 1)), cosh_sinh()) <= 1e-14);
}

TEST_CASE("non-commuting two-piece integrator") {
    const CMat A = flip(), B = diag(1, 2);
    const auto E = IntegratorSpec::piecewise_linear({-1, 0, 1}, {CMat(-A), CMat::Zero(2, 2), B});
    const auto f = KernelSpec::constant(1.0);
    TaggedPartition tau{{-1, 0, 1}, {-0.5, 0.5}};
    const CMat eAeB = oracle::taylor_exp(A) * oracle::taylor_exp(B);
    CHECK(dist(riemann_product(f, E, tau), eAeB) <= 1e-12);
    const auto r = prod_integral(f, E, 1e-12);
    CHECK(dist(r.value, eAeB) <= 1e-11);
    CHECK(dist(r.value, oracle::taylor_exp(CMat(A + B))) >= 0.1);
}

TEST_CASE("constant integrator gives cosh and sinh") {
    const auto r = prod_integral(KernelSpec::constant(1.0), IntegratorSpec::linear(0, 1, flip()), 1e-12);
    CHECK(dist(r.value, cosh_sinh()) <= 1e-10);
    CHECK(r.error_certificate <= 1e-12);
}

TEST_CASE("commuting diagonal family matches scalar quadrature") {
    const auto f = KernelSpec::tabulated({0, 0.3, 0.7, 1}, {Complex(0.2, 0.5), Complex(-0.4, 0.1), 0.9, Complex(0, -1)});
    const auto E = IntegratorSpec::density(0, 1, 2, [](double t) { return diag(1 + t * t, std::exp(-t)); });
    const auto r = prod_integral(f, E, 1e-11);
    const auto g1 = [&](double t) { return f(t) * (1 + t * t); };
    const auto g2 = [&](double t) { return f(t) * std::exp(-t); };
    Complex i1 = 0, i2 = 0;
    const double cuts[] = {0, 0.3, 0.7, 1};
    for (int k = 0; k < 3; ++k) {
        i1 += oracle::simpson(g1, cuts[k], cuts[k + 1]);
        i2 += oracle::simpson(g2, cuts[k], cuts[k + 1]);
    }
    CHECK(dist(r.value, diag(std::exp(i1), std::exp(i2))) <= 1e-9);
}

TEST_CASE("cantor integrator against cell-sum oracle") {
    const int depth = 12;
    const double c = 0.8;
    const auto f = KernelSpec::function([](double t) { return Complex(t * t, std::sin(t)); });
    const auto E = IntegratorSpec::cantor(0, 1, CMat(c * identity(2)), depth);
    const auto r = prod_integral(f, E, 1e-10);
    // Depth-level approximant: mass 2^-depth spread uniformly on each
    // surviving cell of length 3^-depth.
    Complex I = 0;
    const double len = std::pow(3.0, -depth);
    for (int m = 0; m < (1 << depth); ++m) {
        double left = 0;
        for (int b = 0; b < depth; ++b)
            if (m >> (depth - 1 - b) & 1) left += 2 * std::pow(3.0, -(b + 1));
        const double a = left, bb = left + len;
        // Simpson is exact for t^2; sin needs a few panels only at this width.
        I += oracle::simpson([&](double t) { return f(t); }, a, bb, 4) / len * std::pow(2.0, -depth);
    }
    CHECK(dist(r.value, CMat(std::exp(c * I) * identity(2))) <= 1e-8);
    CHECK(std::abs(I.real() - 0.375) <= 1e-6);  // second moment of the Cantor measure
}

TEST_CASE("Herglotz kernel at the origin with unit trace") {
    rnd::Rng g(4);
    const CMat P = rnd::positive(g, 3);
    const auto E = IntegratorSpec::linear(0, 1, P);
    const auto r = prod_integral(KernelSpec::herglotz(0.0), E, 1e-11);
    CHECK(std::abs(r.value.determinant() - std::exp(-1.0)) <= 1e-10);
    CHECK(std::abs(herglotz_kernel(0.0, 1.3) + 1.0) <= 1e-15);
}

TEST_CASE("ode integral") {
    rnd::Rng g(8);
    const CMat C = rnd::gaussian(g, 3, 3) * 0.5;
    CHECK(dist(ode_integral([&](double) { return C; }, 0, 1, 400), oracle::taylor_exp(C)) <= 1e-8);
    const CMat e = ode_integral([](double t) { return diag(1, 2 * t); }, 0, 1, 400);
    CHECK(dist(e, diag(std::exp(1.0), std::exp(1.0))) <= 1e-9);

    std::vector<CMat> seg;
    for (int i = 0; i < 4; ++i) seg.push_back(rnd::gaussian(g, 2, 2) * 0.4);
    const auto A = [&](double t) { return seg[std::min(3, static_cast<int>(t * 4))]; };
    CMat F = identity(2), want = identity(2);
    for (int i = 0; i < 4; ++i) {
        F = F * ode_integral(A, i / 4.0, (i + 1) / 4.0 - 1e-15, 200);
        want = want * oracle::taylor_exp(CMat(seg[i] / 4.0));
    }
    CHECK(dist(F, want) <= 1e-9);
}

TEST_CASE("variation") {
    const CMat A = flip() * 2.0;
    CHECK(variation(IntegratorSpec::linear(0, 1, A), 0.4) == doctest::Approx(0.8).epsilon(1e-14));
    const CMat J1 = diag(1, 2), J2 = flip();
    const auto E = IntegratorSpec::step(0, 1, {0.2, 0.6}, {J1, J2});
    CHECK(variation(E, 0.7) == doctest::Approx(3).epsilon(1e-14));
    rnd::Rng g(31);
    for (int i = 0; i < 20; ++i) {
        const auto Ei = rnd::piecewise_integrator(g, 3);
        // ||dE|| <= tr dE for increasing E.
        for (double t : {0.1, 0.35, 0.5, 0.9, 1.0})
            CHECK(variation(Ei, t) <= (Ei.value(t) - Ei.value(0)).trace().real() + 1e-12);
    }
}

TEST_CASE("splitting") {
    rnd::Rng g(21);
    const auto f = rnd::tabulated_kernel(g);
    const auto E = rnd::piecewise_integrator(g, 3);
    const auto [l0, r0] = split_product(f, E, 1e-11, 0.0);
    CHECK(dist(l0.value, identity(3)) == 0);
    CHECK(dist(r0.value, prod_integral(f, E, 1e-11).value) <= 1e-10);

    const auto [l, r] = split_product(f, E, 1e-11, 0.5);
    CHECK(dist(CMat(l.value * r.value), prod_integral(f, E, 1e-11).value) <= 1e-8);

    const auto D = IntegratorSpec::density(0, 1, 2, [](double t) { return diag(t, 1 - t); });
    const auto [dl, dr] = split_product(KernelSpec::constant(Complex(0.3, 1)), D, 1e-12, 0.3);
    const Complex c(0.3, 1);
    CHECK(dist(CMat(dl.value * dr.value), diag(std::exp(c * 0.5), std::exp(c * 0.5))) <= 1e-10);
}

TEST_CASE("gram product") {
    rnd::Rng g(22);
    const auto E = rnd::piecewise_integrator(g, 3);
    CHECK(dist(gram_product(KernelSpec::constant(Complex(0, 2.5)), E, 1e-12), identity(3)) <= 1e-12);
    const auto P = prod_integral(KernelSpec::constant(Complex(0, 2.5)), E, 1e-12).value;
    CHECK(unitarity_residual(P) <= 1e-10);
    CHECK(dist(gram_product(KernelSpec::constant(1.0), IntegratorSpec::linear(0, 1, identity(2)), 1e-12),
               CMat(std::exp(2.0) * identity(2))) <= 1e-11);

    // Herglotz kernel at z = 0.5 with theta(t) = t on an arc and an integrator
    // whose increments share one eigenbasis, so A A* has a closed product form.
    const CMat U = rnd::unitary(g, 2);
    const auto Ec = IntegratorSpec::density(0, 2, 2, [U](double t) {
        return CMat(U * diag(0.5 + 0.25 * t, 0.5 - 0.2 * t) * U.adjoint() * 0.5);
    });
    const auto f = KernelSpec::herglotz(0.5);
    const CMat A = prod_integral(f, Ec, 1e-11).value;
    CHECK(dist(CMat(A * A.adjoint()), gram_product(f, Ec, 1e-11)) <= 1e-8);
}

TEST_CASE("taylor certificate") {
    const auto zero = taylor_certificate(KernelSpec::constant(0.0), IntegratorSpec::linear(0, 1, flip()), 0, 1);
    CHECK(zero.remainder_bound == 0);
    CHECK(dist(zero.linear_part, identity(2)) == 0);
    const auto one = taylor_certificate(KernelSpec::constant(1.0), IntegratorSpec::linear(0, 1, flip()), 0, 1);
    CHECK(one.s == doctest::Approx(1).epsilon(1e-14));
    CHECK(one.remainder_bound == doctest::Approx(std::numbers::e - 2).epsilon(1e-14));

    rnd::Rng g(23);
    for (int i = 0; i < 20; ++i) {
        const auto f = rnd::tabulated_kernel(g, 0.1);
        const auto E = rnd::piecewise_integrator(g, 2);
        const auto t = taylor_certificate(f, E, 0, 1);
        REQUIRE(t.s <= 0.1 + 1e-12);
        CHECK(dist(prod_integral(f, E, 1e-12).value, t.linear_part) <= t.remainder_bound + 1e-12);
    }
}

TEST_CASE("change of variables") {
    rnd::Rng g(24);
    const CMat A = rnd::positive(g, 2);
    const auto E = IntegratorSpec::linear(0, 1, A);
    const auto f = KernelSpec::function([](double s) { return Complex(std::cos(s), s); });
    const auto direct = prod_integral(f, E, 1e-12).value;
    CHECK(dist(change_of_variables(f, E, IncreasingMap::linear(0, 1, 0, 1), 1e-12).value, direct) <= 1e-10);

    const auto viaphi = change_of_variables(f, E, IncreasingMap::linear(0, 1, 0, 2), 1e-12).value;
    const auto g2 = KernelSpec::function([&](double t) { return f(2 * t); });
    CHECK(dist(viaphi, prod_integral(g2, E, 1e-12).value) <= 1e-9);

    IncreasingMap jump{{0, 0.5, 1}, {0, 0.5, 1.5}, {0, 1.0, 1.5}};
    CHECK(jump.inverse(0.75) == doctest::Approx(0.5));
    const auto gj = KernelSpec::function([&](double t) { return f(jump(t)); }, {0.5});
    CHECK(dist(change_of_variables(f, E, jump, 1e-12).value, prod_integral(gj, E, 1e-12).value) <= 1e-8);
}

TEST_CASE("Helly convergence harness") {
    rnd::Rng g(25);
    const CMat P = rnd::positive(g, 2);
    const auto f = KernelSpec::constant(Complex(0.5, 1));
    const auto E = IntegratorSpec::linear(0, 1, P);
    const std::vector<double> grid{0.25, 0.5, 0.75, 1};

    std::vector<std::pair<KernelSpec, IntegratorSpec>> same(4, {f, E});
    const auto rs = helly_convergence_harness(same, {f, E}, grid, 1e-11);
    for (std::size_t k = 0; k < rs.gaps.size(); ++k) CHECK(rs.gaps[k] <= rs.certificates[k] + 1e-14);

    std::vector<std::pair<KernelSpec, IntegratorSpec>> seq;
    for (int k = 1; k <= 6; ++k) {
        const double K = std::pow(2.0, k);
        seq.push_back({f, IntegratorSpec::density(0, 1, 2, [P, K](double t) {
                           return CMat(P * ((1 + 2 * t / K) / (1 + 1 / K)));
                       })});
    }
    const auto rq = helly_convergence_harness(seq, {f, E}, grid, 1e-11);
    for (std::size_t k = 1; k < rq.gaps.size(); ++k) CHECK(rq.gaps[k] < rq.gaps[k - 1]);
    CHECK(rq.final_gap <= 0.05);

    std::vector<std::pair<KernelSpec, IntegratorSpec>> shifted;
    for (int k = 1; k <= 5; ++k) shifted.push_back({KernelSpec::constant(Complex(0.5 + 1.0 / (10 * k), 1)), E});
    const auto rf = helly_convergence_harness(shifted, {f, E}, grid, 1e-11);
    for (std::size_t k = 0; k < rf.gaps.size(); ++k) {
        const double k1 = static_cast<double>(k + 1);
        CHECK(rf.gaps[k] * k1 >= rf.gaps[0] * 0.5);
        CHECK(rf.gaps[k] * k1 <= rf.gaps[0] * 1.5);
    }
}

TEST_CASE("telescoping identity") {
    rnd::Rng g(26);
    std::vector<CMat> P, Q;
    for (int i = 0; i < 5; ++i) {
        P.push_back(rnd::gaussian(g, 3, 3));
        Q.push_back(rnd::gaussian(g, 3, 3));
    }
    CHECK(dist(telescoping_sum(P, Q), CMat(ordered_product(P, 3) - ordered_product(Q, 3))) <=
          1e-11 * spectral_norm(ordered_product(P, 3)));
}

TEST_CASE("invalid specs are rejected") {
    CHECK_THROWS_AS(IntegratorSpec::piecewise_linear({0, 1}, {identity(2)}), SpecError);
    CHECK_THROWS_AS((StepFunction{{0.5, 0.2}, {0, 1, 2}}.validate()), SpecError);
    CHECK_THROWS_AS(prod_integral(KernelSpec::constant(1.0), IntegratorSpec::linear(0, 1, flip()), -1.0), SpecError);
}
