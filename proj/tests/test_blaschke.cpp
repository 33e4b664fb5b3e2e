#include <doctest.h>

#include <numbers>

#include "mvf/blaschke.hpp"
#include "mvf/random.hpp"

using namespace mvf;

namespace {

double dist(const CMat& a, const CMat& b) { return spectral_norm(CMat(a - b)); }

std::vector<Complex> test_points() {
    std::vector<Complex> z;
    for (int i = 1; i <= 5; ++i)
        for (int j = 0; j < 12; ++j) z.push_back(std::polar(0.18 * i, 2 * std::numbers::pi * (j + 0.3) / 12));
    return z;
}

// Number of det zeros of A inside |z - c| < r by the argument principle.
int zeros_near(const MatrixFunction& A, Complex c, double r) { return winding_count(A, c, r); }

}  // namespace

TEST_CASE("elementary Blaschke factor") {
    const Complex z0(0.3, -0.4);
    CHECK(std::abs(beta(z0, z0)) == 0);
    for (Complex z : test_points()) CHECK(std::abs(beta(0.0, z) - z) <= 1e-15);
    CHECK(std::abs(std::abs(beta(0.5, std::polar(1.0, std::numbers::pi / 3))) - 1) <= 1e-15);
}

TEST_CASE("B.P. factor evaluation") {
    rnd::Rng g(41);
    const Complex z0(0.2, 0.5);
    const auto b = BPFactor::from_subspace(z0, rnd::gaussian(g, 3, 2));
    b.validate();
    const CMat P = b.projection();
    CHECK(dist(P * P, P) <= 1e-14);
    CHECK(std::abs(P.trace() - 2.0) <= 1e-14);
    CHECK(dist(eval_factor(b, z0), CMat(identity(3) - P)) <= 1e-14);

    const auto full = BPFactor::from_subspace(z0, identity(3));
    const Complex z(0.1, -0.7);
    CHECK(dist(eval_factor(full, z), CMat(beta(z0, z) * identity(3))) <= 1e-14);

    for (int i = 0; i < 20; ++i) {
        const auto bi = BPFactor::from_subspace(std::polar(rnd::uniform(g, 0, 0.95), rnd::uniform(g, 0, 6.28)),
                                                rnd::gaussian(g, 4, 1 + static_cast<int>(g() % 4)));
        CHECK(unitarity_residual(eval_factor(bi, std::polar(1.0, rnd::uniform(g, 0, 6.28)))) <= 1e-10);
        CHECK(dist(CMat(eval_factor(bi, z) * eval_factor_inverse(bi, z)), identity(4)) <= 1e-12);
    }
}

TEST_CASE("B.P. product evaluation") {
    rnd::Rng g(42);
    const CMat U = rnd::unitary(g, 3);
    BPProduct empty{{}, U};
    CHECK(dist(eval_product(empty, 0.3), U) == 0);

    const auto full = BPFactor::from_subspace(Complex(0.4, 0.1), identity(3));
    const Complex z(-0.2, 0.3);
    CHECK(dist(eval_product(BPProduct{{full}, U}, z), CMat(beta(full.zero, z) * U)) <= 1e-14);

    for (int i = 0; i < 10; ++i) {
        const auto B = rnd::bp_product(g, 3, 3);
        for (Complex w : test_points()) {
            Complex want = B.tail.determinant();
            for (const auto& f : B.factors) want *= std::pow(beta(f.zero, w), f.rank);
            CHECK(std::abs(eval_product(B, w).determinant() - want) <= 1e-12);
            CHECK(std::abs(scalar_blaschke(B, w) - want) <= 1e-12);
        }
    }
}

TEST_CASE("detachability test") {
    rnd::Rng g(43);
    const Complex z0(0.35, -0.2);
    const auto b = BPFactor::from_subspace(z0, rnd::gaussian(g, 3, 1));
    CHECK(detachable(as_function(BPProduct{{b}, identity(3)}), b, z0));
    CHECK_FALSE(detachable(MatrixFunction::constant(rnd::unitary(g, 3)), b, z0));

    const CMat R = rnd::gaussian(g, 3, 3);
    const CMat P = b.projection();
    const auto A = MatrixFunction{3, [=](Complex z) { return CMat((identity(3) - P) * R + (z - z0) * R); }};
    CHECK(detachable(A, b, z0));
}

TEST_CASE("maximal detachment") {
    rnd::Rng g(44);
    const Complex z1(0.3, 0.2), z2(-0.4, 0.1);
    const auto b = BPFactor::from_subspace(z1, rnd::gaussian(g, 3, 2));
    const auto d = detach_max(as_function(BPProduct{{b}, identity(3)}), z1);
    CHECK(std::abs(d.factor.zero - z1) == 0);
    CHECK(d.factor.rank == 2);
    CHECK(dist(d.factor.projection(), b.projection()) <= 1e-10);
    for (Complex z : test_points()) CHECK(dist(d.remainder(z), d.remainder(0.0)) <= 1e-9);
    CHECK(unitarity_residual(d.remainder(0.0)) <= 1e-9);

    const auto b1 = BPFactor::from_subspace(z1, rnd::gaussian(g, 3, 1));
    const auto b2 = BPFactor::from_subspace(z2, rnd::gaussian(g, 3, 1));
    const auto d12 = detach_max(as_function(BPProduct{{b1, b2}, identity(3)}), z1);
    CHECK(zeros_near(d12.remainder, z1, 0.1) == 0);
    CHECK(zeros_near(d12.remainder, z2, 0.1) == 1);
    CHECK(zeros_near(d12.remainder, 0.0, 0.9) == 1);

    const CMat U = rnd::unitary(g, 2);
    const auto scalar = MatrixFunction{2, [=](Complex z) { return CMat(beta(z1, z) * U); }};
    const auto ds = detach_max(scalar, z1);
    CHECK(ds.factor.rank == 2);
    CHECK(dist(ds.remainder(0.5), ds.remainder(-0.3)) <= 1e-9);
    CHECK(unitarity_residual(ds.remainder(0.1)) <= 1e-9);
}

TEST_CASE("factor out zeros") {
    rnd::Rng g(45);
    const CMat U = rnd::unitary(g, 2);
    const auto free = MatrixFunction{2, [=](Complex z) { return CMat(U * (0.5 + 0.25 * z)); }};
    const auto r0 = factor_out_zeros(free, {});
    CHECK(r0.product.factors.empty());
    CHECK(dist(r0.product.tail, identity(2)) == 0);
    for (Complex z : test_points()) CHECK(dist(r0.remainder(z), free(z)) == 0);

    for (int i = 0; i < 10; ++i) {
        const auto B = rnd::bp_product(g, 3, 1 + i % 3);
        std::vector<Complex> zeros;
        for (const auto& f : B.factors) zeros.push_back(f.zero);
        const auto A = as_function(B);
        const auto r = factor_out_zeros(A, zeros);
        CHECK(r.unconsumed.empty());
        for (Complex z : test_points()) {
            CHECK(dist(A(z), CMat(eval_product(r.product, z) * r.remainder(z))) <= 1e-7);
            CHECK(dist(r.remainder(z), r.remainder(0.0)) <= 1e-7);
        }
        CHECK(unitarity_residual(r.remainder(0.0)) <= 1e-7);
    }

    // Scalar double zero embedded in the first coordinate.
    const Complex z0(0.25, -0.3);
    const auto dbl = MatrixFunction{2, [=](Complex z) {
        CMat m = identity(2);
        m(0, 0) = beta(z0, z) * beta(z0, z);
        return m;
    }};
    const auto rd = factor_out_zeros(dbl, {z0});
    CHECK(rd.unconsumed.empty());
    CHECK(rd.product.factors.size() == 2);
    for (const auto& f : rd.product.factors) CHECK(f.rank == 1);
    CHECK(zeros_near(rd.remainder, z0, 0.1) == 0);
}

TEST_CASE("determinant zero search") {
    CHECK(find_det_zeros(MatrixFunction::constant(identity(2)), 0.9, 64).empty());

    rnd::Rng g(46);
    const Complex z0(0.3, 0.2);
    const auto b = BPFactor::from_subspace(z0, rnd::gaussian(g, 2, 1));
    const auto one = find_det_zeros(as_function(BPProduct{{b}, identity(2)}), 0.9, 64);
    REQUIRE(one.size() == 1);
    CHECK(std::abs(one[0] - z0) <= 1e-8);

    const Complex z1(-0.5, 0.4);
    const auto b1 = BPFactor::from_subspace(z1, rnd::gaussian(g, 2, 1));
    auto two = find_det_zeros(as_function(BPProduct{{b, b1}, identity(2)}), 0.9, 64);
    REQUIRE(two.size() == 2);
    std::sort(two.begin(), two.end(), [](Complex a, Complex c) { return a.real() < c.real(); });
    CHECK(std::abs(two[0] - z1) <= 1e-8);
    CHECK(std::abs(two[1] - z0) <= 1e-8);
}

TEST_CASE("full-rank zeros give one multiple root") {
    rnd::Rng g(48);
    const Complex z0(-0.672316, 0.0833988);
    const auto b = BPFactor::from_subspace(z0, identity(3));
    const auto A = as_function(BPProduct{{b}, rnd::unitary(g, 3)});
    const auto found = locate_det_zeros(A, 0.9, 64);
    REQUIRE(found.size() == 1);
    CHECK(found[0].multiplicity == 3);
    CHECK(std::abs(found[0].z - z0) <= 1e-10);
    CHECK_FALSE(found[0].unreliable);
    const auto r = factor_out_zeros(A, find_det_zeros(A, 0.9, 64));
    REQUIRE(r.product.factors.size() == 1);
    CHECK(r.product.factors[0].rank == 3);
    CHECK(winding_count(r.remainder, 0.0, 0.95) == 0);
}

TEST_CASE("rank invariance and maximum principle") {
    rnd::Rng g(47);
    const auto B = rnd::bp_product(g, 3, 2);
    const auto A = as_function(B);
    std::vector<Complex> pts;
    for (int i = 0; i < 8; ++i) pts.push_back(std::polar(0.1 * (i + 1), 0.7 * i));
    const auto prof = rank_profile(A, pts);
    for (int r : prof) CHECK(r == prof.front());
    CHECK(prof.front() >= 1);
    const CMat U = rnd::unitary(g, 3);
    for (int r : rank_profile(MatrixFunction::constant(CMat(0.5 * U)), pts)) CHECK(r == 3);
    for (int r : rank_profile(MatrixFunction::constant(U), pts)) CHECK(r == 0);

    const auto mp = maximum_principle_check(A, pts);
    CHECK_FALSE(mp.triggered);
    CHECK(mp.max_norm < 1);
    const auto mu = maximum_principle_check(MatrixFunction::constant(U), pts);
    CHECK(mu.triggered);
    CHECK(mu.constant_unitary);
    CHECK(subharmonic_excess(A, 0.2, 0.3) <= 1e-12);
}

TEST_CASE("invalid factors are rejected") {
    CHECK_THROWS_AS(BPFactor::from_subspace(Complex(1.2, 0), identity(2)), SpecError);
    CHECK_THROWS_AS(BPFactor::from_subspace(0.5, CMat::Zero(2, 1)), SpecError);
}
