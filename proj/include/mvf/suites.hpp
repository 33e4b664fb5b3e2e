#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mvf/matcore.hpp"

// Randomized invariant suites shared by `mvftool verify` and the acceptance
// binary. Each instance yields a residual that must not exceed `limit`.
namespace mvf::suites {

struct SuiteResult {
    std::string name;
    std::string statement;  // what the suite exercises
    double limit = 0;
    std::vector<double> residuals;

    int failures() const;
    double worst() const;
    bool passed() const { return failures() == 0; }
};

// Thirteen clause residuals for the spectral norm, each relative and
// nonnegative (0 when the clause holds exactly).
std::array<double, 13> matrix_norm_clauses(const CMat& A, const CMat& B, const CMat& U, const CMat& D,
                                           std::uint64_t probe_seed);

SuiteResult determinant_formula(std::uint64_t seed, int count, double tol = 1e-10);
SuiteResult splitting(std::uint64_t seed, int count, double tol = 1e-10);
SuiteResult gram_identity(std::uint64_t seed, int count, double tol = 1e-10);
SuiteResult gram_commuting(std::uint64_t seed, int count, double tol = 1e-10);
SuiteResult unitary_imaginary_kernel(std::uint64_t seed, int count, double tol = 1e-10);
SuiteResult norm_bound(std::uint64_t seed, int count, double tol = 1e-10);
SuiteResult taylor_certificate(std::uint64_t seed, int count, double tol = 1e-10);
SuiteResult ode_agreement(std::uint64_t seed, int count, double tol = 1e-10);
SuiteResult matrix_norm(std::uint64_t seed, int count);

const std::vector<std::string>& names();
SuiteResult run(const std::string& name, std::uint64_t seed, int count, double tol = 1e-10);

}  // namespace mvf::suites
