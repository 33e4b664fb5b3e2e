#pragma once

#include <functional>
#include <string>
#include <utility>

#include "mvf/matcore.hpp"

namespace mvf {

// Matrix-valued function on the open unit disk, evaluated as a black box.
// Analyticity is trusted; `contractive` is a declaration by the producer.
struct MatrixFunction {
    int dim = 1;
    std::function<CMat(Complex)> eval;
    bool contractive = false;
    std::string label;

    CMat operator()(Complex z) const { return eval(z); }

    static MatrixFunction constant(const CMat& c, std::string label = "constant") {
        const bool contr = spectral_norm(c) <= 1 + 1e-12;
        return {static_cast<int>(c.rows()), [c](Complex) { return c; }, contr, std::move(label)};
    }
};

// z -> a(z) b(z)
inline MatrixFunction operator*(const MatrixFunction& a, const MatrixFunction& b) {
    if (a.dim != b.dim) throw SpecError("MatrixFunction product: dimension mismatch");
    return {a.dim, [a, b](Complex z) { return CMat(a(z) * b(z)); }, a.contractive && b.contractive,
            a.label + "*" + b.label};
}

}  // namespace mvf
