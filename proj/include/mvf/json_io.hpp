#pragma once

#include <json.hpp>

#include "mvf/blaschke.hpp"
#include "mvf/factor.hpp"
#include "mvf/function.hpp"
#include "mvf/potapov.hpp"
#include "mvf/prodint.hpp"

// JSON encodings. Complex numbers are a number or [re, im]; matrices are
// arrays of rows. Malformed input raises SpecError.
namespace mvf::io {

using nlohmann::json;

Complex complex_from_json(const json& j);
json to_json(Complex c);
CMat matrix_from_json(const json& j);
json to_json(const CMat& m);
std::vector<double> reals_from_json(const json& j);
std::vector<CMat> matrices_from_json(const json& j);

KernelSpec kernel_from_json(const json& j);
json to_json(const KernelSpec& f);
IntegratorSpec integrator_from_json(const json& j);
json to_json(const IntegratorSpec& E);  // density only when built from samples

BPProduct bp_from_json(const json& j);
json to_json(const BPProduct& B);
PotapovRepr repr_from_json(const json& j);
json to_json(const PotapovRepr& R);
json to_json(const CayleyData& c);

PpInnerSpec pp_inner_from_json(const json& j);
ScInnerSpec sc_inner_from_json(const json& j);
OuterSpec outer_from_json(const json& j);

// Function specs: constant, polynomial, bp_product, pp_inner, sc_inner,
// outer, product.
MatrixFunction function_from_json(const json& j, double tol);

// Typed field access with SpecError on absence or type mismatch.
const json& field(const json& j, const char* key);
double number_field(const json& j, const char* key);
double number_field(const json& j, const char* key, double fallback);
int int_field(const json& j, const char* key, int fallback);
std::string string_field(const json& j, const char* key);

}  // namespace mvf::io
