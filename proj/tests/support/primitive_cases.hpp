#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "auxvae/tensor/grad_check.hpp"

namespace auxvae::testing {

// One differentiable primitive prepared for a finite-difference check: a
// probe point and a scalar function of it. Binary primitives are checked in
// each operand separately, holding the other fixed.
struct PrimitiveCase {
  std::string name;
  tensor::Tensor<double> point;
  tensor::ScalarFunction f;
};

// Every primitive with inputs drawn from `seed`. Each output is contracted
// with a fixed random weight tensor so all output coordinates matter.
std::vector<PrimitiveCase> primitive_cases(std::uint64_t seed);

}  // namespace auxvae::testing
