#pragma once

#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mvhgnn/autodiff.hpp"

namespace mvhgnn {

// Builds a scalar from variables placed on `tape`, one per input matrix.
using ScalarFunction = std::function<Var(Tape&, std::span<const Var>)>;

std::vector<Matrix> analytic_gradients(const ScalarFunction& f, const std::vector<Matrix>& inputs);

// Central differences using forward-only tapes.
std::vector<Matrix> numeric_gradients(const ScalarFunction& f, const std::vector<Matrix>& inputs, double h = 1e-5);

// max over inputs of  max|analytic - numeric| / max(max|numeric|, 1e-3 * global, 1e-8),
// where global is the largest numeric gradient entry across all inputs.
double gradient_error(const ScalarFunction& f, const std::vector<Matrix>& inputs, double h = 1e-5);

struct GradCheckCase {
  std::string name;
  double worst_error = 0.0;
  int seeds = 0;
  bool passed = false;
};

// The finite-difference suite over every differentiable op, the encoder
// stages, and the losses. `module` is one of "all", "core", "encoder",
// "losses".
std::vector<GradCheckCase> run_gradcheck_suite(const std::string& module, int seeds = 20, double tolerance = 1e-4);

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0);

}  // namespace mvhgnn
