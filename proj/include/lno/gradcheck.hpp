#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lno/autodiff.hpp"

namespace lno {

/// Scalar function of a list of parameter tensors, expressed on a tape.
using ScalarFunction = std::function<Var(Tape&, const std::vector<Var>& params)>;

struct GradCheckOptions {
  double step = 1e-4;
  /// Coordinates sampled across all parameters; every coordinate is checked
  /// when the total is not larger than this.
  std::size_t max_coordinates = 50;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t worst_parameter = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients of `f` with central differences.
///
/// The error of one coordinate is |analytic - numeric| / (|analytic| + |numeric| + 1e-12);
/// the report carries the maximum over the sampled coordinates.
GradCheckReport finite_diff_check(const ScalarFunction& f, const std::vector<Tensor>& params,
                                  const GradCheckOptions& options = {});

/// Evaluates `f` without recording gradients.
double evaluate_scalar(const ScalarFunction& f, const std::vector<Tensor>& params);

/// Reverse-mode gradients of `f` for every parameter.
std::vector<Tensor> gradients(const ScalarFunction& f, const std::vector<Tensor>& params);

}  // namespace lno
