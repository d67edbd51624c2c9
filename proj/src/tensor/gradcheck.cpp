#include "lno/gradcheck.hpp"

#include <cmath>
#include <utility>

#include "lno/error.hpp"
#include "lno/rng.hpp"

namespace lno {

double evaluate_scalar(const ScalarFunction& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.constant(p));
  return f(tape, vars).value().item();
}

std::vector<Tensor> gradients(const ScalarFunction& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.parameter(p));
  Var loss = f(tape, vars);
  tape.backward(loss);
  std::vector<Tensor> out;
  out.reserve(vars.size());
  for (const Var& v : vars) out.push_back(tape.grad(v));
  return out;
}

GradCheckReport finite_diff_check(const ScalarFunction& f, const std::vector<Tensor>& params,
                                  const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ContractError("finite_diff_check step must be positive");
  const std::vector<Tensor> analytic = gradients(f, params);

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  std::size_t total = 0;
  for (const Tensor& p : params) total += p.numel();
  if (total <= options.max_coordinates) {
    for (std::size_t k = 0; k < params.size(); ++k)
      for (std::size_t i = 0; i < params[k].numel(); ++i) coords.emplace_back(k, i);
  } else {
    Rng rng(options.seed, 0x6772616463686bULL);
    for (std::size_t n = 0; n < options.max_coordinates; ++n) {
      std::size_t flat = static_cast<std::size_t>(rng.below(total));
      std::size_t k = 0;
      while (flat >= params[k].numel()) flat -= params[k++].numel();
      coords.emplace_back(k, flat);
    }
  }

  GradCheckReport report;
  std::vector<Tensor> work = params;
  for (const auto& [k, i] : coords) {
    const double original = work[k][i];
    work[k][i] = original + options.step;
    const double up = evaluate_scalar(f, work);
    work[k][i] = original - options.step;
    const double down = evaluate_scalar(f, work);
    work[k][i] = original;
    const double numeric = (up - down) / (2.0 * options.step);
    const double a = analytic[k][i];
    const double err = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
    ++report.coordinates_checked;
    if (err > report.max_relative_error || report.coordinates_checked == 1) {
      report.max_relative_error = err;
      report.worst_parameter = k;
      report.worst_index = i;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace lno
