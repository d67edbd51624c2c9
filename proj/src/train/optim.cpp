#include <cmath>
#include <numbers>

#include "lno/error.hpp"
#include "lno/train.hpp"

namespace lno {

AdamState AdamState::zeros_like(const std::vector<NamedTensor>& params) {
  AdamState s;
  for (const NamedTensor& p : params) {
    s.m.emplace_back(p.value.shape(), 0.0);
    s.v.emplace_back(p.value.shape(), 0.0);
  }
  return s;
}

void adamw_step(std::vector<NamedTensor>& params, const std::vector<Tensor>& grads, AdamState& state, double lr,
                const AdamWConfig& c) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adamw_step: " + std::to_string(grads.size()) + " gradients and " +
                        std::to_string(state.m.size()) + " moment buffers for " + std::to_string(params.size()) +
                        " parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const double decay = 1.0 - lr * c.weight_decay;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = params[p].value;
    const Tensor& g = grads[p];
    if (g.shape() != w.shape()) {
      throw DimensionError("gradient for '" + params[p].name + "' has shape " + shape_string(g.shape()));
    }
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    for (std::size_t i = 0; i < w.numel(); ++i) {
      w[i] *= decay;
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

double onecycle_lr(std::size_t step, std::size_t total_steps, double max_lr, double pct_start, double div_factor,
                   double final_div_factor) {
  if (step >= total_steps) {
    throw ContractError("onecycle_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) +
                        ")");
  }
  const double initial = max_lr / div_factor;
  const double final = max_lr / final_div_factor;
  const auto peak = static_cast<std::size_t>(std::floor(pct_start * static_cast<double>(total_steps)));
  auto cosine = [](double from, double to, double frac) {
    return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
  };
  if (step <= peak) {
    if (peak == 0) return max_lr;
    return cosine(initial, max_lr, static_cast<double>(step) / static_cast<double>(peak));
  }
  const std::size_t last = total_steps - 1;
  return cosine(max_lr, final, static_cast<double>(step - peak) / static_cast<double>(last - peak));
}

double step_lr(std::size_t epoch, double base_lr, std::size_t step_size, double gamma) {
  if (step_size == 0) throw ConfigError("step_lr needs a positive step size");
  return base_lr * std::pow(gamma, static_cast<double>(epoch / step_size));
}

}  // namespace lno
