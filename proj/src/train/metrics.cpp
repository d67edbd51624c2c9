#include <cmath>

#include "lno/error.hpp"
#include "lno/train.hpp"

namespace lno {

namespace {

void check_pair(const Tensor& pred, const Tensor& truth, const char* what) {
  if (pred.shape() != truth.shape()) {
    throw DimensionError(std::string(what) + " shape mismatch: " + shape_string(pred.shape()) + " vs " +
                         shape_string(truth.shape()));
  }
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double truth_norm(const Tensor& truth) {
  const double n = l2_norm(truth.data());
  if (!(n > 0.0)) throw MetricError("relative L2 is undefined for an all-zero target");
  return n;
}

}  // namespace

double relative_l2(const Tensor& pred, const Tensor& truth) {
  check_pair(pred, truth, "relative_l2");
  const double denom = truth_norm(truth);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(s) / denom;
}

double relative_mae(const Tensor& pred, const Tensor& truth) {
  check_pair(pred, truth, "relative_mae");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    num += std::abs(pred[i] - truth[i]);
    den += std::abs(truth[i]);
  }
  if (!(den > 0.0)) throw MetricError("relative MAE is undefined for an all-zero target");
  return num / den;
}

double mse(const Tensor& pred, const Tensor& truth) {
  check_pair(pred, truth, "mse");
  if (pred.numel() == 0) throw MetricError("mse of an empty tensor");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return s / static_cast<double>(pred.numel());
}

Var relative_l2_loss(const Var& pred, const Tensor& truth) {
  check_pair(pred.value(), truth, "relative_l2_loss");
  const double denom = truth_norm(truth);
  Tensor diff = pred.value();
  for (std::size_t i = 0; i < diff.numel(); ++i) diff[i] -= truth[i];
  const double dn = l2_norm(diff.data());
  const Var ins[] = {pred};
  return pred.tape().record(Tensor::scalar(dn / denom), ins,
                            [pred, diff = std::move(diff), dn, denom](Tape& t, std::size_t self) {
                              // The subgradient at a perfect prediction is taken as zero.
                              if (dn == 0.0) return;
                              const double g = t.grad_buffer(self)[0] / (dn * denom);
                              Tensor& gp = t.grad_buffer(pred.id());
                              for (std::size_t i = 0; i < diff.numel(); ++i) gp[i] += g * diff[i];
                            });
}

Var mse_loss(const Var& pred, const Tensor& truth) {
  check_pair(pred.value(), truth, "mse_loss");
  const double n = static_cast<double>(truth.numel());
  if (truth.numel() == 0) throw MetricError("mse of an empty tensor");
  Tensor diff = pred.value();
  double s = 0.0;
  for (std::size_t i = 0; i < diff.numel(); ++i) {
    diff[i] -= truth[i];
    s += diff[i] * diff[i];
  }
  const Var ins[] = {pred};
  return pred.tape().record(Tensor::scalar(s / n), ins, [pred, diff = std::move(diff), n](Tape& t, std::size_t self) {
    const double g = 2.0 * t.grad_buffer(self)[0] / n;
    Tensor& gp = t.grad_buffer(pred.id());
    for (std::size_t i = 0; i < diff.numel(); ++i) gp[i] += g * diff[i];
  });
}

std::string to_string(MetricKind k) {
  switch (k) {
    case MetricKind::RelativeL2: return "relative-l2";
    case MetricKind::RelativeMae: return "relative-mae";
    default: return "mse";
  }
}

MetricKind parse_metric(const std::string& s) {
  if (s == "relative-l2" || s == "rl2") return MetricKind::RelativeL2;
  if (s == "relative-mae" || s == "rmae") return MetricKind::RelativeMae;
  if (s == "mse") return MetricKind::Mse;
  throw ConfigError("unknown metric '" + s + "' (expected relative-l2, relative-mae or mse)");
}

double evaluate_metric(MetricKind kind, const Tensor& pred, const Tensor& truth) {
  switch (kind) {
    case MetricKind::RelativeL2: return relative_l2(pred, truth);
    case MetricKind::RelativeMae: return relative_mae(pred, truth);
    default: return mse(pred, truth);
  }
}

}  // namespace lno
