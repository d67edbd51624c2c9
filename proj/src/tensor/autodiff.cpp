#include "lno/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lno/error.hpp"

namespace lno {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(Tensor value, bool requires_grad, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, std::move(backward)});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Var Tape::parameter(Tensor value) { return push(std::move(value), true, nullptr); }

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw ContractError("op inputs recorded on a different tape");
    needs = needs || v.requires_grad();
  }
  return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

Tensor Tape::grad(const Var& v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad.shape() == n.value.shape()) return n.grad;
  return Tensor(n.value.shape(), 0.0);
}

void Tape::backward(const Var& loss) {
  if (&loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  if (loss.value().numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor{};
  backward_visits_ = 0;
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
    ++backward_visits_;
  }
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + " shape mismatch: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_matrix(const Var& a, const char* op) {
  if (a.value().rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " + shape_string(a.shape()));
  }
}

constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tensor out = matmul(a.value(), b.value());
  const Var ins[] = {a, b};
  return a.tape().record(std::move(out), ins, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (a.requires_grad()) {
      const Tensor bt = transpose(bv);
      kernels::gemm_accumulate(g.raw(), bt.raw(), t.grad_buffer(a.id()).raw(), m, n, k);
    }
    if (b.requires_grad()) {
      const Tensor at = transpose(av);
      kernels::gemm_accumulate(at.raw(), g.raw(), t.grad_buffer(b.id()).raw(), k, m, n);
    }
  });
}

Var transpose(const Var& a) {
  require_matrix(a, "transpose");
  Tensor out = transpose(a.value());
  const Var ins[] = {a};
  return a.tape().record(std::move(out), ins, [a](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    Tensor& ga = t.grad_buffer(a.id());
    const std::size_t r = a.value().dim(0), c = a.value().dim(1);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  const Var ins[] = {a, b};
  return a.tape().record(std::move(out), ins, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    for (const Var& v : {a, b}) {
      if (!v.requires_grad()) continue;
      Tensor& gv = t.grad_buffer(v.id());
      for (std::size_t i = 0; i < g.numel(); ++i) gv[i] += g[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  const Var ins[] = {a, b};
  return a.tape().record(std::move(out), ins, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    if (a.requires_grad()) {
      Tensor& ga = t.grad_buffer(a.id());
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      Tensor& gb = t.grad_buffer(b.id());
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  const Var ins[] = {a, b};
  return a.tape().record(std::move(out), ins, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    if (a.requires_grad()) {
      Tensor& ga = t.grad_buffer(a.id());
      const Tensor& bv = b.value();
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
    }
    if (b.requires_grad()) {
      Tensor& gb = t.grad_buffer(b.id());
      const Tensor& av = a.value();
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  const Var ins[] = {a};
  return a.tape().record(std::move(out), ins, [a, s](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    Tensor& ga = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * s;
  });
}

Var add_row(const Var& x, const Var& bias) {
  const std::size_t c = x.value().cols();
  if (bias.value().numel() != c) {
    throw DimensionError("add_row: bias " + shape_string(bias.shape()) + " does not match columns of " +
                         shape_string(x.shape()));
  }
  Tensor out = x.value();
  const std::size_t r = out.rows();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bias.value()[j];
  const Var ins[] = {x, bias};
  return x.tape().record(std::move(out), ins, [x, bias, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    if (x.requires_grad()) {
      Tensor& gx = t.grad_buffer(x.id());
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    }
    if (bias.requires_grad()) {
      Tensor& gb = t.grad_buffer(bias.id());
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
    }
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const Var ins[] = {a};
  return a.tape().record(Tensor::scalar(s), ins, [a](Tape& t, std::size_t self) {
    const double g = t.grad_buffer(self)[0];
    Tensor& ga = t.grad_buffer(a.id());
    for (double& v : ga.data()) v += g;
  });
}

Var mean(const Var& a) {
  if (a.value().numel() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().numel()));
}

Var sqrt(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = std::sqrt(v);
  const Var ins[] = {a};
  return a.tape().record(std::move(out), ins, [a](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * 0.5 / y[i];
  });
}

Tensor softmax_last_axis(const Tensor& x) {
  if (x.cols() == 0) throw DimensionError("softmax over an empty axis");
  Tensor out = x;
  const std::size_t r = out.rows(), c = out.cols();
  for (std::size_t i = 0; i < r; ++i) {
    double* row = out.raw() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < c; ++j) row[j] *= inv;
  }
  return out;
}

Var softmax_last_axis(const Var& x) {
  Tensor out = softmax_last_axis(x.value());
  const Var ins[] = {x};
  return x.tape().record(std::move(out), ins, [x](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_buffer(x.id());
    const std::size_t r = y.rows(), c = y.cols();
    for (std::size_t i = 0; i < r; ++i) {
      const double* yr = y.raw() + i * c;
      const double* gr = g.raw() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += gr[j] * yr[j];
      double* out = gx.raw() + i * c;
      for (std::size_t j = 0; j < c; ++j) out[j] += yr[j] * (gr[j] - dot);
    }
  });
}

namespace {

struct NormStats {
  std::vector<double> mean;
  std::vector<double> inv_std;
};

NormStats row_stats(const Tensor& x, double eps) {
  const std::size_t r = x.rows(), c = x.cols();
  NormStats s{std::vector<double>(r), std::vector<double>(r)};
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = x.raw() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    s.mean[i] = mu;
    s.inv_std[i] = 1.0 / std::sqrt(var + eps);
  }
  return s;
}

void check_norm_args(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t c = x.cols();
  if (c == 0) throw DimensionError("layer_norm over an empty axis");
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("layer_norm affine parameters must have " + std::to_string(c) + " entries");
  }
  if (!(eps > 0.0)) throw ContractError("layer_norm eps must be positive");
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  check_norm_args(x, gamma, beta, eps);
  const NormStats s = row_stats(x, eps);
  Tensor out = x;
  const std::size_t r = x.rows(), c = x.cols();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = gamma[j] * ((x[i * c + j] - s.mean[i]) * s.inv_std[i]) + beta[j];
  return out;
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  check_norm_args(x.value(), gamma.value(), beta.value(), eps);
  NormStats s = row_stats(x.value(), eps);
  const std::size_t r = x.value().rows(), c = x.value().cols();
  Tensor xhat = x.value();
  Tensor out = x.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (x.value()[i * c + j] - s.mean[i]) * s.inv_std[i];
      xhat[i * c + j] = h;
      out[i * c + j] = gamma.value()[j] * h + beta.value()[j];
    }
  const Var ins[] = {x, gamma, beta};
  return x.tape().record(
      std::move(out), ins,
      [x, gamma, beta, r, c, xhat = std::move(xhat), inv_std = std::move(s.inv_std)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_buffer(self);
        if (gamma.requires_grad()) {
          Tensor& gg = t.grad_buffer(gamma.id());
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gg[j] += g[i * c + j] * xhat[i * c + j];
        }
        if (beta.requires_grad()) {
          Tensor& gb = t.grad_buffer(beta.id());
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
        }
        if (x.requires_grad()) {
          Tensor& gx = t.grad_buffer(x.id());
          const Tensor& gam = gamma.value();
          const double inv_c = 1.0 / static_cast<double>(c);
          for (std::size_t i = 0; i < r; ++i) {
            double mean_d = 0.0, mean_dh = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double d = g[i * c + j] * gam[j];
              mean_d += d;
              mean_dh += d * xhat[i * c + j];
            }
            mean_d *= inv_c;
            mean_dh *= inv_c;
            for (std::size_t j = 0; j < c; ++j) {
              const double d = g[i * c + j] * gam[j];
              gx[i * c + j] += inv_std[i] * (d - mean_d - xhat[i * c + j] * mean_dh);
            }
          }
        }
      });
}

double gelu(double x) {
  const double u = kSqrt2OverPi * (x + kGeluC * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

Tensor gelu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = gelu(v);
  return out;
}

Var gelu(const Var& x) {
  const Tensor& xv = x.value();
  Tensor out = xv;
  Tensor deriv = xv;
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    const double v = xv[i];
    const double u = kSqrt2OverPi * (v + kGeluC * v * v * v);
    const double th = std::tanh(u);
    out[i] = 0.5 * v * (1.0 + th);
    deriv[i] = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kSqrt2OverPi * (1.0 + 3.0 * kGeluC * v * v);
  }
  const Var ins[] = {x};
  return x.tape().record(std::move(out), ins, [x, deriv = std::move(deriv)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    Tensor& gx = t.grad_buffer(x.id());
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * deriv[i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols needs at least one input");
  const std::size_t r = parts[0].value().dim(0);
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.value().dim(0) != r) throw DimensionError("concat_cols row count mismatch");
    total += p.value().dim(1);
  }
  Tensor out = Tensor::matrix(r, total);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const std::size_t c = p.value().dim(1);
    for (std::size_t i = 0; i < r; ++i) std::copy_n(p.value().raw() + i * c, c, out.raw() + i * total + offset);
    offset += c;
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), ins, [ins, r, total](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    std::size_t off = 0;
    for (const Var& p : ins) {
      const std::size_t c = p.value().dim(1);
      if (p.requires_grad()) {
        Tensor& gp = t.grad_buffer(p.id());
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += g[i * total + off + j];
      }
      off += c;
    }
  });
}

Var slice_cols(const Var& x, std::size_t start, std::size_t count) {
  require_matrix(x, "slice_cols");
  const std::size_t r = x.value().dim(0), c = x.value().dim(1);
  if (start + count > c) {
    throw DimensionError("slice_cols [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_string(x.shape()));
  }
  Tensor out = Tensor::matrix(r, count);
  for (std::size_t i = 0; i < r; ++i) std::copy_n(x.value().raw() + i * c + start, count, out.raw() + i * count);
  const Var ins[] = {x};
  return x.tape().record(std::move(out), ins, [x, r, c, start, count](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    Tensor& gx = t.grad_buffer(x.id());
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < count; ++j) gx[i * c + start + j] += g[i * count + j];
  });
}

}  // namespace lno
