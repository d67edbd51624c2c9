#include <fftw3.h>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

#include "lno/data.hpp"
#include "lno/error.hpp"

namespace lno::data {

void BurgersConfig::validate() const {
  if (nx < 2 || nt < 2) throw ConfigError("burgers grid needs nx >= 2 and nt >= 2");
  if (!(viscosity > 0.0)) throw ConfigError("burgers viscosity must be positive");
  if (!(period > 0.0) || !(length_scale > 0.0)) throw ConfigError("GP period and length scale must be positive");
}

void BurgersConfig::write(KvConfig& kv, const std::string& prefix) const {
  kv.set(prefix + "viscosity", viscosity);
  kv.set(prefix + "nx", static_cast<std::uint64_t>(nx));
  kv.set(prefix + "nt", static_cast<std::uint64_t>(nt));
  kv.set(prefix + "period", period);
  kv.set(prefix + "length_scale", length_scale);
  kv.set(prefix + "seed", seed);
}

BurgersConfig BurgersConfig::read(const KvConfig& kv, const std::string& prefix) {
  BurgersConfig c;
  c.viscosity = kv.get_double(prefix + "viscosity", c.viscosity);
  c.nx = kv.get_uint(prefix + "nx", c.nx);
  c.nt = kv.get_uint(prefix + "nt", c.nt);
  c.period = kv.get_double(prefix + "period", c.period);
  c.length_scale = kv.get_double(prefix + "length_scale", c.length_scale);
  c.seed = kv.get_uint(prefix + "seed", c.seed);
  c.validate();
  return c;
}

double periodic_kernel(double x, double x_prime, double period, double length_scale) {
  const double s = std::sin(std::numbers::pi * std::abs(x - x_prime));
  return std::exp(-(2.0 / (period * length_scale * length_scale)) * s * s);
}

std::vector<double> spatial_grid(std::size_t nx) {
  std::vector<double> x(nx);
  for (std::size_t j = 0; j < nx; ++j) x[j] = static_cast<double>(j) / static_cast<double>(nx);
  return x;
}

std::vector<double> temporal_grid(std::size_t nt) {
  std::vector<double> t(nt);
  for (std::size_t i = 0; i < nt; ++i) t[i] = static_cast<double>(i) / static_cast<double>(nt - 1);
  return t;
}

std::vector<double> sample_periodic_gp(const BurgersConfig& config, Rng& rng) {
  if (config.nx < 2) throw ConfigError("GP sampling needs nx >= 2");
  const std::size_t n = config.nx;
  const std::vector<double> x = spatial_grid(n);
  Eigen::MatrixXd k(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      k(i, j) = periodic_kernel(x[i], x[j], config.period, config.length_scale);

  for (double jitter = 1e-10; jitter <= 1e-6 * 1.0000001; jitter *= 10.0) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(kj);
    if (llt.info() != Eigen::Success) continue;
    Eigen::VectorXd z(n);
    for (std::size_t i = 0; i < n; ++i) z(i) = rng.normal();
    const Eigen::VectorXd u = llt.matrixL() * z;
    return std::vector<double>(u.data(), u.data() + n);
  }
  throw GenerationError("GP kernel Cholesky failed even with jitter 1e-6 (nx=" + std::to_string(n) + ")");
}

std::vector<double> sample_periodic_gp(const BurgersConfig& config) {
  Rng rng(config.seed);
  return sample_periodic_gp(config, rng);
}

namespace {

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Real-to-complex FFT pair on a fixed length with owned, aligned buffers.
class SpectralWorkspace {
 public:
  explicit SpectralWorkspace(std::size_t n) : n_(n), modes_(n / 2 + 1) {
    real_ = fftw_alloc_real(n_);
    spec_ = fftw_alloc_complex(modes_);
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n_), real_, spec_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n_), spec_, real_, FFTW_ESTIMATE);
  }
  ~SpectralWorkspace() {
    {
      std::lock_guard<std::mutex> lock(fftw_planner_mutex());
      fftw_destroy_plan(forward_);
      fftw_destroy_plan(inverse_);
    }
    fftw_free(real_);
    fftw_free(spec_);
  }
  SpectralWorkspace(const SpectralWorkspace&) = delete;
  SpectralWorkspace& operator=(const SpectralWorkspace&) = delete;

  void forward(std::span<const double> in, std::vector<std::complex<double>>& out) {
    std::copy(in.begin(), in.end(), real_);
    fftw_execute(forward_);
    out.resize(modes_);
    for (std::size_t k = 0; k < modes_; ++k) out[k] = {spec_[k][0], spec_[k][1]};
  }
  /// Unnormalized inverse: multiply by 1/n afterwards.
  void inverse(const std::vector<std::complex<double>>& in, std::span<double> out) {
    for (std::size_t k = 0; k < modes_; ++k) {
      spec_[k][0] = in[k].real();
      spec_[k][1] = in[k].imag();
    }
    fftw_execute(inverse_);
    std::copy(real_, real_ + n_, out.begin());
  }
  std::size_t modes() const { return modes_; }

 private:
  std::size_t n_;
  std::size_t modes_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

class BurgersRhs {
 public:
  BurgersRhs(std::size_t n, double nu) : n_(n), nu_(nu), fft_(n), cutoff_(n / 3) {
    wave_.resize(fft_.modes());
    for (std::size_t k = 0; k < wave_.size(); ++k) wave_[k] = 2.0 * std::numbers::pi * static_cast<double>(k);
    work_.resize(n);
  }

  void operator()(std::span<const double> u, std::span<double> du) {
    const double inv_n = 1.0 / static_cast<double>(n_);
    fft_.forward(u, u_hat_);
    trunc_ = u_hat_;
    for (std::size_t k = cutoff_ + 1; k < trunc_.size(); ++k) trunc_[k] = 0.0;
    fft_.inverse(trunc_, work_);
    for (double& w : work_) {
      w *= inv_n;
      w *= w;
    }
    fft_.forward(work_, sq_hat_);
    const std::complex<double> half_i(0.0, 0.5);
    rhs_hat_.resize(u_hat_.size());
    for (std::size_t k = 0; k < u_hat_.size(); ++k) {
      const double kk = wave_[k];
      std::complex<double> r = -nu_ * kk * kk * u_hat_[k];
      if (k <= cutoff_) r -= half_i * kk * sq_hat_[k];
      rhs_hat_[k] = r;
    }
    rhs_hat_[0] = 0.0;
    fft_.inverse(rhs_hat_, du);
    for (double& v : du) v *= inv_n;
  }

 private:
  std::size_t n_;
  double nu_;
  SpectralWorkspace fft_;
  std::size_t cutoff_;
  std::vector<double> wave_;
  std::vector<double> work_;
  std::vector<std::complex<double>> u_hat_, trunc_, sq_hat_, rhs_hat_;
};

}  // namespace

Tensor solve_burgers(std::span<const double> u0, const BurgersConfig& config) {
  config.validate();
  if (u0.size() != config.nx) {
    throw DimensionError("initial condition has " + std::to_string(u0.size()) + " points, grid has " +
                         std::to_string(config.nx));
  }
  const std::size_t nx = config.nx, nt = config.nt;
  Tensor field = Tensor::matrix(nt, nx);
  std::copy(u0.begin(), u0.end(), field.raw());

  double u_max = 0.0;
  for (double v : u0) {
    if (!std::isfinite(v)) throw SolverError("Burgers initial condition is not finite");
    u_max = std::max(u_max, std::abs(v));
  }
  const double dx = 1.0 / static_cast<double>(nx);
  double dt = 0.2 * dx * dx / config.viscosity;
  if (u_max > 0.0) dt = std::min(dt, 0.2 * dx / u_max);
  const double blowup = 10.0 * u_max + 10.0;

  BurgersRhs rhs(nx, config.viscosity);
  std::vector<double> u(u0.begin(), u0.end()), k1(nx), k2(nx), k3(nx), k4(nx), tmp(nx);
  const double interval = 1.0 / static_cast<double>(nt - 1);
  const double steps = std::ceil(interval / dt);
  if (!(steps <= 1e8)) {
    throw SolverError("Burgers time step " + std::to_string(dt) + " needs " + std::to_string(steps) +
                      " substeps per output interval; use a smaller amplitude or a coarser grid");
  }
  const auto substeps = static_cast<std::size_t>(steps);
  const double h = interval / static_cast<double>(substeps);

  for (std::size_t row = 1; row < nt; ++row) {
    for (std::size_t s = 0; s < substeps; ++s) {
      rhs(u, k1);
      for (std::size_t j = 0; j < nx; ++j) tmp[j] = u[j] + 0.5 * h * k1[j];
      rhs(tmp, k2);
      for (std::size_t j = 0; j < nx; ++j) tmp[j] = u[j] + 0.5 * h * k2[j];
      rhs(tmp, k3);
      for (std::size_t j = 0; j < nx; ++j) tmp[j] = u[j] + h * k3[j];
      rhs(tmp, k4);
      for (std::size_t j = 0; j < nx; ++j) u[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    for (std::size_t j = 0; j < nx; ++j) {
      if (!std::isfinite(u[j]) || std::abs(u[j]) > blowup) {
        throw SolverError("Burgers integration became unstable at t=" +
                          std::to_string(static_cast<double>(row) * interval) +
                          "; use a smaller time step or a finer grid");
      }
    }
    std::copy(u.begin(), u.end(), field.raw() + row * nx);
  }
  return field;
}

}  // namespace lno::data
