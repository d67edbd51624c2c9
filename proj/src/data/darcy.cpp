#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <numbers>

#include "lno/data.hpp"
#include "lno/error.hpp"

namespace lno::data {

void DarcyConfig::validate() const {
  if (s < 3) throw ConfigError("darcy grid needs s >= 3");
  if (!(a_plus > 0.0) || !(a_minus > 0.0)) throw ConfigError("darcy coefficients must be positive");
  if (modes == 0) throw ConfigError("darcy random field needs at least one mode");
}

void DarcyConfig::write(KvConfig& kv, const std::string& prefix) const {
  kv.set(prefix + "s", static_cast<std::uint64_t>(s));
  kv.set(prefix + "forcing", forcing);
  kv.set(prefix + "a_plus", a_plus);
  kv.set(prefix + "a_minus", a_minus);
  kv.set(prefix + "alpha", alpha);
  kv.set(prefix + "tau", tau);
  kv.set(prefix + "modes", static_cast<std::uint64_t>(modes));
  kv.set(prefix + "seed", seed);
}

DarcyConfig DarcyConfig::read(const KvConfig& kv, const std::string& prefix) {
  DarcyConfig c;
  c.s = kv.get_uint(prefix + "s", c.s);
  c.forcing = kv.get_double(prefix + "forcing", c.forcing);
  c.a_plus = kv.get_double(prefix + "a_plus", c.a_plus);
  c.a_minus = kv.get_double(prefix + "a_minus", c.a_minus);
  c.alpha = kv.get_double(prefix + "alpha", c.alpha);
  c.tau = kv.get_double(prefix + "tau", c.tau);
  c.modes = kv.get_uint(prefix + "modes", c.modes);
  c.seed = kv.get_uint(prefix + "seed", c.seed);
  c.validate();
  return c;
}

Tensor gaussian_random_field(const DarcyConfig& config, Rng& rng) {
  config.validate();
  const std::size_t s = config.s, k = config.modes;
  // Coefficients are drawn before evaluation so the same draw is resolution independent.
  Tensor xi = Tensor::matrix(k, k);
  for (double& v : xi.data()) v = rng.normal();
  const double pi = std::numbers::pi;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      if (a == 0 && b == 0) {
        xi(a, b) = 0.0;
        continue;
      }
      const double lam = pi * pi * static_cast<double>(a * a + b * b) + config.tau * config.tau;
      xi(a, b) *= std::pow(lam, -config.alpha / 2.0);
    }
  Tensor basis = Tensor::matrix(s, k);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t a = 0; a < k; ++a)
      basis(i, a) = std::cos(pi * static_cast<double>(a) * static_cast<double>(i) / static_cast<double>(s - 1));
  // field(i, j) = sum_ab basis(i, a) xi(a, b) basis(j, b); rows follow y, columns follow x.
  return matmul(matmul(basis, xi), transpose(basis));
}

Tensor threshold_coefficient(const Tensor& field, double a_plus, double a_minus) {
  Tensor a = field;
  for (double& v : a.data()) v = v >= 0.0 ? a_plus : a_minus;
  return a;
}

namespace {

double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

void check_coefficient(const Tensor& a) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1) || a.dim(0) < 3) {
    throw DimensionError("darcy coefficient must be an s x s grid with s >= 3, got " + shape_string(a.shape()));
  }
  for (double v : a.data())
    if (!(v > 0.0)) throw ConfigError("darcy coefficient must be positive everywhere");
}

}  // namespace

DarcySystem assemble_darcy(const Tensor& a, double forcing) {
  check_coefficient(a);
  const std::size_t s = a.dim(0), m = s - 2;
  const double inv_h2 = static_cast<double>((s - 1) * (s - 1));
  DarcySystem sys;
  sys.size = m * m;
  sys.rhs.assign(sys.size, forcing);
  auto index = [m](std::size_t i, std::size_t j) { return (i - 1) * m + (j - 1); };
  for (std::size_t i = 1; i + 1 < s; ++i) {
    for (std::size_t j = 1; j + 1 < s; ++j) {
      const std::size_t row = index(i, j);
      const std::pair<std::size_t, std::size_t> nbrs[] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
      double diag = 0.0;
      for (const auto& [ni, nj] : nbrs) {
        const double face = harmonic(a(i, j), a(ni, nj)) * inv_h2;
        diag += face;
        const bool interior = ni >= 1 && ni + 1 < s && nj >= 1 && nj + 1 < s;
        if (interior) sys.entries.push_back({row, index(ni, nj), -face});
      }
      sys.entries.push_back({row, row, diag});
    }
  }
  return sys;
}

Tensor solve_darcy(const Tensor& a, double forcing) {
  const DarcySystem sys = assemble_darcy(a, forcing);
  const std::size_t s = a.dim(0), m = s - 2;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(sys.entries.size());
  for (const SparseEntry& e : sys.entries)
    trip.emplace_back(static_cast<int>(e.row), static_cast<int>(e.col), e.value);
  Eigen::SparseMatrix<double> mat(static_cast<int>(sys.size), static_cast<int>(sys.size));
  mat.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> solver(mat);
  if (solver.info() != Eigen::Success) throw GenerationError("darcy factorization failed");
  const Eigen::VectorXd f = Eigen::Map<const Eigen::VectorXd>(sys.rhs.data(), static_cast<int>(sys.size));
  Eigen::VectorXd u = solver.solve(f);
  double residual = (mat * u - f).lpNorm<Eigen::Infinity>();
  for (int refine = 0; refine < 3 && residual >= 1e-10; ++refine) {
    u += solver.solve(f - mat * u);
    residual = (mat * u - f).lpNorm<Eigen::Infinity>();
  }
  if (!(residual < 1e-10)) {
    throw GenerationError("darcy solve did not converge: residual " + std::to_string(residual));
  }
  Tensor out = Tensor::matrix(s, s);
  for (std::size_t i = 1; i + 1 < s; ++i)
    for (std::size_t j = 1; j + 1 < s; ++j) out(i, j) = u(static_cast<int>((i - 1) * m + (j - 1)));
  return out;
}

double darcy_residual(const Tensor& a, const Tensor& u, double forcing) {
  const DarcySystem sys = assemble_darcy(a, forcing);
  const std::size_t s = a.dim(0), m = s - 2;
  if (u.shape() != a.shape()) throw DimensionError("darcy solution shape does not match coefficient");
  std::vector<double> au(sys.size, 0.0);
  for (const SparseEntry& e : sys.entries) au[e.row] += e.value * u(1 + e.col / m, 1 + e.col % m);
  double r = 0.0;
  for (std::size_t k = 0; k < sys.size; ++k) r = std::max(r, std::abs(au[k] - sys.rhs[k]));
  return r;
}

DarcySample generate_darcy(const DarcyConfig& config, Rng& rng) {
  Tensor a = threshold_coefficient(gaussian_random_field(config, rng), config.a_plus, config.a_minus);
  Tensor u = solve_darcy(a, config.forcing);
  return DarcySample{std::move(a), std::move(u)};
}

DarcySample generate_darcy(const DarcyConfig& config) {
  Rng rng(config.seed);
  return generate_darcy(config, rng);
}

Tensor square_grid_positions(std::size_t s) {
  Tensor pos = Tensor::matrix(s * s, 2);
  const double h = 1.0 / static_cast<double>(s - 1);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) {
      pos(i * s + j, 0) = static_cast<double>(j) * h;
      pos(i * s + j, 1) = static_cast<double>(i) * h;
    }
  return pos;
}

}  // namespace lno::data
