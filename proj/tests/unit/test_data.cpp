#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "doctest.h"
#include "lno/binary_io.hpp"
#include "lno/data.hpp"
#include "lno/error.hpp"

using namespace lno;
using namespace lno::data;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// Dense Gaussian elimination with partial pivoting.
std::vector<double> dense_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

double spatial_mean(const Tensor& f, std::size_t row) {
  double s = 0.0;
  for (double v : f.row(row)) s += v;
  return s / static_cast<double>(f.dim(1));
}

}  // namespace

TEST_CASE("periodic kernel") {
  for (double x : {0.0, 0.1, 0.5, 0.99}) CHECK(periodic_kernel(x, x, 1.0, 1.0) == 1.0);
  CHECK(std::abs(periodic_kernel(0.0, 1.0, 1.0, 1.0) - 1.0) < 1e-15);
  CHECK(std::abs(periodic_kernel(0.2, 0.7, 1.0, 1.0) - std::exp(-2.0)) < 1e-15);
  CHECK(periodic_kernel(0.1, 0.3, 1.0, 1.0) == periodic_kernel(0.3, 0.1, 1.0, 1.0));
}

TEST_CASE("GP draws reproduce the kernel covariance") {
  BurgersConfig cfg;
  cfg.nx = 16;
  Rng rng(21);
  const std::size_t a = 0, b = 5, draws = 10000;
  double saa = 0.0, sab = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const std::vector<double> u = sample_periodic_gp(cfg, rng);
    saa += u[a] * u[a];
    sab += u[a] * u[b];
    sbb += u[b] * u[b];
  }
  const double n = static_cast<double>(draws);
  const std::vector<double> x = spatial_grid(cfg.nx);
  CHECK(std::abs(saa / n - 1.0) < 0.05);
  CHECK(std::abs(sbb / n - 1.0) < 0.05);
  CHECK(std::abs(sab / n - periodic_kernel(x[a], x[b], 1.0, 1.0)) < 0.05);
}

TEST_CASE("GP Cholesky succeeds across grid sizes and seeds") {
  for (std::size_t nx : {2, 3, 16, 64, 128, 256}) {
    BurgersConfig cfg;
    cfg.nx = nx;
    for (std::uint64_t seed = 0; seed < 100; seed += (nx >= 128 ? 33 : 1)) {
      cfg.seed = seed;
      const std::vector<double> u = sample_periodic_gp(cfg);
      REQUIRE(u.size() == nx);
      for (double v : u) REQUIRE(std::isfinite(v));
    }
  }
}

TEST_CASE("Burgers trivial solutions") {
  BurgersConfig cfg;
  cfg.nx = 32;
  cfg.nt = 16;
  const Tensor zero = solve_burgers(std::vector<double>(32, 0.0), cfg);
  for (double v : zero.data()) CHECK(v == 0.0);
  const Tensor c = solve_burgers(std::vector<double>(32, 0.7), cfg);
  for (double v : c.data()) CHECK(std::abs(v - 0.7) < 1e-12);
  CHECK_THROWS_AS(solve_burgers(std::vector<double>(31, 0.0), cfg), DimensionError);
}

TEST_CASE("Burgers conserves the mean and dissipates energy") {
  BurgersConfig cfg;
  cfg.nx = 64;
  cfg.nt = 33;
  for (std::uint64_t seed : {1, 2, 3}) {
    cfg.seed = seed;
    const std::vector<double> u0 = sample_periodic_gp(cfg);
    const Tensor f = solve_burgers(u0, cfg);
    for (std::size_t j = 0; j < cfg.nx; ++j) CHECK(f(0, j) == u0[j]);
    const double m0 = spatial_mean(f, 0);
    double prev_energy = 1e300;
    for (std::size_t i = 0; i < cfg.nt; ++i) {
      CHECK(std::abs(spatial_mean(f, i) - m0) < 1e-8);
      double e = 0.0;
      for (double v : f.row(i)) e += v * v;
      e /= static_cast<double>(cfg.nx);
      CHECK(e <= prev_energy + 1e-8);
      prev_energy = e;
    }
  }
}

TEST_CASE("Burgers grid refinement") {
  BurgersConfig fine;
  fine.nx = 256;
  fine.nt = 33;
  fine.seed = 4;
  const std::vector<double> u_fine = sample_periodic_gp(fine);
  BurgersConfig coarse = fine;
  coarse.nx = 64;
  std::vector<double> u_coarse(64);
  for (std::size_t j = 0; j < 64; ++j) u_coarse[j] = u_fine[4 * j];
  const Tensor a = solve_burgers(u_fine, fine);
  const Tensor b = solve_burgers(u_coarse, coarse);
  // Spectrally interpolate the coarse solution onto the fine grid.
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < fine.nt; ++i)
    for (std::size_t j = 0; j < 256; ++j) {
      const double x = static_cast<double>(j) / 256.0;
      double v = 0.0;
      for (std::size_t k = 0; k < 64; ++k) {
        const double xk = static_cast<double>(k) / 64.0;
        const double d = x - xk;
        // Periodic sinc (Dirichlet kernel) for an even number of points.
        const double s = std::sin(std::numbers::pi * 64.0 * d);
        const double w = std::abs(d) < 1e-15 ? 1.0 : s / (64.0 * std::tan(std::numbers::pi * d));
        v += w * b(i, k);
      }
      num += (v - a(i, j)) * (v - a(i, j));
      den += a(i, j) * a(i, j);
    }
  CHECK(std::sqrt(num / den) < 1e-3);
}

TEST_CASE("Burgers rejects unusable states") {
  BurgersConfig cfg;
  cfg.nx = 8;
  cfg.nt = 3;
  std::vector<double> u0(8, 0.5);
  u0[3] = std::nan("");
  CHECK_THROWS_AS(solve_burgers(u0, cfg), SolverError);
  u0.assign(8, 1e200);
  CHECK_THROWS_AS(solve_burgers(u0, cfg), SolverError);
}

TEST_CASE("Darcy Poisson case matches the dense oracle") {
  const std::size_t s = 9, m = s - 2;
  const Tensor a = Tensor::matrix(s, s, 1.0);
  const Tensor u = solve_darcy(a, 1.0);
  const double inv_h2 = static_cast<double>((s - 1) * (s - 1));
  std::vector<std::vector<double>> mat(m * m, std::vector<double>(m * m, 0.0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t r = i * m + j;
      mat[r][r] = 4.0 * inv_h2;
      if (i > 0) mat[r][r - m] = -inv_h2;
      if (i + 1 < m) mat[r][r + m] = -inv_h2;
      if (j > 0) mat[r][r - 1] = -inv_h2;
      if (j + 1 < m) mat[r][r + 1] = -inv_h2;
    }
  const std::vector<double> ref = dense_solve(mat, std::vector<double>(m * m, 1.0));
  double worst = 0.0, peak = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      worst = std::max(worst, std::abs(u(i + 1, j + 1) - ref[i * m + j]));
      peak = std::max(peak, u(i + 1, j + 1));
    }
  CHECK(worst < 1e-10);
  CHECK(u(s / 2, s / 2) == peak);
  for (std::size_t k = 0; k < s; ++k) {
    CHECK(u(0, k) == 0.0);
    CHECK(u(s - 1, k) == 0.0);
    CHECK(u(k, 0) == 0.0);
    CHECK(u(k, s - 1) == 0.0);
  }
}

TEST_CASE("Darcy random coefficients: symmetry, residual, maximum principle") {
  DarcyConfig cfg;
  cfg.s = 17;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cfg.seed = seed;
    const DarcySample smp = generate_darcy(cfg);
    std::set<double> levels(smp.coefficient.data().begin(), smp.coefficient.data().end());
    CHECK(levels.size() == 2);
    CHECK(levels.count(12.0) == 1);
    CHECK(levels.count(3.0) == 1);
    for (double v : smp.solution.data()) CHECK(v >= 0.0);
    CHECK(darcy_residual(smp.coefficient, smp.solution, cfg.forcing) < 1e-9);

    const DarcySystem sys = assemble_darcy(smp.coefficient, cfg.forcing);
    std::vector<std::vector<double>> dense(sys.size, std::vector<double>(sys.size, 0.0));
    for (const SparseEntry& e : sys.entries) dense[e.row][e.col] += e.value;
    for (std::size_t i = 0; i < sys.size; ++i)
      for (std::size_t j = 0; j < i; ++j) REQUIRE(dense[i][j] == dense[j][i]);
  }
  CHECK_THROWS_AS(solve_darcy(Tensor::matrix(5, 5, -1.0), 1.0), ConfigError);
  DarcyConfig bad;
  bad.s = 2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("random field is resolution consistent") {
  DarcyConfig lo, hi;
  lo.s = 9;
  hi.s = 17;
  Rng r1(5), r2(5);
  const Tensor a = gaussian_random_field(lo, r1), b = gaussian_random_field(hi, r2);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 9; ++j) CHECK(std::abs(a(i, j) - b(2 * i, 2 * j)) < 1e-12);
}

TEST_CASE("window rows") {
  const RowRange r = window_rows(128, 0.25, 0.75);
  CHECK(r.count() == 65);
  CHECK(window_rows(128, 0.0, 1.0).count() == 128);
  CHECK(window_rows(32, 0.25, 0.75).count() == 17);
  CHECK_THROWS_AS(window_rows(128, 0.8, 0.2), MaskError);
}

TEST_CASE("mask counts") {
  ObservationMask full;
  CHECK(mask_indices(128, 128, full).size() == 128 * 128);

  ObservationMask grid;
  grid.mode = ObservationMask::Mode::FixedGrid;
  grid.time_step = 16;
  grid.space_step = 16;
  grid.t_lo = 0.25;
  grid.t_hi = 0.75;
  CHECK(mask_indices(128, 128, grid).size() == 40);

  ObservationMask sparse;
  sparse.ratio = 0.1;
  sparse.t_lo = 0.25;
  sparse.t_hi = 0.75;
  sparse.seed = 9;
  const std::vector<std::size_t> idx = mask_indices(128, 128, sparse);
  CHECK(idx.size() == 832);
  CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 832);
  CHECK(idx == mask_indices(128, 128, sparse));
  const RowRange rows = window_rows(128, 0.25, 0.75);
  for (std::size_t k : idx) {
    CHECK(k / 128 >= rows.first);
    CHECK(k / 128 <= rows.last);
  }
  sparse.seed = 10;
  CHECK(idx != mask_indices(128, 128, sparse));

  ObservationMask tiny;
  tiny.ratio = 1e-6;
  CHECK_THROWS_AS(mask_indices(8, 8, tiny), MaskError);
  tiny.ratio = 1.5;
  CHECK_THROWS_AS(mask_indices(8, 8, tiny), MaskError);
}

TEST_CASE("apply_mask positions lie on the source grid") {
  BurgersConfig cfg;
  cfg.nx = 32;
  cfg.nt = 32;
  cfg.seed = 3;
  const Tensor field = solve_burgers(sample_periodic_gp(cfg), cfg);
  ObservationMask mask;
  mask.ratio = 0.2;
  mask.t_lo = 0.25;
  mask.t_hi = 0.75;
  const SampleSequence obs = apply_mask(field, mask);
  CHECK(obs.pos_dim() == 2);
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const double j = obs.positions(k, 0) * 32.0, i = obs.positions(k, 1) * 31.0;
    REQUIRE(std::abs(j - std::round(j)) < 1e-9);
    REQUIRE(std::abs(i - std::round(i)) < 1e-9);
    CHECK(obs.values(k, 0) == field(static_cast<std::size_t>(std::round(i)), static_cast<std::size_t>(std::round(j))));
  }
  const SampleSequence all = field_rows(field, {0, 31});
  CHECK(all.size() == 32 * 32);
}

TEST_CASE("dataset container round trip and failures") {
  BurgersConfig cfg;
  cfg.nx = 16;
  cfg.nt = 8;
  cfg.seed = 11;
  const PdeDataset ds = generate_burgers_dataset(cfg, 3);
  CHECK(ds.pairs.size() == 3);
  CHECK(ds.grid.dims == std::vector<std::size_t>{8, 16});
  const std::string path = temp_path("lno_dataset_test.lnod");
  write_dataset(ds, path);
  const PdeDataset back = read_dataset(path);
  CHECK(back == ds);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(bit_identical(back.pairs[i].output.values, ds.pairs[i].output.values));
    CHECK(bit_identical(back.pairs[i].input.positions, ds.pairs[i].input.positions));
  }

  const std::vector<char> bytes = encode_dataset(ds);
  CHECK(std::vector<char>(read_file(path)) == bytes);
  for (std::size_t cut : {std::size_t{3}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1}) {
    const std::vector<char> trunc(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    try {
      (void)decode_dataset(trunc);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
  }
  std::vector<char> bad = bytes;
  bad[1] = 'X';
  try {
    (void)decode_dataset(bad);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("expected \"LNOD\"") != std::string::npos);
  }
  bad = bytes;
  bad[4] = 9;
  CHECK_THROWS_AS(decode_dataset(bad), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("datasets are reproducible and order independent") {
  DarcyConfig cfg;
  cfg.s = 9;
  cfg.seed = 4;
  const PdeDataset a = generate_darcy_dataset(cfg, 3), b = generate_darcy_dataset(cfg, 3);
  CHECK(encode_dataset(a) == encode_dataset(b));
  const PdeDataset two = generate_darcy_dataset(cfg, 2);
  CHECK(two.pairs[1] == a.pairs[1]);
  cfg.seed = 5;
  CHECK_FALSE(generate_darcy_dataset(cfg, 1).pairs[0] == a.pairs[0]);
  CHECK(a.pairs[0].input.pos_dim() == 2);
  CHECK(a.pairs[0].input.size() == 81);

  PdeDataset mixed = a;
  mixed.pairs[1].output.values = Tensor::matrix(81, 2);
  CHECK_THROWS_AS(mixed.validate(), DimensionError);
}
