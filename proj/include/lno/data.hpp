#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lno/kv_config.hpp"
#include "lno/rng.hpp"
#include "lno/sample.hpp"

namespace lno::data {

// ---------------------------------------------------------------------------
// Viscous Burgers on the periodic unit interval.

struct BurgersConfig {
  double viscosity = 0.01;
  std::size_t nx = 128;  // spatial points, right endpoint excluded
  std::size_t nt = 128;  // time points on [0, 1], both endpoints included
  double period = 1.0;        // GP periodic length p
  double length_scale = 1.0;  // GP scaling factor l
  std::uint64_t seed = 0;

  void validate() const;
  void write(KvConfig& kv, const std::string& prefix = "burgers.") const;
  static BurgersConfig read(const KvConfig& kv, const std::string& prefix = "burgers.");
};

/// k(x, x') = exp(-(2 / (p l^2)) sin^2(pi |x - x'|)).
double periodic_kernel(double x, double x_prime, double period, double length_scale);

std::vector<double> spatial_grid(std::size_t nx);   // j / nx
std::vector<double> temporal_grid(std::size_t nt);  // i / (nt - 1)

/// Zero-mean GP draw on the spatial grid via Cholesky of the kernel matrix.
/// Diagonal jitter starts at 1e-10 and grows x10 up to 1e-6.
std::vector<double> sample_periodic_gp(const BurgersConfig& config, Rng& rng);
std::vector<double> sample_periodic_gp(const BurgersConfig& config);

/// Integrates u_t = nu u_xx - u u_x with periodic boundaries using a
/// dealiased (2/3 rule) pseudo-spectral discretization and classical RK4.
/// Returns the nt x nx field; row 0 is `u0` unchanged.
Tensor solve_burgers(std::span<const double> u0, const BurgersConfig& config);

// ---------------------------------------------------------------------------
// Darcy flow -div(a grad u) = f on the unit square, u = 0 on the boundary.

struct DarcyConfig {
  std::size_t s = 17;  // grid points per side, boundary included
  double forcing = 1.0;
  double a_plus = 12.0;
  double a_minus = 3.0;
  double alpha = 2.0;  // spectral decay of the random field
  double tau = 3.0;    // inverse length scale of the random field
  std::size_t modes = 16;
  std::uint64_t seed = 0;

  void validate() const;
  void write(KvConfig& kv, const std::string& prefix = "darcy.") const;
  static DarcyConfig read(const KvConfig& kv, const std::string& prefix = "darcy.");
};

struct DarcySample {
  Tensor coefficient;  // s x s
  Tensor solution;     // s x s
};

/// Smoothed Gaussian random field evaluated on the s x s grid (a cosine
/// series, so the same draw can be sampled at any resolution).
Tensor gaussian_random_field(const DarcyConfig& config, Rng& rng);
/// Thresholds the field at zero into {a_plus, a_minus}.
Tensor threshold_coefficient(const Tensor& field, double a_plus, double a_minus);

struct SparseEntry {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Five-point system over the (s-2)^2 interior nodes with harmonic-mean face
/// coefficients; unknown k is node (1 + k / (s-2), 1 + k % (s-2)).
struct DarcySystem {
  std::size_t size = 0;
  std::vector<SparseEntry> entries;
  std::vector<double> rhs;
};

DarcySystem assemble_darcy(const Tensor& coefficient, double forcing);
/// Solves the system; returns the full s x s field including zero boundary.
Tensor solve_darcy(const Tensor& coefficient, double forcing);
/// max |A u - f| over interior nodes.
double darcy_residual(const Tensor& coefficient, const Tensor& solution, double forcing);

DarcySample generate_darcy(const DarcyConfig& config, Rng& rng);
DarcySample generate_darcy(const DarcyConfig& config);

// ---------------------------------------------------------------------------
// Observation masks over an nt x nx space-time field.

struct ObservationMask {
  enum class Mode { RandomRatio, FixedGrid };
  Mode mode = Mode::RandomRatio;
  double ratio = 1.0;
  std::size_t time_step = 1;   // fixed grid: every time_step-th row
  std::size_t space_step = 1;  // fixed grid: every space_step-th column
  double t_lo = 0.0;
  double t_hi = 1.0;
  std::uint64_t seed = 0;
};

struct RowRange {
  std::size_t first = 0;
  std::size_t last = 0;  // inclusive
  std::size_t count() const { return last - first + 1; }
};

/// Rows whose cell [t_i, t_{i+1}) meets [t_lo, t_hi]:
/// floor(t_lo (nt-1)) .. floor(t_hi (nt-1)).
RowRange window_rows(std::size_t nt, double t_lo, double t_hi);

/// Flat indices (row * nx + col) selected by the mask, ascending.
std::vector<std::size_t> mask_indices(std::size_t nt, std::size_t nx, const ObservationMask& mask);

/// (x, t) positions and u values at the selected grid points.
SampleSequence apply_mask(const Tensor& field, const ObservationMask& mask);

/// Every point of rows [range.first, range.last] as an (x, t) -> u sequence.
SampleSequence field_rows(const Tensor& field, RowRange range);

// ---------------------------------------------------------------------------
// Dataset container ("LNOD").

struct SamplePair {
  SampleSequence input;
  SampleSequence output;
  bool operator==(const SamplePair&) const = default;
};

struct GridMeta {
  std::vector<std::size_t> dims;
  std::vector<double> spacing;
  bool operator==(const GridMeta&) const = default;
};

struct PdeDataset {
  std::vector<SamplePair> pairs;
  GridMeta grid;
  std::string config_echo;

  /// Throws DimensionError unless every pair shares d_pos, n and n_out.
  void validate() const;
  bool operator==(const PdeDataset&) const = default;
};

constexpr std::uint8_t kDatasetVersion = 1;

std::vector<char> encode_dataset(const PdeDataset& ds);
PdeDataset decode_dataset(std::span<const char> bytes);
void write_dataset(const PdeDataset& ds, const std::string& path);
PdeDataset read_dataset(const std::string& path);

/// Pair i uses the generator stream Rng(seed).split(i), so samples can be
/// produced in any order with identical results.
PdeDataset generate_burgers_dataset(const BurgersConfig& config, std::size_t count);
PdeDataset generate_darcy_dataset(const DarcyConfig& config, std::size_t count);

/// Burgers pair -> nt x nx field (output values reshaped).
Tensor burgers_field(const SamplePair& pair, const GridMeta& grid);
/// Positions of a full s x s grid in row-major order, columns (x, y).
Tensor square_grid_positions(std::size_t s);

}  // namespace lno::data
