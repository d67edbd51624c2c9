#include <algorithm>
#include <cmath>
#include <numeric>

#include "lno/data.hpp"
#include "lno/error.hpp"

namespace lno::data {

RowRange window_rows(std::size_t nt, double t_lo, double t_hi) {
  if (nt < 2) throw MaskError("time window needs nt >= 2");
  if (!(t_lo >= 0.0) || !(t_hi <= 1.0) || !(t_lo <= t_hi)) {
    throw MaskError("time window [" + format_double(t_lo) + ", " + format_double(t_hi) + "] is not inside [0, 1]");
  }
  const double scale = static_cast<double>(nt - 1);
  RowRange r;
  r.first = static_cast<std::size_t>(std::floor(t_lo * scale));
  r.last = std::min(static_cast<std::size_t>(std::floor(t_hi * scale)), nt - 1);
  return r;
}

std::vector<std::size_t> mask_indices(std::size_t nt, std::size_t nx, const ObservationMask& mask) {
  if (nx == 0) throw MaskError("mask needs at least one spatial column");
  const RowRange rows = window_rows(nt, mask.t_lo, mask.t_hi);
  std::vector<std::size_t> out;
  if (mask.mode == ObservationMask::Mode::FixedGrid) {
    if (mask.time_step == 0 || mask.space_step == 0) throw MaskError("fixed-grid sampling intervals must be positive");
    for (std::size_t i = rows.first; i <= rows.last; i += mask.time_step)
      for (std::size_t j = 0; j < nx; j += mask.space_step) out.push_back(i * nx + j);
  } else {
    if (!(mask.ratio > 0.0) || !(mask.ratio <= 1.0)) {
      throw MaskError("observation ratio " + format_double(mask.ratio) + " is not in (0, 1]");
    }
    const std::size_t total = rows.count() * nx;
    const auto take = static_cast<std::size_t>(std::floor(mask.ratio * static_cast<double>(total)));
    std::vector<std::size_t> all(total);
    std::iota(all.begin(), all.end(), rows.first * nx);
    // Partial Fisher-Yates: the first `take` slots form a uniform draw without replacement.
    Rng rng(mask.seed);
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t pick = k + static_cast<std::size_t>(rng.below(total - k));
      std::swap(all[k], all[pick]);
    }
    out.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(out.begin(), out.end());
  }
  if (out.empty()) throw MaskError("observation mask selects no points");
  return out;
}

namespace {

SampleSequence gather(const Tensor& field, const std::vector<std::size_t>& idx) {
  const std::size_t nt = field.dim(0), nx = field.dim(1);
  Tensor pos = Tensor::matrix(idx.size(), 2);
  Tensor val = Tensor::matrix(idx.size(), 1);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t i = idx[k] / nx, j = idx[k] % nx;
    pos(k, 0) = static_cast<double>(j) / static_cast<double>(nx);
    pos(k, 1) = static_cast<double>(i) / static_cast<double>(nt - 1);
    val(k, 0) = field(i, j);
  }
  return SampleSequence(std::move(pos), std::move(val));
}

void check_field(const Tensor& field) {
  if (field.rank() != 2 || field.dim(0) < 2 || field.dim(1) == 0) {
    throw DimensionError("space-time field must be nt x nx with nt >= 2, got " + shape_string(field.shape()));
  }
}

}  // namespace

SampleSequence apply_mask(const Tensor& field, const ObservationMask& mask) {
  check_field(field);
  return gather(field, mask_indices(field.dim(0), field.dim(1), mask));
}

SampleSequence field_rows(const Tensor& field, RowRange range) {
  check_field(field);
  if (range.first > range.last || range.last >= field.dim(0)) throw MaskError("row range is outside the field");
  const std::size_t nx = field.dim(1);
  std::vector<std::size_t> idx(range.count() * nx);
  std::iota(idx.begin(), idx.end(), range.first * nx);
  return gather(field, idx);
}

}  // namespace lno::data
