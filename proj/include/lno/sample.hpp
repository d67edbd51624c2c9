#pragma once

#include "lno/tensor.hpp"

namespace lno {

/// Samples of a function in geometric space: one row per sample, positions
/// (spatial coordinates, optionally followed by time) next to the physical
/// values. Query sets carry positions only (`values` has zero columns).
struct SampleSequence {
  Tensor positions;  // N x d_pos
  Tensor values;     // N x n

  SampleSequence() = default;
  SampleSequence(Tensor pos, Tensor vals);
  static SampleSequence positions_only(Tensor pos);

  std::size_t size() const { return positions.rank() == 2 ? positions.dim(0) : 0; }
  std::size_t pos_dim() const { return positions.rank() == 2 ? positions.dim(1) : 0; }
  std::size_t value_dim() const { return values.rank() == 2 ? values.dim(1) : 0; }

  /// Throws DimensionError unless both parts are matrices with equal row counts.
  void validate() const;

  bool operator==(const SampleSequence&) const = default;
};

}  // namespace lno
