#include "lno/sample.hpp"

#include "lno/error.hpp"

namespace lno {

SampleSequence::SampleSequence(Tensor pos, Tensor vals) : positions(std::move(pos)), values(std::move(vals)) {
  validate();
}

SampleSequence SampleSequence::positions_only(Tensor pos) {
  const std::size_t n = pos.rank() == 2 ? pos.dim(0) : 0;
  return SampleSequence(std::move(pos), Tensor::matrix(n, 0));
}

void SampleSequence::validate() const {
  if (positions.rank() != 2 || values.rank() != 2) {
    throw DimensionError("sample sequence parts must be matrices, got positions " + shape_string(positions.shape()) +
                         " and values " + shape_string(values.shape()));
  }
  if (positions.dim(0) != values.dim(0)) {
    throw DimensionError("sample sequence row mismatch: positions " + shape_string(positions.shape()) +
                         " vs values " + shape_string(values.shape()));
  }
}

}  // namespace lno
