#pragma once

#include <cstddef>

#include "icumort/autodiff/tensor.hpp"
#include "icumort/rng.hpp"

namespace icumort::ad {

/// rows x cols weights drawn uniformly from +-sqrt(6 / (fan_in + fan_out)),
/// with fan_in = rows and fan_out = cols.
Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace icumort::ad
