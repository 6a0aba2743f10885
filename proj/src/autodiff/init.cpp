#include "icumort/autodiff/init.hpp"

#include <cmath>
#include <vector>

namespace icumort::ad {

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> v(rows * cols);
  for (double& x : v) x = (2.0 * uniform01(rng) - 1.0) * bound;
  return Tensor::matrix(rows, cols, std::move(v));
}

}  // namespace icumort::ad
