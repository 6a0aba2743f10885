#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "icumort/autodiff/tape.hpp"

namespace icumort::ad {

struct ElementCheck {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
  bool pass = true;
};

struct ParamCheck {
  std::string name;
  std::vector<ElementCheck> elements;
  bool pass = true;
  double max_relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  bool pass = true;
  double max_relative_error = 0.0;
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  // relative error is |a - n| / max(|a|, |n|, magnitude_floor)
  double magnitude_floor = 1e-5;
  ForwardOptions forward;  // keep training=false unless masks are seeded identically
};

/// Compares reverse-mode gradients of a scalar output against central finite
/// differences, element by element, for every trainable input.
GradCheckReport grad_check(const Tape& tape, const Bindings& inputs, const std::string& output,
                           const GradCheckOptions& options = {});

}  // namespace icumort::ad
