#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "icumort/autodiff/tape.hpp"
#include "icumort/autodiff/tensor.hpp"

namespace icumort::ad {

/// Named trainable parameters, ordered by name.
using ParamStore = std::map<std::string, Tensor, std::less<>>;

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  ParamStore first_moment;
  ParamStore second_moment;
};

AdamState make_adam_state(const ParamStore& params, const AdamConfig& config = {});

/// One bias-corrected Adam update of every parameter in `params`. Each
/// parameter needs a gradient of the same shape; extra gradients are ignored.
void adam_step(AdamState& state, ParamStore& params, const Gradients& grads);

}  // namespace icumort::ad
