#include "icumort/autodiff/adam.hpp"

#include <cmath>

#include "icumort/error.hpp"

namespace icumort::ad {

AdamState make_adam_state(const ParamStore& params, const AdamConfig& config) {
  if (!(config.learning_rate > 0.0) || !(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 >= 0.0 && config.beta2 < 1.0) || !(config.epsilon > 0.0))
    throw ParameterError("Adam hyperparameters out of range");
  AdamState state;
  state.config = config;
  for (const auto& [name, p] : params) {
    state.first_moment.emplace(name, Tensor::zeros(p.shape()));
    state.second_moment.emplace(name, Tensor::zeros(p.shape()));
  }
  return state;
}

void adam_step(AdamState& state, ParamStore& params, const Gradients& grads) {
  for (const auto& [name, p] : params) {
    auto g = grads.find(name);
    if (g == grads.end()) throw DimensionError("adam_step: no gradient for parameter '" + name + "'");
    if (g->second.shape() != p.shape())
      throw DimensionError("adam_step: gradient for '" + name + "' has shape " +
                           shape_string(g->second.shape()) + ", parameter has " +
                           shape_string(p.shape()));
    auto m = state.first_moment.find(name);
    auto v = state.second_moment.find(name);
    if (m == state.first_moment.end() || v == state.second_moment.end() ||
        m->second.shape() != p.shape() || v->second.shape() != p.shape())
      throw DimensionError("adam_step: moment accumulators do not match parameter '" + name + "'");
  }

  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);

  for (auto& [name, p] : params) {
    const Tensor& g = grads.find(name)->second;
    Tensor& m = state.first_moment.find(name)->second;
    Tensor& v = state.second_moment.find(name)->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace icumort::ad
