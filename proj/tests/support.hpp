#pragma once

// Small helpers shared by the unit and acceptance tests. The finite
// difference routine here is deliberately separate from the library's
// grad_check so the two can be compared.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "icumort/autodiff/tape.hpp"
#include "icumort/survival/survival.hpp"

namespace testing {

inline icumort::ad::Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                         double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = u(rng);
  return icumort::ad::Tensor::matrix(rows, cols, std::move(v));
}

// Central differences of a scalar tape output with respect to one input.
inline std::vector<double> central_difference(const icumort::ad::Tape& tape, icumort::ad::Bindings inputs,
                                              const std::string& output, const std::string& param,
                                              double h = 1e-5) {
  const std::size_t n = inputs.at(param).size();
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = inputs.at(param)[i];
    inputs.at(param)[i] = x0 + h;
    const double up = tape.forward(inputs).output(output).item();
    inputs.at(param)[i] = x0 - h;
    const double down = tape.forward(inputs).output(output).item();
    inputs.at(param)[i] = x0;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Cox loss by direct enumeration of risk sets; O(n^2).
inline double brute_cox_nll(const std::vector<double>& risk, const std::vector<icumort::surv::SurvivalRecord>& r) {
  double total = 0.0;
  int events = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!r[i].event) continue;
    ++events;
    double s = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j)
      if (r[j].observed_time >= r[i].observed_time) s += std::exp(risk[j]);
    total += risk[i] - std::log(s);
  }
  return -total / events;
}

inline icumort::surv::SurvivalRecord rec(const std::string& id, double t, bool event) {
  return {id, t, event};
}

}  // namespace testing
