#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "icumort/autodiff/tensor.hpp"
#include "icumort/survival/survival.hpp"

namespace icumort::cox {

struct FitConfig {
  int max_iter = 100;
  double tol = 1e-8;
};

/// Linear Cox model psi(x) = x . beta.
struct CoxModel {
  std::vector<double> beta;
  std::vector<std::string> covariate_names;
  std::vector<double> standard_errors;
  surv::BaselineSurvival baseline;
  bool converged = false;
  int iterations = 0;
  double log_likelihood = 0.0;  // Breslow partial log-likelihood at beta

  double risk(std::span<const double> x) const;
};

/// Newton-Raphson on the Breslow partial likelihood with step halving.
///
/// `x` is n x d (row per patient). Names default to "x0", "x1", ... when
/// empty. A rank-deficient design raises DegeneracyError naming the first
/// column that is a linear combination of earlier ones; running out of
/// iterations returns a model with `converged == false`.
CoxModel fit_coxph(const ad::Tensor& x, std::span<const surv::SurvivalRecord> records,
                   const FitConfig& config = {}, std::vector<std::string> names = {});

/// Breslow partial log-likelihood (sum over events, not averaged).
double partial_log_likelihood(const ad::Tensor& x, std::span<const surv::SurvivalRecord> records,
                              std::span<const double> beta);

struct HazardRow {
  std::string covariate;
  double beta = 0.0;
  double standard_error = 0.0;
  double hazard_ratio = 1.0;
  double ci_low = 1.0;
  double ci_high = 1.0;
  double p_value = 1.0;
};

struct HazardReport {
  std::vector<HazardRow> rows;
};

inline constexpr double kZ95 = 1.96;

/// Standard normal CDF.
double normal_cdf(double z);

/// Two-sided Wald p-value for beta / se.
double wald_p_value(double beta, double standard_error);

HazardRow hazard_row(std::string covariate, double beta, double standard_error);

/// Hazard ratios with 95% intervals and Wald p-values. Throws StateError for
/// an unconverged model.
HazardReport hazard_report(const CoxModel& model);

/// "***" below 0.001, "**" up to 0.01, "*" up to 0.05, otherwise the p-value
/// with two decimals.
std::string significance_stars(double p_value);

/// CSV with header covariate,hazard_ratio,ci_low,ci_high,p_value,stars.
void write_hazard_csv(std::ostream& out, const HazardReport& report);

}  // namespace icumort::cox
