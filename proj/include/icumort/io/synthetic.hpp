#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "icumort/autodiff/tensor.hpp"
#include "icumort/io/dataset.hpp"

namespace icumort::data {

enum class SynthKind {
  Linear,     // risk = beta . saps
  Multimodal  // linear SAPS term plus nonlinear text and image terms
};

std::string_view synth_kind_name(SynthKind kind);
SynthKind synth_kind_from_name(std::string_view name);

struct SynthConfig {
  std::size_t n = 1000;
  SynthKind kind = SynthKind::Linear;
  /// Coefficients on the leading SAPS columns (the rest are zero).
  std::vector<double> beta = {0.5, -0.5, 0.25};
  double baseline_hazard = 0.01;  // events per hour at risk 0
  double censoring_rate = 0.005;  // exponential censoring, per hour; 0 = none
  std::uint64_t seed = 0;

  // multimodal cohorts
  std::size_t latent_dim = 4;
  double modality_weight = 1.0;  // scale of each nonlinear term
  double feature_noise = 0.5;    // noise added to projected features
  bool labels = true;            // 14 finding flags derived from the image latent
  bool tokens = false;           // token-embedding matrices for the graph pipeline
  std::size_t token_count = 12;
  std::size_t token_dim = 16;
};

/// Throws ConfigError for n < 2, non-positive hazard, negative censoring
/// rate, more than 15 coefficients or zero latent/token sizes.
void validate(const SynthConfig& config);

struct SynthResult {
  Dataset dataset;
  std::vector<double> true_risk;  // log relative hazard per patient
};

/// Standard-normal SAPS covariates, exponential event times with hazard
/// baseline_hazard * exp(risk) and independent exponential censoring.
SynthResult gen_synthetic(const SynthConfig& config);

/// Ground-truth record (configuration and true risks) as JSON.
void write_truth_json(std::ostream& out, const SynthConfig& config, const SynthResult& result);

/// Plain design matrix with Cox outcomes, for fitting linear models.
struct CoxSample {
  ad::Tensor x;  // n x d, standard normal
  std::vector<surv::SurvivalRecord> records;
};

CoxSample simulate_cox(std::size_t n, const std::vector<double>& beta, double baseline_hazard,
                       double censoring_rate, std::uint64_t seed);

}  // namespace icumort::data
