#include "icumort/io/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <random>

#include <json.hpp>

#include "icumort/error.hpp"
#include "icumort/rng.hpp"

namespace icumort::data {

namespace {

constexpr std::uint64_t kCovariateStream = 1;
constexpr std::uint64_t kOutcomeStream = 2;
constexpr std::uint64_t kProjectionStream = 3;
constexpr std::uint64_t kLatentStream = 4;

double to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

std::string patient_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "P%06zu", i);
  return buf;
}

// Draws event and censoring times for one patient from an independent stream.
surv::SurvivalRecord draw_outcome(std::string id, double risk, double baseline_hazard, double censoring_rate,
                                  Rng& rng) {
  auto expo = [&](double rate) { return -std::log1p(-uniform01(rng)) / rate; };
  const double death = expo(baseline_hazard * std::exp(risk));
  std::optional<double> censor;
  if (censoring_rate > 0.0) censor = expo(censoring_rate);
  return surv::make_record(std::move(id), death, censor);
}

// Nonlinear score of a latent vector: needs the sign-symmetric part and an
// interaction, so a linear model on the features cannot capture it.
double latent_score(const std::vector<double>& z) {
  const double a = z[0];
  const double b = z.size() > 1 ? z[1] : 0.0;
  return std::abs(a) - 0.8 + 0.5 * a * b;
}

std::vector<double> project(const std::vector<double>& z, const std::vector<double>& p, std::size_t out_dim,
                            double noise, std::normal_distribution<double>& normal, Rng& rng) {
  std::vector<double> v(out_dim);
  for (std::size_t k = 0; k < out_dim; ++k) {
    double s = noise * normal(rng);
    for (std::size_t l = 0; l < z.size(); ++l) s += p[l * out_dim + k] * z[l];
    v[k] = to_float(s);
  }
  return v;
}

}  // namespace

std::string_view synth_kind_name(SynthKind kind) {
  return kind == SynthKind::Linear ? "linear" : "multimodal";
}

SynthKind synth_kind_from_name(std::string_view name) {
  if (name == "linear") return SynthKind::Linear;
  if (name == "multimodal") return SynthKind::Multimodal;
  throw ConfigError("unknown synthetic cohort kind '" + std::string(name) + "' (use linear or multimodal)");
}

void validate(const SynthConfig& c) {
  if (c.n < 2) throw ConfigError("synthetic cohort needs n >= 2");
  if (!(c.baseline_hazard > 0.0) || !std::isfinite(c.baseline_hazard))
    throw ConfigError("baseline_hazard must be positive");
  if (!(c.censoring_rate >= 0.0) || !std::isfinite(c.censoring_rate))
    throw ConfigError("censoring_rate must be nonnegative");
  if (c.beta.size() > kSapsDim) throw ConfigError("at most 15 coefficients");
  for (double b : c.beta)
    if (!std::isfinite(b)) throw ConfigError("coefficients must be finite");
  if (c.kind == SynthKind::Multimodal && c.latent_dim == 0) throw ConfigError("latent_dim must be positive");
  if (c.tokens && (c.token_count == 0 || c.token_dim == 0)) throw ConfigError("token sizes must be positive");
  if (!(c.feature_noise >= 0.0) || !std::isfinite(c.modality_weight))
    throw ConfigError("feature_noise must be nonnegative and modality_weight finite");
}

SynthResult gen_synthetic(const SynthConfig& c) {
  validate(c);
  std::normal_distribution<double> normal;
  Rng cov_rng(derive_seed(c.seed, {kCovariateStream}));
  Rng out_rng(derive_seed(c.seed, {kOutcomeStream}));
  Rng lat_rng(derive_seed(c.seed, {kLatentStream}));

  const bool multi = c.kind == SynthKind::Multimodal;
  std::vector<double> p_text, p_image, p_token;
  if (multi) {
    Rng proj(derive_seed(c.seed, {kProjectionStream}));
    const double scale = 1.0 / std::sqrt(static_cast<double>(c.latent_dim));
    p_text.resize(c.latent_dim * kTextDim);
    p_image.resize(c.latent_dim * kImageDim);
    for (double& v : p_text) v = scale * normal(proj);
    for (double& v : p_image) v = scale * normal(proj);
    if (c.tokens) {
      p_token.resize(c.latent_dim * c.token_dim);
      for (double& v : p_token) v = scale * normal(proj);
    }
  }

  SynthResult res;
  std::vector<surv::SurvivalRecord> records;
  records.reserve(c.n);
  res.dataset.features.reserve(c.n);
  res.true_risk.reserve(c.n);
  for (std::size_t i = 0; i < c.n; ++i) {
    FeatureBundle b;
    b.saps.resize(kSapsDim);
    for (double& x : b.saps) x = normal(cov_rng);
    double risk = 0.0;
    for (std::size_t k = 0; k < c.beta.size(); ++k) risk += c.beta[k] * b.saps[k];

    if (multi) {
      std::vector<double> u(c.latent_dim), v(c.latent_dim);
      for (double& x : u) x = normal(lat_rng);
      for (double& x : v) x = normal(lat_rng);
      risk += c.modality_weight * (latent_score(u) + latent_score(v));
      b.text = project(u, p_text, kTextDim, c.feature_noise, normal, lat_rng);
      b.image = project(v, p_image, kImageDim, c.feature_noise, normal, lat_rng);
      if (c.labels) {
        std::vector<double> flags(kLabelDim, 0.0);
        bool any = false;
        for (std::size_t k = 0; k + 1 < kLabelDim; ++k) {
          flags[k] = v[k % c.latent_dim] + 0.5 * normal(lat_rng) > 1.0 ? 1.0 : 0.0;
          any = any || flags[k] != 0.0;
        }
        flags[kLabelDim - 1] = any ? 0.0 : 1.0;
        b.labels = std::move(flags);
      }
      if (c.tokens) {
        std::vector<double> t;
        t.reserve(c.token_count * c.token_dim);
        for (std::size_t m = 0; m < c.token_count; ++m) {
          auto row = project(u, p_token, c.token_dim, c.feature_noise, normal, lat_rng);
          t.insert(t.end(), row.begin(), row.end());
        }
        b.tokens = ad::Tensor::matrix(c.token_count, c.token_dim, std::move(t));
      }
    } else if (c.tokens) {
      std::vector<double> t(c.token_count * c.token_dim);
      for (double& x : t) x = to_float(normal(lat_rng));
      b.tokens = ad::Tensor::matrix(c.token_count, c.token_dim, std::move(t));
    }

    records.push_back(draw_outcome(patient_id(i), risk, c.baseline_hazard, c.censoring_rate, out_rng));
    res.dataset.features.push_back(std::move(b));
    res.true_risk.push_back(risk);
  }
  res.dataset.cohort = surv::Cohort(std::move(records));
  validate_dataset(res.dataset);
  return res;
}

void write_truth_json(std::ostream& out, const SynthConfig& c, const SynthResult& r) {
  nlohmann::ordered_json j;
  j["kind"] = synth_kind_name(c.kind);
  j["n"] = c.n;
  j["seed"] = c.seed;
  j["beta"] = c.beta;
  j["baseline_hazard"] = c.baseline_hazard;
  j["censoring_rate"] = c.censoring_rate;
  if (c.kind == SynthKind::Multimodal) {
    j["latent_dim"] = c.latent_dim;
    j["modality_weight"] = c.modality_weight;
    j["feature_noise"] = c.feature_noise;
    j["risk_function"] = "beta . saps + w * (g(u) + g(v)), g(z) = |z0| - 0.8 + 0.5 z0 z1";
  }
  j["true_risk"] = r.true_risk;
  out << j.dump(2) << '\n';
}

CoxSample simulate_cox(std::size_t n, const std::vector<double>& beta, double baseline_hazard,
                       double censoring_rate, std::uint64_t seed) {
  if (n < 2 || beta.empty()) throw ConfigError("simulate_cox needs n >= 2 and at least one coefficient");
  if (!(baseline_hazard > 0.0) || !(censoring_rate >= 0.0)) throw ConfigError("rates must be positive");
  std::normal_distribution<double> normal;
  Rng cov_rng(derive_seed(seed, {kCovariateStream}));
  Rng out_rng(derive_seed(seed, {kOutcomeStream}));
  const std::size_t d = beta.size();
  std::vector<double> x(n * d);
  CoxSample s;
  s.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double risk = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      x[i * d + k] = normal(cov_rng);
      risk += beta[k] * x[i * d + k];
    }
    s.records.push_back(draw_outcome(patient_id(i), risk, baseline_hazard, censoring_rate, out_rng));
  }
  s.x = ad::Tensor::matrix(n, d, std::move(x));
  return s;
}

}  // namespace icumort::data
