#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icumort/autodiff/tape.hpp"

namespace icumort::surv {

/// One patient's observed outcome. Times are in hours.
struct SurvivalRecord {
  std::string patient_id;
  double observed_time = 0.0;
  bool event = false;  // true when death was observed

  friend bool operator==(const SurvivalRecord&, const SurvivalRecord&) = default;
};

/// Builds a record from raw death and censoring times: the observed time is
/// the earlier of the two, and the event flag says which one it was.
SurvivalRecord make_record(std::string patient_id, std::optional<double> death_time,
                           std::optional<double> censor_time);

/// Validates a record built elsewhere (finite, nonnegative time).
void validate_record(const SurvivalRecord& record);

/// A non-empty list of records with unique patient ids.
class Cohort {
 public:
  Cohort() = default;
  explicit Cohort(std::vector<SurvivalRecord> records);

  std::size_t size() const noexcept { return records_.size(); }
  const SurvivalRecord& operator[](std::size_t i) const { return records_[i]; }
  std::span<const SurvivalRecord> records() const noexcept { return records_; }
  std::size_t event_count() const noexcept;

  friend bool operator==(const Cohort&, const Cohort&) = default;

 private:
  std::vector<SurvivalRecord> records_;
};

std::size_t count_events(std::span<const SurvivalRecord> records) noexcept;

/// Indices j whose observed time is at least that of record `index`.
std::vector<std::size_t> risk_set(std::span<const SurvivalRecord> records, std::size_t index);

/// Negative log partial likelihood averaged over events, Breslow ties:
///   -(1/E) * sum_{i: event} [ risk_i - log sum_{j: t_j >= t_i} exp(risk_j) ]
/// Throws LikelihoodError when there are no events.
double cox_nll(std::span<const double> risks, std::span<const SurvivalRecord> records);

struct CoxLoss {
  double value = 0.0;
  std::vector<double> gradient;  // d loss / d risk_i
};

/// Loss and its gradient in one O(n log n) pass.
CoxLoss cox_nll_with_gradient(std::span<const double> risks, std::span<const SurvivalRecord> records);

/// Appends the Cox loss as a primitive on a tape. `risk`, `time` and `event`
/// are n x 1 (or 1 x n) nodes; time and event are usually non-trainable inputs
/// bound per batch. The result is a 1x1 node.
ad::NodeId cox_nll_node(ad::Tape& tape, ad::NodeId risk, ad::NodeId time, ad::NodeId event);

/// Step-function baseline survival S0 evaluated at distinct event times.
struct BaselineSurvival {
  std::vector<double> event_times;         // strictly increasing
  std::vector<double> cumulative_hazard;   // H0 at each event time
  std::vector<double> survival_values;     // exp(-H0), nonincreasing, in (0, 1]

  /// S0(t); 1 before the first event time.
  double at(double t) const;
  double hazard_at(double t) const;
};

/// Breslow estimator: H0(t) = sum_{event times t_k <= t} d_k / sum_{j in R(t_k)} exp(risk_j).
BaselineSurvival breslow_baseline(std::span<const SurvivalRecord> records, std::span<const double> risks);

/// S(t | x) = S0(t) ^ exp(risk).
double survival_prob(const BaselineSurvival& baseline, double risk, double t);

}  // namespace icumort::surv
