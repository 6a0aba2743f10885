#include "icumort/survival/survival.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "icumort/error.hpp"

namespace icumort::surv {

namespace {

// Indices sorted by observed time, ties broken by index so every pass over the
// risk sets visits patients in the same order.
std::vector<std::size_t> order_by_time(std::span<const SurvivalRecord> records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].observed_time < records[b].observed_time;
  });
  return order;
}

struct EventGroup {
  double time = 0.0;
  std::size_t first = 0, last = 0;  // [first, last) into the ascending order
  double events = 0.0;
  double risk_sum = 0.0;            // sum of exp(risk - shift) over the risk set
};

// Groups of tied observed times (ascending) with their shifted risk-set sums.
std::vector<EventGroup> risk_groups(std::span<const SurvivalRecord> records,
                                    std::span<const double> risks,
                                    const std::vector<std::size_t>& order, double shift) {
  std::vector<EventGroup> groups;
  const std::size_t n = order.size();
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    EventGroup g;
    g.time = records[order[i]].observed_time;
    g.first = i;
    while (j < n && records[order[j]].observed_time == g.time) {
      if (records[order[j]].event) g.events += 1.0;
      ++j;
    }
    g.last = j;
    groups.push_back(g);
    i = j;
  }
  // risk set of a group = every patient from that group onward
  double running = 0.0;
  for (std::size_t k = groups.size(); k-- > 0;) {
    for (std::size_t p = groups[k].last; p-- > groups[k].first;)
      running += std::exp(risks[order[p]] - shift);
    groups[k].risk_sum = running;
  }
  return groups;
}

void check_lengths(std::span<const double> risks, std::span<const SurvivalRecord> records) {
  if (risks.size() != records.size())
    throw DimensionError("got " + std::to_string(risks.size()) + " risks for " +
                         std::to_string(records.size()) + " records");
  for (double r : risks)
    if (!std::isfinite(r)) throw InputError("risk scores must be finite");
}

double max_of(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  return m;
}

std::vector<SurvivalRecord> records_from_tensors(const ad::Tensor& time, const ad::Tensor& event) {
  if (time.size() != event.size())
    throw DimensionError("cox_nll: time and event tensors differ in length");
  std::vector<SurvivalRecord> out(time.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].observed_time = time[i];
    out[i].event = event[i] != 0.0;
  }
  return out;
}

}  // namespace

SurvivalRecord make_record(std::string patient_id, std::optional<double> death_time,
                           std::optional<double> censor_time) {
  if (!death_time && !censor_time)
    throw InputError("record '" + patient_id + "' has neither a death nor a censoring time");
  for (const auto& t : {death_time, censor_time})
    if (t && (std::isnan(*t) || *t < 0.0))
      throw InputError("record '" + patient_id + "' has a negative or undefined time");

  SurvivalRecord r;
  r.patient_id = std::move(patient_id);
  if (death_time && (!censor_time || *death_time <= *censor_time)) {
    r.observed_time = *death_time;
    r.event = true;
  } else {
    r.observed_time = *censor_time;
    r.event = false;
  }
  validate_record(r);
  return r;
}

void validate_record(const SurvivalRecord& record) {
  if (!std::isfinite(record.observed_time) || record.observed_time < 0.0)
    throw InputError("record '" + record.patient_id + "' needs a finite, nonnegative observed time");
}

Cohort::Cohort(std::vector<SurvivalRecord> records) : records_(std::move(records)) {
  if (records_.empty()) throw InputError("a cohort needs at least one record");
  std::unordered_set<std::string> seen;
  for (const auto& r : records_) {
    validate_record(r);
    if (!seen.insert(r.patient_id).second)
      throw InputError("duplicate patient id '" + r.patient_id + "'");
  }
}

std::size_t Cohort::event_count() const noexcept { return count_events(records_); }

std::size_t count_events(std::span<const SurvivalRecord> records) noexcept {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const auto& r) { return r.event; }));
}

std::vector<std::size_t> risk_set(std::span<const SurvivalRecord> records, std::size_t index) {
  if (index >= records.size()) throw ContractError("risk_set index out of range");
  std::vector<std::size_t> out;
  const double t = records[index].observed_time;
  for (std::size_t j = 0; j < records.size(); ++j)
    if (records[j].observed_time >= t) out.push_back(j);
  return out;
}

CoxLoss cox_nll_with_gradient(std::span<const double> risks, std::span<const SurvivalRecord> records) {
  check_lengths(risks, records);
  const std::size_t events = count_events(records);
  if (events == 0) throw LikelihoodError("partial likelihood is undefined without events");

  const double shift = max_of(risks);
  const auto order = order_by_time(records);
  const auto groups = risk_groups(records, risks, order, shift);
  const double inv_events = 1.0 / static_cast<double>(events);

  CoxLoss out;
  out.gradient.assign(records.size(), 0.0);
  double sum = 0.0;
  double hazard = 0.0;  // running sum of d_k / S_k over event times so far
  for (const auto& g : groups) {
    if (g.events > 0.0) {
      const double log_denominator = shift + std::log(g.risk_sum);
      for (std::size_t p = g.first; p < g.last; ++p) {
        std::size_t i = order[p];
        if (records[i].event) sum += risks[i] - log_denominator;
      }
      hazard += g.events / g.risk_sum;
    }
    for (std::size_t p = g.first; p < g.last; ++p) {
      std::size_t k = order[p];
      const double expected = std::exp(risks[k] - shift) * hazard;
      out.gradient[k] = -inv_events * ((records[k].event ? 1.0 : 0.0) - expected);
    }
  }
  out.value = -sum * inv_events;
  return out;
}

double cox_nll(std::span<const double> risks, std::span<const SurvivalRecord> records) {
  return cox_nll_with_gradient(risks, records).value;
}

ad::NodeId cox_nll_node(ad::Tape& tape, ad::NodeId risk, ad::NodeId time, ad::NodeId event) {
  static const auto op = std::make_shared<const ad::CustomOp>(ad::CustomOp{
      "cox_nll",
      [](ad::CustomOp::Inputs in) {
        const auto records = records_from_tensors(*in[1], *in[2]);
        return ad::Tensor::unchecked({1, 1}, {cox_nll(in[0]->values(), records)});
      },
      [](ad::CustomOp::Inputs in, const ad::Tensor&, const ad::Tensor& grad) {
        const auto records = records_from_tensors(*in[1], *in[2]);
        CoxLoss loss = cox_nll_with_gradient(in[0]->values(), records);
        for (double& g : loss.gradient) g *= grad[0];
        std::vector<ad::Tensor> out(3);
        out[0] = ad::Tensor::unchecked(in[0]->shape(), std::move(loss.gradient));
        return out;
      }});
  return tape.custom(op, {risk, time, event});
}

double BaselineSurvival::at(double t) const {
  auto it = std::upper_bound(event_times.begin(), event_times.end(), t);
  if (it == event_times.begin()) return 1.0;
  return survival_values[static_cast<std::size_t>(it - event_times.begin()) - 1];
}

double BaselineSurvival::hazard_at(double t) const {
  auto it = std::upper_bound(event_times.begin(), event_times.end(), t);
  if (it == event_times.begin()) return 0.0;
  return cumulative_hazard[static_cast<std::size_t>(it - event_times.begin()) - 1];
}

BaselineSurvival breslow_baseline(std::span<const SurvivalRecord> records, std::span<const double> risks) {
  check_lengths(risks, records);
  if (count_events(records) == 0) throw LikelihoodError("baseline hazard is undefined without events");

  const double shift = max_of(risks);
  const auto order = order_by_time(records);
  const auto groups = risk_groups(records, risks, order, shift);

  BaselineSurvival out;
  double cumulative = 0.0;
  for (const auto& g : groups) {
    if (g.events == 0.0) continue;
    // d / (e^shift * S) without forming e^shift
    cumulative += std::exp(std::log(g.events) - shift - std::log(g.risk_sum));
    out.event_times.push_back(g.time);
    out.cumulative_hazard.push_back(cumulative);
    out.survival_values.push_back(std::max(std::exp(-cumulative), std::numeric_limits<double>::min()));
  }
  return out;
}

double survival_prob(const BaselineSurvival& baseline, double risk, double t) {
  if (std::isnan(t) || t < 0.0) throw ContractError("survival_prob needs t >= 0");
  const double s0 = baseline.at(t);
  if (s0 >= 1.0) return 1.0;
  const double s = std::pow(s0, std::exp(risk));
  return std::clamp(s, std::numeric_limits<double>::min(), 1.0);
}

}  // namespace icumort::surv
