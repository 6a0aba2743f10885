#pragma once

#include <cstdint>
#include <span>

#include "icumort/survival/survival.hpp"

namespace icumort::eval {

struct CIndexResult {
  double value = 0.0;
  std::uint64_t concordant = 0;
  std::uint64_t discordant = 0;
  std::uint64_t tied_risk = 0;
  std::uint64_t comparable_pairs = 0;

  friend bool operator==(const CIndexResult&, const CIndexResult&) = default;
};

/// Harrell's concordance index. A pair is comparable when the patient with
/// the strictly smaller observed time had an event; it is concordant when
/// that patient has the strictly higher risk, and a risk tie counts one half.
/// O(n log n). Throws MetricError when no pair is comparable.
CIndexResult c_index(std::span<const surv::SurvivalRecord> records, std::span<const double> risks);

}  // namespace icumort::eval
