#include "icumort/saps/saps2.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "icumort/error.hpp"

namespace icumort::saps {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower bound inclusive, upper bound exclusive. Integer-valued table ranges
// such as "40-69" become [40, 70).
constexpr Bin kAge[] = {{0, 40, 0, "<40"},    {40, 60, 7, "40-59"},  {60, 70, 12, "60-69"},
                        {70, 75, 15, "70-74"}, {75, 80, 16, "75-79"}, {80, kInf, 18, ">=80"}};
constexpr Bin kHeartRate[] = {{0, 40, 11, "<40"},      {40, 70, 2, "40-69"},
                              {70, 120, 0, "70-119"},  {120, 160, 4, "120-159"},
                              {160, kInf, 7, ">=160"}};
constexpr Bin kSystolicBp[] = {{0, 70, 13, "<70"},
                               {70, 100, 5, "70-99"},
                               {100, 200, 0, "100-199"},
                               {200, kInf, 2, ">=200"}};
// 3 points at or above 39 C (the conventional SAPS-II direction)
constexpr Bin kTemperature[] = {{0, 39, 0, "<39"}, {39, kInf, 3, ">=39"}};
// ventilated patients only
constexpr Bin kPaO2FiO2[] = {{0, 100, 11, "<100"}, {100, 200, 9, "100-199"}, {200, kInf, 6, ">=200"}};
// 28-83 / >=84; the "28-93" printing overlaps the next bin
constexpr Bin kBun[] = {{0, 28, 0, "<28"}, {28, 84, 6, "28-83"}, {84, kInf, 10, ">=84"}};
constexpr Bin kUrine[] = {{0, 500, 11, "<500"}, {500, 1000, 4, "500-999"}, {1000, kInf, 0, ">=1000"}};
constexpr Bin kSodium[] = {{0, 125, 5, "<125"}, {125, 145, 0, "125-144"}, {145, kInf, 1, ">=145"}};
constexpr Bin kPotassium[] = {{0, 3.0, 3, "<3.0"}, {3.0, 5.0, 0, "3.0-4.9"}, {5.0, kInf, 3, ">=5.0"}};
constexpr Bin kBicarbonate[] = {{0, 15, 6, "<15"}, {15, 20, 3, "15-19"}, {20, kInf, 0, ">=20"}};
constexpr Bin kBilirubin[] = {{0, 4.0, 0, "<4.0"}, {4.0, 6.0, 4, "4.0-5.9"}, {6.0, kInf, 9, ">=6.0"}};
constexpr Bin kWbc[] = {{0, 1.0, 12, "<1.0"}, {1.0, 20.0, 0, "1.0-19.9"}, {20.0, kInf, 3, ">=20.0"}};
constexpr Bin kGcs[] = {{3, 6, 26, "<6"},   {6, 9, 13, "6-8"},   {9, 11, 7, "9-10"},
                        {11, 14, 5, "11-13"}, {14, 16, 0, "14-15"}};
constexpr Bin kChronic[] = {{0, 1, 0, "none"},
                            {1, 2, 9, "metastatic_cancer"},
                            {2, 3, 10, "hematologic_malignancy"},
                            {3, 4, 17, "aids"}};
constexpr Bin kAdmission[] = {{0, 1, 0, "scheduled_surgical"},
                              {1, 2, 6, "medical"},
                              {2, 3, 8, "unscheduled_surgical"}};

constexpr std::array<Category, kCategoryCount> kCategories = {
    Category::Age,         Category::HeartRate, Category::SystolicBp, Category::Temperature,
    Category::PaO2FiO2,    Category::Bun,       Category::UrineOutput, Category::Sodium,
    Category::Potassium,   Category::Bicarbonate, Category::Bilirubin, Category::Wbc,
    Category::Gcs,         Category::ChronicDisease, Category::AdmissionType};

constexpr std::string_view kNames[] = {
    "age",       "heart_rate",  "systolic_bp", "temperature", "pao2_fio2",
    "bun",       "urine_output", "sodium",     "potassium",   "bicarbonate",
    "bilirubin", "wbc",         "gcs",         "chronic_disease", "admission_type"};

bool integer_valued(Category c) {
  return c == Category::Gcs || c == Category::ChronicDisease || c == Category::AdmissionType;
}

}  // namespace

std::string_view category_name(Category c) { return kNames[static_cast<std::size_t>(c)]; }

Category category_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kCategoryCount; ++i)
    if (kNames[i] == name) return kCategories[i];
  throw InputError("unknown SAPS-II category '" + std::string(name) + "'");
}

const std::array<Category, kCategoryCount>& all_categories() { return kCategories; }

std::string_view chronic_disease_name(ChronicDisease c) {
  return kChronic[static_cast<std::size_t>(c)].label;
}

ChronicDisease chronic_disease_from_name(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kChronic); ++i)
    if (kChronic[i].label == name) return static_cast<ChronicDisease>(i);
  throw InputError("unknown chronic disease '" + std::string(name) +
                   "' (expected none, metastatic_cancer, hematologic_malignancy or aids)");
}

std::string_view admission_type_name(AdmissionType a) {
  return kAdmission[static_cast<std::size_t>(a)].label;
}

AdmissionType admission_type_from_name(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kAdmission); ++i)
    if (kAdmission[i].label == name) return static_cast<AdmissionType>(i);
  throw InputError("unknown admission type '" + std::string(name) +
                   "' (expected scheduled_surgical, medical or unscheduled_surgical)");
}

std::span<const Bin> bins(Category c) {
  switch (c) {
    case Category::Age: return kAge;
    case Category::HeartRate: return kHeartRate;
    case Category::SystolicBp: return kSystolicBp;
    case Category::Temperature: return kTemperature;
    case Category::PaO2FiO2: return kPaO2FiO2;
    case Category::Bun: return kBun;
    case Category::UrineOutput: return kUrine;
    case Category::Sodium: return kSodium;
    case Category::Potassium: return kPotassium;
    case Category::Bicarbonate: return kBicarbonate;
    case Category::Bilirubin: return kBilirubin;
    case Category::Wbc: return kWbc;
    case Category::Gcs: return kGcs;
    case Category::ChronicDisease: return kChronic;
    case Category::AdmissionType: return kAdmission;
  }
  throw InputError("unknown SAPS-II category");
}

int max_points(Category c) {
  int best = 0;
  for (const Bin& b : bins(c)) best = std::max(best, b.points);
  return best;
}

int score_component(Category c, double value, bool ventilated) {
  const std::string name(category_name(c));
  if (!std::isfinite(value) || value < 0.0)
    throw InputError(name + ": value must be finite and nonnegative, got " + std::to_string(value));
  if (c == Category::PaO2FiO2 && !ventilated) return 0;
  if (integer_valued(c) && value != std::floor(value))
    throw InputError(name + ": value must be an integer, got " + std::to_string(value));
  for (const Bin& b : bins(c))
    if (value >= b.lower && value < b.upper) return b.points;
  throw InputError(name + ": value " + std::to_string(value) + " is outside the scored range");
}

Score score_total(const Measurements& m) {
  const std::vector<double> raw = raw_measurement_vector(m);
  Score s;
  for (std::size_t i = 0; i < kCategoryCount; ++i) {
    const Category c = kCategories[i];
    s.components[i] = score_component(c, raw[i], c != Category::PaO2FiO2 || m.pao2_fio2.has_value());
    s.total += s.components[i];
  }
  return s;
}

std::vector<double> risk_factor_vector(const Measurements& m) {
  const Score s = score_total(m);
  return std::vector<double>(s.components.begin(), s.components.end());
}

std::vector<double> raw_measurement_vector(const Measurements& m) {
  return {m.age,
          m.heart_rate,
          m.systolic_bp,
          m.temperature,
          m.pao2_fio2.value_or(0.0),
          m.bun,
          m.urine_output,
          m.sodium,
          m.potassium,
          m.bicarbonate,
          m.bilirubin,
          m.wbc,
          static_cast<double>(m.gcs),
          static_cast<double>(static_cast<int>(m.chronic_disease)),
          static_cast<double>(static_cast<int>(m.admission_type))};
}

}  // namespace icumort::saps
