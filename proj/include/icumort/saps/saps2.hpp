#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace icumort::saps {

/// The fifteen SAPS-II categories, in the order used for risk-factor vectors.
enum class Category : std::size_t {
  Age,
  HeartRate,
  SystolicBp,
  Temperature,
  PaO2FiO2,
  Bun,
  UrineOutput,
  Sodium,
  Potassium,
  Bicarbonate,
  Bilirubin,
  Wbc,
  Gcs,
  ChronicDisease,
  AdmissionType,
};

inline constexpr std::size_t kCategoryCount = 15;
inline constexpr int kMaxTotal = 163;

enum class ChronicDisease { None, MetastaticCancer, HematologicMalignancy, Aids };
enum class AdmissionType { ScheduledSurgical, Medical, UnscheduledSurgical };

std::string_view category_name(Category c);
Category category_from_name(std::string_view name);
const std::array<Category, kCategoryCount>& all_categories();

std::string_view chronic_disease_name(ChronicDisease c);
ChronicDisease chronic_disease_from_name(std::string_view name);
std::string_view admission_type_name(AdmissionType a);
AdmissionType admission_type_from_name(std::string_view name);

/// Raw measurements over the first 24 ICU hours.
struct Measurements {
  double age = 0.0;              // years
  double heart_rate = 0.0;       // beats/min
  double systolic_bp = 0.0;      // mmHg
  double temperature = 0.0;      // deg C
  std::optional<double> pao2_fio2;  // mmHg; absent when not ventilated
  double bun = 0.0;              // mg/dL
  double urine_output = 0.0;     // mL/day
  double sodium = 0.0;           // mEq/L
  double potassium = 0.0;        // mEq/L
  double bicarbonate = 0.0;      // mEq/L
  double bilirubin = 0.0;        // mg/dL
  double wbc = 0.0;              // x10^3/mm^3
  int gcs = 15;                  // 3..15
  ChronicDisease chronic_disease = ChronicDisease::None;
  AdmissionType admission_type = AdmissionType::ScheduledSurgical;

  friend bool operator==(const Measurements&, const Measurements&) = default;
};

/// One row of the point table: values in [lower, upper) score `points`.
struct Bin {
  double lower;
  double upper;
  int points;
  std::string_view label;
};

/// The bins of a category, ordered by measurement value. Chronic disease and
/// admission type use the enum's integer code as the value. The PaO2/FiO2
/// table lists ventilated bins only; unventilated patients score 0.
std::span<const Bin> bins(Category c);

/// Largest point value a category can contribute.
int max_points(Category c);

/// Points for one measurement. For PaO2/FiO2, `ventilated == false` scores 0
/// regardless of `value`. Throws InputError naming the category for values
/// outside the measurement domain.
int score_component(Category c, double value, bool ventilated = true);

struct Score {
  int total = 0;
  std::array<int, kCategoryCount> components{};
};

Score score_total(const Measurements& m);

/// Per-category points as doubles, in category order.
std::vector<double> risk_factor_vector(const Measurements& m);

/// Raw measurement encoding in category order: numeric values as given,
/// PaO2/FiO2 as 0 when unventilated, enums as their integer codes.
std::vector<double> raw_measurement_vector(const Measurements& m);

}  // namespace icumort::saps
