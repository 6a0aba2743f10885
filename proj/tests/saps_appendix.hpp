#pragma once

// The SAPS-II point table transcribed by hand, one entry per published bin,
// with sample values at the bin's edges and inside it. Two rows follow the
// conventional SAPS-II reading: temperature scores 3 at or above 39 C, and
// the middle BUN bin ends at 83.

#include <vector>

#include "icumort/saps/saps2.hpp"

namespace testing {

struct AppendixBin {
  icumort::saps::Category category;
  const char* label;
  int points;
  std::vector<double> samples;
  bool ventilated = true;
};

inline const std::vector<AppendixBin>& appendix_table() {
  using C = icumort::saps::Category;
  static const std::vector<AppendixBin> table = {
      {C::Age, "<40", 0, {0, 18, 39.9}},
      {C::Age, "40-59", 7, {40, 50, 59.9}},
      {C::Age, "60-69", 12, {60, 65, 69.9}},
      {C::Age, "70-74", 15, {70, 72, 74.9}},
      {C::Age, "75-79", 16, {75, 77, 79.9}},
      {C::Age, ">=80", 18, {80, 85, 104}},
      {C::HeartRate, "<40", 11, {0, 25, 39.9}},
      {C::HeartRate, "40-69", 2, {40, 55, 69.9}},
      {C::HeartRate, "70-119", 0, {70, 90, 119.9}},
      {C::HeartRate, "120-159", 4, {120, 140, 159.9}},
      {C::HeartRate, ">=160", 7, {160, 190, 250}},
      {C::SystolicBp, "<70", 13, {0, 50, 69.9}},
      {C::SystolicBp, "70-99", 5, {70, 85, 99.9}},
      {C::SystolicBp, "100-199", 0, {100, 150, 199.9}},
      {C::SystolicBp, ">=200", 2, {200, 240}},
      {C::Temperature, "<39", 0, {30, 37, 38.99}},
      {C::Temperature, ">=39", 3, {39, 40.5}},
      {C::PaO2FiO2, "<100", 11, {0, 60, 99.9}},
      {C::PaO2FiO2, "100-199", 9, {100, 150, 199.9}},
      {C::PaO2FiO2, ">=200", 6, {200, 450}},
      {C::PaO2FiO2, "no ventilation", 0, {0, 80, 400}, false},
      {C::Bun, "<28", 0, {0, 15, 27.9}},
      {C::Bun, "28-83", 6, {28, 50, 83.9}},
      {C::Bun, ">=84", 10, {84, 93, 150}},
      {C::UrineOutput, "<500", 11, {0, 250, 499}},
      {C::UrineOutput, "500-999", 4, {500, 750, 999}},
      {C::UrineOutput, ">=1000", 0, {1000, 2500}},
      {C::Sodium, "<125", 5, {100, 124.9}},
      {C::Sodium, "125-144", 0, {125, 140, 144.9}},
      {C::Sodium, ">=145", 1, {145, 160}},
      {C::Potassium, "<3.0", 3, {1.5, 2.99}},
      {C::Potassium, "3.0-4.9", 0, {3.0, 4.0, 4.99}},
      {C::Potassium, ">=5.0", 3, {5.0, 6.5}},
      {C::Bicarbonate, "<15", 6, {5, 14.9}},
      {C::Bicarbonate, "15-19", 3, {15, 17, 19.9}},
      {C::Bicarbonate, ">=20", 0, {20, 28}},
      {C::Bilirubin, "<4.0", 0, {0, 1.2, 3.99}},
      {C::Bilirubin, "4.0-5.9", 4, {4.0, 5.0, 5.99}},
      {C::Bilirubin, ">=6.0", 9, {6.0, 12}},
      {C::Wbc, "<1.0", 12, {0, 0.5, 0.99}},
      {C::Wbc, "1.0-19.9", 0, {1.0, 8, 19.99}},
      {C::Wbc, ">=20.0", 3, {20, 35}},
      {C::Gcs, "14-15", 0, {14, 15}},
      {C::Gcs, "11-13", 5, {11, 12, 13}},
      {C::Gcs, "9-10", 7, {9, 10}},
      {C::Gcs, "6-8", 13, {6, 7, 8}},
      {C::Gcs, "<6", 26, {3, 4, 5}},
      {C::ChronicDisease, "none", 0, {0}},
      {C::ChronicDisease, "metastatic cancer", 9, {1}},
      {C::ChronicDisease, "hematologic malignancy", 10, {2}},
      {C::ChronicDisease, "AIDS", 17, {3}},
      {C::AdmissionType, "scheduled surgical", 0, {0}},
      {C::AdmissionType, "medical", 6, {1}},
      {C::AdmissionType, "unscheduled surgical", 8, {2}},
  };
  return table;
}

// A patient in every category's zero-point bin.
inline icumort::saps::Measurements best_patient() {
  icumort::saps::Measurements m;
  m.age = 30;
  m.heart_rate = 80;
  m.systolic_bp = 120;
  m.temperature = 37;
  m.pao2_fio2.reset();
  m.bun = 10;
  m.urine_output = 1500;
  m.sodium = 140;
  m.potassium = 4.0;
  m.bicarbonate = 24;
  m.bilirubin = 1.0;
  m.wbc = 8;
  m.gcs = 15;
  m.chronic_disease = icumort::saps::ChronicDisease::None;
  m.admission_type = icumort::saps::AdmissionType::ScheduledSurgical;
  return m;
}

// A patient in every category's maximum-point bin.
inline icumort::saps::Measurements worst_patient() {
  icumort::saps::Measurements m;
  m.age = 90;
  m.heart_rate = 30;
  m.systolic_bp = 50;
  m.temperature = 40;
  m.pao2_fio2 = 80;
  m.bun = 100;
  m.urine_output = 200;
  m.sodium = 120;
  m.potassium = 2.5;
  m.bicarbonate = 10;
  m.bilirubin = 8;
  m.wbc = 0.5;
  m.gcs = 3;
  m.chronic_disease = icumort::saps::ChronicDisease::Aids;
  m.admission_type = icumort::saps::AdmissionType::UnscheduledSurgical;
  return m;
}

}  // namespace testing
