#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "icumort/error.hpp"
#include "icumort/saps/saps2.hpp"
#include "saps_appendix.hpp"

using namespace icumort;
using saps::Category;

TEST_CASE("component examples") {
  CHECK(saps::score_component(Category::Age, 85) == 18);
  CHECK(saps::score_component(Category::HeartRate, 55) == 2);
  CHECK(saps::score_component(Category::Gcs, 15) == 0);
  CHECK(saps::score_component(Category::HeartRate, 40) == 2);
  CHECK(saps::score_component(Category::Temperature, 39) == 3);
  CHECK(saps::score_component(Category::Bun, 83.5) == 6);
  CHECK(saps::score_component(Category::Bun, 84) == 10);
}

TEST_CASE("every transcribed bin scores its published points") {
  for (const auto& bin : testing::appendix_table()) {
    CAPTURE(std::string(saps::category_name(bin.category)));
    CAPTURE(std::string(bin.label));
    for (double v : bin.samples) {
      CAPTURE(v);
      CHECK(saps::score_component(bin.category, v, bin.ventilated) == bin.points);
    }
  }
}

TEST_CASE("library table matches the transcription") {
  for (Category c : saps::all_categories()) {
    std::multiset<int> lib, ref;
    for (const auto& b : saps::bins(c)) lib.insert(b.points);
    for (const auto& b : testing::appendix_table())
      if (b.category == c && b.ventilated) ref.insert(b.points);
    if (c == Category::PaO2FiO2) ref.insert(0);  // the unventilated bin
    if (c != Category::PaO2FiO2) CHECK(lib == ref);
    CHECK(saps::max_points(c) == *ref.rbegin());
  }
}

TEST_CASE("totals") {
  const auto best = saps::score_total(testing::best_patient());
  CHECK(best.total == 0);
  const auto worst = saps::score_total(testing::worst_patient());
  CHECK(worst.total == 163);
  CHECK(worst.total == saps::kMaxTotal);
  CHECK(18 + 11 + 13 + 3 + 11 + 10 + 11 + 5 + 3 + 6 + 9 + 12 + 26 + 17 + 8 == 163);
  int max_sum = 0;
  for (Category c : saps::all_categories()) max_sum += saps::max_points(c);
  CHECK(max_sum == 163);

  auto m = testing::best_patient();
  m.age = 65;
  CHECK(saps::score_total(m).total == 12);
}

TEST_CASE("risk factor vector") {
  auto m = testing::best_patient();
  CHECK(saps::risk_factor_vector(m) == std::vector<double>(15, 0.0));
  const auto v0 = saps::risk_factor_vector(m);
  m.age = 72;
  const auto v1 = saps::risk_factor_vector(m);
  int changed = 0;
  for (std::size_t i = 0; i < 15; ++i) changed += v0[i] != v1[i];
  CHECK(changed == 1);
  CHECK(v1[0] == 15.0);

  const auto w = testing::worst_patient();
  const auto v = saps::risk_factor_vector(w);
  CHECK(std::accumulate(v.begin(), v.end(), 0.0) == saps::score_total(w).total);
  const auto raw = saps::raw_measurement_vector(w);
  CHECK(raw.size() == 15);
  CHECK(raw[0] == 90.0);
  CHECK(raw[13] == 3.0);
}

TEST_CASE("domain errors name the category") {
  auto expect = [](Category c, double v, const char* name) {
    try {
      saps::score_component(c, v);
      FAIL("expected an input error");
    } catch (const InputError& e) {
      CHECK(std::string(e.what()).find(name) != std::string::npos);
    }
  };
  expect(Category::HeartRate, -5, "heart_rate");
  expect(Category::Bun, NAN, "bun");
  expect(Category::Gcs, 2, "gcs");
  expect(Category::Gcs, 16, "gcs");
  expect(Category::Gcs, 12.5, "gcs");
  expect(Category::ChronicDisease, 4, "chronic_disease");
  expect(Category::AdmissionType, 1.5, "admission_type");
}

TEST_CASE("fuzzing only yields published point values and monotone severity") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::map<Category, std::set<int>> published;
  for (const auto& b : testing::appendix_table()) published[b.category].insert(b.points);
  const std::map<Category, double> upper = {
      {Category::Age, 110},        {Category::HeartRate, 300}, {Category::SystolicBp, 300},
      {Category::Temperature, 44}, {Category::PaO2FiO2, 600},  {Category::Bun, 200},
      {Category::UrineOutput, 5000}, {Category::Sodium, 180},  {Category::Potassium, 9},
      {Category::Bicarbonate, 45}, {Category::Bilirubin, 30},  {Category::Wbc, 60}};
  for (const auto& [c, hi] : upper)
    for (int i = 0; i < 2000; ++i) {
      const double v = u(rng) * hi;
      CHECK(published[c].count(saps::score_component(c, v)) == 1);
    }
  for (int g = 3; g <= 15; ++g) CHECK(published[Category::Gcs].count(saps::score_component(Category::Gcs, g)) == 1);

  // moving a patient one bin towards the worst never lowers the total
  auto m = testing::best_patient();
  int last = saps::score_total(m).total;
  for (double age : {45.0, 65.0, 72.0, 77.0, 85.0}) {
    m.age = age;
    const int now = saps::score_total(m).total;
    CHECK(now >= last);
    last = now;
  }
  for (int gcs : {12, 10, 7, 4}) {
    m.gcs = gcs;
    const int now = saps::score_total(m).total;
    CHECK(now >= last);
    last = now;
  }
}

TEST_CASE("enum names round-trip") {
  for (auto c : {saps::ChronicDisease::None, saps::ChronicDisease::MetastaticCancer,
                 saps::ChronicDisease::HematologicMalignancy, saps::ChronicDisease::Aids})
    CHECK(saps::chronic_disease_from_name(saps::chronic_disease_name(c)) == c);
  for (auto a : {saps::AdmissionType::ScheduledSurgical, saps::AdmissionType::Medical,
                 saps::AdmissionType::UnscheduledSurgical})
    CHECK(saps::admission_type_from_name(saps::admission_type_name(a)) == a);
  for (Category c : saps::all_categories()) CHECK(saps::category_from_name(saps::category_name(c)) == c);
  CHECK_THROWS_AS(saps::chronic_disease_from_name("flu"), InputError);
}
