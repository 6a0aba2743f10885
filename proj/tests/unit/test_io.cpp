#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "icumort/config.hpp"
#include "icumort/error.hpp"
#include "icumort/eval/cindex.hpp"
#include "icumort/io/dataset.hpp"
#include "icumort/io/synthetic.hpp"

using namespace icumort;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("icumort_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream(path) << text;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const char* kHeader = "{\"format\":\"icumort-dataset\",\"version\":1}\n";

std::string saps_row(const std::string& id, double t, int event, const std::string& extra = "") {
  std::ostringstream s;
  s << "{\"patient_id\":\"" << id << "\",\"observed_time_hours\":" << t << ",\"event\":" << event
    << ",\"saps\":[1,2,3,4,5,6,7,8,9,10,11,12,13,14,15]" << extra << "}\n";
  return s.str();
}

std::string text_of(std::size_t n) {
  std::string v = ",\"text\":[";
  for (std::size_t i = 0; i < n; ++i) v += (i ? ",0.5" : "0.5");
  return v + "]";
}

}  // namespace

TEST_CASE("loading hand-written files") {
  TempDir dir;
  SUBCASE("two patients with SAPS vectors") {
    write_text(dir.file("a.jsonl"), std::string(kHeader) + saps_row("p1", 12.5, 1) + saps_row("p2", 40, 0));
    const auto d = data::load_dataset(dir.file("a.jsonl"));
    CHECK(d.size() == 2);
    CHECK(d.cohort.size() == 2);
    CHECK(d.cohort[0].patient_id == "p1");
    CHECK(d.cohort[0].event);
    CHECK_FALSE(d.cohort[1].event);
    CHECK(d.cohort[1].observed_time == 40.0);
    CHECK(d.features[1].saps[14] == 15.0);
  }
  SUBCASE("short text vector names the row") {
    write_text(dir.file("b.jsonl"),
               std::string(kHeader) + saps_row("p1", 1, 1, text_of(768)) + saps_row("p2", 2, 1, text_of(767)));
    try {
      data::load_dataset(dir.file("b.jsonl"));
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("row 2") != std::string::npos);
      CHECK(msg.find("text") != std::string::npos);
      CHECK(msg.find("767") != std::string::npos);
    }
  }
  SUBCASE("duplicate ids") {
    write_text(dir.file("c.jsonl"), std::string(kHeader) + saps_row("p1", 1, 1) + saps_row("p1", 2, 0));
    try {
      data::load_dataset(dir.file("c.jsonl"));
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("p1") != std::string::npos);
    }
  }
  SUBCASE("death and censoring times") {
    write_text(dir.file("d.jsonl"),
               std::string(kHeader) +
                   "{\"patient_id\":\"a\",\"death_time_hours\":30,\"censor_time_hours\":50,\"saps\":[0,0,0,0,0,0,0,0,0,0,0,0,0,0,0]}\n"
                   "{\"patient_id\":\"b\",\"censor_time_hours\":20,\"saps\":[0,0,0,0,0,0,0,0,0,0,0,0,0,0,0]}\n");
    const auto d = data::load_dataset(dir.file("d.jsonl"));
    CHECK(d.cohort[0].event);
    CHECK(d.cohort[0].observed_time == 30.0);
    CHECK_FALSE(d.cohort[1].event);
  }
  SUBCASE("raw measurements are scored on load") {
    write_text(dir.file("e.jsonl"),
               std::string(kHeader) +
                   "{\"patient_id\":\"a\",\"observed_time_hours\":5,\"event\":1,\"saps_measurements\":"
                   "{\"age\":65,\"heart_rate\":80,\"systolic_bp\":120,\"temperature\":37,\"bun\":10,"
                   "\"urine_output\":2000,\"sodium\":140,\"potassium\":4,\"bicarbonate\":24,\"bilirubin\":1,"
                   "\"wbc\":8,\"gcs\":15,\"admission_type\":\"scheduled_surgical\"}}\n");
    const auto d = data::load_dataset(dir.file("e.jsonl"));
    CHECK(std::accumulate(d.features[0].saps.begin(), d.features[0].saps.end(), 0.0) == 12.0);
    CHECK(d.features[0].saps[0] == 12.0);
  }
  SUBCASE("malformed files") {
    write_text(dir.file("f.jsonl"), saps_row("p1", 1, 1));
    CHECK_THROWS_AS(data::load_dataset(dir.file("f.jsonl")), FormatError);
    write_text(dir.file("g.jsonl"), std::string(kHeader) + "{not json}\n");
    CHECK_THROWS_AS(data::load_dataset(dir.file("g.jsonl")), FormatError);
    write_text(dir.file("h.jsonl"), std::string(kHeader) + saps_row("p1", 1, 1, ",\"labels\":[0,1,2,0,0,0,0,0,0,0,0,0,0,0]"));
    CHECK_THROWS_AS(data::load_dataset(dir.file("h.jsonl")), FormatError);
    write_text(dir.file("i.jsonl"), "{\"format\":\"icumort-dataset\",\"version\":9}\n");
    CHECK_THROWS_AS(data::load_dataset(dir.file("i.jsonl")), FormatError);
    CHECK_THROWS_AS(data::load_dataset(dir.file("missing.jsonl")), FormatError);
  }
}

TEST_CASE("save and load round trip") {
  TempDir dir;
  data::SynthConfig cfg;
  cfg.n = 60;
  cfg.kind = data::SynthKind::Multimodal;
  cfg.tokens = true;
  cfg.seed = 5;
  const auto d = data::gen_synthetic(cfg).dataset;
  for (bool sidecar : {true, false}) {
    const auto path = dir.file(sidecar ? "s.jsonl" : "inline.jsonl");
    data::save_dataset(path, d, {sidecar});
    const auto back = data::load_dataset(path);
    CHECK(back == d);
    CHECK(fs::exists(data::sidecar_path(path)) == sidecar);
    // saving what was loaded reproduces the files
    const auto again = dir.file(sidecar ? "s2.jsonl" : "inline2.jsonl");
    data::save_dataset(again, back, {sidecar});
    CHECK(data::load_dataset(again) == d);
    if (sidecar) CHECK(read_bytes(data::sidecar_path(again)) == read_bytes(data::sidecar_path(path)));
  }
}

TEST_CASE("synthetic cohorts") {
  SUBCASE("no censoring means every patient dies") {
    data::SynthConfig cfg;
    cfg.n = 500;
    cfg.censoring_rate = 0.0;
    const auto d = data::gen_synthetic(cfg).dataset;
    CHECK(d.cohort.event_count() == 500);
  }
  SUBCASE("no effect gives chance concordance") {
    data::SynthConfig cfg;
    cfg.n = 2000;
    cfg.beta = {0.0, 0.0, 0.0};
    cfg.seed = 3;
    const auto r = data::gen_synthetic(cfg);
    // with beta = 0 the true risk is constant; score a pure-noise covariate
    std::vector<double> x;
    for (const auto& f : r.dataset.features) x.push_back(f.saps[0]);
    const std::vector<surv::SurvivalRecord> rec(r.dataset.cohort.records().begin(), r.dataset.cohort.records().end());
    CHECK(std::abs(eval::c_index(rec, x).value - 0.5) < 0.03);
    CHECK(eval::c_index(rec, r.true_risk).value == 0.5);
  }
  SUBCASE("true risk is informative") {
    data::SynthConfig cfg;
    cfg.n = 2000;
    cfg.beta = {1.0, -1.0};
    const auto r = data::gen_synthetic(cfg);
    const std::vector<surv::SurvivalRecord> rec(r.dataset.cohort.records().begin(), r.dataset.cohort.records().end());
    CHECK(eval::c_index(rec, r.true_risk).value > 0.7);
  }
  SUBCASE("fixed seed writes identical bytes") {
    TempDir one, two;
    data::SynthConfig cfg;
    cfg.n = 80;
    cfg.kind = data::SynthKind::Multimodal;
    cfg.seed = 19;
    for (const TempDir* dir : {&one, &two}) {
      const auto r = data::gen_synthetic(cfg);
      data::save_dataset(dir->file("cohort.jsonl"), r.dataset);
      std::ofstream truth(dir->file("truth.json"));
      data::write_truth_json(truth, cfg, r);
    }
    for (const char* f : {"cohort.jsonl", "cohort.vectors.bin", "truth.json"}) {
      CAPTURE(f);
      const auto a = read_bytes(one.file(f));
      CHECK_FALSE(a.empty());
      CHECK(a == read_bytes(two.file(f)));
    }
    cfg.seed = 20;
    data::save_dataset(two.file("cohort.jsonl"), data::gen_synthetic(cfg).dataset);
    CHECK(read_bytes(one.file("cohort.jsonl")) != read_bytes(two.file("cohort.jsonl")));
  }
  SUBCASE("multimodal shapes") {
    data::SynthConfig cfg;
    cfg.n = 30;
    cfg.kind = data::SynthKind::Multimodal;
    cfg.tokens = true;
    const auto d = data::gen_synthetic(cfg).dataset;
    for (const auto& f : d.features) {
      CHECK(f.saps.size() == 15);
      CHECK(f.text->size() == 768);
      CHECK(f.image->size() == 1024);
      CHECK(f.labels->size() == 14);
      CHECK(f.tokens->rows() == 12);
      CHECK(f.tokens->cols() == 16);
    }
  }
  SUBCASE("invalid configs") {
    data::SynthConfig cfg;
    cfg.n = 1;
    CHECK_THROWS_AS(data::validate(cfg), ConfigError);
    cfg = {};
    cfg.baseline_hazard = 0.0;
    CHECK_THROWS_AS(data::validate(cfg), ConfigError);
    cfg = {};
    cfg.censoring_rate = -1.0;
    CHECK_THROWS_AS(data::validate(cfg), ConfigError);
    cfg = {};
    cfg.beta.assign(16, 0.1);
    CHECK_THROWS_AS(data::validate(cfg), ConfigError);
  }
}

TEST_CASE("synthetic kind names") {
  CHECK(data::synth_kind_from_name("linear") == data::SynthKind::Linear);
  CHECK(data::synth_kind_from_name(data::synth_kind_name(data::SynthKind::Multimodal)) == data::SynthKind::Multimodal);
  CHECK_THROWS(data::synth_kind_from_name("cubic"));
}

TEST_CASE("labels") {
  CHECK(data::kLabelNames.back() == "Normal");
  CHECK(data::label_index("normal") == 13);
  CHECK(data::label_index(data::kLabelNames[3]) == 3);
  CHECK_THROWS_AS(data::label_index("broken bone"), InputError);
}

TEST_CASE("configuration files") {
  const auto c = config::parse_config(R"({"train": {"epochs": 40, "batch_size": 32, "seed": 3},
                                          "split": {"train_frac": 0.6, "val_frac": 0.2, "test_frac": 0.2},
                                          "bootstrap": {"replicates": 50, "threads": 2}})");
  CHECK(c.train.epochs == 40);
  CHECK(c.train.batch_size == 32);
  CHECK(c.train.seed == 3);
  CHECK(c.train.learning_rate == 0.001);
  CHECK(c.split.train_frac == 0.6);
  CHECK(c.bootstrap.replicates == 50);
  CHECK(c.bootstrap.threads == 2);
  CHECK(c.bootstrap.split.train_frac == 0.6);

  const auto defaults = config::parse_config("{}");
  CHECK(defaults.train == fusion::TrainConfig{});
  CHECK(defaults.bootstrap.replicates == 200);

  CHECK_THROWS_AS(config::parse_config(R"({"train": {"epoch": 40}})"), ConfigError);
  CHECK_THROWS_AS(config::parse_config(R"({"optimizer": {}})"), ConfigError);
  CHECK_THROWS_AS(config::parse_config(R"({"train": {"epochs": "many"}})"), ConfigError);
  CHECK_THROWS_AS(config::parse_config(R"({"split": {"train_frac": 0.9}})"), ConfigError);
  CHECK_THROWS_AS(config::parse_config("[1, 2"), ConfigError);

  const auto snap = config::snapshot(c);
  CHECK(snap == config::snapshot(config::parse_config(R"({"train": {"epochs": 40, "batch_size": 32, "seed": 3},
                                          "split": {"train_frac": 0.6, "val_frac": 0.2, "test_frac": 0.2},
                                          "bootstrap": {"replicates": 50, "threads": 2}})")));
  CHECK(snap != config::snapshot(defaults));
}
