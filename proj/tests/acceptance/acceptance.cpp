// Acceptance checks; prints one PASS/FAIL line per criterion.
//
//   acceptance <icumort-cli> <graph-file> [AC1 AC2 ...]

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "icumort/config.hpp"
#include "icumort/coxph/coxph.hpp"
#include "icumort/eval/bootstrap.hpp"
#include "icumort/eval/cindex.hpp"
#include "icumort/fusion/fusion.hpp"
#include "icumort/gcn/gcn.hpp"
#include "icumort/io/synthetic.hpp"
#include "icumort/saps/saps2.hpp"
#include "saps_appendix.hpp"
#include "support.hpp"

using namespace icumort;
namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

std::string g_cli;
std::string g_graph;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// --- AC1 ------------------------------------------------------------------

// Worst relative error between backward and central differences over every
// trainable input of the tape.
double worst_gradient_error(const ad::Tape& tape, const ad::Bindings& in, const std::string& output) {
  const auto grads = tape.forward(in).backward(output);
  double worst = 0.0;
  for (const auto& name : tape.trainable_names()) {
    const auto fd = testing::central_difference(tape, in, output, name, 1e-5);
    const auto& g = grads.at(name);
    for (std::size_t i = 0; i < fd.size(); ++i) worst = std::max(worst, testing::relative_error(g[i], fd[i], 1e-6));
  }
  return worst;
}

data::Dataset small_cohort(std::size_t n, std::mt19937_64& rng, std::size_t text, std::size_t image) {
  std::normal_distribution<double> nd;
  std::bernoulli_distribution coin(0.3), ev(0.7);
  std::uniform_real_distribution<double> time(1.0, 50.0);
  std::vector<surv::SurvivalRecord> r;
  std::vector<data::FeatureBundle> f;
  for (std::size_t i = 0; i < n; ++i) {
    data::FeatureBundle b;
    b.saps.resize(15);
    for (double& v : b.saps) v = nd(rng);
    b.labels = std::vector<double>(14);
    for (double& v : *b.labels) v = coin(rng) ? 1.0 : 0.0;
    b.text = std::vector<double>(text);
    for (double& v : *b.text) v = nd(rng);
    b.image = std::vector<double>(image);
    for (double& v : *b.image) v = nd(rng);
    // integer times make tied event times common
    r.push_back(testing::rec("p" + std::to_string(i), std::floor(time(rng) / 5.0), ev(rng)));
    f.push_back(std::move(b));
  }
  if (surv::count_events(r) == 0) r[0].event = true;
  return {surv::Cohort(std::move(r)), std::move(f)};
}

Outcome ac1() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  double worst = 0.0;
  std::map<std::string, int> kinds;
  int failed = 0;
  for (int trial = 0; trial < 100; ++trial) {
    double err = 0.0;
    std::string kind;
    switch (trial % 5) {
      case 0: {  // branch MLPs, average fusion, head and Cox loss end to end
        kind = "fusion";
        fusion::ModalitySet set;
        set.variant = "check";
        set.branches = {{fusion::Modality::Saps, 15, 6, 0.5}};
        const int extra = trial / 5 % 4;
        if (extra == 1 || extra == 3) set.branches.push_back({fusion::Modality::Text, 9, 5, 0.5});
        if (extra >= 2) set.branches.push_back({fusion::Modality::Image, 7, 5, 0.5});
        if (extra == 0) set.branches.push_back({fusion::Modality::Labels, 14, 5, 0.5});
        fusion::FusionNetwork net(set, rng());
        const auto d = small_cohort(24, rng, 9, 7);
        auto in = net.bind_batch(d, d.all_rows());
        // nonzero biases so that ReLU sees both signs
        for (auto& [name, t] : in)
          if (name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0)
            t = testing::random_tensor(t.rows(), t.cols(), rng, -0.3, 0.3);
        err = worst_gradient_error(net.tape(), in, "loss");
        break;
      }
      case 1: {  // branch MLP alone
        kind = "branch";
        ad::Tape tape;
        const auto x = tape.input("x");
        const auto w = tape.input("W", true);
        const auto b = tape.input("b", true);
        const auto target = tape.input("target");
        const auto h = tape.relu(tape.add(tape.matmul(x, w), b));
        tape.set_output("loss", tape.sum(tape.mul(h, target)));
        const std::size_t in_dim = 3 + trial % 7, out_dim = 2 + trial % 5;
        const ad::Bindings bind{{"x", testing::random_tensor(10, in_dim, rng)},
                                {"W", testing::random_tensor(in_dim, out_dim, rng, -1, 1)},
                                {"b", testing::random_tensor(1, out_dim, rng, -0.5, 0.5)},
                                {"target", testing::random_tensor(10, out_dim, rng)}};
        err = worst_gradient_error(tape, bind, "loss");
        break;
      }
      case 2: {  // fusion head over averaged and SAPS hidden features
        kind = "head";
        ad::Tape tape;
        const auto a = tape.input("h_text"), c = tape.input("h_image"), s = tape.input("h_saps");
        const auto w = tape.input("head.W", true), b = tape.input("head.b", true);
        const auto fused = tape.concat_cols({tape.average({a, c}), s});
        const auto risk = tape.add(tape.matmul(fused, w), b);
        tape.set_output("loss", surv::cox_nll_node(tape, risk, tape.input("time"), tape.input("event")));
        const auto cohort = small_cohort(20, rng, 1, 1);
        std::vector<double> times, events;
        for (const auto& r : cohort.cohort.records()) {
          times.push_back(r.observed_time);
          events.push_back(r.event ? 1.0 : 0.0);
        }
        const ad::Bindings bind{{"h_text", testing::random_tensor(20, 4, rng, 0, 2)},
                                {"h_image", testing::random_tensor(20, 4, rng, 0, 2)},
                                {"h_saps", testing::random_tensor(20, 3, rng, 0, 2)},
                                {"head.W", testing::random_tensor(7, 1, rng, -1, 1)},
                                {"head.b", testing::random_tensor(1, 1, rng)},
                                {"time", ad::Tensor::column(times)},
                                {"event", ad::Tensor::column(events)}};
        err = worst_gradient_error(tape, bind, "loss");
        break;
      }
      case 3: {  // both GCN layers
        kind = "gcn";
        ad::Tape tape;
        const auto nodes = gcn::build_gcn(tape);
        tape.set_output("loss", tape.sum(tape.mul(tape.log(nodes.z), tape.input("target"))));
        const std::size_t n = 3 + trial % 6;
        std::bernoulli_distribution edge(0.4);
        ad::Tensor adj = ad::Tensor::zeros({n, n});
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = i + 1; j < n; ++j)
            if (edge(rng)) adj(i, j) = adj(j, i) = 1.0;
        const auto p = gcn::init_params(n, 5, 6, 3, 3, rng());
        const ad::Bindings bind{{"gcn.a_hat", gcn::normalize_adjacency(adj)},
                                {"gcn.h0", testing::random_tensor(n, 5, rng)},
                                {"gcn.w0", p.w0},
                                {"gcn.b0", testing::random_tensor(1, 6, rng, -0.3, 0.3)},
                                {"gcn.w1", p.w1},
                                {"gcn.b1", testing::random_tensor(1, 3, rng, -0.3, 0.3)},
                                {"target", testing::random_tensor(n, 3, rng, 0, 1)}};
        err = worst_gradient_error(tape, bind, "loss");
        break;
      }
      default: {  // Cox loss with respect to the risks themselves
        kind = "cox";
        ad::Tape tape;
        const auto risk = tape.input("risk", true);
        tape.set_output("loss", surv::cox_nll_node(tape, risk, tape.input("time"), tape.input("event")));
        const auto cohort = small_cohort(5 + trial % 40, rng, 1, 1);
        std::vector<double> times, events;
        for (const auto& r : cohort.cohort.records()) {
          times.push_back(r.observed_time);
          events.push_back(r.event ? 1.0 : 0.0);
        }
        const ad::Bindings bind{{"risk", testing::random_tensor(times.size(), 1, rng)},
                                {"time", ad::Tensor::column(times)},
                                {"event", ad::Tensor::column(events)}};
        err = worst_gradient_error(tape, bind, "loss");
      }
    }
    ++kinds[kind];
    worst = std::max(worst, err);
    if (!(err <= 1e-4)) ++failed;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = failed == 0 && secs < 60.0;
  o.detail = "100 trials (" + std::to_string(kinds["fusion"]) + " fusion, " + std::to_string(kinds["branch"]) +
             " branch, " + std::to_string(kinds["head"]) + " head, " + std::to_string(kinds["gcn"]) + " gcn, " +
             std::to_string(kinds["cox"]) + " cox), " + std::to_string(failed) + " over 1e-4, max rel err " +
             fmt("%.2e", worst) + ", " + fmt("%.1f", secs) + " s";
  return o;
}

// --- AC2 ------------------------------------------------------------------

Outcome ac2() {
  std::mt19937_64 rng(2002);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> coarse(0, 3);
  std::bernoulli_distribution ev(0.6);
  int mismatches = 0, cohorts = 0;
  while (cohorts < 500) {
    const std::size_t n = 2 + rng() % 49;
    const int distinct = cohorts % 2 ? 6 : 1000;
    std::vector<surv::SurvivalRecord> r;
    std::vector<double> risk(n);
    for (std::size_t i = 0; i < n; ++i) {
      r.push_back(testing::rec("p" + std::to_string(i), 1 + rng() % distinct, ev(rng)));
      risk[i] = cohorts % 3 == 0 ? coarse(rng) : nd(rng);
    }
    double conc = 0, disc = 0, tied = 0, comp = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (!r[i].event || !(r[i].observed_time < r[j].observed_time)) continue;
        ++comp;
        if (risk[i] > risk[j])
          ++conc;
        else if (risk[i] < risk[j])
          ++disc;
        else
          ++tied;
      }
    if (comp == 0) continue;  // metric undefined; not a cohort for this check
    ++cohorts;
    const auto c = eval::c_index(r, risk);
    if (c.concordant != conc || c.discordant != disc || c.tied_risk != tied || c.comparable_pairs != comp) ++mismatches;
  }
  std::vector<surv::SurvivalRecord> r;
  std::vector<double> perfect, flat(20, 1.0);
  for (int i = 0; i < 20; ++i) {
    r.push_back(testing::rec("p" + std::to_string(i), i + 1, true));
    perfect.push_back(-i);
  }
  const double one = eval::c_index(r, perfect).value, half = eval::c_index(r, flat).value;
  Outcome o;
  o.pass = mismatches == 0 && one == 1.0 && half == 0.5;
  o.detail = "500 cohorts, " + std::to_string(mismatches) + " count mismatches; perfect " + fmt("%.4f", one) +
             ", constant " + fmt("%.4f", half);
  return o;
}

// --- AC3 ------------------------------------------------------------------

Outcome ac3() {
  const auto t0 = Clock::now();
  const std::vector<double> truth{1.0, -0.5, 0.0, 0.25, -0.75};
  std::vector<int> covered(truth.size(), 0);
  double worst = 0.0;
  int far = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto s = data::simulate_cox(2000, truth, 0.01, 0.005, seed);
    const auto m = cox::fit_coxph(s.x, s.records);
    if (!m.converged) {
      ++far;
      continue;
    }
    const auto rows = cox::hazard_report(m).rows;
    for (std::size_t k = 0; k < truth.size(); ++k) {
      const double e = std::abs(m.beta[k] - truth[k]);
      worst = std::max(worst, e);
      if (!(e < 0.1)) ++far;
      const double hr = std::exp(truth[k]);
      if (rows[k].ci_low <= hr && hr <= rows[k].ci_high) ++covered[k];
    }
  }
  const double secs = seconds_since(t0);
  const int min_cov = *std::min_element(covered.begin(), covered.end());
  Outcome o;
  o.pass = far == 0 && min_cov >= 18 && secs < 30.0;
  std::string cov;
  for (int c : covered) cov += (cov.empty() ? "" : "/") + std::to_string(c);
  o.detail = "20 seeds x 5 coefficients, max |err| " + fmt("%.4f", worst) + ", coverage per coefficient " + cov +
             " of 20, " + fmt("%.1f", secs) + " s";
  return o;
}

// --- AC4 ------------------------------------------------------------------

Outcome ac4() {
  int wrong = 0, samples = 0;
  for (const auto& bin : testing::appendix_table())
    for (double v : bin.samples) {
      ++samples;
      if (saps::score_component(bin.category, v, bin.ventilated) != bin.points) ++wrong;
    }
  int sum_max = 0;
  for (auto c : saps::all_categories()) {
    int m = 0;
    for (const auto& b : saps::bins(c)) m = std::max(m, b.points);
    sum_max += m;
  }
  const int worst = saps::score_total(testing::worst_patient()).total;
  const int best = saps::score_total(testing::best_patient()).total;
  Outcome o;
  o.pass = wrong == 0 && sum_max == 163 && worst == 163 && best == 0;
  o.detail = std::to_string(testing::appendix_table().size()) + " bins, " + std::to_string(samples) + " samples, " +
             std::to_string(wrong) + " wrong; sum of maxima " + std::to_string(sum_max) + ", worst patient " +
             std::to_string(worst) + ", best patient " + std::to_string(best);
  return o;
}

// --- AC5 ------------------------------------------------------------------

Outcome ac5() {
  int unequal = 0, compared = 0;
  for (std::uint64_t seed : {1ull, 42ull, 777ull, 20240101ull}) {
    data::SynthConfig sc;
    sc.n = 400;
    sc.seed = seed;
    sc.labels = false;
    const auto d = data::gen_synthetic(sc).dataset;
    const auto rows = d.all_rows();
    fusion::TrainConfig cfg;
    cfg.seed = seed;
    cfg.epochs = 30;
    const auto set = fusion::model_variant("saps_risk_factors").with_dropout(cfg.dropout);
    fusion::FusionNetwork net(set, fusion::init_seed_for(cfg));
    fusion::DeepSurvMlp mlp(15, 15, cfg.dropout, fusion::init_seed_for(cfg));
    auto same = [&] {
      const auto a = net.predict(d, rows), b = mlp.predict(d, rows);
      ++compared;
      if (a.size() != b.size() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) ++unequal;
    };
    same();
    const std::vector<std::size_t> tr(rows.begin(), rows.begin() + 320), va(rows.begin() + 320, rows.end());
    fusion::train_model(net, d, tr, va, cfg);
    fusion::train_model(mlp, d, tr, va, cfg);
    same();
  }
  Outcome o;
  o.pass = unequal == 0;
  o.detail = std::to_string(compared) + " risk vectors (4 seeds, before and after training), " +
             std::to_string(unequal) + " differ bitwise";
  return o;
}

// --- AC6 ------------------------------------------------------------------

Outcome ac6() {
  const auto t0 = Clock::now();
  data::SynthConfig sc;
  sc.n = 1000;
  sc.kind = data::SynthKind::Multimodal;
  sc.seed = 606;
  const auto d = data::gen_synthetic(sc).dataset;

  fusion::TrainConfig cfg;  // protocol defaults
  eval::BootstrapConfig bc;
  bc.replicates = 50;
  bc.base_seed = 6060;
  std::map<std::string, eval::BootstrapSummary> s;
  for (const char* v : {"multimodal_text_image", "saps+image", "saps_risk_factors"})
    s[v] = eval::bootstrap_run(d, eval::recipe_for(v, cfg), bc);
  const auto& mm = s["multimodal_text_image"];
  const auto& one = s["saps+image"];
  const auto& base = s["saps_risk_factors"];
  const auto cmp = eval::compare_models(mm, base, eval::kDefaultPermutations, bc.base_seed);
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = mm.mean > one.mean && one.mean > base.mean && cmp.p_value <= 0.05 && secs < 900.0;
  o.detail = "B=50 mean C-index multimodal " + fmt("%.4f", mm.mean) + " > saps+image " + fmt("%.4f", one.mean) +
             " > saps-only " + fmt("%.4f", base.mean) + "; multimodal vs saps-only p = " + fmt("%.2g", cmp.p_value) +
             " " + cmp.stars + ", " + fmt("%.0f", secs) + " s";
  return o;
}

// --- AC7 ------------------------------------------------------------------

Outcome ac7() {
  const json expected = json::parse(R"({
    "train": {"epochs": 250, "batch_size": 72, "dropout": 0.5, "learning_rate": 0.001,
              "early_stop_patience": 10, "seed": 0},
    "split": {"train_frac": 0.7, "val_frac": 0.1, "test_frac": 0.2},
    "bootstrap": {"replicates": 200, "threads": 1},
    "variants": {
      "saps_scores": {"score_only": true, "branches": ["saps 15->15"], "fused_dim": 0},
      "saps_risk_factors": {"score_only": false, "branches": ["saps 15->15"], "fused_dim": 15},
      "saps+labels": {"score_only": false, "branches": ["saps 15->15", "labels 14->14"], "fused_dim": 29},
      "saps+transformer": {"score_only": false, "branches": ["saps 15->15", "text 768->32"], "fused_dim": 47},
      "saps+gcn": {"score_only": false, "branches": ["saps 15->15", "gcn 224->32"], "fused_dim": 47},
      "saps+image": {"score_only": false, "branches": ["saps 15->15", "image 1024->32"], "fused_dim": 47},
      "multimodal_text_image": {"score_only": false,
                                "branches": ["saps 15->15", "text 768->32", "image 1024->32"], "fused_dim": 47},
      "multimodal_gcn_image": {"score_only": false,
                               "branches": ["saps 15->15", "gcn 224->32", "image 1024->32"], "fused_dim": 47}
    }
  })");
  const config::RunConfig defaults;
  const json got = json::parse(config::snapshot(defaults));
  std::vector<std::string> diffs;
  for (const auto& op : json::diff(expected, got)) diffs.push_back(op.at("path").get<std::string>());
  // the structs themselves, independent of the rendering
  const bool fields = defaults.bootstrap.replicates == 200 && defaults.split.train_frac == 0.7 &&
                      defaults.split.val_frac == 0.1 && defaults.split.test_frac == 0.2 &&
                      defaults.train.epochs == 250 && defaults.train.batch_size == 72 &&
                      defaults.train.dropout == 0.5 && defaults.train.learning_rate == 0.001;
  Outcome o;
  o.pass = diffs.empty() && fields;
  o.detail = diffs.empty() ? "snapshot matches (B=200, 70/10/20, 250 epochs, batch 72, dropout 0.5, lr 0.001, "
                             "15->15, 14->14, 768->32, 1024->32)"
                           : "snapshot differs at " + diffs.front();
  if (!fields) o.detail += "; default structs differ";
  return o;
}

// --- AC8 ------------------------------------------------------------------

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = g_cli + " " + args + " >>" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome ac8() {
  const fs::path root = fs::temp_directory_path() / ("icumort_ac8_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::vector<std::string> steps = {
      "synth --kind multimodal --tokens --n 200 --seed 8 --out cohort.jsonl --truth truth.json",
      "gcn-features --seed 8 --data cohort.jsonl --graph " + g_graph + " --out graph.jsonl",
      "fit-cox --data cohort.jsonl --out cox.json",
      "hazard-report --model cox.json --out hazards.csv",
      "saps-score --in patients.csv --out scores.csv",
      "train --seed 8 --data graph.jsonl --variant multimodal_gcn_image --epochs 8 --patience 3 --out net.ckpt "
      "--log train.csv",
      "evaluate --seed 8 --data graph.jsonl --model net.ckpt --part test --out eval.json",
      "bootstrap --seed 8 --data graph.jsonl --variant multimodal_gcn_image --epochs 4 --patience 2 --b 3 "
      "--threads 2 --out boot_mm.json --replicates boot_mm.csv",
      "bootstrap --seed 8 --data graph.jsonl --variant saps_scores --b 3 --out boot_saps.json",
      "compare --seed 8 --a boot_mm.json --b boot_saps.json --permutations 5000 --out compare.csv",
  };
  int failures = 0;
  for (const char* run : {"run1", "run2"}) {
    const fs::path dir = root / run;
    fs::create_directories(dir);
    std::ofstream(dir / "patients.csv")
        << "patient_id,age,heart_rate,systolic_bp,temperature,pao2_fio2,bun,urine_output,sodium,potassium,"
           "bicarbonate,bilirubin,wbc,gcs,chronic_disease,admission_type\n"
           "A1,67,130,95,39.2,180,40,700,130,3.5,18,2.0,12,11,none,medical\n"
           "A2,45,88,118,37.1,,14,1800,141,4.1,25,0.7,9,15,none,scheduled_surgical\n";
    for (const auto& step : steps) {
      const std::string cmd = "cd " + dir.string() + " && " + g_cli + " " + step + " >>log.txt 2>&1";
      const int status = std::system(cmd.c_str());
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) ++failures;
    }
  }
  std::size_t files = 0, differ = 0;
  std::string first_diff;
  for (const auto& e : fs::directory_iterator(root / "run1")) {
    const auto name = e.path().filename();
    if (name == "log.txt" || name == "patients.csv") continue;
    ++files;
    if (!fs::exists(root / "run2" / name) || slurp(e.path()) != slurp(root / "run2" / name)) {
      ++differ;
      if (first_diff.empty()) first_diff = name.string();
    }
  }
  fs::remove_all(root);
  Outcome o;
  o.pass = failures == 0 && differ == 0 && files >= 15;
  o.detail = std::to_string(steps.size()) + " commands x 2 runs, " + std::to_string(failures) + " failed; " +
             std::to_string(files) + " artifacts compared, " + std::to_string(differ) + " differ" +
             (first_diff.empty() ? "" : " (first: " + first_diff + ")");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: %s <icumort-cli> <graph-file> [AC...]\n", argv[0]);
    return 2;
  }
  g_cli = fs::absolute(argv[1]).string();
  g_graph = fs::absolute(argv[2]).string();
  std::set<std::string> only(argv + 3, argv + argc);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks = {
      {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4},
      {"AC5", ac5}, {"AC6", ac6}, {"AC7", ac7}, {"AC8", ac8}};
  int failed = 0;
  for (const auto& [name, fn] : checks) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s %s %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
