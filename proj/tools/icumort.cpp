// Command-line front end: scoring, Cox fitting, network training,
// evaluation, bootstrap experiments and synthetic data.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "icumort/config.hpp"
#include "icumort/coxph/coxph.hpp"
#include "icumort/error.hpp"
#include "icumort/eval/bootstrap.hpp"
#include "icumort/eval/cindex.hpp"
#include "icumort/fusion/fusion.hpp"
#include "icumort/gcn/gcn.hpp"
#include "icumort/io/dataset.hpp"
#include "icumort/io/synthetic.hpp"
#include "icumort/rng.hpp"
#include "icumort/saps/saps2.hpp"

using namespace icumort;
using json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kTrainSplitStream = 0x5B1;
constexpr std::uint64_t kGcnStream = 0x6C1;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// Writes to `path`, or to stdout when the path is empty or "-".
template <class F>
void emit(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  write(out);
  if (!out) throw InputError("failed writing '" + path + "'");
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  return in;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError(what + ": '" + s + "' is not a number");
  }
}

std::vector<std::string> saps_column_names() {
  std::vector<std::string> names;
  for (auto c : saps::all_categories()) names.emplace_back(saps::category_name(c));
  return names;
}

// Training options shared by train and bootstrap; each flag overrides the
// configuration file when given.
struct TrainFlags {
  std::string config_path;
  std::optional<int> epochs, batch_size, patience;
  std::optional<double> dropout, learning_rate;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--epochs", epochs, "Maximum training epochs");
    cmd->add_option("--batch-size", batch_size, "Mini-batch size");
    cmd->add_option("--dropout", dropout, "Branch dropout rate");
    cmd->add_option("--lr", learning_rate, "Adam learning rate");
    cmd->add_option("--patience", patience, "Early-stopping patience in epochs");
  }

  config::RunConfig resolve() const {
    config::RunConfig c = config_path.empty() ? config::RunConfig{} : config::load_config(config_path);
    if (epochs) c.train.epochs = *epochs;
    if (batch_size) c.train.batch_size = *batch_size;
    if (dropout) c.train.dropout = *dropout;
    if (learning_rate) c.train.learning_rate = *learning_rate;
    if (patience) c.train.early_stop_patience = *patience;
    fusion::validate(c.train);
    return c;
  }
};

std::size_t gcn_dim_of(const data::Dataset& d) {
  for (const auto& b : d.features)
    if (b.gcn) return b.gcn->size();
  return fusion::kDefaultGcnFeatureDim;
}

// ---------------------------------------------------------------------------

int run_saps_score(const std::string& in_path, const std::string& out_path) {
  auto in = open_in(in_path);
  std::string line;
  if (!std::getline(in, line)) throw InputError("'" + in_path + "' is empty");
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  std::vector<std::string> required = {"patient_id"};
  for (const auto& n : saps_column_names()) required.push_back(n);
  for (const auto& n : required)
    if (!col.count(n)) throw InputError("'" + in_path + "' lacks column '" + n + "'");

  std::ostringstream out;
  out << "patient_id,total";
  for (const auto& n : saps_column_names()) out << ',' << n;
  out << '\n';
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    const std::string where = in_path + " line " + std::to_string(line_no);
    auto cell = [&](const std::string& name) -> const std::string& {
      const std::size_t i = col.at(name);
      if (i >= cells.size()) throw InputError(where + ": missing value for '" + name + "'");
      return cells[i];
    };
    auto num = [&](const std::string& name) { return parse_number(cell(name), where + " field '" + name + "'"); };

    saps::Measurements m;
    m.age = num("age");
    m.heart_rate = num("heart_rate");
    m.systolic_bp = num("systolic_bp");
    m.temperature = num("temperature");
    if (!cell("pao2_fio2").empty()) m.pao2_fio2 = num("pao2_fio2");
    m.bun = num("bun");
    m.urine_output = num("urine_output");
    m.sodium = num("sodium");
    m.potassium = num("potassium");
    m.bicarbonate = num("bicarbonate");
    m.bilirubin = num("bilirubin");
    m.wbc = num("wbc");
    const double gcs = num("gcs");
    if (gcs != std::floor(gcs)) throw InputError(where + ": gcs must be an integer");
    m.gcs = static_cast<int>(gcs);
    try {
      m.chronic_disease = saps::chronic_disease_from_name(cell("chronic_disease"));
      m.admission_type = saps::admission_type_from_name(cell("admission_type"));
      const auto s = saps::score_total(m);
      out << cell("patient_id") << ',' << s.total;
      for (int p : s.components) out << ',' << p;
      out << '\n';
    } catch (const InputError& e) {
      throw InputError(where + ": " + e.what());
    }
  }
  emit(out_path, [&](std::ostream& o) { o << out.str(); });
  return 0;
}

int run_fit_cox(const std::string& data_path, const std::string& out_path, const cox::FitConfig& fit) {
  const auto data = data::load_dataset(data_path);
  std::vector<double> x;
  for (const auto& b : data.features) x.insert(x.end(), b.saps.begin(), b.saps.end());
  const auto model = cox::fit_coxph(ad::Tensor::matrix(data.size(), data::kSapsDim, std::move(x)),
                                    data.cohort.records(), fit, saps_column_names());
  json j;
  j["covariates"] = model.covariate_names;
  j["beta"] = model.beta;
  j["standard_errors"] = model.standard_errors;
  j["converged"] = model.converged;
  j["iterations"] = model.iterations;
  j["log_likelihood"] = model.log_likelihood;
  j["baseline"] = {{"event_times", model.baseline.event_times},
                   {"cumulative_hazard", model.baseline.cumulative_hazard}};
  emit(out_path, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
  if (!model.converged) std::cerr << "warning: Cox fit did not converge in " << model.iterations << " iterations\n";
  return 0;
}

int run_hazard_report(const std::string& model_path, const std::string& out_path) {
  auto in = open_in(model_path);
  cox::CoxModel model;
  try {
    const auto j = nlohmann::json::parse(in);
    model.covariate_names = j.at("covariates").get<std::vector<std::string>>();
    model.beta = j.at("beta").get<std::vector<double>>();
    model.standard_errors = j.at("standard_errors").get<std::vector<double>>();
    model.converged = j.at("converged").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("model file '" + model_path + "': " + e.what());
  }
  if (model.beta.size() != model.covariate_names.size() || model.beta.size() != model.standard_errors.size())
    throw FormatError("model file '" + model_path + "': coefficient arrays differ in length");
  const auto report = cox::hazard_report(model);
  emit(out_path, [&](std::ostream& o) { cox::write_hazard_csv(o, report); });
  return 0;
}

eval::Split training_split(const data::Dataset& data, const config::RunConfig& c, std::uint64_t seed) {
  eval::SplitSpec spec = c.split;
  spec.seed = derive_seed(seed, {kTrainSplitStream});
  return eval::split(data.size(), spec);
}

int run_train(const std::string& data_path, const std::string& variant, const TrainFlags& flags,
              std::uint64_t seed, const std::string& out_path, const std::string& log_path) {
  const auto data = data::load_dataset(data_path);
  auto c = flags.resolve();
  c.train.seed = seed;
  const auto modalities = fusion::model_variant(variant, gcn_dim_of(data));
  const auto s = training_split(data, c, seed);
  auto result = fusion::train(data, s.train, s.val, modalities, c.train);
  fusion::save_checkpoint(out_path, result.network, c.train);
  if (!log_path.empty())
    emit(log_path, [&](std::ostream& o) {
      o << "epoch,train_loss,validation_loss,skipped_batches\n";
      for (const auto& e : result.log.epochs)
        o << e.epoch << ',' << fmt("%.10g", e.train_loss) << ',' << fmt("%.10g", e.validation_loss) << ','
          << e.skipped_batches << '\n';
    });
  std::cerr << "trained " << variant << ": " << result.log.epochs.size() << " epochs, best epoch "
            << result.log.best_epoch << (result.log.stopped_early ? " (early stop)" : "") << '\n';
  return 0;
}

int run_evaluate(const std::string& data_path, const std::string& model_path, const std::string& part,
                 const std::string& subgroup, std::uint64_t seed, const std::string& out_path) {
  const auto data = data::load_dataset(data_path);
  const auto ckpt = fusion::load_checkpoint(model_path);
  std::vector<std::size_t> rows;
  if (part == "all") {
    rows = data.all_rows();
  } else {
    config::RunConfig c;
    const auto s = training_split(data, c, seed);
    rows = part == "train" ? s.train : part == "val" ? s.val : s.test;
  }
  if (!subgroup.empty()) {
    const std::size_t label = data::label_index(subgroup);
    std::vector<std::size_t> kept;
    for (std::size_t r : rows) {
      const auto& labels = data.features[r].labels;
      if (!labels) throw InputError("patient '" + data.cohort[r].patient_id + "' has no finding labels");
      if ((*labels)[label] == 1.0) kept.push_back(r);
    }
    rows = std::move(kept);
    if (rows.empty()) throw InputError("subgroup '" + subgroup + "' is empty");
  }
  const auto risks = ckpt.network.predict(data, rows);
  const auto ci = eval::c_index(data.records(rows), risks);
  json j;
  j["model"] = ckpt.network.modalities().variant;
  j["part"] = part;
  if (!subgroup.empty()) j["subgroup"] = subgroup;
  j["patients"] = rows.size();
  j["c_index"] = ci.value;
  j["concordant"] = ci.concordant;
  j["discordant"] = ci.discordant;
  j["tied_risk"] = ci.tied_risk;
  j["comparable_pairs"] = ci.comparable_pairs;
  emit(out_path, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
  return 0;
}

int run_bootstrap(const std::string& data_path, const std::string& variant, const TrainFlags& flags,
                  std::optional<int> replicates, std::optional<int> threads, std::uint64_t seed,
                  const std::string& summary_path, const std::string& replicates_path) {
  const auto data = data::load_dataset(data_path);
  auto c = flags.resolve();
  c.train.seed = seed;
  c.bootstrap.base_seed = seed;
  if (replicates) c.bootstrap.replicates = *replicates;
  if (threads) c.bootstrap.threads = *threads;
  const auto recipe = eval::recipe_for(variant, c.train, gcn_dim_of(data));
  const auto summary = eval::bootstrap_run(data, recipe, c.bootstrap);
  emit(summary_path, [&](std::ostream& o) { eval::write_summary_json(o, summary); });
  if (!replicates_path.empty()) emit(replicates_path, [&](std::ostream& o) { eval::write_replicates_csv(o, summary); });
  if (!summary.failures.empty())
    std::cerr << summary.failures.size() << " of " << summary.B << " replicates failed and were excluded\n";
  return 0;
}

int run_compare(const std::string& a_path, const std::string& b_path, int permutations, std::uint64_t seed,
                const std::string& out_path) {
  auto ia = open_in(a_path);
  auto ib = open_in(b_path);
  const auto a = eval::read_summary_json(ia);
  const auto b = eval::read_summary_json(ib);
  const eval::Comparison cmp = eval::compare_models(a, b, permutations, seed);
  emit(out_path, [&](std::ostream& o) { eval::write_comparison_csv(o, std::span(&cmp, 1)); });
  return 0;
}

int run_synth(data::SynthConfig c, const std::string& out_path, const std::string& truth_path, bool sidecar) {
  const auto res = data::gen_synthetic(c);
  data::SaveOptions opts;
  opts.sidecar = sidecar;
  data::save_dataset(out_path, res.dataset, opts);
  if (!truth_path.empty()) emit(truth_path, [&](std::ostream& o) { data::write_truth_json(o, c, res); });
  return 0;
}

int run_gcn_features(const std::string& data_path, const std::string& graph_path, std::size_t hidden,
                     std::size_t kernel, std::uint64_t seed, const std::string& out_path, bool sidecar) {
  auto data = data::load_dataset(data_path);
  const auto graph = gcn::load_graph(graph_path);
  const auto a_hat = gcn::normalize_adjacency(graph.adjacency);
  std::optional<gcn::GcnParams> params;
  for (std::size_t r = 0; r < data.size(); ++r) {
    auto& b = data.features[r];
    if (!b.tokens) throw InputError("patient '" + data.cohort[r].patient_id + "' has no token embeddings");
    if (!params) params = gcn::init_params(graph.size(), b.tokens->cols(), hidden, 2, kernel, derive_seed(seed, {kGcnStream}));
    try {
      b.gcn = gcn::gcn_features(a_hat, *b.tokens, *params);
    } catch (const Error& e) {
      throw InputError("patient '" + data.cohort[r].patient_id + "': " + e.what());
    }
  }
  data::SaveOptions opts;
  opts.sidecar = sidecar;
  data::save_dataset(out_path, data, opts);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ICU mortality risk models: SAPS-II scoring, Cox regression, multimodal survival networks"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for all randomness")->capture_default_str();

  std::string in_path, out_path, data_path, model_path, variant = "multimodal_text_image", log_path;
  std::string truth_path, graph_path, part = "all", subgroup, a_path, b_path, replicates_path;
  bool no_sidecar = false;
  TrainFlags train_flags;

  auto* saps_cmd = app.add_subcommand("saps-score", "Score SAPS-II from a CSV of raw measurements");
  saps_cmd->add_option("--in", in_path, "CSV with patient_id and one column per category")->required();
  saps_cmd->add_option("--out", out_path, "Output CSV (default stdout)");

  cox::FitConfig fit;
  auto* fit_cmd = app.add_subcommand("fit-cox", "Fit a linear Cox model on the SAPS risk-factor vectors");
  fit_cmd->add_option("--data", data_path, "Dataset file")->required();
  fit_cmd->add_option("--out", out_path, "Model JSON (default stdout)");
  fit_cmd->add_option("--max-iter", fit.max_iter, "Newton iterations")->capture_default_str();
  fit_cmd->add_option("--tol", fit.tol, "Convergence tolerance")->capture_default_str();

  auto* hr_cmd = app.add_subcommand("hazard-report", "Hazard ratios with 95% intervals from a fitted Cox model");
  hr_cmd->add_option("--model", model_path, "Model JSON from fit-cox")->required();
  hr_cmd->add_option("--out", out_path, "Output CSV (default stdout)");

  auto* train_cmd = app.add_subcommand("train", "Train a fusion network on the 70% training part");
  train_cmd->add_option("--data", data_path, "Dataset file")->required();
  train_cmd->add_option("--variant", variant, "Model variant")->capture_default_str();
  train_cmd->add_option("--out", out_path, "Checkpoint file")->required();
  train_cmd->add_option("--log", log_path, "Per-epoch loss CSV");
  train_flags.attach(train_cmd);

  auto* eval_cmd = app.add_subcommand("evaluate", "C-index of a checkpoint on a dataset");
  eval_cmd->add_option("--data", data_path, "Dataset file")->required();
  eval_cmd->add_option("--model", model_path, "Checkpoint file")->required();
  eval_cmd->add_option("--part", part, "all, or train/val/test of the split used by train --seed")
      ->check(CLI::IsMember({"all", "train", "val", "test"}))
      ->capture_default_str();
  eval_cmd->add_option("--subgroup", subgroup, "Keep only patients with this finding label");
  eval_cmd->add_option("--out", out_path, "Metrics JSON (default stdout)");

  std::optional<int> replicates, threads;
  auto* boot_cmd = app.add_subcommand("bootstrap", "Bootstrap C-index of a model variant");
  boot_cmd->add_option("--data", data_path, "Dataset file")->required();
  boot_cmd->add_option("--variant", variant, "Model variant, or coxph / constant")->capture_default_str();
  boot_cmd->add_option("--b", replicates, "Number of replicates (default 200)");
  boot_cmd->add_option("--threads", threads, "Worker threads");
  boot_cmd->add_option("--out", out_path, "Summary JSON (default stdout)");
  boot_cmd->add_option("--replicates", replicates_path, "Per-replicate CSV");
  train_flags.attach(boot_cmd);

  int permutations = eval::kDefaultPermutations;
  auto* cmp_cmd = app.add_subcommand("compare", "Paired comparison of two bootstrap summaries");
  cmp_cmd->add_option("--a", a_path, "First summary JSON")->required();
  cmp_cmd->add_option("--b", b_path, "Second summary JSON")->required();
  cmp_cmd->add_option("--permutations", permutations, "Monte Carlo sign flips")->capture_default_str();
  cmp_cmd->add_option("--out", out_path, "Comparison CSV (default stdout)");

  data::SynthConfig synth;
  std::string kind = "linear";
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic cohort with known ground truth");
  synth_cmd->add_option("--kind", kind, "linear or multimodal")->capture_default_str();
  synth_cmd->add_option("--n", synth.n, "Patients")->capture_default_str();
  synth_cmd->add_option("--beta", synth.beta, "Coefficients on the leading SAPS columns")->delimiter(',');
  synth_cmd->add_option("--baseline-hazard", synth.baseline_hazard, "Events per hour")->capture_default_str();
  synth_cmd->add_option("--censoring-rate", synth.censoring_rate, "Censoring events per hour")->capture_default_str();
  synth_cmd->add_option("--modality-weight", synth.modality_weight, "Scale of the nonlinear terms");
  synth_cmd->add_option("--feature-noise", synth.feature_noise, "Noise on projected features");
  synth_cmd->add_flag("--tokens", synth.tokens, "Add token-embedding matrices");
  synth_cmd->add_option("--out", out_path, "Dataset file")->required();
  synth_cmd->add_option("--truth", truth_path, "Ground-truth JSON");
  synth_cmd->add_flag("--no-sidecar", no_sidecar, "Store vectors inline");

  std::size_t hidden = gcn::kDefaultHidden, kernel = gcn::kDefaultKernelWidth;
  auto* gcn_cmd = app.add_subcommand("gcn-features", "Add GCN hidden-state features computed from token embeddings");
  gcn_cmd->add_option("--data", data_path, "Dataset with token embeddings")->required();
  gcn_cmd->add_option("--graph", graph_path, "Finding graph edge list")->required();
  gcn_cmd->add_option("--hidden", hidden, "Hidden units per node")->capture_default_str();
  gcn_cmd->add_option("--kernel", kernel, "Convolution width")->capture_default_str();
  gcn_cmd->add_option("--out", out_path, "Output dataset file")->required();
  gcn_cmd->add_flag("--no-sidecar", no_sidecar, "Store vectors inline");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (saps_cmd->parsed()) return run_saps_score(in_path, out_path);
    if (fit_cmd->parsed()) return run_fit_cox(data_path, out_path, fit);
    if (hr_cmd->parsed()) return run_hazard_report(model_path, out_path);
    if (train_cmd->parsed()) return run_train(data_path, variant, train_flags, seed, out_path, log_path);
    if (eval_cmd->parsed()) return run_evaluate(data_path, model_path, part, subgroup, seed, out_path);
    if (boot_cmd->parsed())
      return run_bootstrap(data_path, variant, train_flags, replicates, threads, seed, out_path, replicates_path);
    if (cmp_cmd->parsed()) return run_compare(a_path, b_path, permutations, seed, out_path);
    if (synth_cmd->parsed()) {
      synth.kind = data::synth_kind_from_name(kind);
      synth.seed = seed;
      return run_synth(synth, out_path, truth_path, !no_sidecar);
    }
    if (gcn_cmd->parsed()) return run_gcn_features(data_path, graph_path, hidden, kernel, seed, out_path, !no_sidecar);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
