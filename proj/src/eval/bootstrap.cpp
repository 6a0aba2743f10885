#include "icumort/eval/bootstrap.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "icumort/error.hpp"
#include "icumort/eval/cindex.hpp"
#include "icumort/rng.hpp"

namespace icumort::eval {

namespace {

constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kRecipeStream = 2;
constexpr std::uint64_t kFlipStream = 0xF11B;

void shuffle(std::vector<std::size_t>& v, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i)), i - 1);
    std::swap(v[i - 1], v[j]);
  }
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

ad::Tensor saps_matrix(const data::Dataset& data, std::span<const std::size_t> rows,
                       const std::vector<std::size_t>& columns) {
  std::vector<double> v;
  v.reserve(rows.size() * columns.size());
  for (std::size_t r : rows)
    for (std::size_t c : columns) v.push_back(data.features[r].saps.at(c));
  return ad::Tensor::matrix(rows.size(), columns.size(), std::move(v));
}

}  // namespace

void validate(const SplitSpec& s) {
  for (double f : {s.train_frac, s.val_frac, s.test_frac})
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("split fractions must lie in (0, 1)");
  if (std::abs(s.train_frac + s.val_frac + s.test_frac - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");
}

void split_sizes(std::size_t n, const SplitSpec& spec, std::size_t& train, std::size_t& val, std::size_t& test) {
  validate(spec);
  const double dn = static_cast<double>(n);
  val = static_cast<std::size_t>(std::floor(dn * spec.val_frac + 1e-9));
  test = static_cast<std::size_t>(std::llround(dn * spec.test_frac));
  train = n >= val + test ? n - val - test : 0;
  if (train == 0 || val == 0 || test == 0)
    throw InputError("cannot split " + std::to_string(n) + " patients into non-empty train/val/test parts");
}

Split split(std::span<const std::size_t> rows, const SplitSpec& spec) {
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  split_sizes(rows.size(), spec, n_train, n_val, n_test);
  std::vector<std::size_t> order(rows.begin(), rows.end());
  shuffle(order, spec.seed);
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

Split split(std::size_t n, const SplitSpec& spec) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return split(rows, spec);
}

// ---------------------------------------------------------------------------
// recipes

ModelRecipe fusion_recipe(const fusion::ModalitySet& modalities, const fusion::TrainConfig& config) {
  fusion::validate(modalities);
  fusion::validate(config);
  return {modalities.variant, [modalities, config](const data::Dataset& data, const Split& s, std::uint64_t seed) {
            fusion::TrainConfig c = config;
            c.seed = seed;
            if (modalities.score_only) return fusion::FusionNetwork(modalities, seed).predict(data, s.test);
            auto result = fusion::train(data, s.train, s.val, modalities, c);
            return result.network.predict(data, s.test);
          }};
}

ModelRecipe coxph_recipe(const cox::FitConfig& config) {
  return {"coxph", [config](const data::Dataset& data, const Split& s, std::uint64_t) {
            std::vector<std::size_t> keep;
            for (std::size_t c = 0; c < data::kSapsDim; ++c) {
              const double first = data.features[s.train.front()].saps.at(c);
              for (std::size_t r : s.train)
                if (data.features[r].saps.at(c) != first) {
                  keep.push_back(c);
                  break;
                }
            }
            if (keep.empty()) throw DegeneracyError("every SAPS column is constant on the training part");
            const auto model = cox::fit_coxph(saps_matrix(data, s.train, keep), data.records(s.train), config);
            if (!model.converged) throw HarnessError("Cox fit did not converge");
            const ad::Tensor xt = saps_matrix(data, s.test, keep);
            std::vector<double> risk(s.test.size());
            for (std::size_t i = 0; i < risk.size(); ++i) {
              auto row = xt.values().subspan(i * keep.size(), keep.size());
              risk[i] = model.risk(row);
            }
            return risk;
          }};
}

ModelRecipe constant_recipe() {
  return {"constant", [](const data::Dataset&, const Split& s, std::uint64_t) {
            return std::vector<double>(s.test.size(), 0.0);
          }};
}

ModelRecipe recipe_for(const std::string& variant, const fusion::TrainConfig& config, std::size_t gcn_feature_dim) {
  if (variant == "coxph") return coxph_recipe();
  if (variant == "constant") return constant_recipe();
  return fusion_recipe(fusion::model_variant(variant, gcn_feature_dim), config);
}

// ---------------------------------------------------------------------------
// bootstrap

std::uint64_t replicate_seed(std::uint64_t base_seed, int replicate) {
  return derive_seed(base_seed, {static_cast<std::uint64_t>(replicate)});
}

std::vector<std::size_t> resample_rows(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> rows(n);
  for (auto& r : rows) r = std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)), n - 1);
  return rows;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ContractError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ContractError("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

BootstrapSummary bootstrap_run(const data::Dataset& data, const ModelRecipe& recipe, const BootstrapConfig& config) {
  if (config.replicates < 1) throw ConfigError("the number of bootstrap replicates must be at least 1");
  if (config.threads < 1) throw ConfigError("threads must be at least 1");
  if (!recipe.run) throw ConfigError("bootstrap recipe has no training function");
  validate(config.split);
  const std::size_t n = data.size();
  {
    std::size_t a, b, c;
    split_sizes(n, config.split, a, b, c);
  }

  const auto B = static_cast<std::size_t>(config.replicates);
  std::vector<std::optional<double>> values(B);
  std::vector<std::string> errors(B);

  auto run_one = [&](std::size_t b) {
    const std::uint64_t seed = replicate_seed(config.base_seed, static_cast<int>(b));
    try {
      const auto rows = resample_rows(n, seed);
      SplitSpec spec = config.split;
      spec.seed = derive_seed(seed, {kSplitStream});
      const Split s = split(rows, spec);
      const auto risks = recipe.run(data, s, derive_seed(seed, {kRecipeStream}));
      values[b] = c_index(data.records(s.test), risks).value;
    } catch (const std::exception& e) {
      errors[b] = e.what();
    }
  };

  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(config.threads), B);
  if (workers <= 1) {
    for (std::size_t b = 0; b < B; ++b) run_one(b);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t b; (b = next.fetch_add(1)) < B;) run_one(b);
      });
    for (auto& t : pool) t.join();
  }

  BootstrapSummary s;
  s.model = recipe.name;
  s.seed = config.base_seed;
  s.B = config.replicates;
  for (std::size_t b = 0; b < B; ++b) {
    if (values[b]) {
      s.replicate_ids.push_back(static_cast<int>(b));
      s.replicate_values.push_back(*values[b]);
    } else {
      s.failures.push_back({static_cast<int>(b), errors[b]});
    }
  }
  if (s.failures.size() * 10 > B || s.replicate_values.empty())
    throw HarnessError(std::to_string(s.failures.size()) + " of " + std::to_string(B) +
                       " replicates failed; first failure (replicate " + std::to_string(s.failures.front().replicate) +
                       "): " + s.failures.front().message);
  double sum = 0.0;
  for (double v : s.replicate_values) sum += v;
  s.mean = sum / static_cast<double>(s.replicate_values.size());
  s.ci_low = quantile(s.replicate_values, 0.025);
  s.ci_high = quantile(s.replicate_values, 0.975);
  return s;
}

// ---------------------------------------------------------------------------
// comparison

Comparison compare_models(const BootstrapSummary& a, const BootstrapSummary& b, int permutations,
                          std::uint64_t seed) {
  if (a.seed != b.seed || a.B != b.B)
    throw ContractError("summaries are not paired: seeds " + std::to_string(a.seed) + " and " +
                        std::to_string(b.seed) + ", B " + std::to_string(a.B) + " and " + std::to_string(b.B));
  if (permutations < 1) throw ConfigError("permutations must be at least 1");
  if (a.replicate_ids.size() != a.replicate_values.size() || b.replicate_ids.size() != b.replicate_values.size())
    throw ContractError("summary replicate ids and values differ in length");

  std::vector<double> diff;
  for (std::size_t i = 0, j = 0; i < a.replicate_ids.size() && j < b.replicate_ids.size();) {
    if (a.replicate_ids[i] < b.replicate_ids[j]) {
      ++i;
    } else if (a.replicate_ids[i] > b.replicate_ids[j]) {
      ++j;
    } else {
      diff.push_back(a.replicate_values[i++] - b.replicate_values[j++]);
    }
  }
  if (diff.empty()) throw ContractError("summaries share no successful replicates");

  Comparison c;
  c.model_a = a.model;
  c.model_b = b.model;
  c.pairs = diff.size();
  const double m = static_cast<double>(diff.size());
  double obs = 0.0;
  for (double d : diff) obs += d;
  obs = std::abs(obs) / m;
  c.mean_difference = std::accumulate(diff.begin(), diff.end(), 0.0) / m;

  // tolerance absorbs rounding when a flip pattern reproduces the observed sum
  const double threshold = obs - 1e-12 * std::max(1.0, obs);
  Rng rng(derive_seed(seed, {kFlipStream, static_cast<std::uint64_t>(a.seed), static_cast<std::uint64_t>(a.B)}));
  long hits = 0;
  for (int p = 0; p < permutations; ++p) {
    double s = 0.0;
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < diff.size(); ++i) {
      if (i % 64 == 0) bits = rng();
      s += (bits & 1) ? diff[i] : -diff[i];
      bits >>= 1;
    }
    if (std::abs(s) / m >= threshold) ++hits;
  }
  c.p_value = (static_cast<double>(hits) + 1.0) / (static_cast<double>(permutations) + 1.0);
  c.stars = cox::significance_stars(c.p_value);
  return c;
}

// ---------------------------------------------------------------------------
// reports

void write_replicates_csv(std::ostream& out, const BootstrapSummary& s) {
  out << "replicate,c_index\n";
  for (std::size_t i = 0; i < s.replicate_values.size(); ++i)
    out << s.replicate_ids[i] << ',' << fmt("%.6f", s.replicate_values[i]) << '\n';
}

void write_summary_json(std::ostream& out, const BootstrapSummary& s) {
  nlohmann::ordered_json j;
  j["model"] = s.model;
  j["B"] = s.B;
  j["seed"] = s.seed;
  j["mean"] = s.mean;
  j["ci_low"] = s.ci_low;
  j["ci_high"] = s.ci_high;
  j["replicates"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < s.replicate_values.size(); ++i)
    j["replicates"].push_back({{"replicate", s.replicate_ids[i]}, {"c_index", s.replicate_values[i]}});
  j["failures"] = nlohmann::ordered_json::array();
  for (const auto& f : s.failures) j["failures"].push_back({{"replicate", f.replicate}, {"message", f.message}});
  out << j.dump(2) << '\n';
}

BootstrapSummary read_summary_json(std::istream& in) {
  try {
    const auto j = nlohmann::json::parse(in);
    BootstrapSummary s;
    s.model = j.at("model").get<std::string>();
    s.B = j.at("B").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.mean = j.at("mean").get<double>();
    s.ci_low = j.at("ci_low").get<double>();
    s.ci_high = j.at("ci_high").get<double>();
    for (const auto& r : j.at("replicates")) {
      s.replicate_ids.push_back(r.at("replicate").get<int>());
      s.replicate_values.push_back(r.at("c_index").get<double>());
    }
    if (j.contains("failures"))
      for (const auto& f : j.at("failures"))
        s.failures.push_back({f.at("replicate").get<int>(), f.at("message").get<std::string>()});
    if (!std::is_sorted(s.replicate_ids.begin(), s.replicate_ids.end()))
      throw FormatError("summary replicates are not in ascending order");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bootstrap summary: ") + e.what());
  }
}

void write_comparison_csv(std::ostream& out, std::span<const Comparison> rows) {
  out << "model_a,model_b,p_value,stars\n";
  for (const auto& c : rows) out << c.model_a << ',' << c.model_b << ',' << fmt("%.6g", c.p_value) << ',' << c.stars << '\n';
}

}  // namespace icumort::eval
