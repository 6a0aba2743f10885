#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "icumort/coxph/coxph.hpp"
#include "icumort/fusion/fusion.hpp"
#include "icumort/io/dataset.hpp"

namespace icumort::eval {

struct SplitSpec {
  double train_frac = 0.7;
  double val_frac = 0.1;
  double test_frac = 0.2;
  std::uint64_t seed = 0;

  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

/// Throws ConfigError unless every fraction is positive and they sum to 1.
void validate(const SplitSpec& spec);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Part sizes for n patients: val = floor(n * val_frac), test rounded to
/// nearest, remainder to train. Throws InputError if any part is empty.
void split_sizes(std::size_t n, const SplitSpec& spec, std::size_t& train, std::size_t& val, std::size_t& test);

/// Seeded shuffle of `rows` cut into train/val/test.
Split split(std::span<const std::size_t> rows, const SplitSpec& spec);
/// Split of the indices 0..n-1.
Split split(std::size_t n, const SplitSpec& spec);

/// Trains on split.train (validating on split.val) and returns one risk per
/// row of split.test. `seed` drives all of the recipe's randomness.
using RecipeFn =
    std::function<std::vector<double>(const data::Dataset& data, const Split& split, std::uint64_t seed)>;

struct ModelRecipe {
  std::string name;
  RecipeFn run;
};

/// Fusion network of the given variant trained with `config` (its seed is
/// replaced by the replicate seed). Score-only variants skip training.
ModelRecipe fusion_recipe(const fusion::ModalitySet& modalities, const fusion::TrainConfig& config);
/// Linear Cox model on the SAPS vector; columns constant on the training
/// part are dropped before fitting.
ModelRecipe coxph_recipe(const cox::FitConfig& config = {});
/// Every patient gets the same risk.
ModelRecipe constant_recipe();

/// Recipe for a variant name as used on the command line; "coxph" and
/// "constant" select the two baselines.
ModelRecipe recipe_for(const std::string& variant, const fusion::TrainConfig& config,
                       std::size_t gcn_feature_dim = fusion::kDefaultGcnFeatureDim);

struct BootstrapConfig {
  int replicates = 200;
  std::uint64_t base_seed = 0;
  SplitSpec split;  // fractions only; the split seed is derived per replicate
  int threads = 1;

  friend bool operator==(const BootstrapConfig&, const BootstrapConfig&) = default;
};

struct ReplicateFailure {
  int replicate = 0;
  std::string message;
};

struct BootstrapSummary {
  std::string model;
  std::vector<int> replicate_ids;       // successful replicates, ascending
  std::vector<double> replicate_values; // test C-index per successful replicate
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::uint64_t seed = 0;
  int B = 0;
  std::vector<ReplicateFailure> failures;
};

/// Seed of replicate b.
std::uint64_t replicate_seed(std::uint64_t base_seed, int replicate);

/// Rows drawn with replacement for replicate b (n draws from 0..n-1).
std::vector<std::size_t> resample_rows(std::size_t n, std::uint64_t replicate_seed);

/// For each replicate: resample n patients with replacement, split, run the
/// recipe and take the test C-index. Failed replicates are recorded and left
/// out; more than 10% failures throws HarnessError. The summary does not
/// depend on `threads`.
BootstrapSummary bootstrap_run(const data::Dataset& data, const ModelRecipe& recipe, const BootstrapConfig& config);

/// Type-7 sample quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

struct Comparison {
  std::string model_a;
  std::string model_b;
  std::size_t pairs = 0;
  double mean_difference = 0.0;  // mean of a - b over paired replicates
  double p_value = 1.0;
  std::string stars;
};

inline constexpr int kDefaultPermutations = 100000;

/// Two-sided paired sign-flip test on per-replicate differences, estimated
/// with `permutations` seeded Monte Carlo flips; p = (hits + 1)/(M + 1).
/// Throws ContractError when the summaries differ in seed or B.
Comparison compare_models(const BootstrapSummary& a, const BootstrapSummary& b,
                          int permutations = kDefaultPermutations, std::uint64_t seed = 0);

void write_replicates_csv(std::ostream& out, const BootstrapSummary& summary);
void write_summary_json(std::ostream& out, const BootstrapSummary& summary);
BootstrapSummary read_summary_json(std::istream& in);
void write_comparison_csv(std::ostream& out, std::span<const Comparison> rows);

}  // namespace icumort::eval
