#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icumort/autodiff/adam.hpp"
#include "icumort/autodiff/tape.hpp"
#include "icumort/io/dataset.hpp"

namespace icumort::fusion {

enum class Modality { Saps, Labels, Text, Image, Gcn };

std::string_view modality_name(Modality m);
Modality modality_from_name(std::string_view name);

/// One fully connected layer with ReLU, followed by dropout.
struct BranchSpec {
  Modality modality = Modality::Saps;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  double dropout_rate = 0.5;

  friend bool operator==(const BranchSpec&, const BranchSpec&) = default;
};

inline constexpr std::size_t kDefaultGcnFeatureDim = 14 * 16;

/// Default branch dimensions: saps 15->15, labels 14->14, text 768->32,
/// image 1024->32, gcn (N*h)->32.
BranchSpec default_branch(Modality m, std::size_t gcn_feature_dim = kDefaultGcnFeatureDim);

/// Which branches a network uses. The SAPS branch always comes first; every
/// other branch enters the element-wise average.
struct ModalitySet {
  std::string variant;
  bool score_only = false;  // risk = sum of the SAPS points, no parameters
  std::vector<BranchSpec> branches;

  bool has(Modality m) const;
  const BranchSpec& branch(Modality m) const;
  /// Width of the vector fed to the risk head.
  std::size_t fused_dim() const;
  /// Copy with every branch's dropout rate replaced.
  ModalitySet with_dropout(double rate) const;

  friend bool operator==(const ModalitySet&, const ModalitySet&) = default;
};

/// Throws ConfigError for an empty set, a missing or misplaced SAPS branch,
/// duplicate modalities, zero dims, or averaged branches of unequal width.
void validate(const ModalitySet& set);

const std::vector<std::string>& variant_names();
/// The named experiment configurations (saps_scores, saps_risk_factors, ...).
ModalitySet model_variant(std::string_view name, std::size_t gcn_feature_dim = kDefaultGcnFeatureDim);

struct TrainConfig {
  int epochs = 250;
  int batch_size = 72;
  double dropout = 0.5;
  double learning_rate = 0.001;
  int early_stop_patience = 10;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& config);

/// avg(hidden) followed by saps_hidden; just saps_hidden when `hidden` is
/// empty. Throws DimensionError for hidden vectors of unequal length.
std::vector<double> fuse(std::span<const std::vector<double>> hidden, std::span<const double> saps_hidden);

/// A network that maps a batch of patients to one risk score each. The tape
/// exposes outputs "risk" (rows x 1) and "loss" (the Cox loss over the
/// batch, which additionally needs inputs "time" and "event").
class RiskModel {
 public:
  virtual ~RiskModel() = default;

  virtual const ad::Tape& tape() const = 0;
  virtual const ad::ParamStore& params() const = 0;
  virtual ad::ParamStore& params() = 0;
  /// Feature inputs for the given rows (parameters and outcomes excluded).
  virtual ad::Bindings bind_features(const data::Dataset& data, std::span<const std::size_t> rows) const = 0;

  /// Eval-mode risks for the given rows.
  std::vector<double> predict(const data::Dataset& data, std::span<const std::size_t> rows) const;
  /// Cox loss over the rows (eval mode unless `options.training`).
  double loss(const data::Dataset& data, std::span<const std::size_t> rows,
              const ad::ForwardOptions& options = {}) const;
  /// Feature, outcome and parameter bindings for one batch.
  ad::Bindings bind_batch(const data::Dataset& data, std::span<const std::size_t> rows) const;
};

/// The multimodal fusion network: per-modality branches, element-wise average
/// of the non-SAPS branches, concatenation with the SAPS branch, linear head.
class FusionNetwork final : public RiskModel {
 public:
  /// Glorot-uniform weights and zero biases, drawn from `init_seed` in branch
  /// order and then for the head.
  FusionNetwork(ModalitySet modalities, std::uint64_t init_seed);
  /// Network with explicit parameters (e.g. from a checkpoint).
  FusionNetwork(ModalitySet modalities, ad::ParamStore params);

  const ModalitySet& modalities() const noexcept { return modalities_; }
  const ad::Tape& tape() const override { return *tape_; }
  const ad::ParamStore& params() const override { return params_; }
  ad::ParamStore& params() override { return params_; }
  ad::Bindings bind_features(const data::Dataset& data, std::span<const std::size_t> rows) const override;

  /// Risk for a single patient; throws InputError naming a configured
  /// modality that the bundle lacks.
  double predict_risk(const data::FeatureBundle& bundle) const;

 private:
  void build();

  ModalitySet modalities_;
  std::shared_ptr<ad::Tape> tape_;
  ad::ParamStore params_;
};

/// Plain DeepSurv-style MLP on the SAPS vector: one hidden ReLU layer with
/// dropout and a linear head. Parameter initialisation consumes the RNG in
/// the same order as a SAPS-only FusionNetwork.
class DeepSurvMlp final : public RiskModel {
 public:
  DeepSurvMlp(std::size_t in_dim, std::size_t hidden_dim, double dropout_rate, std::uint64_t init_seed);

  const ad::Tape& tape() const override { return *tape_; }
  const ad::ParamStore& params() const override { return params_; }
  ad::ParamStore& params() override { return params_; }
  ad::Bindings bind_features(const data::Dataset& data, std::span<const std::size_t> rows) const override;

 private:
  std::shared_ptr<ad::Tape> tape_;
  ad::ParamStore params_;
  std::size_t in_dim_;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;       // mean over batches that had events
  double validation_loss = 0.0;  // full validation set, eval mode
  int skipped_batches = 0;       // batches without any event
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;  // -1 when no epoch ran
  bool stopped_early = false;
};

/// Mini-batch Adam on the in-batch Cox loss. After each epoch the full
/// validation loss is computed; training stops after `early_stop_patience`
/// epochs without improvement and the best epoch's parameters are restored.
/// Without validation events the training loss drives model selection.
TrainLog train_model(RiskModel& model, const data::Dataset& data, std::span<const std::size_t> train_rows,
                     std::span<const std::size_t> val_rows, const TrainConfig& config);

struct TrainResult {
  FusionNetwork network;
  TrainLog log;
};

/// Builds a FusionNetwork (branch dropout from the config, init seed derived
/// from config.seed) and trains it.
TrainResult train(const data::Dataset& data, std::span<const std::size_t> train_rows,
                  std::span<const std::size_t> val_rows, const ModalitySet& modalities,
                  const TrainConfig& config);

/// Seed used for weight initialisation by `train`.
std::uint64_t init_seed_for(const TrainConfig& config);

/// Binary checkpoint; layout documented in docs/formats.md.
void save_checkpoint(std::ostream& out, const FusionNetwork& network, const TrainConfig& config);
void save_checkpoint(const std::string& path, const FusionNetwork& network, const TrainConfig& config);

struct Checkpoint {
  FusionNetwork network;
  TrainConfig config;
};
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace icumort::fusion
