#include "icumort/fusion/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "icumort/autodiff/init.hpp"
#include "icumort/error.hpp"
#include "icumort/rng.hpp"
#include "icumort/survival/survival.hpp"

namespace icumort::fusion {

namespace {

constexpr std::uint64_t kInitStream = 0x1A1;
constexpr std::uint64_t kShuffleStream = 0x5A1;
constexpr std::uint64_t kDropoutStream = 0xD0D;

const std::vector<std::string> kVariants = {
    "saps_scores", "saps_risk_factors", "saps+labels",           "saps+transformer",
    "saps+gcn",    "saps+image",        "multimodal_text_image", "multimodal_gcn_image"};

std::string input_name(Modality m) { return "x_" + std::string(modality_name(m)); }

const std::vector<double>* modality_vector(const data::FeatureBundle& b, Modality m) {
  switch (m) {
    case Modality::Saps: return &b.saps;
    case Modality::Labels: return b.labels ? &*b.labels : nullptr;
    case Modality::Text: return b.text ? &*b.text : nullptr;
    case Modality::Image: return b.image ? &*b.image : nullptr;
    case Modality::Gcn: return b.gcn ? &*b.gcn : nullptr;
  }
  return nullptr;
}

ad::Tensor gather(Modality m, std::size_t dim, std::span<const data::FeatureBundle* const> bundles,
                  std::span<const std::string* const> ids) {
  std::vector<double> v;
  v.reserve(bundles.size() * dim);
  for (std::size_t r = 0; r < bundles.size(); ++r) {
    const std::vector<double>* x = modality_vector(*bundles[r], m);
    const std::string who = ids.empty() ? std::string("bundle") : "patient '" + *ids[r] + "'";
    if (!x)
      throw InputError(who + " has no " + std::string(modality_name(m)) + " features, which the network needs");
    if (x->size() != dim)
      throw InputError(who + ": " + std::string(modality_name(m)) + " features have length " +
                       std::to_string(x->size()) + ", network expects " + std::to_string(dim));
    v.insert(v.end(), x->begin(), x->end());
  }
  return ad::Tensor::matrix(bundles.size(), dim, std::move(v));
}

// x -> relu(x W + b) -> dropout; shared by FusionNetwork and DeepSurvMlp so
// the two build identical graphs.
ad::NodeId dense_branch(ad::Tape& tape, ad::NodeId x, const std::string& prefix, double dropout_rate,
                        std::uint64_t stream) {
  const auto w = tape.input(prefix + ".W", true);
  const auto b = tape.input(prefix + ".b", true);
  return tape.dropout(tape.relu(tape.add(tape.matmul(x, w), b)), dropout_rate, stream);
}

ad::NodeId linear_head(ad::Tape& tape, ad::NodeId fused) {
  const auto w = tape.input("head.W", true);
  const auto b = tape.input("head.b", true);
  return tape.add(tape.matmul(fused, w), b);
}

void attach_loss(ad::Tape& tape, ad::NodeId risk) {
  const auto time = tape.input("time");
  const auto event = tape.input("event");
  tape.set_output("risk", risk);
  tape.set_output("loss", surv::cox_nll_node(tape, risk, time, event));
}

void add_dense_params(ad::ParamStore& p, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
  p[prefix + ".W"] = ad::glorot_uniform(in, out, rng);
  p[prefix + ".b"] = ad::Tensor::zeros({1, out});
}

ad::Bindings with_params(ad::Bindings b, const ad::ParamStore& params) {
  for (const auto& [name, t] : params) b.insert_or_assign(name, t);
  return b;
}

}  // namespace

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::Saps: return "saps";
    case Modality::Labels: return "labels";
    case Modality::Text: return "text";
    case Modality::Image: return "image";
    case Modality::Gcn: return "gcn";
  }
  return "unknown";
}

Modality modality_from_name(std::string_view name) {
  for (Modality m : {Modality::Saps, Modality::Labels, Modality::Text, Modality::Image, Modality::Gcn})
    if (modality_name(m) == name) return m;
  throw ConfigError("unknown modality '" + std::string(name) + "'");
}

BranchSpec default_branch(Modality m, std::size_t gcn_feature_dim) {
  switch (m) {
    case Modality::Saps: return {m, data::kSapsDim, 15, 0.5};
    case Modality::Labels: return {m, data::kLabelDim, 14, 0.5};
    case Modality::Text: return {m, data::kTextDim, 32, 0.5};
    case Modality::Image: return {m, data::kImageDim, 32, 0.5};
    case Modality::Gcn: return {m, gcn_feature_dim, 32, 0.5};
  }
  throw ConfigError("unknown modality");
}

bool ModalitySet::has(Modality m) const {
  return std::any_of(branches.begin(), branches.end(), [&](const auto& b) { return b.modality == m; });
}

const BranchSpec& ModalitySet::branch(Modality m) const {
  for (const auto& b : branches)
    if (b.modality == m) return b;
  throw ConfigError("modality set has no " + std::string(modality_name(m)) + " branch");
}

std::size_t ModalitySet::fused_dim() const {
  if (score_only || branches.empty()) return 0;
  const std::size_t saps = branches.front().out_dim;
  return branches.size() > 1 ? saps + branches[1].out_dim : saps;
}

ModalitySet ModalitySet::with_dropout(double rate) const {
  ModalitySet out = *this;
  for (auto& b : out.branches) b.dropout_rate = rate;
  return out;
}

void validate(const ModalitySet& set) {
  if (set.branches.empty()) throw ConfigError("modality set is empty");
  if (set.branches.front().modality != Modality::Saps)
    throw ConfigError("the SAPS branch must be present and listed first");
  std::set<Modality> seen;
  for (const auto& b : set.branches) {
    if (!seen.insert(b.modality).second)
      throw ConfigError("modality '" + std::string(modality_name(b.modality)) + "' listed twice");
    if (b.in_dim == 0 || b.out_dim == 0)
      throw ConfigError("branch '" + std::string(modality_name(b.modality)) + "' has a zero dimension");
    if (!(b.dropout_rate >= 0.0 && b.dropout_rate < 1.0))
      throw ConfigError("branch '" + std::string(modality_name(b.modality)) + "' dropout must lie in [0, 1)");
  }
  if (set.score_only && set.branches.size() != 1)
    throw ConfigError("a score-only configuration uses the SAPS input alone");
  for (std::size_t k = 2; k < set.branches.size(); ++k)
    if (set.branches[k].out_dim != set.branches[1].out_dim)
      throw ConfigError("averaged branches need equal output widths: '" +
                        std::string(modality_name(set.branches[1].modality)) + "' has " +
                        std::to_string(set.branches[1].out_dim) + ", '" +
                        std::string(modality_name(set.branches[k].modality)) + "' has " +
                        std::to_string(set.branches[k].out_dim));
}

const std::vector<std::string>& variant_names() { return kVariants; }

ModalitySet model_variant(std::string_view name, std::size_t gcn_feature_dim) {
  ModalitySet s;
  s.variant = std::string(name);
  auto add = [&](Modality m) { s.branches.push_back(default_branch(m, gcn_feature_dim)); };
  add(Modality::Saps);
  if (name == "saps_scores") {
    s.score_only = true;
  } else if (name == "saps_risk_factors") {
  } else if (name == "saps+labels") {
    add(Modality::Labels);
  } else if (name == "saps+transformer") {
    add(Modality::Text);
  } else if (name == "saps+gcn") {
    add(Modality::Gcn);
  } else if (name == "saps+image") {
    add(Modality::Image);
  } else if (name == "multimodal_text_image") {
    add(Modality::Text);
    add(Modality::Image);
  } else if (name == "multimodal_gcn_image") {
    add(Modality::Gcn);
    add(Modality::Image);
  } else {
    std::string valid;
    for (const auto& v : kVariants) valid += (valid.empty() ? "" : ", ") + v;
    throw ConfigError("unknown model variant '" + std::string(name) + "'; valid names: " + valid);
  }
  validate(s);
  return s;
}

void validate(const TrainConfig& c) {
  if (c.epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (c.batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate))
    throw ConfigError("learning_rate must be positive");
  if (c.early_stop_patience <= 0) throw ConfigError("early_stop_patience must be positive");
  if (c.epochs > 0 && c.early_stop_patience > c.epochs)
    throw ConfigError("early_stop_patience may not exceed epochs");
}

std::vector<double> fuse(std::span<const std::vector<double>> hidden, std::span<const double> saps_hidden) {
  std::vector<double> out;
  if (!hidden.empty()) {
    const std::size_t dim = hidden.front().size();
    out.assign(dim, 0.0);
    for (const auto& h : hidden) {
      if (h.size() != dim)
        throw DimensionError("fuse: hidden vectors have lengths " + std::to_string(dim) + " and " +
                             std::to_string(h.size()));
      for (std::size_t i = 0; i < dim; ++i) out[i] += h[i];
    }
    for (double& v : out) v /= static_cast<double>(hidden.size());
  }
  out.insert(out.end(), saps_hidden.begin(), saps_hidden.end());
  return out;
}

// ---------------------------------------------------------------------------
// RiskModel

ad::Bindings RiskModel::bind_batch(const data::Dataset& data, std::span<const std::size_t> rows) const {
  ad::Bindings b = with_params(bind_features(data, rows), params());
  std::vector<double> time(rows.size()), event(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = data.cohort[rows[i]];
    time[i] = r.observed_time;
    event[i] = r.event ? 1.0 : 0.0;
  }
  b.insert_or_assign("time", ad::Tensor::column(std::move(time)));
  b.insert_or_assign("event", ad::Tensor::column(std::move(event)));
  return b;
}

std::vector<double> RiskModel::predict(const data::Dataset& data, std::span<const std::size_t> rows) const {
  if (rows.empty()) return {};
  static const std::vector<std::string> target{"risk"};
  const auto ev = tape().forward(with_params(bind_features(data, rows), params()), {}, target);
  auto v = ev.output("risk").values();
  return {v.begin(), v.end()};
}

double RiskModel::loss(const data::Dataset& data, std::span<const std::size_t> rows,
                       const ad::ForwardOptions& options) const {
  static const std::vector<std::string> target{"loss"};
  return tape().forward(bind_batch(data, rows), options, target).output("loss").item();
}

// ---------------------------------------------------------------------------
// FusionNetwork

FusionNetwork::FusionNetwork(ModalitySet modalities, std::uint64_t init_seed)
    : modalities_(std::move(modalities)) {
  validate(modalities_);
  if (!modalities_.score_only) {
    Rng rng(init_seed);
    for (const auto& b : modalities_.branches)
      add_dense_params(params_, std::string(modality_name(b.modality)), b.in_dim, b.out_dim, rng);
    add_dense_params(params_, "head", modalities_.fused_dim(), 1, rng);
  }
  build();
}

FusionNetwork::FusionNetwork(ModalitySet modalities, ad::ParamStore params)
    : modalities_(std::move(modalities)), params_(std::move(params)) {
  validate(modalities_);
  build();
  for (const auto& name : tape_->trainable_names()) {
    if (!params_.count(name)) throw FormatError("network parameters lack '" + name + "'");
  }
  if (params_.size() != tape_->trainable_names().size())
    throw FormatError("network parameters include entries the configuration does not use");
  // shapes are checked against the configuration
  for (const auto& b : modalities_.branches) {
    if (modalities_.score_only) break;
    const std::string p(modality_name(b.modality));
    if (params_.at(p + ".W").shape() != ad::Shape{b.in_dim, b.out_dim} ||
        params_.at(p + ".b").shape() != ad::Shape{1, b.out_dim})
      throw FormatError("parameter shapes for branch '" + p + "' do not match its dimensions");
  }
  if (!modalities_.score_only &&
      (params_.at("head.W").shape() != ad::Shape{modalities_.fused_dim(), 1} ||
       params_.at("head.b").shape() != ad::Shape{1, 1}))
    throw FormatError("head parameter shapes do not match the fused width");
}

void FusionNetwork::build() {
  tape_ = std::make_shared<ad::Tape>();
  ad::Tape& t = *tape_;
  if (modalities_.score_only) {
    const auto x = t.input(input_name(Modality::Saps));
    const auto ones = t.input("ones");
    attach_loss(t, t.matmul(x, ones));
    return;
  }
  std::vector<ad::NodeId> hidden;
  for (std::size_t k = 0; k < modalities_.branches.size(); ++k) {
    const auto& b = modalities_.branches[k];
    const auto x = t.input(input_name(b.modality));
    hidden.push_back(dense_branch(t, x, std::string(modality_name(b.modality)), b.dropout_rate, k));
  }
  ad::NodeId fused = hidden.front();
  if (hidden.size() > 1) {
    const auto avg = t.average(std::vector<ad::NodeId>(hidden.begin() + 1, hidden.end()));
    fused = t.concat_cols({avg, hidden.front()});
  }
  attach_loss(t, linear_head(t, fused));
}

ad::Bindings FusionNetwork::bind_features(const data::Dataset& data, std::span<const std::size_t> rows) const {
  std::vector<const data::FeatureBundle*> bundles;
  std::vector<const std::string*> ids;
  for (std::size_t r : rows) {
    if (r >= data.size()) throw ContractError("row index out of range");
    bundles.push_back(&data.features[r]);
    ids.push_back(&data.cohort[r].patient_id);
  }
  ad::Bindings b;
  for (const auto& br : modalities_.branches)
    b.emplace(input_name(br.modality), gather(br.modality, br.in_dim, bundles, ids));
  if (modalities_.score_only) b.emplace("ones", ad::Tensor::filled({modalities_.branches.front().in_dim, 1}, 1.0));
  return b;
}

double FusionNetwork::predict_risk(const data::FeatureBundle& bundle) const {
  const data::FeatureBundle* one[] = {&bundle};
  ad::Bindings b;
  for (const auto& br : modalities_.branches) b.emplace(input_name(br.modality), gather(br.modality, br.in_dim, one, {}));
  if (modalities_.score_only) b.emplace("ones", ad::Tensor::filled({modalities_.branches.front().in_dim, 1}, 1.0));
  static const std::vector<std::string> target{"risk"};
  return tape_->forward(with_params(std::move(b), params_), {}, target).output("risk").item();
}

// ---------------------------------------------------------------------------
// DeepSurvMlp

DeepSurvMlp::DeepSurvMlp(std::size_t in_dim, std::size_t hidden_dim, double dropout_rate, std::uint64_t init_seed)
    : tape_(std::make_shared<ad::Tape>()), in_dim_(in_dim) {
  if (in_dim == 0 || hidden_dim == 0) throw ConfigError("MLP dimensions must be positive");
  Rng rng(init_seed);
  add_dense_params(params_, "hidden", in_dim, hidden_dim, rng);
  add_dense_params(params_, "head", hidden_dim, 1, rng);
  ad::Tape& t = *tape_;
  const auto x = t.input("x");
  attach_loss(t, linear_head(t, dense_branch(t, x, "hidden", dropout_rate, 0)));
}

ad::Bindings DeepSurvMlp::bind_features(const data::Dataset& data, std::span<const std::size_t> rows) const {
  std::vector<const data::FeatureBundle*> bundles;
  std::vector<const std::string*> ids;
  for (std::size_t r : rows) {
    bundles.push_back(&data.features.at(r));
    ids.push_back(&data.cohort[r].patient_id);
  }
  ad::Bindings b;
  b.emplace("x", gather(Modality::Saps, in_dim_, bundles, ids));
  return b;
}

// ---------------------------------------------------------------------------
// training

std::uint64_t init_seed_for(const TrainConfig& config) { return derive_seed(config.seed, {kInitStream}); }

TrainLog train_model(RiskModel& model, const data::Dataset& data, std::span<const std::size_t> train_rows,
                     std::span<const std::size_t> val_rows, const TrainConfig& config) {
  validate(config);
  TrainLog log;
  if (config.epochs == 0 || model.params().empty()) return log;
  if (train_rows.empty()) throw InputError("training set is empty");
  const auto train_records = data.records(train_rows);
  if (surv::count_events(train_records) == 0) throw LikelihoodError("training set has no events");
  const bool validate_on_holdout =
      !val_rows.empty() && surv::count_events(data.records(val_rows)) > 0;

  ad::AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  ad::AdamState state = ad::make_adam_state(model.params(), adam);
  ad::ParamStore best = model.params();
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;

  static const std::vector<std::string> target{"loss"};
  std::vector<std::size_t> order(train_rows.begin(), train_rows.end());
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle(derive_seed(config.seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)}));
    order.assign(train_rows.begin(), train_rows.end());
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform01(shuffle) * static_cast<double>(i));
      std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }

    EpochLog entry;
    entry.epoch = epoch;
    double loss_sum = 0.0;
    int used = 0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += batch, ++b) {
      std::span<const std::size_t> rows(order.data() + start, std::min(batch, order.size() - start));
      bool any_event = false;
      for (std::size_t r : rows) any_event = any_event || data.cohort[r].event;
      if (!any_event) {
        ++entry.skipped_batches;
        continue;
      }
      ad::ForwardOptions opts;
      opts.training = true;
      opts.seed = derive_seed(config.seed, {kDropoutStream, static_cast<std::uint64_t>(epoch), b});
      const auto ev = model.tape().forward(model.bind_batch(data, rows), opts, target);
      loss_sum += ev.output("loss").item();
      ++used;
      ad::adam_step(state, model.params(), ev.backward("loss"));
    }
    entry.train_loss = used ? loss_sum / used : std::numeric_limits<double>::quiet_NaN();
    entry.validation_loss = validate_on_holdout ? model.loss(data, val_rows) : entry.train_loss;
    log.epochs.push_back(entry);

    if (entry.validation_loss < best_loss) {
      best_loss = entry.validation_loss;
      best = model.params();
      log.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      log.stopped_early = true;
      break;
    }
  }
  if (log.best_epoch >= 0) model.params() = std::move(best);
  return log;
}

TrainResult train(const data::Dataset& data, std::span<const std::size_t> train_rows,
                  std::span<const std::size_t> val_rows, const ModalitySet& modalities, const TrainConfig& config) {
  validate(config);
  if (modalities.branches.empty()) throw ConfigError("modality set is empty");
  FusionNetwork net(modalities.with_dropout(config.dropout), init_seed_for(config));
  TrainLog log = train_model(net, data, train_rows, val_rows, config);
  return {std::move(net), std::move(log)};
}

}  // namespace icumort::fusion
