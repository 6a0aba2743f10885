#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "icumort/error.hpp"
#include "icumort/fusion/fusion.hpp"
#include "icumort/rng.hpp"

namespace icumort::fusion {

namespace {

constexpr char kMagic[8] = {'I', 'C', 'M', 'F', 'N', 'E', 'T', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  template <class T>
  void pod(T v) {
    bytes(&v, sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  void bytes(void* p, std::size_t n) {
    if (n > data_.size() - pos_) throw FormatError("checkpoint is truncated");
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
  T pod() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > data_.size() - pos_) throw FormatError("checkpoint is truncated");
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

nlohmann::ordered_json header_json(const ModalitySet& set, const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["variant"] = set.variant;
  j["score_only"] = set.score_only;
  j["branches"] = nlohmann::ordered_json::array();
  for (const auto& b : set.branches)
    j["branches"].push_back({{"modality", modality_name(b.modality)},
                             {"in_dim", b.in_dim},
                             {"out_dim", b.out_dim},
                             {"dropout", b.dropout_rate}});
  j["train_config"] = {{"epochs", c.epochs},
                       {"batch_size", c.batch_size},
                       {"dropout", c.dropout},
                       {"learning_rate", c.learning_rate},
                       {"early_stop_patience", c.early_stop_patience},
                       {"seed", c.seed}};
  return j;
}

}  // namespace

void save_checkpoint(std::ostream& out, const FusionNetwork& network, const TrainConfig& config) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.pod(kCheckpointVersion);
  w.str(header_json(network.modalities(), config).dump());
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(network.params().size()));
  for (const auto& [name, t] : network.params()) {
    w.str(name);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) w.pod<std::uint64_t>(e);
    for (double v : t.values()) w.pod(v);
  }
  const std::uint64_t sum = fnv1a(w.buffer());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  out.write(reinterpret_cast<const char*>(&sum), sizeof sum);
  if (!out) throw FormatError("failed to write checkpoint");
}

void save_checkpoint(const std::string& path, const FusionNetwork& network, const TrainConfig& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  save_checkpoint(out, network, config);
}

Checkpoint load_checkpoint(std::istream& in) {
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string all = ss.str();
  if (all.size() < sizeof kMagic + sizeof(std::uint64_t) || std::memcmp(all.data(), kMagic, sizeof kMagic) != 0)
    throw FormatError("not a model checkpoint");
  const std::string_view body(all.data(), all.size() - sizeof(std::uint64_t));
  std::uint64_t stored = 0;
  std::memcpy(&stored, all.data() + body.size(), sizeof stored);
  if (stored != fnv1a(body)) throw FormatError("checkpoint checksum mismatch");

  Reader r(body);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (const auto v = r.pod<std::uint32_t>(); v != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(v));

  ModalitySet set;
  TrainConfig config;
  try {
    const auto j = nlohmann::json::parse(r.str());
    set.variant = j.at("variant").get<std::string>();
    set.score_only = j.at("score_only").get<bool>();
    for (const auto& b : j.at("branches"))
      set.branches.push_back({modality_from_name(b.at("modality").get<std::string>()),
                              b.at("in_dim").get<std::size_t>(), b.at("out_dim").get<std::size_t>(),
                              b.at("dropout").get<double>()});
    const auto& c = j.at("train_config");
    config.epochs = c.at("epochs").get<int>();
    config.batch_size = c.at("batch_size").get<int>();
    config.dropout = c.at("dropout").get<double>();
    config.learning_rate = c.at("learning_rate").get<double>();
    config.early_stop_patience = c.at("early_stop_patience").get<int>();
    config.seed = c.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }

  ad::ParamStore params;
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const auto rank = r.pod<std::uint32_t>();
    if (rank == 0 || rank > 8) throw FormatError("checkpoint tensor '" + name + "' has bad rank");
    ad::Shape shape(rank);
    std::uint64_t n = 1;
    for (auto& e : shape) {
      e = r.pod<std::uint64_t>();
      n *= e;
    }
    if (n > body.size()) throw FormatError("checkpoint tensor '" + name + "' is larger than the file");
    std::vector<double> values(n);
    r.bytes(values.data(), n * sizeof(double));
    try {
      params.emplace(name, ad::Tensor(std::move(shape), std::move(values)));
    } catch (const Error& e) {
      throw FormatError("checkpoint tensor '" + name + "': " + e.what());
    }
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  try {
    return {FusionNetwork(std::move(set), std::move(params)), config};
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace icumort::fusion
