#include "icumort/io/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "icumort/error.hpp"

namespace icumort::data {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const std::array<std::string_view, kLabelDim> kLabelNames = {
    "Atelectasis",      "Cardiomegaly",  "Consolidation",  "Edema",
    "Enlarged_Cardiomediastinum", "Fracture", "Lung_Lesion", "Lung_Opacity",
    "Pleural_Effusion", "Pleural_Other", "Pneumonia",      "Pneumothorax",
    "Support_Devices",  "Normal"};

std::size_t label_index(std::string_view name) {
  auto norm = [](std::string_view s) {
    std::string out;
    for (char c : s) out.push_back(c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
  };
  const std::string key = norm(name);
  for (std::size_t i = 0; i < kLabelDim; ++i)
    if (norm(kLabelNames[i]) == key) return i;
  throw InputError("unknown label '" + std::string(name) + "'");
}

namespace {

void check_vector(const std::vector<double>& v, std::size_t expected, const char* field) {
  if (expected != 0 && v.size() != expected)
    throw InputError(std::string("field '") + field + "': expected " + std::to_string(expected) +
                     " values, got " + std::to_string(v.size()));
  if (v.empty()) throw InputError(std::string("field '") + field + "' is empty");
  for (double x : v)
    if (!std::isfinite(x)) throw InputError(std::string("field '") + field + "' has a non-finite value");
}

// ---- sidecar encoding -------------------------------------------------------

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError("sidecar truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

class SidecarWriter {
 public:
  explicit SidecarWriter(const std::string& path) : path_(path) {}

  json write(std::span<const double> values) {
    if (!out_.is_open()) {
      out_.open(path_, std::ios::binary | std::ios::trunc);
      if (!out_) throw FormatError("cannot write sidecar '" + path_ + "'");
    }
    json ref;
    ref["sidecar"] = fs::path(path_).filename().string();
    ref["offset"] = offset_;
    put_u32(out_, static_cast<std::uint32_t>(values.size()));
    for (double v : values) put_u32(out_, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    offset_ += 4 + 4 * values.size();
    return ref;
  }

  bool used() const { return out_.is_open(); }

 private:
  std::string path_;
  std::ofstream out_;
  std::uint64_t offset_ = 0;
};

class SidecarReader {
 public:
  explicit SidecarReader(fs::path dir) : dir_(std::move(dir)) {}

  std::vector<double> read(const std::string& file, std::uint64_t offset) {
    auto& in = stream(file);
    in.clear();
    in.seekg(static_cast<std::streamoff>(offset));
    if (!in) throw FormatError("sidecar offset " + std::to_string(offset) + " is out of range");
    const std::uint32_t count = get_u32(in);
    std::vector<double> v(count);
    for (auto& x : v) x = static_cast<double>(std::bit_cast<float>(get_u32(in)));
    return v;
  }

 private:
  std::ifstream& stream(const std::string& file) {
    if (file != current_) {
      in_ = std::ifstream(dir_ / file, std::ios::binary);
      if (!in_) throw FormatError("cannot open sidecar '" + (dir_ / file).string() + "'");
      current_ = file;
    }
    return in_;
  }

  fs::path dir_;
  std::string current_;
  std::ifstream in_;
};

// ---- JSON field helpers -----------------------------------------------------

std::vector<double> numbers(const json& j, const char* field) {
  if (!j.is_array()) throw InputError(std::string("field '") + field + "' must be an array");
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw InputError(std::string("field '") + field + "' must hold numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

std::vector<double> vector_field(const json& j, const char* field, SidecarReader& sidecar) {
  if (j.is_object()) {
    if (!j.contains("sidecar") || !j.contains("offset"))
      throw InputError(std::string("field '") + field + "': sidecar reference needs 'sidecar' and 'offset'");
    return sidecar.read(j.at("sidecar").get<std::string>(), j.at("offset").get<std::uint64_t>());
  }
  return numbers(j, field);
}

json measurements_to_json(const saps::Measurements& m) {
  json j;
  j["age"] = m.age;
  j["heart_rate"] = m.heart_rate;
  j["systolic_bp"] = m.systolic_bp;
  j["temperature"] = m.temperature;
  j["pao2_fio2"] = m.pao2_fio2 ? json(*m.pao2_fio2) : json(nullptr);
  j["bun"] = m.bun;
  j["urine_output"] = m.urine_output;
  j["sodium"] = m.sodium;
  j["potassium"] = m.potassium;
  j["bicarbonate"] = m.bicarbonate;
  j["bilirubin"] = m.bilirubin;
  j["wbc"] = m.wbc;
  j["gcs"] = m.gcs;
  j["chronic_disease"] = std::string(saps::chronic_disease_name(m.chronic_disease));
  j["admission_type"] = std::string(saps::admission_type_name(m.admission_type));
  return j;
}

saps::Measurements measurements_from_json(const json& j) {
  auto num = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_number())
      throw InputError(std::string("saps_measurements.") + key + " must be a number");
    return j.at(key).get<double>();
  };
  saps::Measurements m;
  m.age = num("age");
  m.heart_rate = num("heart_rate");
  m.systolic_bp = num("systolic_bp");
  m.temperature = num("temperature");
  if (j.contains("pao2_fio2") && !j.at("pao2_fio2").is_null()) m.pao2_fio2 = num("pao2_fio2");
  m.bun = num("bun");
  m.urine_output = num("urine_output");
  m.sodium = num("sodium");
  m.potassium = num("potassium");
  m.bicarbonate = num("bicarbonate");
  m.bilirubin = num("bilirubin");
  m.wbc = num("wbc");
  const double gcs = num("gcs");
  if (gcs != std::floor(gcs)) throw InputError("saps_measurements.gcs must be an integer");
  m.gcs = static_cast<int>(gcs);
  m.chronic_disease = saps::chronic_disease_from_name(j.value("chronic_disease", std::string("none")));
  m.admission_type = saps::admission_type_from_name(j.value("admission_type", std::string("medical")));
  return m;
}

std::pair<surv::SurvivalRecord, FeatureBundle> parse_row(const json& j, SidecarReader& sidecar) {
  if (!j.is_object()) throw InputError("row must be a JSON object");
  if (!j.contains("patient_id") || !j.at("patient_id").is_string())
    throw InputError("field 'patient_id' must be a string");
  const std::string id = j.at("patient_id").get<std::string>();

  surv::SurvivalRecord record;
  if (j.contains("observed_time_hours")) {
    if (!j.at("observed_time_hours").is_number()) throw InputError("field 'observed_time_hours' must be a number");
    if (!j.contains("event")) throw InputError("field 'event' is required with observed_time_hours");
    const auto& ev = j.at("event");
    if (!(ev.is_boolean() || (ev.is_number_integer() && (ev.get<int>() == 0 || ev.get<int>() == 1))))
      throw InputError("field 'event' must be 0, 1, true or false");
    record.patient_id = id;
    record.observed_time = j.at("observed_time_hours").get<double>();
    record.event = ev.is_boolean() ? ev.get<bool>() : ev.get<int>() == 1;
    surv::validate_record(record);
  } else {
    auto opt = [&](const char* key) -> std::optional<double> {
      if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
      if (!j.at(key).is_number()) throw InputError(std::string("field '") + key + "' must be a number");
      return j.at(key).get<double>();
    };
    record = surv::make_record(id, opt("death_time_hours"), opt("censor_time_hours"));
  }

  FeatureBundle b;
  if (j.contains("saps_measurements")) b.measurements = measurements_from_json(j.at("saps_measurements"));
  if (j.contains("saps")) {
    b.saps = numbers(j.at("saps"), "saps");
  } else if (b.measurements) {
    b.saps = saps::risk_factor_vector(*b.measurements);
  } else {
    throw InputError("field 'saps' (or 'saps_measurements') is required");
  }
  if (j.contains("labels")) b.labels = numbers(j.at("labels"), "labels");
  if (j.contains("text")) b.text = vector_field(j.at("text"), "text", sidecar);
  if (j.contains("image")) b.image = vector_field(j.at("image"), "image", sidecar);
  if (j.contains("gcn")) b.gcn = vector_field(j.at("gcn"), "gcn", sidecar);
  if (j.contains("tokens")) {
    const auto& t = j.at("tokens");
    if (!t.is_object() || !t.contains("rows") || !t.contains("cols"))
      throw InputError("field 'tokens' needs 'rows' and 'cols'");
    const auto rows = t.at("rows").get<std::size_t>();
    const auto cols = t.at("cols").get<std::size_t>();
    std::vector<double> v = t.contains("values") ? numbers(t.at("values"), "tokens") : vector_field(t, "tokens", sidecar);
    if (rows == 0 || cols == 0 || v.size() != rows * cols)
      throw InputError("field 'tokens': " + std::to_string(v.size()) + " values do not fill " +
                       std::to_string(rows) + " x " + std::to_string(cols));
    b.tokens = ad::Tensor::matrix(rows, cols, std::move(v));
  }
  validate_bundle(b);
  return {std::move(record), std::move(b)};
}

json row_to_json(const surv::SurvivalRecord& r, const FeatureBundle& b, SidecarWriter* sidecar) {
  json j;
  j["patient_id"] = r.patient_id;
  j["observed_time_hours"] = r.observed_time;
  j["event"] = r.event ? 1 : 0;
  j["saps"] = b.saps;
  if (b.measurements) j["saps_measurements"] = measurements_to_json(*b.measurements);
  if (b.labels) j["labels"] = *b.labels;
  auto vec = [&](const char* key, const std::optional<std::vector<double>>& v) {
    if (!v) return;
    j[key] = sidecar ? sidecar->write(*v) : json(*v);
  };
  vec("text", b.text);
  vec("image", b.image);
  vec("gcn", b.gcn);
  if (b.tokens) {
    json t = sidecar ? sidecar->write(b.tokens->values()) : json::object();
    t["rows"] = b.tokens->rows();
    t["cols"] = b.tokens->cols();
    if (!sidecar) t["values"] = std::vector<double>(b.tokens->values().begin(), b.tokens->values().end());
    j["tokens"] = std::move(t);
  }
  return j;
}

}  // namespace

void validate_bundle(const FeatureBundle& b) {
  check_vector(b.saps, kSapsDim, "saps");
  if (b.labels) {
    check_vector(*b.labels, kLabelDim, "labels");
    for (double x : *b.labels)
      if (x != 0.0 && x != 1.0) throw InputError("field 'labels' must hold 0/1 flags");
  }
  if (b.text) check_vector(*b.text, kTextDim, "text");
  if (b.image) check_vector(*b.image, kImageDim, "image");
  if (b.gcn) check_vector(*b.gcn, 0, "gcn");
  if (b.tokens && !b.tokens->all_finite()) throw InputError("field 'tokens' has a non-finite value");
}

std::vector<surv::SurvivalRecord> Dataset::records(std::span<const std::size_t> rows) const {
  std::vector<surv::SurvivalRecord> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(cohort[r]);
  return out;
}

std::vector<std::size_t> Dataset::all_rows() const {
  std::vector<std::size_t> rows(size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

void validate_dataset(const Dataset& d) {
  if (d.cohort.size() != d.features.size())
    throw InputError("dataset has " + std::to_string(d.cohort.size()) + " records but " +
                     std::to_string(d.features.size()) + " feature bundles");
  std::optional<std::size_t> gcn_len;
  for (std::size_t i = 0; i < d.features.size(); ++i) {
    try {
      validate_bundle(d.features[i]);
      if (const auto& g = d.features[i].gcn) {
        if (gcn_len && *gcn_len != g->size())
          throw InputError("field 'gcn': length " + std::to_string(g->size()) + " differs from earlier rows (" +
                           std::to_string(*gcn_len) + ")");
        gcn_len = g->size();
      }
    } catch (const InputError& e) {
      throw InputError("patient row " + std::to_string(i + 1) + ": " + e.what());
    }
  }
}

std::string sidecar_path(const std::string& dataset_path) {
  fs::path p(dataset_path);
  return (p.parent_path() / (p.stem().string() + ".vectors.bin")).string();
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset '" + path + "'");
  SidecarReader sidecar(fs::path(path).parent_path());

  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  std::vector<surv::SurvivalRecord> records;
  std::vector<FeatureBundle> features;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!header) {
      if (!j.is_object() || j.value("format", std::string()) != "icumort-dataset")
        throw FormatError("dataset line 1 must be the header {\"format\": \"icumort-dataset\", ...}");
      const int version = j.value("version", 0);
      if (version != kFormatVersion)
        throw FormatError("unsupported dataset version " + std::to_string(version));
      header = true;
      continue;
    }
    try {
      auto [record, bundle] = parse_row(j, sidecar);
      records.push_back(std::move(record));
      features.push_back(std::move(bundle));
    } catch (const Error& e) {
      throw FormatError("dataset line " + std::to_string(line_no) + " (row " + std::to_string(records.size() + 1) +
                        "): " + e.what());
    } catch (const json::exception& e) {
      throw FormatError("dataset line " + std::to_string(line_no) + " (row " + std::to_string(records.size() + 1) +
                        "): " + e.what());
    }
  }
  if (!header) throw FormatError("dataset '" + path + "' is empty");

  Dataset d;
  try {
    d.cohort = surv::Cohort(std::move(records));
  } catch (const InputError& e) {
    throw FormatError(std::string("dataset '") + path + "': " + e.what());
  }
  d.features = std::move(features);
  try {
    validate_dataset(d);
  } catch (const InputError& e) {
    throw FormatError(e.what());
  }
  return d;
}

void save_dataset(const std::string& path, const Dataset& dataset, const SaveOptions& options) {
  validate_dataset(dataset);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write dataset '" + path + "'");
  SidecarWriter sidecar(sidecar_path(path));

  json header;
  header["format"] = "icumort-dataset";
  header["version"] = kFormatVersion;
  header["patients"] = dataset.size();
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i)
    out << row_to_json(dataset.cohort[i], dataset.features[i], options.sidecar ? &sidecar : nullptr).dump() << '\n';
  if (!out) throw FormatError("failed writing dataset '" + path + "'");
}

}  // namespace icumort::data
