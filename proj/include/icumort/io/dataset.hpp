#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icumort/autodiff/tensor.hpp"
#include "icumort/saps/saps2.hpp"
#include "icumort/survival/survival.hpp"

namespace icumort::data {

inline constexpr std::size_t kSapsDim = 15;
inline constexpr std::size_t kLabelDim = 14;
inline constexpr std::size_t kTextDim = 768;
inline constexpr std::size_t kImageDim = 1024;

/// The 13 thorax findings followed by "Normal", in label-vector order.
extern const std::array<std::string_view, kLabelDim> kLabelNames;

/// Index of a label by name (case-insensitive, spaces or underscores).
std::size_t label_index(std::string_view name);

/// Per-patient model inputs. Only the SAPS vector is mandatory.
struct FeatureBundle {
  std::vector<double> saps;                     // 15 risk factors
  std::optional<std::vector<double>> labels;    // 14 flags in {0, 1}
  std::optional<std::vector<double>> text;      // 768 text-encoder features
  std::optional<std::vector<double>> image;     // 1024 image-encoder features
  std::optional<std::vector<double>> gcn;       // flattened GCN hidden states
  std::optional<ad::Tensor> tokens;             // m x d token embeddings
  std::optional<saps::Measurements> measurements;

  friend bool operator==(const FeatureBundle&, const FeatureBundle&) = default;
};

/// Throws InputError on wrong lengths, non-finite values or non-binary labels.
void validate_bundle(const FeatureBundle& bundle);

struct Dataset {
  surv::Cohort cohort;
  std::vector<FeatureBundle> features;

  std::size_t size() const noexcept { return features.size(); }
  /// Records for the given rows; repeated rows are allowed.
  std::vector<surv::SurvivalRecord> records(std::span<const std::size_t> rows) const;
  std::vector<std::size_t> all_rows() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Cross-row checks: equal lengths per modality, bundle validity, one bundle
/// per record.
void validate_dataset(const Dataset& dataset);

inline constexpr int kFormatVersion = 1;

struct SaveOptions {
  /// Store text/image/gcn vectors and token matrices in a binary sidecar
  /// (float32, little endian, length-prefixed) next to the dataset file.
  bool sidecar = true;
};

/// Line-delimited JSON: a header object followed by one patient per line.
Dataset load_dataset(const std::string& path);
void save_dataset(const std::string& path, const Dataset& dataset, const SaveOptions& options = {});

/// Path of the sidecar written for a dataset file.
std::string sidecar_path(const std::string& dataset_path);

}  // namespace icumort::data
