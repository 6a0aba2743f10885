#pragma once

#include <string>

#include "icumort/eval/bootstrap.hpp"
#include "icumort/fusion/fusion.hpp"

namespace icumort::config {

/// Everything a run can take from a configuration file. Defaults are the
/// evaluation protocol: 200 bootstrap replicates, a 70/10/20 split, 250
/// epochs, batch 72, dropout 0.5, learning rate 0.001.
struct RunConfig {
  fusion::TrainConfig train;
  eval::SplitSpec split;
  eval::BootstrapConfig bootstrap;  // its split member mirrors `split`
};

/// Reads a JSON object with optional sections "train", "split" and
/// "bootstrap" whose keys are the struct field names. Unknown keys are
/// rejected so that typos do not pass silently.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text);

/// Canonical JSON rendering of a configuration, including the branch
/// dimensions of every model variant.
std::string snapshot(const RunConfig& config);

}  // namespace icumort::config
