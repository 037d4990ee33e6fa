#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lot/corpus.hpp"
#include "lot/lot_loss.hpp"
#include "lot/model.hpp"
#include "lot/trainer.hpp"

namespace lot {

// The five pipeline stages accepted by `train`.
const std::vector<std::string>& train_stages();

struct DataSection {
  GenConfig gen;
  std::uint64_t seed = 1;
  SplitRatios split;
  std::uint64_t split_seed = 1;
};

struct ModelSection {
  Arch arch;
  std::uint64_t init_seed = 0;
  double eps_smooth = 1e-8;
};

struct EvalSection {
  int decode_max_len = 20;
  std::string scorer = "lexicon";  // lexicon | bow_linear
};

// Declarative run configuration. Every field is optional in the file; the
// loaded form always carries every default filled in, and that resolved form
// is what gets hashed and embedded into manifests and reports.
struct RunConfig {
  DataSection data;
  ModelSection model;
  LotConfig loss;
  TrainConfig train;  // stage defaults
  // Fully resolved per-stage configs (stage defaults + per-stage overrides
  // from the file's train.<stage> objects).
  std::map<std::string, TrainConfig> stage_train;
  EvalSection eval;

  const TrainConfig& train_for(const std::string& stage) const;
  void validate() const;
};

RunConfig default_run_config();

// Strict JSON parse: unknown keys and malformed values are configuration
// errors, so a typo never silently falls back to a default.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Canonical resolved form (sorted keys, every default explicit).
std::string resolved_config_json(const RunConfig& cfg);

// FNV-1a over the resolved form, truncated to 8 hex characters; used in
// checkpoint and manifest file names.
std::string config_hash8(const RunConfig& cfg);

}  // namespace lot
