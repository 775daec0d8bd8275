#pragma once

// Dataset resolution (with the on-disk cache) and the single-run pipeline
// shared by `train`, sweep workers and the acceptance harness.

#include <filesystem>
#include <optional>
#include <string>

#include "mosaic/training.hpp"

namespace mosaic::lab {

/// Cache root from MOSAIC_LAB_CACHE, if set.
std::optional<std::filesystem::path> cache_root();

/// Loads `data_dir` when given; otherwise builds the dataset the config
/// describes, through the cache when one is configured.
synth::TimeSeriesDataset obtain_dataset(const RunConfig& cfg, const std::optional<std::filesystem::path>& data_dir = std::nullopt);

struct RunFiles {
  static constexpr const char* model = "model.ckpt";
  static constexpr const char* stage1 = "stage1.ckpt";
  static constexpr const char* failure = "failure.ckpt";
  static constexpr const char* log = "train_log.csv";
  static constexpr const char* config = "config.json";
  static constexpr const char* record = "record.json";
};

struct RunOptions {
  std::optional<std::filesystem::path> data_dir;
  /// Stage-1 checkpoint to start Stage 2 from.
  std::optional<std::filesystem::path> resume;
  bool evaluate = true;
  bool verbose = true;
  std::string label;
};

struct RunOutcome {
  TrainResult trained;
  std::optional<metrics::MetricsReport> report;
  RunRecord record;
};

/// Trains (both stages, or Stage 2 from `resume`), evaluates, and writes
/// model.ckpt, stage1.ckpt, train_log.csv, config.json, metrics.{json,csv} and record.json into `dir`.
RunOutcome execute_run(const RunConfig& cfg, const std::filesystem::path& dir, const RunOptions& opts = {});

/// Provenance stored in checkpoints written by execute_run.
nlohmann::json run_provenance(const RunConfig& cfg);

}  // namespace mosaic::lab
