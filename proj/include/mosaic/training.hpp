#pragma once

// Two-stage curriculum: Stage 1 learns identifiable latents with the temporal
// prior and a dense decoder; Stage 2 freezes encoder and prior and fits the
// additive decoder under a sparsity schedule. Also run configuration, presets,
// evaluation of trained checkpoints, and sweeps.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "mosaic/influence_scores.hpp"
#include "mosaic/metrics.hpp"
#include "mosaic/model.hpp"
#include "mosaic/synthbench.hpp"

namespace mosaic {

enum class SparsityKind { Entropy, GroupLasso, None };
std::string to_string(SparsityKind k);
SparsityKind sparsity_kind_from_string(const std::string& s);

/// Squared error summed over channels, or averaged over channels (per-element MSE).
enum class ReconReduction { ChannelSum, Mean };
std::string to_string(ReconReduction r);
ReconReduction recon_reduction_from_string(const std::string& s);

struct TrainConfig {
  double beta = 2e-3;
  double gamma = 2e-2;
  double lr = 5e-4;
  double weight_decay = 1e-4;
  int batch_size = 256;
  int stage1_epochs = 80;
  int stage2_epochs = 80;
  double lambda_max = 50.0;
  int warmup_epochs = 5;
  int ramp_epochs = 20;
  SparsityKind sparsity = SparsityKind::Entropy;
  ReconReduction recon = ReconReduction::ChannelSum;
  /// Stage-2 reconstruction enters the objective summed over a full batch
  /// (weight batch_size) against the batch-independent sparsity penalty.
  bool stage2_batch_sum = true;
  bool no_temporal = false;
  bool dense_stage2 = false;
  double grad_clip = 10.0;
  double alive_frac = 0.01;
  std::uint64_t seed = 0;

  double effective_gamma() const { return no_temporal ? 0.0 : gamma; }
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// λ at a zero-based Stage-2 epoch: 0 during warmup, then
/// λ_max·min(1, (epoch − warmup + 1)/ramp). Always 0 when no penalty is active.
double lambda_schedule(int epoch, const TrainConfig& cfg);

/// Weight on the per-sample reconstruction in the Stage-2 total: batch_size or 1.
double stage2_recon_weight(const TrainConfig& cfg);

/// Everything needed to reproduce a run: data source, model and training settings.
struct RunConfig {
  std::string name = "custom";
  std::string dataset = "synthetic";  // "synthetic" | "tokamak"
  synth::SynthConfig synth;
  std::optional<double> n_over_d;  // desk-scale level; replaces stride and window cap
  synth::TokamakConfig tokamak;
  ModelConfig model;
  TrainConfig train;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  /// Named defaults: "synthetic" (D=30, n̂=12) and "tokamak" (D=12, n̂=5).
  static RunConfig preset(const std::string& name);
  static std::vector<std::string> preset_names();
  /// Override a dotted key ("train.beta", "synth.alpha", "n_over_d"); the value is parsed as JSON when possible.
  void set(const std::string& key, const std::string& value);
  void apply(const nlohmann::json& overrides);  // {dotted key: JSON value}
  /// Hash of the data-producing fields; identifies cached datasets.
  std::string data_key() const;
};

/// Builds the dataset a run config describes (desk-scale levels included).
synth::TimeSeriesDataset make_dataset(const RunConfig& cfg);

/// Dataset as tensors: x (W, S, D) float32 and regime (W) int64.
struct WindowTensors {
  torch::Tensor x;
  torch::Tensor regime;
};
WindowTensors to_tensors(const synth::TimeSeriesDataset& ds);

struct Stage1Terms {
  torch::Tensor total, recon, gaussian_kl, temporal_kl;
};

/// Per-frame reconstruction (summed over channels, averaged over frames and batch)
/// + β·closed-form KL(q‖N(0,I)) over the L past frames + γ·single-sample
/// temporal KL at the final frame. noise: (B, S, n̂).
Stage1Terms stage1_loss(MosaicModelImpl& m, const torch::Tensor& x, const torch::Tensor& regime, const torch::Tensor& noise,
                        const TrainConfig& cfg);

/// log q(z_t|x_t) − log p(z_t | z_{t−L:t−1}, c) per sample, summed over latents.
torch::Tensor temporal_kl_samples(MosaicModelImpl& m, const torch::Tensor& x, const torch::Tensor& regime,
                                  const torch::Tensor& noise, bool create_graph = false);

/// Closed-form KL(N(mu, exp(logvar)) ‖ N(0, I)) summed over the last axis.
torch::Tensor gaussian_kl(const torch::Tensor& mu, const torch::Tensor& logvar);

struct Posterior {
  torch::Tensor mu, logvar;  // (W, S, n̂), detached
};
/// Frozen-encoder posterior of every frame, evaluated in chunks without gradients.
Posterior encode_frozen(MosaicModelImpl& m, const torch::Tensor& x);

struct Stage2Terms {
  torch::Tensor total, recon, sparsity;
  int alive = 0;
};

/// Reconstruction from frozen-posterior samples + λ·sparsity of the in-graph contrast
/// influence. Gradients reach only the Stage-2 decoder.
Stage2Terms stage2_loss(MosaicModelImpl& m, const torch::Tensor& x, const Posterior& post, const torch::Tensor& noise,
                        double lambda, const TrainConfig& cfg);

/// Per-latent mean/std of posterior means of final frames; std floored at 1e-6.
LatentStats posterior_stats(const torch::Tensor& mu_last);

struct EpochRecord {
  int stage = 1;
  int epoch = 0;
  double recon = 0, gaussian_kl = 0, temporal_kl = 0, sparsity = 0, lambda = 0, total = 0;
  int alive = -1;  // Stage 2 only
  double seconds = 0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  double seconds = 0;
  void save_csv(const std::filesystem::path& path) const;
  static TrainLog load_csv(const std::filesystem::path& path);
};

struct TrainOptions {
  /// Start from a Stage-1 checkpoint and run Stage 2 only.
  std::optional<MosaicModel> resume;
  /// Written right after Stage 1.
  std::optional<std::filesystem::path> stage1_checkpoint;
  /// Written when a non-finite loss aborts training (last good parameters).
  std::optional<std::filesystem::path> failure_checkpoint;
  std::function<void(const EpochRecord&)> on_epoch;
  bool skip_stage2 = false;
};

struct TrainResult {
  MosaicModel model{nullptr};
  TrainLog log;
};

TrainResult train(const synth::TimeSeriesDataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const TrainOptions& opts = {});

struct EvalOptions {
  std::optional<influence::ScoreKind> score;  // default: contrast, or jacobian for a dense Stage-2 decoder
  double gate = 0.5;
  bool rho = true;
  std::uint64_t seed = 0;
};

/// Posterior means of every window's final frame (W × n̂).
Eigen::MatrixXd posterior_means(MosaicModelImpl& m, const synth::TimeSeriesDataset& ds);

influence::InfluenceMatrix influence_of(MosaicModelImpl& m, const synth::TimeSeriesDataset& ds,
                                        std::optional<influence::ScoreKind> kind = std::nullopt);

metrics::RhoEstimate estimate_rho(MosaicModelImpl& m, const synth::TimeSeriesDataset& ds);

metrics::MetricsReport evaluate(MosaicModelImpl& m, const synth::TimeSeriesDataset& ds, const EvalOptions& opts = {});

// Sweeps.

struct SweepPoint {
  std::string label;
  nlohmann::json overrides = nlohmann::json::object();
};

struct SweepSpec {
  std::string axis;
  std::vector<SweepPoint> points;
  std::vector<std::uint64_t> seeds;
};

/// Named axes: alpha, nd, ablation, label_noise, zdim, sparsity, lambda; any other
/// name is treated as a dotted config key.
SweepSpec make_sweep(const std::string& axis, const std::vector<std::string>& values, const std::vector<std::uint64_t>& seeds);

struct RunRecord {
  std::string label;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  nlohmann::json metrics = nlohmann::json::object();
  double seconds = 0;
  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
};

/// Scalar metric columns reported by sweeps.
const std::vector<std::string>& sweep_metrics();
/// Flattens a report into the sweep scalar columns (missing values are omitted).
nlohmann::json sweep_scalars(const metrics::MetricsReport& r);

struct AggregateRow {
  std::string label;
  int runs = 0;
  int failures = 0;
  std::map<std::string, std::pair<double, double>> stats;  // metric -> (mean, population std)
};

/// Groups by label in first-seen order; independent of record order within a label.
std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records);

/// sweep.csv (one row per run), summary.csv and summary.json (mean ± std per label).
void write_sweep(const SweepSpec& spec, const std::vector<RunRecord>& records, const std::filesystem::path& dir);

}  // namespace mosaic
