#pragma once

// Encoder, dense and additive decoders, and the regime-conditioned Laplace
// transition prior with its diagonal log-det-Jacobian (batched v2 and
// per-dimension reference v1).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace mosaic {

struct ModelConfig {
  int D = 30;
  int latent_dim = 12;
  int encoder_hidden = 128;
  int encoder_depth = 4;  // linear layers
  double slope = 0.2;     // LeakyReLU negative slope
  int additive_hidden = 4;
  int lag = 2;
  int regime_embed_dim = 8;
  int transition_hidden = 128;
  double laplace_log_scale_init = 0.0;

  void validate() const;
  int transition_input() const { return lag * latent_dim + 1 + regime_embed_dim; }
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Floor applied to |∂r/∂z| before the log.
inline constexpr double kLogDetFloor = 1e-8;

/// LeakyReLU MLP D -> 2n̂ producing (mu, logvar).
struct EncoderImpl : torch::nn::Module {
  explicit EncoderImpl(const ModelConfig& cfg);
  /// x: (..., D) -> {mu, logvar}, each (..., n̂).
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x);
  /// Zeroes the last layer so mu = logvar = 0.
  void zero_output();

  torch::nn::Sequential net{nullptr};
  int D, n;
};
TORCH_MODULE(Encoder);

/// z = mu + exp(logvar / 2) * noise.
torch::Tensor reparameterize(const torch::Tensor& mu, const torch::Tensor& logvar, const torch::Tensor& noise);

/// LeakyReLU MLP n̂ -> D.
struct DenseDecoderImpl : torch::nn::Module {
  explicit DenseDecoderImpl(const ModelConfig& cfg);
  torch::Tensor forward(const torch::Tensor& z);
  torch::nn::Sequential net{nullptr};
  int D, n;
};
TORCH_MODULE(DenseDecoder);

/// x̂ = b + Σ_j f_j(z_j) with f_j: Linear(1,H) -> LeakyReLU -> Linear(H,D), evaluated for all j at once.
struct AdditiveDecoderImpl : torch::nn::Module {
  explicit AdditiveDecoderImpl(const ModelConfig& cfg);
  /// z: (B, n̂) -> per-component outputs (B, n̂, D), without the shared bias.
  torch::Tensor components(const torch::Tensor& z);
  torch::Tensor forward(const torch::Tensor& z);

  torch::Tensor w1, b1;  // (n, H)
  torch::Tensor w2;      // (n, H, D)
  torch::Tensor b2;      // (n, D)
  torch::Tensor bias;    // (D)
  int D, n, H;
  double slope;
};
TORCH_MODULE(AdditiveDecoder);

struct PriorEvaluation {
  torch::Tensor residual;   // (B, n̂)
  torch::Tensor log_scale;  // (n̂)
  torch::Tensor logdet;     // (B, n̂)
  torch::Tensor logprob;    // (B, n̂)
};

/// Per-dimension 3-layer transition MLPs h_j(z_{t-L:t-1}, z_{t,j}, e_c) with Laplace scales exp(s_j).
struct TransitionPriorImpl : torch::nn::Module {
  explicit TransitionPriorImpl(const ModelConfig& cfg);

  /// Per-dimension inputs (B, n̂, F): [flattened history, z_{t,j}, e_c].
  torch::Tensor inputs(const torch::Tensor& hist, const torch::Tensor& cur, const torch::Tensor& regime);
  /// Batched residuals for all dimensions. hist (B, L, n̂), cur (B, n̂), regime (B) int64.
  torch::Tensor residual_v2(const torch::Tensor& hist, const torch::Tensor& cur, const torch::Tensor& regime);
  /// Same map, one dimension at a time.
  torch::Tensor residual_v1(const torch::Tensor& hist, const torch::Tensor& cur, const torch::Tensor& regime);
  /// Residual of dimension j from its (B, F) input rows.
  torch::Tensor residual_dim(int j, const torch::Tensor& input_j);

  /// log|∂r_j/∂z_{t,j}| from one reverse pass over Σ r. create_graph keeps it differentiable.
  torch::Tensor logdet_v2(const torch::Tensor& hist, const torch::Tensor& cur, const torch::Tensor& regime,
                          bool create_graph = false, torch::Tensor* residual_out = nullptr);
  /// Reference: per dimension, the full (B, B, F) Jacobian of r_j by one reverse pass per
  /// sample, then its diagonal at the z_{t,j} slot.
  torch::Tensor logdet_v1(const torch::Tensor& hist, const torch::Tensor& cur, const torch::Tensor& regime);

  /// -|r|/b - log(2b) + log|∂r/∂z| elementwise.
  PriorEvaluation evaluate(const torch::Tensor& hist, const torch::Tensor& cur, const torch::Tensor& regime,
                           bool create_graph = false);
  torch::Tensor scales() const { return log_scale.exp(); }

  torch::Tensor w1, b1;  // (n, F, Hd), (n, Hd)
  torch::Tensor w2, b2;  // (n, Hd, Hd), (n, Hd)
  torch::Tensor w3, b3;  // (n, Hd), (n)
  torch::Tensor log_scale;  // (n)
  torch::nn::Embedding embed{nullptr};
  int n, L, F, Hd, E;
  double slope;
};
TORCH_MODULE(TransitionPrior);

/// Laplace log-density with log-det: -|r|/b - log(2b) + logdet.
torch::Tensor laplace_logprob(const torch::Tensor& residual, const torch::Tensor& log_scale, const torch::Tensor& logdet);

/// Per-latent standardization of posterior means; frozen when Stage 2 starts.
struct LatentStats {
  std::vector<double> mean, std;
  bool empty() const { return mean.empty(); }
  nlohmann::json to_json() const;
  static LatentStats from_json(const nlohmann::json& j);
};

/// All parameter collections plus standardization stats and provenance.
struct MosaicModelImpl : torch::nn::Module {
  explicit MosaicModelImpl(const ModelConfig& cfg);
  ModelConfig cfg;
  Encoder encoder{nullptr};
  DenseDecoder dense{nullptr};
  AdditiveDecoder additive{nullptr};
  TransitionPrior prior{nullptr};
  LatentStats stats;
  int stage = 0;  // completed stage: 0 none, 1 Stage 1, 2 Stage 2
  bool dense_stage2 = false;  // Stage 2 refit the dense decoder instead of the additive one
};
TORCH_MODULE(MosaicModel);

/// Builds a model with deterministic initialization from seed.
MosaicModel make_model(const ModelConfig& cfg, std::uint64_t seed);

/// Archive: "MOSAICKP", u64 little-endian manifest length, JSON manifest, then
/// every named parameter as row-major little-endian float32.
void save_checkpoint(const MosaicModel& model, const std::filesystem::path& path, const nlohmann::json& provenance = {});
MosaicModel load_checkpoint(const std::filesystem::path& path, nlohmann::json* provenance = nullptr);
/// Parameter-by-parameter bitwise equality of the named prefix ("" for all).
bool parameters_identical(const MosaicModel& a, const MosaicModel& b, const std::string& prefix = "");

struct BenchConfig {
  std::string name;
  int Z = 8;
  int B = 256;
  int T = 3;
  int H = 128;
};

struct BenchRow {
  BenchConfig cfg;
  double v1_ms = 0.0;
  double v2_ms = 0.0;
  double speedup = 0.0;
  double max_abs_diff = 0.0;
};

std::vector<BenchConfig> default_bench_configs();
/// Mean wall-clock of residual + log-det per call, warmup iterations discarded.
BenchRow benchmark_transition(const BenchConfig& cfg, int iterations = 30, int warmup = 5, std::uint64_t seed = 0);
void write_bench_csv(const std::vector<BenchRow>& rows, const std::filesystem::path& path);

}  // namespace mosaic
