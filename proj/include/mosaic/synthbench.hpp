#pragma once

// Synthetic benchmark generators (double-well energy landscape, synthetic
// tokamak), dataset transforms, and dataset persistence.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mosaic/common.hpp"

namespace mosaic::synth {

enum class RegimeDefinition { WellOccupancy, PreTransition };

std::string to_string(RegimeDefinition d);
RegimeDefinition regime_definition_from_string(const std::string& s);

/// Well occupancy of the reaction coordinate: A is the left basin (z0 < 0).
enum class Well : std::uint8_t { A = 0, B = 1 };

struct SynthConfig {
  int n_true = 6;
  int D = 30;
  std::int64_t N = 470000;  // source frames before subsampling
  double alpha = 0.0;
  double noise_sigma = 0.1;
  int lag = 2;
  RegimeDefinition regime_definition = RegimeDefinition::WellOccupancy;
  double label_flip_rate = 0.0;
  int subsample_stride = 1;
  std::uint64_t seed = 42;

  // Overdamped Langevin on the modulated quartic double well.
  double temperature = 0.35;
  double dt = 0.05;
  double barrier = 1.0;
  double well_depth = 0.6;
  double well_width = 0.35;
  double modulation_gain = 1.0;
  double z0_init = -1.0;
  // AR(1) modulators and invariant factors.
  double ar_rho = 0.98;
  double ar_innovation = 0.1;
  double regime_coupling = 0.25;
  bool freeze_modulators = false;

  // Labelling.
  int smoothing_window = 51;
  int transition_buffer = 50;
  int lookahead = 50;

  // Windowing.
  bool balance = true;
  std::int64_t max_windows = 0;  // 0: keep every balanced window

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct LatentTrajectory {
  int n_true = 0;
  std::int64_t frames = 0;
  /// frames × n_true, row-major; each column rescaled to zero mean, unit variance
  /// (constant columns are only centred). Column order: z0, z1, z2, z3, u1, u2.
  std::vector<double> Z;
  std::vector<Well> well;
  std::vector<std::uint8_t> labels;     // meaningful only where !discarded
  std::vector<std::uint8_t> discarded;  // 1 = excluded from windows
  /// Standard deviation of each raw latent before calibration.
  std::vector<double> raw_std;

  double z(std::int64_t t, int j) const { return Z[static_cast<std::size_t>(t * n_true + j)]; }
};

struct FactorSupport {
  std::set<int> primary;
  std::set<int> shared;
};

struct SupportMap {
  int D = 0;
  std::vector<FactorSupport> factors;
  std::set<int> noise;
  std::set<int> regime_varying;
  std::vector<std::string> factor_names;

  int n_factors() const { return static_cast<int>(factors.size()); }
  /// Primary ∪ shared channels of factor j.
  std::set<int> support(int j) const;
  /// Factors whose support contains channel i.
  std::vector<int> owners(int i) const;
  void validate() const;
  nlohmann::json to_json() const;
  static SupportMap from_json(const nlohmann::json& j);

  /// Ground-truth layout of the 30-channel double-well benchmark.
  static SupportMap double_well();
};

/// Interaction term α·tanh(z_a z_b) added to a channel.
struct InteractionTerm {
  int channel = 0;
  int a = 0;
  int b = 0;
};

/// The five monotone mixing families, indexed 0..4:
/// tanh(5z), z³/4, erf(3z), arctan(5z), sign(z)|z|^{1/3}.
double mixing_family(int index, double z);
constexpr int kMixingFamilies = 5;

/// Interaction channels: the first two primary channels of every factor, paired
/// with the next factor index modulo n_true.
std::vector<InteractionTerm> interaction_terms(const SupportMap& sm);

/// Observation frames with per-frame labels; the unit every transform works on.
struct FrameSeries {
  std::int64_t frames = 0;
  int channels = 0;
  std::vector<double> X;               // frames × channels
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> discarded;
  int latent_dim = 0;
  std::vector<double> Z;               // frames × latent_dim, optional
  std::int64_t source_frames = 0;
  int stride = 1;

  double x(std::int64_t t, int i) const { return X[static_cast<std::size_t>(t * channels + i)]; }
};

struct TimeSeriesDataset {
  std::int64_t windows = 0;
  int steps = 0;  // lag + 1
  int channels = 0;
  std::vector<float> X;               // windows × steps × channels
  std::vector<std::uint8_t> C;        // labels seen by training
  std::vector<std::uint8_t> C_clean;  // optional uncorrupted labels (label-noise runs)
  int latent_dim = 0;
  std::vector<float> Ztrue;           // windows × latent_dim, optional
  std::optional<SupportMap> support;
  std::vector<std::string> channel_names;
  nlohmann::json metadata = nlohmann::json::object();

  int lag() const { return steps - 1; }
  bool has_truth() const { return latent_dim > 0 && !Ztrue.empty(); }
  /// Labels used for evaluation: clean labels when present.
  const std::vector<std::uint8_t>& eval_labels() const { return C_clean.empty() ? C : C_clean; }
  float x(std::int64_t w, int s, int i) const {
    return X[static_cast<std::size_t>((w * steps + s) * channels + i)];
  }
  /// Observations of the final frame of every window (windows × channels).
  Eigen::MatrixXd last_frames() const;
  Eigen::MatrixXd ztrue_matrix() const;
  std::array<std::int64_t, 2> class_counts() const;
  /// Keep only the listed windows (in the given order).
  TimeSeriesDataset select(const std::vector<std::int64_t>& idx) const;
};

// Operations.

LatentTrajectory simulate_latents(const SynthConfig& cfg);

/// Observations N×D from calibrated latents; noise drawn from an independent stream.
FrameSeries mix_observations(const LatentTrajectory& traj, const SupportMap& sm, const SynthConfig& cfg);

struct RegimeLabels {
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> discarded;
};

struct RegimeOptions {
  int smoothing_window = 51;
  int transition_buffer = 50;
  int lookahead = 50;
};

RegimeLabels assign_regimes(const std::vector<Well>& well, RegimeDefinition definition,
                            const RegimeOptions& opts = {});

/// Stratified flips: round(p·|class|) labels flipped in each class.
std::vector<std::uint8_t> flip_labels(const std::vector<std::uint8_t>& labels, double p,
                                      std::uint64_t seed);

/// Keep source frames whose index is a multiple of k.
FrameSeries subsample(const FrameSeries& frames, int k, int lag);

TimeSeriesDataset window_and_balance(const FrameSeries& frames, int lag, bool balance,
                                     std::uint64_t seed);

/// Seeded, class-balanced reduction to at most `max_windows` windows (temporal order kept).
TimeSeriesDataset cap_windows(const TimeSeriesDataset& ds, std::int64_t max_windows,
                              std::uint64_t seed);

/// Full double-well pipeline: simulate, mix, label, subsample, window, balance, cap, flip.
TimeSeriesDataset generate_synthetic(const SynthConfig& cfg);

/// Stride that brings a balanced base dataset of `base_windows` down to N/D × D windows.
int stride_for_level(double n_over_d, int D, std::int64_t base_windows);

struct TokamakConfig {
  int shots_per_class = 100;
  int shot_length = 50;
  double ar_rho = 0.95;
  double innovation_std = 0.3;
  double mixing_low = 0.6;
  double mixing_high = 1.5;
  double noise_std = 0.15;
  double ramp_mhd = 1.5;
  double ramp_density = 0.8;
  int lag = 2;
  bool second_half_only = true;
  std::uint64_t seed = 42;

  void validate() const;
  nlohmann::json to_json() const;
  static TokamakConfig from_json(const nlohmann::json& j);
};

constexpr int kTokamakChannels = 12;
const std::vector<std::string>& tokamak_channel_names();
/// Source order: MHD, Density, Energy, Shape.
const std::vector<std::string>& tokamak_source_names();

/// Additive ramp on a source at 1-based frame t of a shot of length T.
double tokamak_progress(int t, int T);

struct TokamakShot {
  std::vector<double> sources;  // T × 4
  std::vector<double> X;        // T × 12
};

/// One shot; regime-0 and regime-1 shots with the same stream share source noise.
TokamakShot simulate_tokamak_shot(const TokamakConfig& cfg, const Eigen::Matrix<double, 4, 12>& mixing,
                                  int shot_index, int regime);
Eigen::Matrix<double, 4, 12> tokamak_mixing(const TokamakConfig& cfg);
TimeSeriesDataset generate_tokamak(const TokamakConfig& cfg);

struct KMeansResult {
  std::vector<std::uint8_t> labels;
  Eigen::MatrixXd centroids;
  int iterations = 0;
  std::optional<double> nmi;
  std::optional<double> agreement;
};

KMeansResult kmeans_regimes(const Eigen::MatrixXd& X, int k, std::uint64_t seed,
                            const std::vector<std::uint8_t>* reference = nullptr);

/// Normalized mutual information (arithmetic-mean normalization) of two labelings.
double normalized_mutual_information(const std::vector<std::uint8_t>& a,
                                     const std::vector<std::uint8_t>& b);

struct CsvSchema {
  std::string regime_column = "regime";
  std::vector<std::string> feature_columns;  // empty: every other column
  int lag = 2;
  bool standardize = true;
  bool balance = false;
  std::uint64_t seed = 0;
};

TimeSeriesDataset ingest_csv(const std::filesystem::path& path, const CsvSchema& schema);
/// Frame-level CSV (header row, regime column last) of a frame series.
void export_csv(const FrameSeries& frames, const std::vector<std::string>& names,
                const std::string& regime_column, const std::filesystem::path& path);

// Persistence: <dir>/data/{X.f32bin, C.u8bin, Ztrue.f32bin?, Cclean.u8bin?} + <dir>/meta.json.
void save_dataset(const TimeSeriesDataset& ds, const std::filesystem::path& dir);
TimeSeriesDataset load_dataset(const std::filesystem::path& dir);

}  // namespace mosaic::synth
