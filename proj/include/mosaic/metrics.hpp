#pragma once

// Evaluation metrics on learned latents and influence matrices. Everything here
// is a pure function of arrays; composing a report from a trained model lives
// in training.hpp.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mosaic/synthbench.hpp"

namespace mosaic::metrics {

using Labels = std::vector<std::uint8_t>;

/// Minimum-cost assignment of rows to distinct columns (rows <= cols).
/// Returns the column of each row.
std::vector<int> hungarian(const Eigen::MatrixXd& cost);

/// |Pearson| between every true column (rows) and learned column; a constant column scores 0.
Eigen::MatrixXd pearson_affinity(const Eigen::MatrixXd& Ztrue, const Eigen::MatrixXd& Zlearned);

struct MatchResult {
  Eigen::MatrixXd affinity;        // n_true × n̂
  std::vector<int> assignment;     // per true factor: learned index, or -1 when unassigned
  std::vector<bool> matched;       // per true factor: assigned and affinity >= tau
  double tau = 0.5;
  double mcc = 0.0;                // mean affinity over matched pairs; 0 when none
  int matched_count = 0;

  /// True factor matched to learned latent k, or -1.
  int factor_of(int k) const;
  nlohmann::json to_json() const;
};

MatchResult hungarian_mcc(const Eigen::MatrixXd& Ztrue, const Eigen::MatrixXd& Zlearned, double tau = 0.5);

/// |mean0 - mean1| / sqrt((var0 + var1) / 2) with population variances.
double cohens_d(const Eigen::Ref<const Eigen::VectorXd>& z, const Labels& labels);

struct KlOptions {
  int bins = 64;
  double trim_lo = 0.005;
  double trim_hi = 0.995;
};

/// Forward KL(p0 ‖ p1) between add-one-smoothed histograms on the pooled trimmed range.
double kl_histogram(const Eigen::Ref<const Eigen::VectorXd>& z, const Labels& labels, const KlOptions& opts = {});

enum class DriverStat { Cohen, Kl };
std::string to_string(DriverStat s);
DriverStat driver_stat_from_string(const std::string& s);

struct DriverRanking {
  std::vector<int> order;      // latents, most discriminative first; ties to the lower index
  Eigen::VectorXd values;      // per latent, in latent order
  int driver() const { return order.empty() ? -1 : order.front(); }
  std::vector<int> top(int k) const;
};

DriverRanking rank_drivers(const Eigen::MatrixXd& Z, const Labels& labels, DriverStat stat = DriverStat::Cohen);

/// |top3(cohen) ∩ top3(kl)| / 3.
double cohen_kl_overlap(const DriverRanking& cohen, const DriverRanking& kl, int k = 3);

/// Fraction of the top latents matched to a regime-varying true factor.
double z_at_top3(const MatchResult& match, const std::vector<int>& top, const std::set<int>& regime_varying);

struct SupportScore {
  double score = 0.0;
  std::vector<double> precision;  // per top latent
  std::vector<double> mass;       // per top latent, top-3 mass
};

/// Gated support precision of the top latents against the matched factor's
/// primary ∪ shared channels. gate = nullopt disables the concentration gate.
SupportScore xz_at_top3(const Eigen::MatrixXd& A, const MatchResult& match, const synth::SupportMap& support,
                        const std::vector<int>& top, std::optional<double> gate = 0.5);

struct GateRow {
  std::string gate;  // "0.50", ..., "none"
  double xz = 0.0;
};
std::vector<GateRow> gate_sweep(const Eigen::MatrixXd& A, const MatchResult& match, const synth::SupportMap& support,
                                const std::vector<int>& top, const std::vector<double>& gates = {0.5, 0.6, 0.7});

struct ProbeOptions {
  double l2 = 1e-2;
  int steps = 200;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

/// Held-out accuracy of an l2-regularized logistic regression on standardized
/// features, fit by full-batch gradient descent with step 1/L.
double regime_accuracy(const Eigen::MatrixXd& Z, const Labels& labels, const ProbeOptions& opts = {});

/// Top-3 mass of every influence column.
Eigen::VectorXd top3_masses(const Eigen::MatrixXd& A);

struct RhoEstimate {
  double dense_mse = 0.0;
  double additive_mse = 0.0;
  double total_variance = 0.0;
  double sigma_r = 0.0;
  double sigma_g = 0.0;
  double raw = 0.0;  // before clamping
  double rho = 0.0;
  bool available = false;
};

/// Interaction-ratio proxy from per-element mean squared errors: the dense
/// decoder's error upper-bounds the noise, the additive excess is interaction.
RhoEstimate rho_from_errors(double dense_mse, double additive_mse, double total_variance);

struct MetricsReport {
  std::optional<double> mcc;
  std::optional<int> matched_count;
  std::optional<double> z_top3;
  std::optional<double> xz_top3;
  double gate = 0.5;
  std::vector<GateRow> gate_sweep;
  std::optional<double> regime_accuracy;
  std::vector<double> cohens_d;
  std::vector<double> kl;
  std::vector<int> ranking;  // by Cohen's d
  int driver = -1;
  std::optional<int> driver_channel;  // argmax channel of the driver's influence column
  std::vector<double> top3_mass;
  double mean_top3_mass_top3 = 0.0;  // over the three top-ranked latents
  std::vector<double> concentration;
  std::vector<int> assignment;
  std::optional<RhoEstimate> rho;
  double cohen_kl_overlap = 0.0;
  std::vector<int> matched_factor;  // per learned latent, -1 when unmatched
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  /// One flat CSV row of the scalar fields (header from csv_header()).
  static std::vector<std::string> csv_header();
  std::vector<std::string> csv_row() const;
  void save(const std::filesystem::path& dir) const;  // metrics.json + metrics.csv
};

struct ReportInputs {
  Eigen::MatrixXd Zhat;             // posterior means, windows × n̂
  Labels labels;
  std::optional<Eigen::MatrixXd> Ztrue;
  std::optional<synth::SupportMap> support;
  Eigen::MatrixXd A;                // D × n̂ influence, may be empty
  std::optional<RhoEstimate> rho;
  double gate = 0.5;
  std::uint64_t seed = 0;
};

MetricsReport compute_report(const ReportInputs& in);

/// Table writers: aligned text for terminals, CSV for files.
std::string aligned_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace mosaic::metrics
