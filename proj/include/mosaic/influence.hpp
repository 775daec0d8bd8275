#pragma once

// Influence-matrix algebra that does not need a decoder: entropy penalty, alive
// mask, support recovery and variable assignment. Decoder-driven scoring lives
// in influence_scores.hpp.

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace mosaic::influence {

enum class ScoreKind { Contrast, Variance, Range, Jacobian };

std::string to_string(ScoreKind k);
ScoreKind score_kind_from_string(const std::string& s);

/// Nonnegative D×n̂ matrix of per-channel, per-latent decoder influence.
struct InfluenceMatrix {
  Eigen::MatrixXd A;
  ScoreKind kind = ScoreKind::Contrast;
  Eigen::VectorXd stat_mean;  // latent standardization used for the probes (may be empty)
  Eigen::VectorXd stat_std;
  std::vector<std::string> channel_names;

  int channels() const { return static_cast<int>(A.rows()); }
  int latents() const { return static_cast<int>(A.cols()); }
  /// Throws DataError unless A is finite and elementwise nonnegative.
  void validate() const;

  nlohmann::json sidecar() const;
  /// Writes <stem>.csv (rows = channels, columns = latents) and <stem>.json.
  void save(const std::filesystem::path& stem) const;
  /// Reads a CSV written by save(); the JSON sidecar next to it is optional.
  static InfluenceMatrix load(const std::filesystem::path& csv);
};

/// Guard added to column sums and inside the log.
inline constexpr double kEntropyEps = 1e-12;

/// Shannon entropy (nats) of a nonnegative column normalized to a distribution.
double column_entropy(const Eigen::Ref<const Eigen::VectorXd>& a);

/// Latents whose column mass exceeds frac × the largest column mass (strict).
std::vector<int> alive_mask(const Eigen::MatrixXd& A, double frac = 0.01);

/// Mean column entropy over alive latents; 0 (with a warning) when none is alive.
double entropy_penalty(const Eigen::MatrixXd& A, double frac = 0.01);

/// Indices of the k largest entries, descending; ties go to the lower index.
std::vector<int> top_k(const Eigen::Ref<const Eigen::VectorXd>& column, int k);

/// Fraction of a column's mass held by its top-k entries.
double top_k_mass(const Eigen::Ref<const Eigen::VectorXd>& column, int k = 3);

struct SupportOptions {
  double ratio_gap = 1.5;
  int window = 15;  // ratio gaps are searched among the top `window` entries
  double fallback_frac = 0.1;
};

struct SupportEstimate {
  std::vector<std::set<int>> per_factor;
  std::vector<bool> used_fallback;
  SupportOptions options;
};

/// Support of latent j: cut at the largest consecutive ratio gap above
/// ratio_gap, else keep entries >= fallback_frac × max.
std::set<int> recover_support(const Eigen::MatrixXd& A, int j, const SupportOptions& opts = {},
                              bool* used_fallback = nullptr);
SupportEstimate recover_supports(const Eigen::MatrixXd& A, const SupportOptions& opts = {});

struct Assignment {
  std::vector<int> factor;        // per channel, argmax with lowest-index tie-break
  Eigen::VectorXd concentration;  // max_j A_ij / Σ_j A_ij, in [1/n̂, 1]
};

Assignment assign_variables(const Eigen::MatrixXd& A);

}  // namespace mosaic::influence
