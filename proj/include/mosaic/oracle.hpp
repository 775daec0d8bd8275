#pragma once

// Closed-form and quadrature checks of the population theory behind additive
// support recovery: functional ANOVA on product grids, the interaction ratio,
// the population additive fit, a B-spline group-lasso estimator with its
// estimation-rate probe, and entropy / top-k lemmas.

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace mosaic::oracle {

struct Quadrature {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

/// Gauss-Legendre rule on [-1, 1] (weights sum to 2), Newton iteration on P_n.
Quadrature gauss_legendre(int n);
/// Gauss-Hermite rule for the standard normal density (weights sum to 1), Golub-Welsch.
Quadrature gauss_hermite(int n);

enum class MeasureKind { Uniform, Gaussian };

/// Product probability measure on a tensor grid; per-dimension weights sum to 1.
struct GridMeasure {
  MeasureKind kind = MeasureKind::Uniform;
  std::vector<Eigen::VectorXd> nodes;
  std::vector<Eigen::VectorXd> weights;

  static GridMeasure uniform(int dims, int nodes_per_dim = 64);
  static GridMeasure gaussian(int dims, int nodes_per_dim = 64);

  int dims() const { return static_cast<int>(nodes.size()); }
  int nodes_in(int j) const { return static_cast<int>(nodes[static_cast<std::size_t>(j)].size()); }
  std::int64_t size() const;
  /// Multi-index of flat grid point p (last dimension varies fastest).
  std::vector<int> index(std::int64_t p) const;
  Eigen::VectorXd point(std::int64_t p) const;
  double weight(std::int64_t p) const;
};

using VectorMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct AnovaDecomposition {
  Eigen::VectorXd g0;
  std::vector<Eigen::MatrixXd> mains;  // per factor: nodes_j × D
  Eigen::MatrixXd residual;            // grid points × D
  Eigen::MatrixXd values;              // g on the grid
  double rho = 0.0;
  double centering_error = 0.0;       // max |E[g_j]|
  double orthogonality_error = 0.0;   // max |E[r | z_j = node]|
  double reconstruction_error = 0.0;  // max |g0 + Σ g_j + r - g|
};

/// Functional ANOVA by quadrature; n <= 4 and at most 5e7 grid values.
AnovaDecomposition anova_decompose(const VectorMap& g, int D, const GridMeasure& gm);

/// ‖r‖² / ‖g - g0‖² under the grid measure; 0 for a constant map.
double interaction_ratio(const VectorMap& g, int D, const GridMeasure& gm);

struct AdditiveFit {
  Eigen::VectorXd intercept;
  std::vector<Eigen::MatrixXd> mains;  // nodes_j × D
};

/// Weighted least-squares additive fit on the grid under the centering
/// constraints, solved as one KKT system per channel (no marginalization).
AdditiveFit fit_additive_population(const VectorMap& g, int D, const GridMeasure& gm);

/// Max nodewise gap between the fitted mains and the ANOVA mains.
double max_main_gap(const AdditiveFit& fit, const AnovaDecomposition& anova);

// B-spline sparse additive model.

/// Cubic B-spline basis with uniform knots on [lo, hi]; inputs are clamped to the range.
class BSplineBasis {
 public:
  BSplineBasis(double lo, double hi, int size);
  int size() const { return size_; }
  Eigen::RowVectorXd eval(double z) const;
  Eigen::MatrixXd eval(const Eigen::VectorXd& z) const;

 private:
  double lo_, hi_;
  int size_;
  std::vector<double> knots_;
};

struct GroupLassoOptions {
  int basis_size = 8;
  double lambda = 0.0;
  double gap_tolerance = 1e-8;
  int max_sweeps = 20000;
  double quantile_lo = 0.01;
  double quantile_hi = 0.99;
};

struct ChannelFit {
  std::set<int> support;
  std::vector<Eigen::VectorXd> coefficients;  // per factor, in the centered spline basis
  double intercept = 0.0;
  double duality_gap = 0.0;
  int sweeps = 0;
  bool converged = false;
  double kkt_violation = 0.0;
};

class GroupLassoModel {
 public:
  std::vector<ChannelFit> channels;
  std::vector<BSplineBasis> bases;       // per factor
  std::vector<Eigen::RowVectorXd> basis_means;  // centering of each factor's basis
  bool converged() const;
  double max_gap() const;
  double max_kkt_violation() const;
  std::vector<std::set<int>> supports() const;
  /// Fitted centered main effect of factor j on channel i at z.
  double main_effect(int i, int j, double z) const;
  Eigen::MatrixXd predict(const Eigen::MatrixXd& Z) const;
};

/// Block coordinate descent on (1/2N)‖x - Σ_j Ψ_j β_j‖² + λ Σ_j ‖Ψ_j β_j‖/√N per channel,
/// with each group orthonormalized.
GroupLassoModel bspline_group_lasso(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& X,
                                    const GroupLassoOptions& opts);

struct LambdaSelection {
  std::vector<double> grid;
  std::vector<double> cv_error;
  std::vector<int> support_errors;  // vs truth, -1 when no truth given
  double cv_best = 0.0;
  double oracle_best = 0.0;
};

LambdaSelection select_lambda(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& X, GroupLassoOptions opts,
                              const std::vector<double>& grid, int folds, std::uint64_t seed,
                              const std::vector<std::set<int>>* truth = nullptr);

struct RateProbe {
  std::vector<std::int64_t> sample_sizes;
  std::vector<int> basis_sizes;
  std::vector<double> errors;
  double slope = 0.0;
};

/// Main-effect L2 error of the unpenalized spline fit versus N with m ∝ N^{1/5}.
RateProbe rate_probe(const std::vector<std::int64_t>& sizes, int replicates, std::uint64_t seed,
                     double noise = 0.5);

// Lemmas on influence columns.

struct EntropyLemmaReport {
  int columns = 0;
  int violations = 0;
  double min_entropy = 0.0;
  double max_excess = 0.0;       // max of H - log D
  double one_hot_entropy = 0.0;  // worst over tested sizes
  double uniform_gap = 0.0;      // max |H(uniform) - log D|
  double scale_drift = 0.0;      // max |H(cA) - H(A)|
  bool pass = false;
};

EntropyLemmaReport verify_entropy_lemma(int columns, std::uint64_t seed);

struct TopkReport {
  int trials = 0;
  int exact = 0;
  int counterexamples = 0;
  bool pass = false;  // exact on every trial below Δ/2
};

/// Exhaustive over supports of a D-channel column and over ±δ corner
/// perturbations; δ = perturbation.
TopkReport verify_topk(int D, double gap, double perturbation, std::uint64_t seed);

/// Constructed case: perturbation Δ/2 + eps swaps the boundary pair.
bool topk_counterexample(double gap, double eps);

// Test battery.

struct BatteryCase {
  std::string name;
  int dims = 2;
  int channels = 1;
  VectorMap g;
  bool additive = false;
};

std::vector<BatteryCase> standard_battery();

struct BatteryOptions {
  int nodes = 48;
  int entropy_columns = 10000;
  std::uint64_t seed = 7;
  bool include_rate_probe = true;
};

/// Runs every check and returns a JSON report {checks: [{name, pass, measured, tolerance}], pass}.
nlohmann::json run_battery(const BatteryOptions& opts = {});

}  // namespace mosaic::oracle
