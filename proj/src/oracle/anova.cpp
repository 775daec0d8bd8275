#include <algorithm>
#include <cmath>

#include "mosaic/common.hpp"
#include "mosaic/oracle.hpp"

namespace mosaic::oracle {
namespace {

constexpr double kMaxGridValues = 5e7;

Eigen::MatrixXd evaluate_grid(const VectorMap& g, int D, const GridMeasure& gm) {
  if (gm.dims() < 1) throw ConfigError("anova: measure has no dimensions");
  const auto P = gm.size();
  if (static_cast<double>(P) * D > kMaxGridValues)
    throw ConfigError("anova: grid too large (" + std::to_string(P) + " points × " + std::to_string(D) + " channels)");
  Eigen::MatrixXd values(P, D);
  for (std::int64_t p = 0; p < P; ++p) {
    const Eigen::VectorXd v = g(gm.point(p));
    if (v.size() != D) throw ConfigError("anova: map returned " + std::to_string(v.size()) + " channels, expected " + std::to_string(D));
    values.row(p) = v.transpose();
  }
  return values;
}

// Per-point weights and per-dimension node indices, so the loops below avoid
// recomputing the multi-index.
struct GridIndex {
  Eigen::VectorXd w;
  Eigen::MatrixXi k;  // P × n
};

GridIndex index_grid(const GridMeasure& gm) {
  const auto P = gm.size();
  const int n = gm.dims();
  GridIndex gi{Eigen::VectorXd(P), Eigen::MatrixXi(P, n)};
  std::vector<int> k(static_cast<std::size_t>(n), 0);
  for (std::int64_t p = 0; p < P; ++p) {
    double w = 1.0;
    for (int j = 0; j < n; ++j) {
      gi.k(p, j) = k[static_cast<std::size_t>(j)];
      w *= gm.weights[static_cast<std::size_t>(j)](k[static_cast<std::size_t>(j)]);
    }
    gi.w(p) = w;
    for (int j = n - 1; j >= 0; --j) {
      if (++k[static_cast<std::size_t>(j)] < gm.nodes_in(j)) break;
      k[static_cast<std::size_t>(j)] = 0;
    }
  }
  return gi;
}

}  // namespace

AnovaDecomposition anova_decompose(const VectorMap& g, int D, const GridMeasure& gm) {
  AnovaDecomposition a;
  a.values = evaluate_grid(g, D, gm);
  const auto gi = index_grid(gm);
  const int n = gm.dims();
  const auto P = gm.size();

  a.g0 = (a.values.transpose() * gi.w);
  for (int j = 0; j < n; ++j) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(gm.nodes_in(j), D);
    for (std::int64_t p = 0; p < P; ++p) acc.row(gi.k(p, j)) += gi.w(p) * a.values.row(p);
    for (int q = 0; q < gm.nodes_in(j); ++q) {
      acc.row(q) /= gm.weights[static_cast<std::size_t>(j)](q);
      acc.row(q) -= a.g0.transpose();
    }
    a.mains.push_back(std::move(acc));
  }

  a.residual = a.values;
  for (std::int64_t p = 0; p < P; ++p) {
    a.residual.row(p) -= a.g0.transpose();
    for (int j = 0; j < n; ++j) a.residual.row(p) -= a.mains[static_cast<std::size_t>(j)].row(gi.k(p, j));
  }

  for (int j = 0; j < n; ++j) {
    const auto& wj = gm.weights[static_cast<std::size_t>(j)];
    a.centering_error = std::max(a.centering_error, (a.mains[static_cast<std::size_t>(j)].transpose() * wj).cwiseAbs().maxCoeff());
    Eigen::MatrixXd cond = Eigen::MatrixXd::Zero(gm.nodes_in(j), D);
    for (std::int64_t p = 0; p < P; ++p) cond.row(gi.k(p, j)) += gi.w(p) * a.residual.row(p);
    for (int q = 0; q < gm.nodes_in(j); ++q) cond.row(q) /= wj(q);
    a.orthogonality_error = std::max(a.orthogonality_error, cond.cwiseAbs().maxCoeff());
  }

  double num = 0.0, den = 0.0;
  for (std::int64_t p = 0; p < P; ++p) {
    Eigen::RowVectorXd recon = a.g0.transpose() + a.residual.row(p);
    for (int j = 0; j < n; ++j) recon += a.mains[static_cast<std::size_t>(j)].row(gi.k(p, j));
    a.reconstruction_error = std::max(a.reconstruction_error, (recon - a.values.row(p)).cwiseAbs().maxCoeff());
    num += gi.w(p) * a.residual.row(p).squaredNorm();
    den += gi.w(p) * (a.values.row(p) - a.g0.transpose()).squaredNorm();
  }
  // A constant map leaves only rounding in the denominator.
  a.rho = den > 1e-24 * std::max(1.0, a.g0.squaredNorm()) ? num / den : 0.0;
  return a;
}

double interaction_ratio(const VectorMap& g, int D, const GridMeasure& gm) {
  return anova_decompose(g, D, gm).rho;
}

AdditiveFit fit_additive_population(const VectorMap& g, int D, const GridMeasure& gm) {
  const Eigen::MatrixXd values = evaluate_grid(g, D, gm);
  const auto gi = index_grid(gm);
  const int n = gm.dims();
  const auto P = gm.size();

  // Unknowns: intercept, then each factor's nodal values; one centering row per factor.
  std::vector<int> offset(static_cast<std::size_t>(n) + 1, 1);
  for (int j = 0; j < n; ++j) offset[static_cast<std::size_t>(j) + 1] = offset[static_cast<std::size_t>(j)] + gm.nodes_in(j);
  const int K = offset.back();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(K, K);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(K + n, D);
  std::vector<int> active(static_cast<std::size_t>(n) + 1);
  for (std::int64_t p = 0; p < P; ++p) {
    active[0] = 0;
    for (int j = 0; j < n; ++j) active[static_cast<std::size_t>(j) + 1] = offset[static_cast<std::size_t>(j)] + gi.k(p, j);
    for (int a : active) {
      for (int b : active) G(a, b) += gi.w(p);
      rhs.row(a) += gi.w(p) * values.row(p);
    }
  }
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(K + n, K + n);
  kkt.topLeftCorner(K, K) = G;
  for (int j = 0; j < n; ++j) {
    const auto& wj = gm.weights[static_cast<std::size_t>(j)];
    for (int q = 0; q < gm.nodes_in(j); ++q) {
      kkt(K + j, offset[static_cast<std::size_t>(j)] + q) = wj(q);
      kkt(offset[static_cast<std::size_t>(j)] + q, K + j) = wj(q);
    }
  }
  // Row scaling by the diagonal keeps tail nodes of the Gaussian rule (weights
  // far below machine epsilon) as well determined as central ones.
  for (int a = 0; a < K; ++a) {
    if (G(a, a) <= 0.0) throw RuntimeFailure("additive fit: grid node with zero weight");
    kkt.row(a) /= G(a, a);
    rhs.row(a) /= G(a, a);
  }
  const Eigen::MatrixXd sol = kkt.fullPivLu().solve(rhs);

  AdditiveFit fit;
  fit.intercept = sol.row(0).transpose();
  for (int j = 0; j < n; ++j) fit.mains.push_back(sol.middleRows(offset[static_cast<std::size_t>(j)], gm.nodes_in(j)));
  return fit;
}

double max_main_gap(const AdditiveFit& fit, const AnovaDecomposition& anova) {
  if (fit.mains.size() != anova.mains.size()) throw ConfigError("max_main_gap: factor counts differ");
  double gap = 0.0;
  for (std::size_t j = 0; j < fit.mains.size(); ++j)
    gap = std::max(gap, (fit.mains[j] - anova.mains[j]).cwiseAbs().maxCoeff());
  return gap;
}

}  // namespace mosaic::oracle
