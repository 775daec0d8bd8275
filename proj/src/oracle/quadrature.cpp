#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "mosaic/common.hpp"
#include "mosaic/oracle.hpp"

namespace mosaic::oracle {

Quadrature gauss_legendre(int n) {
  if (n < 1) throw ConfigError("quadrature: node count must be positive");
  Quadrature q;
  q.nodes.resize(n);
  q.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double step = p1 / dp;
      x -= step;
      if (std::abs(step) < 1e-16) break;
    }
    // Recompute the derivative at the converged root.
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = pk;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    q.nodes(n - 1 - i) = x;
    q.weights(n - 1 - i) = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return q;
}

Quadrature gauss_hermite(int n) {
  if (n < 1) throw ConfigError("quadrature: node count must be positive");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Quadrature q;
  q.nodes = es.eigenvalues();
  q.weights = es.eigenvectors().row(0).transpose().array().square();
  return q;
}

GridMeasure GridMeasure::uniform(int dims, int nodes_per_dim) {
  const auto q = gauss_legendre(nodes_per_dim);
  GridMeasure gm;
  gm.kind = MeasureKind::Uniform;
  for (int j = 0; j < dims; ++j) {
    gm.nodes.push_back(q.nodes);
    gm.weights.push_back(q.weights / 2.0);
  }
  return gm;
}

GridMeasure GridMeasure::gaussian(int dims, int nodes_per_dim) {
  const auto q = gauss_hermite(nodes_per_dim);
  GridMeasure gm;
  gm.kind = MeasureKind::Gaussian;
  for (int j = 0; j < dims; ++j) {
    gm.nodes.push_back(q.nodes);
    gm.weights.push_back(q.weights);
  }
  return gm;
}

std::int64_t GridMeasure::size() const {
  std::int64_t s = 1;
  for (const auto& n : nodes) s *= n.size();
  return nodes.empty() ? 0 : s;
}

std::vector<int> GridMeasure::index(std::int64_t p) const {
  std::vector<int> k(nodes.size());
  for (int j = dims() - 1; j >= 0; --j) {
    const auto m = nodes[static_cast<std::size_t>(j)].size();
    k[static_cast<std::size_t>(j)] = static_cast<int>(p % m);
    p /= m;
  }
  return k;
}

Eigen::VectorXd GridMeasure::point(std::int64_t p) const {
  const auto k = index(p);
  Eigen::VectorXd z(dims());
  for (int j = 0; j < dims(); ++j) z(j) = nodes[static_cast<std::size_t>(j)](k[static_cast<std::size_t>(j)]);
  return z;
}

double GridMeasure::weight(std::int64_t p) const {
  const auto k = index(p);
  double w = 1.0;
  for (int j = 0; j < dims(); ++j) w *= weights[static_cast<std::size_t>(j)](k[static_cast<std::size_t>(j)]);
  return w;
}

}  // namespace mosaic::oracle
