#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "mosaic/synthbench.hpp"

namespace mosaic::synth {

KMeansResult kmeans_regimes(const Eigen::MatrixXd& X, int k, std::uint64_t seed,
                            const std::vector<std::uint8_t>* reference) {
  const auto n = X.rows();
  if (n == 0 || X.cols() == 0) throw DataError("k-means: empty input");
  if (k < 1 || k > 255) throw ConfigError("k-means: k must lie in [1, 255]");
  if (n < k) throw DataError("k-means: " + std::to_string(n) + " points cannot form " + std::to_string(k) + " clusters");
  bool identical = true;
  for (Eigen::Index i = 1; i < n && identical; ++i) identical = (X.row(i) == X.row(0));
  if (identical && k > 1) throw DataError("k-means: all points identical, clustering is degenerate");

  // k-means++ seeding.
  Rng rng = make_rng(seed, 17);
  Eigen::MatrixXd C(k, X.cols());
  C.row(0) = X.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2 = (X.rowwise() - C.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    double u = uniform01(rng) * total;
    Eigen::Index pick = n - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      u -= d2(i);
      if (u < 0) {
        pick = i;
        break;
      }
    }
    C.row(c) = X.row(pick);
    d2 = d2.cwiseMin((X.rowwise() - C.row(c)).rowwise().squaredNorm());
  }

  KMeansResult res;
  res.labels.assign(static_cast<std::size_t>(n), 0);
  std::vector<std::uint8_t> prev;
  for (res.iterations = 1; res.iterations <= 300; ++res.iterations) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (X.row(i) - C.row(c)).squaredNorm();
        if (d < best) best = d, res.labels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(c);
      }
    }
    if (res.labels == prev) break;
    prev = res.labels;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(k, X.cols());
    Eigen::VectorXd count = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sum.row(res.labels[static_cast<std::size_t>(i)]) += X.row(i);
      count(res.labels[static_cast<std::size_t>(i)]) += 1;
    }
    for (int c = 0; c < k; ++c)
      if (count(c) > 0) C.row(c) = sum.row(c) / count(c);
  }
  res.centroids = C;

  if (reference) {
    if (reference->size() != static_cast<std::size_t>(n)) throw DataError("k-means: reference label count mismatch");
    // Map each cluster to the reference label it overlaps most.
    std::map<std::pair<int, int>, std::int64_t> overlap;
    for (std::size_t i = 0; i < res.labels.size(); ++i) ++overlap[{res.labels[i], (*reference)[i]}];
    std::vector<int> to_ref(static_cast<std::size_t>(k), 0);
    for (int c = 0; c < k; ++c) {
      std::int64_t best = -1;
      for (const auto& [key, cnt] : overlap)
        if (key.first == c && cnt > best) best = cnt, to_ref[static_cast<std::size_t>(c)] = key.second;
    }
    std::int64_t agree = 0;
    for (std::size_t i = 0; i < res.labels.size(); ++i) {
      res.labels[i] = static_cast<std::uint8_t>(to_ref[res.labels[i]]);
      agree += res.labels[i] == (*reference)[i];
    }
    res.agreement = static_cast<double>(agree) / static_cast<double>(n);
    res.nmi = normalized_mutual_information(res.labels, *reference);
  }
  return res;
}

double normalized_mutual_information(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size() || a.empty()) throw DataError("NMI: label vectors must be nonempty and equal length");
  const auto n = static_cast<double>(a.size());
  std::map<int, double> pa, pb;
  std::map<std::pair<int, int>, double> pab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa[a[i]] += 1.0 / n;
    pb[b[i]] += 1.0 / n;
    pab[{a[i], b[i]}] += 1.0 / n;
  }
  double ha = 0, hb = 0, mi = 0;
  for (const auto& [_, p] : pa) ha -= p * std::log(p);
  for (const auto& [_, p] : pb) hb -= p * std::log(p);
  for (const auto& [key, p] : pab) mi += p * std::log(p / (pa[key.first] * pb[key.second]));
  const double denom = 0.5 * (ha + hb);
  if (denom <= 0.0) return 1.0;  // both labelings constant
  return std::clamp(mi / denom, 0.0, 1.0);
}

}  // namespace mosaic::synth
