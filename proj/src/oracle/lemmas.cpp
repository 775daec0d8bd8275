#include <algorithm>
#include <cmath>
#include <bit>
#include <limits>

#include "mosaic/common.hpp"
#include "mosaic/influence.hpp"
#include "mosaic/oracle.hpp"

namespace mosaic::oracle {

EntropyLemmaReport verify_entropy_lemma(int columns, std::uint64_t seed) {
  if (columns < 1) throw ConfigError("entropy lemma: need at least one column");
  EntropyLemmaReport rep;
  rep.columns = columns;
  rep.min_entropy = std::numeric_limits<double>::infinity();
  rep.max_excess = -std::numeric_limits<double>::infinity();
  auto rng = make_rng(seed, 0);
  // Scales stay well above the 1e-12 guard so the measured drift is the lemma, not the guard.
  const double scales[] = {0.5, 7.0, 1e4};
  for (int c = 0; c < columns; ++c) {
    const int D = 2 + static_cast<int>(uniform_index(rng, 63));
    Eigen::VectorXd a(D);
    const int shape = c % 3;
    for (int i = 0; i < D; ++i) {
      const double v = std::exp(2.0 * standard_normal(rng));
      if (shape == 0) a(i) = v;
      else if (shape == 1) a(i) = uniform01(rng) < 0.7 ? 0.0 : v;
      else a(i) = 1e-4 * v;
    }
    if (shape == 2) a(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(D)))) = 1.0;
    if (a.sum() == 0.0) a(0) = 1.0;
    const double h = influence::column_entropy(a);
    const double logD = std::log(static_cast<double>(D));
    rep.min_entropy = std::min(rep.min_entropy, h);
    rep.max_excess = std::max(rep.max_excess, h - logD);
    if (h < -1e-12 || h > logD + 1e-9) ++rep.violations;
    for (double s : scales) rep.scale_drift = std::max(rep.scale_drift, std::abs(influence::column_entropy(s * a) - h));
  }
  for (int D = 2; D <= 64; ++D) {
    Eigen::VectorXd hot = Eigen::VectorXd::Zero(D);
    hot(D / 2) = 3.0;
    rep.one_hot_entropy = std::max(rep.one_hot_entropy, std::abs(influence::column_entropy(hot)));
    const Eigen::VectorXd flat = Eigen::VectorXd::Constant(D, 0.5);
    rep.uniform_gap = std::max(rep.uniform_gap, std::abs(influence::column_entropy(flat) - std::log(static_cast<double>(D))));
  }
  rep.pass = rep.violations == 0 && rep.one_hot_entropy <= 1e-10 && rep.uniform_gap <= 1e-9 && rep.scale_drift <= 1e-8;
  return rep;
}

TopkReport verify_topk(int D, double gap, double perturbation, std::uint64_t seed) {
  if (D < 2 || D > 12) throw ConfigError("top-k check: D must lie in [2, 12]");
  if (!(gap > 0.0) || perturbation < 0.0) throw ConfigError("top-k check: need gap > 0 and perturbation >= 0");
  TopkReport rep;
  auto rng = make_rng(seed, 0);
  const int supports = (1 << D) - 1;
  for (int S = 1; S < supports; ++S) {
    const int k = std::popcount(static_cast<unsigned>(S));
    // Support entries sit in [1 + gap, 2 + gap], the rest in [0, 1]; the boundary
    // pair is pinned so the gap is exactly `gap`.
    Eigen::VectorXd a(D);
    int lowest_in = -1, highest_out = -1;
    for (int i = 0; i < D; ++i) {
      const bool in = (S >> i) & 1;
      a(i) = in ? 1.0 + gap + uniform01(rng) : uniform01(rng);
      if (in && lowest_in < 0) lowest_in = i;
      if (!in && highest_out < 0) highest_out = i;
    }
    a(lowest_in) = 1.0 + gap;
    a(highest_out) = 1.0;
    for (int i = 0; i < D; ++i) {
      if ((S >> i) & 1) a(i) = std::max(a(i), a(lowest_in));
      else a(i) = std::min(a(i), a(highest_out));
    }
    for (int corner = 0; corner < (1 << D); ++corner) {
      Eigen::VectorXd e(D);
      for (int i = 0; i < D; ++i) e(i) = ((corner >> i) & 1) ? perturbation : -perturbation;
      const auto top = influence::top_k(a + e, k);
      int mask = 0;
      for (int i : top) mask |= 1 << i;
      ++rep.trials;
      if (mask == S) ++rep.exact;
      else ++rep.counterexamples;
    }
  }
  rep.pass = perturbation < gap / 2.0 ? rep.exact == rep.trials : true;
  return rep;
}

bool topk_counterexample(double gap, double eps) {
  Eigen::VectorXd a(2);
  a << 1.0 + gap, 1.0;
  const double d = gap / 2.0 + eps;
  Eigen::VectorXd e(2);
  e << -d, d;
  return influence::top_k(a + e, 1).front() != 0;
}

}  // namespace mosaic::oracle
