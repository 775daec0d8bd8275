#include <algorithm>
#include <cmath>
#include <numeric>

#include <doctest.h>

#include "mosaic/common.hpp"
#include "mosaic/metrics.hpp"

using namespace mosaic;
using namespace mosaic::metrics;

namespace {

// Best total affinity over every injective map from rows to columns.
double brute_force_best(const Eigen::MatrixXd& C) {
  const int n = static_cast<int>(C.rows()), m = static_cast<int>(C.cols());
  std::vector<int> cols(m);
  std::iota(cols.begin(), cols.end(), 0);
  double best = -1.0;
  do {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += C(j, cols[j]);
    best = std::max(best, s);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

Eigen::MatrixXd gaussian_matrix(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd M(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) M(i, j) = standard_normal(rng);
  return M;
}

// Newton/IRLS logistic fit on the same standardized design; independent of the
// gradient-descent probe.
double irls_accuracy(const Eigen::MatrixXd& Z, const Labels& y, double l2, std::uint64_t seed) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(Z.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  auto rng = make_rng(seed, 101);
  shuffle(idx, rng);
  const auto ntr = static_cast<Eigen::Index>(std::floor(0.8 * Z.rows()));
  Eigen::MatrixXd X(Z.rows(), Z.cols() + 1);
  const Eigen::MatrixXd Ztr = Z(std::vector<Eigen::Index>(idx.begin(), idx.begin() + ntr), Eigen::all);
  const Eigen::RowVectorXd mean = Ztr.colwise().mean();
  const Eigen::RowVectorXd sd = ((Ztr.rowwise() - mean).array().square().colwise().mean()).sqrt();
  X.leftCols(Z.cols()) = (Z.rowwise() - mean).array().rowwise() / sd.array();
  X.col(Z.cols()).setOnes();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(X.cols());
  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(w.size());
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(w.size(), w.size());
    for (Eigen::Index t = 0; t < ntr; ++t) {
      const auto r = idx[static_cast<std::size_t>(t)];
      const double p = 1.0 / (1.0 + std::exp(-X.row(r).dot(w)));
      g += (p - y[static_cast<std::size_t>(r)]) * X.row(r).transpose();
      H += p * (1 - p) * X.row(r).transpose() * X.row(r);
    }
    g /= static_cast<double>(ntr);
    H /= static_cast<double>(ntr);
    for (Eigen::Index k = 0; k < Z.cols(); ++k) g(k) += l2 * w(k), H(k, k) += l2;
    w -= H.ldlt().solve(g);
  }
  int correct = 0;
  for (std::size_t t = static_cast<std::size_t>(ntr); t < idx.size(); ++t)
    correct += (X.row(idx[t]).dot(w) > 0) == (y[static_cast<std::size_t>(idx[t])] != 0);
  return correct / static_cast<double>(idx.size() - static_cast<std::size_t>(ntr));
}

synth::SupportMap toy_support() {
  synth::SupportMap sm;
  sm.D = 9;
  sm.factors = {{{0, 1}, {2}}, {{3, 4}, {2}}, {{5, 6}, {}}};
  sm.noise = {7, 8};
  sm.regime_varying = {0, 1};
  sm.factor_names = {"a", "b", "c"};
  return sm;
}

}  // namespace

TEST_CASE("Hungarian matches exhaustive search for n <= 6") {
  auto rng = make_rng(17, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 6));
    const int m = n + static_cast<int>(uniform_index(rng, 7 - n));
    Eigen::MatrixXd C(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) C(i, j) = uniform01(rng);
    const auto col = hungarian(-C);
    std::set<int> distinct(col.begin(), col.end());
    CHECK(distinct.size() == static_cast<std::size_t>(n));
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += C(i, col[static_cast<std::size_t>(i)]);
    CHECK(s == doctest::Approx(brute_force_best(C)).epsilon(1e-12));
  }
}

TEST_CASE("MCC of a permuted, rescaled copy is one") {
  auto rng = make_rng(3, 0);
  const Eigen::MatrixXd Z = gaussian_matrix(500, 4, rng);
  Eigen::MatrixXd L(500, 6);
  const int perm[4] = {5, 0, 3, 1};
  for (int j = 0; j < 4; ++j) L.col(perm[j]) = (j % 2 ? -2.0 : 3.0) * Z.col(j).array() + 1.0;
  L.col(2) = gaussian_matrix(500, 1, rng);
  L.col(4).setConstant(2.0);
  const auto m = hungarian_mcc(Z, L);
  CHECK(m.mcc == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.matched_count == 4);
  for (int j = 0; j < 4; ++j) CHECK(m.assignment[static_cast<std::size_t>(j)] == perm[j]);
  CHECK(m.factor_of(5) == 0);
  CHECK(m.factor_of(2) == -1);
  CHECK(m.affinity(0, 4) == 0.0);

  // More true factors than learned ones: every learned latent still gets one factor.
  const auto few = hungarian_mcc(L.leftCols(2), Z);
  CHECK(few.matched_count == 2);
}

TEST_CASE("MCC below threshold reports zero matches") {
  auto rng = make_rng(4, 0);
  const Eigen::MatrixXd Z = gaussian_matrix(2000, 3, rng), L = gaussian_matrix(2000, 3, rng);
  const auto m = hungarian_mcc(Z, L);
  CHECK(m.matched_count == 0);
  CHECK(m.mcc == 0.0);
  CHECK_THROWS_AS(hungarian_mcc(Eigen::MatrixXd(0, 0), L), DataError);
}

TEST_CASE("Cohen's d closed forms and affine invariance") {
  Eigen::VectorXd z(4);
  z << -1, 1, 0, 2;
  const Labels c{0, 0, 1, 1};
  CHECK(cohens_d(z, c) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(cohens_d(-3.0 * z.array() + 7.0, c) == doctest::Approx(1.0).epsilon(1e-14));
  Eigen::VectorXd same(4);
  same << 1, 2, 1, 2;
  CHECK(cohens_d(same, c) == 0.0);
  CHECK_THROWS_AS(cohens_d(z, Labels{0, 0, 0, 0}), DataError);
  CHECK_THROWS_AS(cohens_d(z, Labels{0, 1}), DataError);

  auto rng = make_rng(8, 0);
  Eigen::VectorXd g(3000);
  Labels lab(3000);
  double s[2] = {0, 0}, q[2] = {0, 0};
  for (int t = 0; t < 3000; ++t) {
    lab[static_cast<std::size_t>(t)] = t % 3 == 0;
    g(t) = (t % 3 == 0 ? 0.8 : 0.0) + (t % 3 == 0 ? 2.0 : 1.0) * standard_normal(rng);
    s[t % 3 == 0] += g(t);
  }
  const double m0 = s[0] / 2000, m1 = s[1] / 1000;
  for (int t = 0; t < 3000; ++t) q[t % 3 == 0] += std::pow(g(t) - (t % 3 == 0 ? m1 : m0), 2);
  const double expect = std::abs(m0 - m1) / std::sqrt(0.5 * (q[0] / 2000 + q[1] / 1000));
  CHECK(cohens_d(g, lab) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("histogram KL against the Gaussian closed form") {
  auto rng = make_rng(21, 0);
  const int n = 100000;
  Eigen::VectorXd z(2 * n);
  Labels lab(2 * n);
  for (int t = 0; t < 2 * n; ++t) {
    lab[static_cast<std::size_t>(t)] = t >= n;
    z(t) = (t >= n ? 1.0 : 0.0) + standard_normal(rng);
  }
  const double kl = kl_histogram(z, lab);
  CHECK(std::abs(kl - 0.5) <= 0.15 * 0.5);

  Eigen::VectorXd dup(2 * n);
  for (int t = 0; t < 2 * n; ++t) dup(t) = z(t % n);
  CHECK(kl_histogram(dup, lab) <= 1e-6);
  CHECK(kl_histogram(z, lab) >= 0.0);
  CHECK_THROWS_AS(kl_histogram(z.head(10), Labels(10, 1)), DataError);
}

TEST_CASE("driver ranking is stable under monotone transforms on separated cases") {
  auto rng = make_rng(5, 0);
  const int n = 4000;
  Eigen::MatrixXd Z(n, 4);
  Labels lab(n);
  const double shift[4] = {0.0, 2.5, 0.3, 1.2};
  for (int t = 0; t < n; ++t) {
    lab[static_cast<std::size_t>(t)] = t % 2;
    for (int k = 0; k < 4; ++k) Z(t, k) = (t % 2 ? shift[k] : 0.0) + standard_normal(rng);
  }
  const auto cohen = rank_drivers(Z, lab);
  CHECK(cohen.order == std::vector<int>{1, 3, 2, 0});
  CHECK(cohen.driver() == 1);
  const auto kl = rank_drivers(Z, lab, DriverStat::Kl);
  const auto kl_t = rank_drivers(Z.array().exp().matrix(), lab, DriverStat::Kl);
  CHECK(kl.top(2) == std::vector<int>{1, 3});
  CHECK(kl_t.top(2) == kl.top(2));
  CHECK(cohen_kl_overlap(cohen, kl) == doctest::Approx(1.0));

  Eigen::MatrixXd tie = Eigen::MatrixXd::Zero(4, 3);
  tie.col(1) << 0, 0, 1, 1;
  tie.col(2) << 0, 0, 1, 1;
  CHECK(rank_drivers(tie, {0, 0, 1, 1}).order == std::vector<int>{1, 2, 0});
}

TEST_CASE("Z@top3 and gated X_Z@top3 by rule trace") {
  const auto sm = toy_support();
  MatchResult m;
  m.assignment = {0, 2, 1};  // factor a -> latent 0, b -> latent 2, c -> latent 1
  m.matched = {true, true, true};
  CHECK(z_at_top3(m, {0, 2, 1}, sm.regime_varying) == doctest::Approx(2.0 / 3.0));
  m.matched = {false, false, false};
  CHECK(z_at_top3(m, {0, 2, 1}, sm.regime_varying) == 0.0);
  m.matched = {true, true, true};

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(9, 3);
  A(0, 0) = 1, A(1, 0) = 1, A(2, 0) = 1;     // exact support of a
  A(3, 2) = 1, A(4, 2) = 1, A(8, 2) = 1;     // two of three on b's support
  A.col(1).setConstant(1.0);                 // factor c: not regime-varying
  const auto s = xz_at_top3(A, m, sm, {0, 2, 1});
  CHECK(s.precision[0] == doctest::Approx(1.0));
  CHECK(s.precision[1] == doctest::Approx(2.0 / 3.0));
  CHECK(s.precision[2] == 0.0);
  CHECK(s.score == doctest::Approx((1.0 + 2.0 / 3.0) / 3.0));

  // Uniform columns fail the gate regardless of where the argmax lands.
  const Eigen::MatrixXd U = Eigen::MatrixXd::Ones(9, 3);
  CHECK(xz_at_top3(U, m, sm, {0, 2, 1}).score == 0.0);
  CHECK(xz_at_top3(U, m, sm, {0, 2, 1}, std::nullopt).score > 0.0);
}

TEST_CASE("X_Z@top3 is monotone in the gate") {
  auto rng = make_rng(12, 0);
  const auto sm = toy_support();
  MatchResult m;
  m.assignment = {1, 0, 2};
  m.matched = {true, true, true};
  for (int trial = 0; trial < 300; ++trial) {
    Eigen::MatrixXd A(9, 3);
    for (int i = 0; i < 9; ++i)
      for (int k = 0; k < 3; ++k) A(i, k) = std::pow(uniform01(rng), 1 + 6 * uniform01(rng));
    const auto rows = gate_sweep(A, m, sm, {0, 1, 2}, {0.3, 0.5, 0.6, 0.7, 0.9});
    for (std::size_t r = 1; r < rows.size() - 1; ++r) CHECK(rows[r].xz <= rows[r - 1].xz);
    CHECK(rows.back().gate == "none");
    CHECK(rows.back().xz >= rows.front().xz);
  }
}

TEST_CASE("top-3 mass hand cases") {
  Eigen::MatrixXd A(4, 3);
  A << 4, 1, 0,
       3, 1, 0,
       2, 1, 7,
       1, 1, 0;
  const auto m = top3_masses(A);
  CHECK(m(0) == doctest::Approx(0.9));
  CHECK(m(1) == doctest::Approx(0.75));
  CHECK(m(2) == doctest::Approx(1.0));
}

TEST_CASE("logistic probe against an IRLS oracle") {
  auto rng = make_rng(31, 0);
  const int n = 2000;
  Eigen::MatrixXd Z(n, 3);
  Labels y(n);
  for (int t = 0; t < n; ++t) {
    for (int k = 0; k < 3; ++k) Z(t, k) = standard_normal(rng);
    const double logit = 1.5 * Z(t, 0) - 0.7 * Z(t, 2) + 0.2;
    y[static_cast<std::size_t>(t)] = uniform01(rng) < 1.0 / (1.0 + std::exp(-logit));
  }
  const double acc = regime_accuracy(Z, y, {.seed = 4});
  CHECK(std::abs(acc - irls_accuracy(Z, y, 1e-2, 4)) <= 0.02);

  Labels noise(n);
  for (auto& v : noise) v = uniform01(rng) < 0.5;
  CHECK(std::abs(regime_accuracy(Z, noise, {.seed = 1}) - 0.5) <= 0.06);

  Eigen::MatrixXd sep(200, 1);
  Labels ys(200);
  for (int t = 0; t < 200; ++t) sep(t, 0) = t < 100 ? -1.0 - 0.01 * t : 1.0 + 0.01 * t, ys[static_cast<std::size_t>(t)] = t >= 100;
  CHECK(regime_accuracy(sep, ys) >= 0.99);
}

TEST_CASE("rho estimate clamps and flags unavailable") {
  const auto r = rho_from_errors(0.01, 0.03, 1.01);
  CHECK(r.available);
  CHECK(r.rho == doctest::Approx(0.02));
  CHECK(rho_from_errors(0.02, 0.01, 1.0).rho == 0.0);
  CHECK(rho_from_errors(0.02, 0.01, 1.0).raw < 0.0);
  CHECK_FALSE(rho_from_errors(1.0, 1.2, 0.9).available);
}

TEST_CASE("report composition and JSON round trip") {
  auto rng = make_rng(44, 0);
  const int n = 600;
  Eigen::MatrixXd Zt(n, 3), Zh(n, 4);
  Labels lab(n);
  for (int t = 0; t < n; ++t) {
    lab[static_cast<std::size_t>(t)] = t % 2;
    for (int k = 0; k < 3; ++k) Zt(t, k) = standard_normal(rng) + (k == 0 && t % 2 ? 2.0 : 0.0);
    Zh(t, 0) = Zt(t, 1);
    Zh(t, 1) = -Zt(t, 0);
    Zh(t, 2) = Zt(t, 2);
    Zh(t, 3) = standard_normal(rng);
  }
  Eigen::MatrixXd A = Eigen::MatrixXd::Constant(9, 4, 0.01);
  A(0, 1) = A(1, 1) = A(2, 1) = 1.0;
  ReportInputs in{Zh, lab, Zt, toy_support(), A, rho_from_errors(0.01, 0.02, 1.0)};
  const auto r = compute_report(in);
  CHECK(r.driver == 1);
  CHECK(*r.driver_channel == 0);
  CHECK(*r.mcc == doctest::Approx(1.0));
  CHECK(r.xz_top3.has_value());
  CHECK(r.gate_sweep.size() == 4);
  const auto back = MetricsReport::from_json(nlohmann::json::parse(r.to_json().dump()));
  CHECK(back.to_json() == r.to_json());
  CHECK(r.csv_row().size() == MetricsReport::csv_header().size());

  ReportInputs bare;
  bare.Zhat = Zh;
  bare.labels = lab;
  const auto b = compute_report(bare);
  CHECK_FALSE(b.mcc.has_value());
  CHECK_FALSE(b.xz_top3.has_value());
  CHECK(b.regime_accuracy.has_value());
}

TEST_CASE("aligned table layout") {
  const auto s = aligned_table({"a", "bbb"}, {{"1234", "x"}});
  CHECK(s == "a     bbb\n----  ---\n1234  x  \n");
}
