#include <cmath>

#include <doctest.h>

#include "mosaic/common.hpp"
#include "mosaic/oracle.hpp"

using namespace mosaic;
using namespace mosaic::oracle;

namespace {

Eigen::VectorXd vec1(double x) { return Eigen::VectorXd::Constant(1, x); }

// Textbook recursive Cox-de Boor, written independently of the library's triangle scheme.
double cox_de_boor(const std::vector<double>& t, int i, int p, double x) {
  if (p == 0) return (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;
  double out = 0.0;
  if (t[i + p] > t[i]) out += (x - t[i]) / (t[i + p] - t[i]) * cox_de_boor(t, i, p - 1, x);
  if (t[i + p + 1] > t[i + 1]) out += (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * cox_de_boor(t, i + 1, p - 1, x);
  return out;
}

}  // namespace

TEST_CASE("Gauss-Legendre integrates polynomials to degree 2n-1") {
  for (int n : {1, 2, 5, 16, 64}) {
    const auto q = gauss_legendre(n);
    CHECK(q.weights.sum() == doctest::Approx(2.0).epsilon(1e-14));
    for (int k = 0; k <= 2 * n - 1 && k <= 40; ++k) {
      const double exact = k % 2 ? 0.0 : 2.0 / (k + 1);
      CHECK(std::abs(q.nodes.array().pow(k).matrix().dot(q.weights) - exact) <= 1e-12);
    }
    for (Eigen::Index i = 1; i < q.nodes.size(); ++i) CHECK(q.nodes(i) > q.nodes(i - 1));
  }
  // Known 3-point rule.
  const auto q3 = gauss_legendre(3);
  CHECK(q3.nodes(2) == doctest::Approx(std::sqrt(0.6)).epsilon(1e-15));
  CHECK(q3.weights(1) == doctest::Approx(8.0 / 9.0).epsilon(1e-15));
}

TEST_CASE("Gauss-Hermite reproduces standard normal moments") {
  const auto q = gauss_hermite(30);
  CHECK(q.weights.sum() == doctest::Approx(1.0).epsilon(1e-13));
  double dfact = 1.0;
  for (int k = 0; k <= 20; k += 2) {
    if (k) dfact *= k - 1;
    CHECK(q.nodes.array().pow(k).matrix().dot(q.weights) == doctest::Approx(dfact).epsilon(1e-10));
    CHECK(std::abs(q.nodes.array().pow(k + 1).matrix().dot(q.weights)) <= 1e-9 * dfact);
  }
  const auto q2 = gauss_hermite(2);
  CHECK(q2.nodes(1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(q2.weights(0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("grid measure indexing is last-dimension fastest") {
  auto gm = GridMeasure::uniform(3, 4);
  CHECK(gm.size() == 64);
  CHECK(gm.index(1) == std::vector<int>{0, 0, 1});
  CHECK(gm.index(4) == std::vector<int>{0, 1, 0});
  CHECK(gm.index(63) == std::vector<int>{3, 3, 3});
  double total = 0.0;
  for (std::int64_t p = 0; p < gm.size(); ++p) total += gm.weight(p);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("ANOVA of z1 + z2 + z1 z2 separates mains and interaction") {
  for (auto gm : {GridMeasure::uniform(2, 12), GridMeasure::gaussian(2, 12)}) {
    const auto a = anova_decompose([](const Eigen::VectorXd& z) { return vec1(z(0) + z(1) + z(0) * z(1)); }, 1, gm);
    CHECK(std::abs(a.g0(0)) <= 1e-13);
    for (int q = 0; q < 12; ++q) {
      CHECK(a.mains[0](q, 0) == doctest::Approx(gm.nodes[0](q)).epsilon(1e-12));
      CHECK(a.mains[1](q, 0) == doctest::Approx(gm.nodes[1](q)).epsilon(1e-12));
    }
    for (std::int64_t p = 0; p < gm.size(); ++p) {
      const auto z = gm.point(p);
      CHECK(std::abs(a.residual(p, 0) - z(0) * z(1)) <= 1e-12);
    }
    CHECK(a.centering_error <= 1e-13);
    CHECK(a.orthogonality_error <= 1e-12);
    CHECK(a.reconstruction_error <= 1e-13);
  }
}

TEST_CASE("pure product has zero mains and rho one; additive map has rho zero") {
  const auto gm = GridMeasure::uniform(2, 16);
  const auto prod = anova_decompose([](const Eigen::VectorXd& z) { return vec1(z(0) * z(1)); }, 1, gm);
  CHECK(prod.mains[0].cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(prod.rho == doctest::Approx(1.0).epsilon(1e-12));
  const auto add = anova_decompose([](const Eigen::VectorXd& z) { return vec1(std::sin(z(0)) + z(1) * z(1)); }, 1, gm);
  CHECK(add.rho <= 1e-24);
  CHECK(interaction_ratio([](const Eigen::VectorXd&) { return vec1(3.0); }, 1, gm) == 0.0);
}

TEST_CASE("interaction ratio matches the closed form for (1-b) z1 + b z1 z2") {
  const auto gm = GridMeasure::uniform(2, 8);
  for (double beta : {0.0, 0.25, 0.5, 0.8, 1.0}) {
    const double rho = interaction_ratio(
        [&](const Eigen::VectorXd& z) { return vec1((1 - beta) * z(0) + beta * z(0) * z(1)); }, 1, gm);
    const double expect = (beta * beta / 9.0) / ((1 - beta) * (1 - beta) / 3.0 + beta * beta / 9.0);
    CHECK(rho == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("population additive fit equals the ANOVA mains") {
  for (const auto& c : standard_battery()) {
    const int nodes = c.dims >= 4 ? 10 : 20;
    for (auto gm : {GridMeasure::uniform(c.dims, nodes), GridMeasure::gaussian(c.dims, nodes)}) {
      const auto a = anova_decompose(c.g, c.channels, gm);
      const auto fit = fit_additive_population(c.g, c.channels, gm);
      INFO(c.name);
      CHECK(max_main_gap(fit, a) <= 1e-8);
      CHECK((fit.intercept - a.g0).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("grid size cap") {
  const auto gm = GridMeasure::uniform(4, 100);
  CHECK_THROWS_AS(anova_decompose([](const Eigen::VectorXd& z) { return z; }, 4, gm), ConfigError);
}

TEST_CASE("B-spline basis matches recursive Cox-de Boor and sums to one") {
  const BSplineBasis basis(-1.5, 2.0, 9);
  std::vector<double> knots(4, -1.5);
  for (int i = 1; i <= 5; ++i) knots.push_back(-1.5 + 3.5 * i / 6.0);
  for (int i = 0; i < 4; ++i) knots.push_back(2.0);
  for (int s = 0; s < 200; ++s) {
    const double z = -1.5 + 3.5 * s / 200.0;
    const auto row = basis.eval(z);
    CHECK(row.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(row.minCoeff() >= 0.0);
    for (int i = 0; i < 9; ++i) CHECK(std::abs(row(i) - cox_de_boor(knots, i, 3, z)) <= 1e-14);
  }
  CHECK(basis.eval(5.0)(8) == doctest::Approx(1.0));
  CHECK(basis.eval(-5.0)(0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(BSplineBasis(0, 1, 3), ConfigError);
}

TEST_CASE("group lasso: large lambda empties every support, zero lambda is least squares") {
  auto rng = make_rng(3, 0);
  const int N = 400;
  Eigen::MatrixXd Z(N, 2), X(N, 2);
  for (int t = 0; t < N; ++t) {
    Z(t, 0) = standard_normal(rng);
    Z(t, 1) = standard_normal(rng);
    X(t, 0) = std::tanh(Z(t, 0)) + 0.1 * standard_normal(rng);
    X(t, 1) = Z(t, 1) * Z(t, 1) + 0.1 * standard_normal(rng);
  }
  GroupLassoOptions opts;
  opts.lambda = 100.0;
  const auto empty = bspline_group_lasso(Z, X, opts);
  for (const auto& s : empty.supports()) CHECK(s.empty());
  CHECK(empty.converged());

  opts.lambda = 0.0;
  const auto ls = bspline_group_lasso(Z, X, opts);
  // Independent check: stack the uncentered spline columns plus an intercept and solve directly.
  Eigen::MatrixXd A(N, 1 + 2 * (opts.basis_size - 1));
  A.col(0).setOnes();
  for (int j = 0; j < 2; ++j)
    A.middleCols(1 + j * (opts.basis_size - 1), opts.basis_size - 1) =
        ls.bases[static_cast<std::size_t>(j)].eval(Eigen::VectorXd(Z.col(j))).leftCols(opts.basis_size - 1);
  const Eigen::MatrixXd direct = A * A.colPivHouseholderQr().solve(X);
  CHECK((ls.predict(Z) - direct).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("group lasso converges with a small duality gap and satisfies KKT") {
  auto rng = make_rng(5, 0);
  const int N = 1500;
  Eigen::MatrixXd Z(N, 3), X(N, 3);
  for (int t = 0; t < N; ++t) {
    for (int j = 0; j < 3; ++j) Z(t, j) = 2.0 * uniform01(rng) - 1.0;
    X(t, 0) = std::sin(2.0 * Z(t, 0)) + 0.1 * standard_normal(rng);
    X(t, 1) = Z(t, 1) * Z(t, 1) + std::tanh(3.0 * Z(t, 2)) + 0.1 * standard_normal(rng);
    X(t, 2) = 0.1 * standard_normal(rng);
  }
  GroupLassoOptions opts;
  opts.lambda = 0.02;
  const auto m = bspline_group_lasso(Z, X, opts);
  CHECK(m.converged());
  CHECK(m.max_gap() <= 1e-8);
  CHECK(m.max_kkt_violation() <= 1e-6);
  CHECK(m.channels[0].support == std::set<int>{0});
  CHECK(m.channels[1].support == std::set<int>{1, 2});
  CHECK(m.channels[2].support.empty());
}

TEST_CASE("lambda selection finds an exact-support lambda") {
  auto rng = make_rng(9, 0);
  const int N = 1200;
  Eigen::MatrixXd Z(N, 2), X(N, 2);
  for (int t = 0; t < N; ++t) {
    Z(t, 0) = 2.0 * uniform01(rng) - 1.0;
    Z(t, 1) = 2.0 * uniform01(rng) - 1.0;
    X(t, 0) = std::tanh(2.0 * Z(t, 0)) + 0.1 * standard_normal(rng);
    X(t, 1) = std::exp(Z(t, 1)) + 0.1 * standard_normal(rng);
  }
  const std::vector<std::set<int>> truth{{0}, {1}};
  const auto sel = select_lambda(Z, X, {}, {1e-3, 1e-2, 3e-2, 1e-1, 1.0}, 4, 1, &truth);
  CHECK(sel.support_errors.back() == 2);  // everything shrunk away
  CHECK(*std::min_element(sel.support_errors.begin(), sel.support_errors.end()) == 0);
  CHECK(sel.cv_error.size() == 5);
}

TEST_CASE("spline estimation rate is close to N^(-4/5)") {
  const auto probe = rate_probe({500, 2000, 8000, 32000}, 4, 11);
  CHECK(probe.basis_sizes == std::vector<int>{7, 9, 12, 16});
  for (std::size_t i = 1; i < probe.errors.size(); ++i) CHECK(probe.errors[i] < probe.errors[i - 1]);
  CHECK(probe.slope >= -1.0);
  CHECK(probe.slope <= -0.6);
}

TEST_CASE("entropy lemma and top-k stability") {
  const auto ent = verify_entropy_lemma(2000, 3);
  CHECK(ent.pass);
  CHECK(ent.min_entropy >= -1e-12);
  CHECK(ent.max_excess <= 1e-9);

  const auto ok = verify_topk(5, 0.4, 0.19, 2);
  CHECK(ok.pass);
  CHECK(ok.trials == 30 * 32);
  CHECK(ok.exact == ok.trials);
  const auto bad = verify_topk(4, 0.4, 0.21, 2);
  CHECK(bad.counterexamples > 0);
  CHECK(topk_counterexample(0.4, 1e-3));
  CHECK_FALSE(topk_counterexample(0.4, -1e-3));
}

TEST_CASE("battery report passes and is well formed") {
  BatteryOptions opts;
  opts.nodes = 24;
  opts.entropy_columns = 500;
  opts.include_rate_probe = false;
  const auto report = run_battery(opts);
  CHECK(report["pass"].get<bool>());
  for (const auto& c : report["checks"]) {
    INFO(c.dump());
    CHECK(c["pass"].get<bool>());
  }
  CHECK(report["checks"].size() > 20);
}
