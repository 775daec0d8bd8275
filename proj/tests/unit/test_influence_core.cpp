#include <cmath>
#include <filesystem>

#include <doctest.h>

#include "mosaic/common.hpp"
#include "mosaic/influence.hpp"

using namespace mosaic;
using namespace mosaic::influence;

TEST_CASE("column entropy reference values") {
  Eigen::VectorXd a(3);
  a << 2, 1, 1;
  CHECK(column_entropy(a) == doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-10));
  CHECK(column_entropy(Eigen::VectorXd::Constant(30, 4.0)) == doctest::Approx(std::log(30.0)).epsilon(1e-10));
  Eigen::VectorXd hot = Eigen::VectorXd::Zero(30);
  hot(7) = 2.0;
  CHECK(std::abs(column_entropy(hot)) <= 1e-10);
  CHECK(column_entropy(Eigen::VectorXd::Zero(4)) == 0.0);
}

TEST_CASE("entropy is invariant to column scale and bounded by log D") {
  auto rng = make_rng(1, 0);
  for (int c = 0; c < 200; ++c) {
    const int D = 2 + static_cast<int>(uniform_index(rng, 40));
    Eigen::VectorXd a(D);
    for (int i = 0; i < D; ++i) a(i) = std::exp(standard_normal(rng));
    const double h = column_entropy(a);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(static_cast<double>(D)) + 1e-12);
    CHECK(column_entropy(123.0 * a) == doctest::Approx(h).epsilon(1e-10));
  }
}

TEST_CASE("alive mask uses a strict one-percent threshold") {
  Eigen::MatrixXd A(2, 4);
  A << 50, 0.5, 0.6, 0,
       50, 0.5, 0.0, 0;
  // Column masses 100, 1, 0.6, 0: mass exactly 1% of the max is dead.
  CHECK(alive_mask(A) == std::vector<int>{0});
  CHECK(alive_mask(A, 0.005) == std::vector<int>{0, 1, 2});
  CHECK(entropy_penalty(A) == doctest::Approx(std::log(2.0)).epsilon(1e-10));
  CHECK(entropy_penalty(Eigen::MatrixXd::Zero(3, 2)) == 0.0);
}

TEST_CASE("top-k ordering, ties and mass") {
  Eigen::VectorXd c(5);
  c << 1, 3, 3, 0, 2;
  CHECK(top_k(c, 3) == std::vector<int>{1, 2, 4});
  CHECK(top_k(c, 9).size() == 5);
  CHECK(top_k_mass(c) == doctest::Approx(8.0 / 9.0));
  CHECK(top_k_mass(Eigen::VectorXd::Zero(3)) == 0.0);
}

TEST_CASE("support recovery by ratio gap with fallback") {
  Eigen::MatrixXd A(6, 3);
  A << 5.0, 1.0, 0.0,
       4.0, 1.0, 0.0,
       4.5, 1.0, 0.0,
       0.3, 1.0, 0.0,
       0.2, 0.95, 0.0,
       0.1, 0.05, 0.0;
  bool fb = true;
  CHECK(recover_support(A, 0, {}, &fb) == std::set<int>{0, 1, 2});
  CHECK_FALSE(fb);
  // Column 1: the largest ratio (0.95 -> 0.05) still cuts cleanly.
  CHECK(recover_support(A, 1) == std::set<int>{0, 1, 2, 3, 4});
  CHECK(recover_support(A, 2).empty());

  Eigen::MatrixXd flat(4, 1);
  flat << 1.0, 0.9, 0.8, 0.05;
  SupportOptions strict;
  strict.ratio_gap = 100.0;
  CHECK(recover_support(flat, 0, strict, &fb) == std::set<int>{0, 1, 2});
  CHECK(fb);
  const auto all = recover_supports(A);
  CHECK(all.per_factor.size() == 3);
  CHECK(all.used_fallback.size() == 3);
}

TEST_CASE("variable assignment and concentration") {
  Eigen::MatrixXd A(3, 3);
  A << 0, 4, 0,
       1, 1, 2,
       0, 0, 0;
  const auto as = assign_variables(A);
  CHECK(as.factor == std::vector<int>{1, 2, 0});
  CHECK(as.concentration(0) == doctest::Approx(1.0));
  CHECK(as.concentration(1) == doctest::Approx(0.5));
  CHECK(as.concentration(2) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("influence matrix save/load round trip and validation") {
  InfluenceMatrix m;
  m.A = Eigen::MatrixXd::Random(4, 3).cwiseAbs();
  m.kind = ScoreKind::Range;
  m.stat_mean = Eigen::VectorXd::Zero(3);
  m.stat_std = Eigen::VectorXd::Ones(3);
  m.channel_names = {"a", "b", "c", "d"};
  const auto dir = std::filesystem::temp_directory_path() / "mosaic_infl_test";
  std::filesystem::create_directories(dir);
  m.save(dir / "A");
  const auto back = InfluenceMatrix::load(dir / "A.csv");
  CHECK((back.A - m.A).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(back.kind == ScoreKind::Range);
  CHECK(back.channel_names == m.channel_names);
  InfluenceMatrix bad;
  bad.A = -Eigen::MatrixXd::Ones(1, 1);
  CHECK_THROWS_AS(bad.validate(), DataError);
  CHECK_THROWS_AS(score_kind_from_string("gradient"), ConfigError);
  std::filesystem::remove_all(dir);
}
