#include <algorithm>
#include <cmath>
#include <numeric>

#include "mosaic/common.hpp"
#include "mosaic/oracle.hpp"

namespace mosaic::oracle {
namespace {

constexpr int kDegree = 3;

double quantile(Eigen::VectorXd v, double q) {
  std::sort(v.data(), v.data() + v.size());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<Eigen::Index>(std::floor(pos));
  const auto hi = std::min<Eigen::Index>(lo + 1, v.size() - 1);
  return v(lo) + (pos - static_cast<double>(lo)) * (v(hi) - v(lo));
}

// One channel's centered, orthonormalized design: Q = Ψc R⁻¹ with QᵀQ/N = I.
struct GroupDesign {
  std::vector<Eigen::MatrixXd> Q;
  std::vector<Eigen::MatrixXd> Rinv;
};

GroupDesign orthonormal_groups(const std::vector<Eigen::MatrixXd>& centered) {
  GroupDesign d;
  for (const auto& psi : centered) {
    const double N = static_cast<double>(psi.rows());
    Eigen::MatrixXd gram = psi.transpose() * psi / N;
    gram.diagonal().array() += 1e-12;
    const Eigen::MatrixXd L = gram.llt().matrixL();
    const Eigen::MatrixXd Rinv =
        L.transpose().triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(L.rows(), L.cols()));
    d.Q.push_back(psi * Rinv);
    d.Rinv.push_back(Rinv);
  }
  return d;
}

struct Solve {
  std::vector<Eigen::VectorXd> theta;
  Eigen::VectorXd r;
  double gap = 0.0;
  int sweeps = 0;
  bool converged = false;
  double kkt = 0.0;
};

double kkt_violation(const GroupDesign& d, const Solve& s, double lambda) {
  const double N = static_cast<double>(s.r.size());
  double worst = 0.0;
  for (std::size_t j = 0; j < d.Q.size(); ++j) {
    const Eigen::VectorXd grad = d.Q[j].transpose() * s.r / N;
    const double nt = s.theta[j].norm();
    const double v = nt > 0.0 ? (grad - lambda * s.theta[j] / nt).norm() : std::max(0.0, grad.norm() - lambda);
    worst = std::max(worst, v);
  }
  return worst;
}

Solve solve_channel(const GroupDesign& d, const Eigen::VectorXd& y, const GroupLassoOptions& opts) {
  const double N = static_cast<double>(y.size());
  const double lambda = opts.lambda;
  Solve s;
  for (const auto& q : d.Q) s.theta.push_back(Eigen::VectorXd::Zero(q.cols()));

  if (lambda == 0.0) {
    // Unpenalized: joint least squares, and the gap is the stationarity norm.
    Eigen::Index total = 0;
    for (const auto& q : d.Q) total += q.cols();
    Eigen::MatrixXd A(y.size(), total);
    Eigen::Index c = 0;
    for (const auto& q : d.Q) A.middleCols(c, q.cols()) = q, c += q.cols();
    const Eigen::VectorXd sol = A.colPivHouseholderQr().solve(y);
    c = 0;
    for (auto& t : s.theta) t = sol.segment(c, t.size()), c += t.size();
    s.r = y - A * sol;
    s.kkt = kkt_violation(d, s, 0.0);
    s.gap = s.kkt;
    s.converged = s.gap <= std::max(opts.gap_tolerance, 1e-9);
    return s;
  }

  s.r = y;
  const double y2 = y.squaredNorm() / (2.0 * N);
  for (s.sweeps = 1; s.sweeps <= opts.max_sweeps; ++s.sweeps) {
    for (std::size_t j = 0; j < d.Q.size(); ++j) {
      s.r += d.Q[j] * s.theta[j];
      const Eigen::VectorXd z = d.Q[j].transpose() * s.r / N;
      const double nz = z.norm();
      s.theta[j] = nz > lambda ? Eigen::VectorXd((1.0 - lambda / nz) * z) : Eigen::VectorXd::Zero(z.size());
      s.r -= d.Q[j] * s.theta[j];
    }
    double penalty = 0.0, max_corr = 0.0;
    for (std::size_t j = 0; j < d.Q.size(); ++j) {
      penalty += s.theta[j].norm();
      max_corr = std::max(max_corr, (d.Q[j].transpose() * s.r / N).norm());
    }
    const double primal = s.r.squaredNorm() / (2.0 * N) + lambda * penalty;
    const double scale = max_corr > lambda ? lambda / max_corr : 1.0;
    const Eigen::VectorXd u = scale * s.r / N;
    const double dual = y2 - 0.5 * N * (u - y / N).squaredNorm();
    s.gap = primal - dual;
    if (s.gap <= opts.gap_tolerance) {
      s.converged = true;
      break;
    }
  }
  s.sweeps = std::min(s.sweeps, opts.max_sweeps);
  s.kkt = kkt_violation(d, s, lambda);
  return s;
}

}  // namespace

BSplineBasis::BSplineBasis(double lo, double hi, int size) : lo_(lo), hi_(hi), size_(size) {
  if (size < kDegree + 1) throw ConfigError("B-spline basis needs at least 4 functions");
  if (!(hi > lo)) throw ConfigError("B-spline basis needs hi > lo");
  const int interior = size - kDegree - 1;
  const double h = (hi - lo) / (interior + 1);
  for (int i = 0; i <= kDegree; ++i) knots_.push_back(lo);
  for (int i = 1; i <= interior; ++i) knots_.push_back(lo + i * h);
  for (int i = 0; i <= kDegree; ++i) knots_.push_back(hi);
}

Eigen::RowVectorXd BSplineBasis::eval(double z) const {
  z = std::clamp(z, lo_, hi_);
  int span = size_ - 1;
  for (int s = kDegree; s < size_; ++s) {
    if (z < knots_[static_cast<std::size_t>(s) + 1]) {
      span = s;
      break;
    }
  }
  // Cox-de Boor triangle for the kDegree+1 nonzero functions on the span.
  double N[kDegree + 1] = {1.0, 0.0, 0.0, 0.0};
  double left[kDegree + 1], right[kDegree + 1];
  for (int k = 1; k <= kDegree; ++k) {
    left[k] = z - knots_[static_cast<std::size_t>(span + 1 - k)];
    right[k] = knots_[static_cast<std::size_t>(span + k)] - z;
    double saved = 0.0;
    for (int r = 0; r < k; ++r) {
      const double tmp = N[r] / (right[r + 1] + left[k - r]);
      N[r] = saved + right[r + 1] * tmp;
      saved = left[k - r] * tmp;
    }
    N[k] = saved;
  }
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(size_);
  for (int k = 0; k <= kDegree; ++k) out(span - kDegree + k) = N[k];
  return out;
}

Eigen::MatrixXd BSplineBasis::eval(const Eigen::VectorXd& z) const {
  Eigen::MatrixXd out(z.size(), size_);
  for (Eigen::Index t = 0; t < z.size(); ++t) out.row(t) = eval(z(t));
  return out;
}

bool GroupLassoModel::converged() const {
  return std::all_of(channels.begin(), channels.end(), [](const ChannelFit& c) { return c.converged; });
}

double GroupLassoModel::max_gap() const {
  double g = 0.0;
  for (const auto& c : channels) g = std::max(g, c.duality_gap);
  return g;
}

double GroupLassoModel::max_kkt_violation() const {
  double g = 0.0;
  for (const auto& c : channels) g = std::max(g, c.kkt_violation);
  return g;
}

std::vector<std::set<int>> GroupLassoModel::supports() const {
  std::vector<std::set<int>> out;
  for (const auto& c : channels) out.push_back(c.support);
  return out;
}

double GroupLassoModel::main_effect(int i, int j, double z) const {
  const auto& basis = bases[static_cast<std::size_t>(j)];
  const Eigen::RowVectorXd psi = basis.eval(z).head(basis.size() - 1) - basis_means[static_cast<std::size_t>(j)];
  return psi.dot(channels[static_cast<std::size_t>(i)].coefficients[static_cast<std::size_t>(j)]);
}

Eigen::MatrixXd GroupLassoModel::predict(const Eigen::MatrixXd& Z) const {
  const auto n = static_cast<Eigen::Index>(bases.size());
  if (Z.cols() != n) throw ConfigError("group lasso predict: expected " + std::to_string(n) + " factors");
  Eigen::MatrixXd out(Z.rows(), static_cast<Eigen::Index>(channels.size()));
  std::vector<Eigen::MatrixXd> psi;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& basis = bases[static_cast<std::size_t>(j)];
    Eigen::MatrixXd p = basis.eval(Eigen::VectorXd(Z.col(j))).leftCols(basis.size() - 1);
    p.rowwise() -= basis_means[static_cast<std::size_t>(j)];
    psi.push_back(std::move(p));
  }
  for (std::size_t i = 0; i < channels.size(); ++i) {
    Eigen::VectorXd col = Eigen::VectorXd::Constant(Z.rows(), channels[i].intercept);
    for (Eigen::Index j = 0; j < n; ++j) col += psi[static_cast<std::size_t>(j)] * channels[i].coefficients[static_cast<std::size_t>(j)];
    out.col(static_cast<Eigen::Index>(i)) = col;
  }
  return out;
}

GroupLassoModel bspline_group_lasso(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& X, const GroupLassoOptions& opts) {
  if (Z.rows() != X.rows() || Z.rows() < 2) throw ConfigError("group lasso: Z and X need the same number (>= 2) of rows");
  if (opts.lambda < 0.0) throw ConfigError("group lasso: lambda must be nonnegative");
  const auto n = Z.cols();
  GroupLassoModel model;
  std::vector<Eigen::MatrixXd> centered;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::VectorXd zj = Z.col(j);
    double lo = quantile(zj, opts.quantile_lo), hi = quantile(zj, opts.quantile_hi);
    if (!(hi > lo)) hi = lo + 1.0;
    model.bases.emplace_back(lo, hi, opts.basis_size);
    // The full basis sums to one, so the last column is dropped before centering.
    Eigen::MatrixXd psi = model.bases.back().eval(zj).leftCols(opts.basis_size - 1);
    const Eigen::RowVectorXd mean = psi.colwise().mean();
    psi.rowwise() -= mean;
    model.basis_means.push_back(mean);
    centered.push_back(std::move(psi));
  }
  const auto design = orthonormal_groups(centered);
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    ChannelFit fit;
    fit.intercept = X.col(i).mean();
    const Eigen::VectorXd y = X.col(i).array() - fit.intercept;
    const auto s = solve_channel(design, y, opts);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& th = s.theta[static_cast<std::size_t>(j)];
      fit.coefficients.push_back(design.Rinv[static_cast<std::size_t>(j)] * th);
      if (th.norm() > 0.0) fit.support.insert(static_cast<int>(j));
    }
    fit.duality_gap = s.gap;
    fit.sweeps = s.sweeps;
    fit.converged = s.converged;
    fit.kkt_violation = s.kkt;
    model.channels.push_back(std::move(fit));
  }
  return model;
}

LambdaSelection select_lambda(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& X, GroupLassoOptions opts,
                              const std::vector<double>& grid, int folds, std::uint64_t seed,
                              const std::vector<std::set<int>>* truth) {
  if (grid.empty()) throw ConfigError("select_lambda: empty grid");
  if (folds < 2 || folds > Z.rows()) throw ConfigError("select_lambda: folds must lie in [2, N]");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(Z.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto rng = make_rng(seed, 0);
  shuffle(order, rng);

  LambdaSelection sel;
  sel.grid = grid;
  for (double lambda : grid) {
    opts.lambda = lambda;
    double sse = 0.0;
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> tr, te;
      for (std::size_t t = 0; t < order.size(); ++t) (static_cast<int>(t % static_cast<std::size_t>(folds)) == f ? te : tr).push_back(order[t]);
      const Eigen::MatrixXd Ztr = Z(tr, Eigen::all), Xtr = X(tr, Eigen::all);
      const auto model = bspline_group_lasso(Ztr, Xtr, opts);
      sse += (model.predict(Z(te, Eigen::all)) - X(te, Eigen::all)).squaredNorm();
    }
    sel.cv_error.push_back(sse / static_cast<double>(X.size()));
    if (truth) {
      const auto supports = bspline_group_lasso(Z, X, opts).supports();
      int errors = 0;
      for (std::size_t i = 0; i < supports.size() && i < truth->size(); ++i) {
        for (int j : supports[i]) errors += (*truth)[i].count(j) ? 0 : 1;
        for (int j : (*truth)[i]) errors += supports[i].count(j) ? 0 : 1;
      }
      sel.support_errors.push_back(errors);
    } else {
      sel.support_errors.push_back(-1);
    }
  }
  const auto cv = std::min_element(sel.cv_error.begin(), sel.cv_error.end()) - sel.cv_error.begin();
  sel.cv_best = grid[static_cast<std::size_t>(cv)];
  sel.oracle_best = sel.cv_best;
  if (truth) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < grid.size(); ++k) {
      const auto a = std::make_pair(sel.support_errors[k], sel.cv_error[k]);
      const auto b = std::make_pair(sel.support_errors[best], sel.cv_error[best]);
      if (a < b) best = k;
    }
    sel.oracle_best = grid[best];
  }
  return sel;
}

RateProbe rate_probe(const std::vector<std::int64_t>& sizes, int replicates, std::uint64_t seed, double noise) {
  if (sizes.size() < 2 || replicates < 1) throw ConfigError("rate_probe: need two sample sizes and one replicate");
  const auto g1 = [](double z) { return std::sin(M_PI * z); };
  const auto g2 = [](double z) { return std::exp(z) - std::sinh(1.0); };
  const auto q = gauss_legendre(64);
  const Eigen::VectorXd w = q.weights / 2.0;

  RateProbe probe;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    const auto N = sizes[s];
    const int m = std::max(kDegree + 2, static_cast<int>(std::lround(2.0 * std::pow(static_cast<double>(N), 0.2))));
    double err = 0.0;
    for (int rep = 0; rep < replicates; ++rep) {
      auto rng = make_rng(seed, 1000 * s + static_cast<std::uint64_t>(rep));
      Eigen::MatrixXd Z(N, 2);
      Eigen::MatrixXd X(N, 1);
      for (std::int64_t t = 0; t < N; ++t) {
        Z(t, 0) = 2.0 * uniform01(rng) - 1.0;
        Z(t, 1) = 2.0 * uniform01(rng) - 1.0;
        X(t, 0) = g1(Z(t, 0)) + g2(Z(t, 1)) + noise * standard_normal(rng);
      }
      GroupLassoOptions opts;
      opts.basis_size = m;
      opts.lambda = 0.0;
      opts.quantile_lo = 0.0;
      opts.quantile_hi = 1.0;
      const auto model = bspline_group_lasso(Z, X, opts);
      for (int j = 0; j < 2; ++j) {
        Eigen::VectorXd fhat(q.nodes.size()), truth(q.nodes.size());
        for (Eigen::Index k = 0; k < q.nodes.size(); ++k) {
          fhat(k) = model.main_effect(0, j, q.nodes(k));
          truth(k) = j == 0 ? g1(q.nodes(k)) : g2(q.nodes(k));
        }
        fhat.array() -= fhat.dot(w);
        err += (fhat - truth).array().square().matrix().dot(w);
      }
    }
    probe.sample_sizes.push_back(N);
    probe.basis_sizes.push_back(m);
    probe.errors.push_back(err / replicates);
  }
  // Least-squares slope of log error against log N.
  const auto k = static_cast<double>(sizes.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    const double x = std::log(static_cast<double>(sizes[s])), y = std::log(probe.errors[s]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  probe.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  return probe;
}

}  // namespace mosaic::oracle
