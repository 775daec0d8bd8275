#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "mosaic/common.hpp"
#include "mosaic/influence.hpp"
#include "mosaic/metrics.hpp"

namespace mosaic::metrics {
namespace {

void check_labels(Eigen::Index n, const Labels& labels, const char* what) {
  if (n < 2) throw DataError(std::string(what) + ": need at least two samples");
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw DataError(std::string(what) + ": " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " samples");
}

double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

template <typename T>
std::string opt_str(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_floating_point_v<T>) return fmt(*v);
  else return std::to_string(*v);
}

template <typename T>
nlohmann::json opt_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> json_opt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

nlohmann::json rho_json(const RhoEstimate& r) {
  return {{"dense_mse", r.dense_mse}, {"additive_mse", r.additive_mse}, {"total_variance", r.total_variance},
          {"sigma_r", r.sigma_r}, {"sigma_g", r.sigma_g}, {"raw", r.raw},
          {"rho", r.available ? nlohmann::json(r.rho) : nlohmann::json(nullptr)}, {"available", r.available}};
}

}  // namespace

std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows()), m = static_cast<int>(cost.cols());
  if (n == 0) return {};
  if (n > m) throw ConfigError("hungarian: more rows than columns");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) minv[j] = cur, way[j] = j0;
        if (minv[j] < delta) delta = minv[j], j1 = j;
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) u[p[j]] += delta, v[j] -= delta;
        else minv[j] -= delta;
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j]) col[p[j] - 1] = j - 1;
  return col;
}

Eigen::MatrixXd pearson_affinity(const Eigen::MatrixXd& Ztrue, const Eigen::MatrixXd& Zlearned) {
  if (Ztrue.rows() != Zlearned.rows()) throw DataError("pearson_affinity: row counts differ");
  if (Ztrue.rows() < 2) throw DataError("pearson_affinity: need at least two samples");
  auto standardize = [](const Eigen::MatrixXd& M) {
    Eigen::MatrixXd c = M.rowwise() - M.colwise().mean();
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      const double norm = c.col(j).norm();
      if (norm > 1e-12 * std::sqrt(static_cast<double>(c.rows())) * (1.0 + M.col(j).cwiseAbs().maxCoeff()))
        c.col(j) /= norm;
      else
        c.col(j).setZero();
    }
    return c;
  };
  return (standardize(Ztrue).transpose() * standardize(Zlearned)).cwiseAbs();
}

int MatchResult::factor_of(int k) const {
  for (std::size_t j = 0; j < assignment.size(); ++j)
    if (assignment[j] == k && matched[j]) return static_cast<int>(j);
  return -1;
}

nlohmann::json MatchResult::to_json() const {
  std::vector<std::vector<double>> aff(static_cast<std::size_t>(affinity.rows()));
  for (Eigen::Index j = 0; j < affinity.rows(); ++j)
    for (Eigen::Index k = 0; k < affinity.cols(); ++k) aff[static_cast<std::size_t>(j)].push_back(affinity(j, k));
  std::vector<int> m(matched.begin(), matched.end());
  return {{"affinity", aff}, {"assignment", assignment}, {"matched", m}, {"tau", tau}, {"mcc", mcc},
          {"matched_count", matched_count}};
}

MatchResult hungarian_mcc(const Eigen::MatrixXd& Ztrue, const Eigen::MatrixXd& Zlearned, double tau) {
  if (Ztrue.size() == 0 || Zlearned.size() == 0) throw DataError("hungarian_mcc: empty input");
  MatchResult r;
  r.tau = tau;
  r.affinity = pearson_affinity(Ztrue, Zlearned);
  const auto nt = r.affinity.rows(), nl = r.affinity.cols();
  r.assignment.assign(static_cast<std::size_t>(nt), -1);
  if (nt <= nl) {
    r.assignment = hungarian(-r.affinity);
  } else {
    const auto rows = hungarian(-r.affinity.transpose());
    for (Eigen::Index k = 0; k < nl; ++k) r.assignment[static_cast<std::size_t>(rows[static_cast<std::size_t>(k)])] = static_cast<int>(k);
  }
  r.matched.assign(static_cast<std::size_t>(nt), false);
  double sum = 0.0;
  for (Eigen::Index j = 0; j < nt; ++j) {
    const int k = r.assignment[static_cast<std::size_t>(j)];
    if (k >= 0 && r.affinity(j, k) >= tau) {
      r.matched[static_cast<std::size_t>(j)] = true;
      sum += r.affinity(j, k);
      ++r.matched_count;
    }
  }
  r.mcc = r.matched_count ? sum / r.matched_count : 0.0;
  return r;
}

double cohens_d(const Eigen::Ref<const Eigen::VectorXd>& z, const Labels& labels) {
  check_labels(z.size(), labels, "cohens_d");
  double s[2] = {0, 0}, ss[2] = {0, 0};
  double n[2] = {0, 0};
  for (Eigen::Index t = 0; t < z.size(); ++t) {
    const int c = labels[static_cast<std::size_t>(t)] ? 1 : 0;
    s[c] += z(t);
    n[c] += 1.0;
  }
  if (n[0] == 0 || n[1] == 0) throw DataError("cohens_d: a regime class is empty");
  const double m0 = s[0] / n[0], m1 = s[1] / n[1];
  for (Eigen::Index t = 0; t < z.size(); ++t) {
    const int c = labels[static_cast<std::size_t>(t)] ? 1 : 0;
    const double d = z(t) - (c ? m1 : m0);
    ss[c] += d * d;
  }
  const double pooled = std::sqrt(0.5 * (ss[0] / n[0] + ss[1] / n[1]));
  const double diff = std::abs(m0 - m1);
  if (pooled <= 1e-300) return diff > 0.0 ? std::numeric_limits<double>::max() : 0.0;
  return diff / pooled;
}

double kl_histogram(const Eigen::Ref<const Eigen::VectorXd>& z, const Labels& labels, const KlOptions& opts) {
  check_labels(z.size(), labels, "kl_histogram");
  if (opts.bins < 1) throw ConfigError("kl_histogram: bins must be positive");
  std::vector<double> pooled(z.data(), z.data() + z.size());
  std::sort(pooled.begin(), pooled.end());
  const double lo = quantile_sorted(pooled, opts.trim_lo), hi = quantile_sorted(pooled, opts.trim_hi);
  std::vector<double> h0(static_cast<std::size_t>(opts.bins), 1.0), h1(static_cast<std::size_t>(opts.bins), 1.0);
  std::size_t n0 = 0, n1 = 0;
  for (Eigen::Index t = 0; t < z.size(); ++t) (labels[static_cast<std::size_t>(t)] ? n1 : n0)++;
  if (n0 == 0 || n1 == 0) throw DataError("kl_histogram: a regime class is empty");
  if (!(hi > lo)) return 0.0;
  for (Eigen::Index t = 0; t < z.size(); ++t) {
    const double v = z(t);
    if (v < lo || v > hi) continue;
    auto b = static_cast<int>(std::floor((v - lo) / (hi - lo) * opts.bins));
    b = std::clamp(b, 0, opts.bins - 1);
    (labels[static_cast<std::size_t>(t)] ? h1 : h0)[static_cast<std::size_t>(b)] += 1.0;
  }
  const double s0 = std::accumulate(h0.begin(), h0.end(), 0.0), s1 = std::accumulate(h1.begin(), h1.end(), 0.0);
  double kl = 0.0;
  for (int b = 0; b < opts.bins; ++b) {
    const double p = h0[static_cast<std::size_t>(b)] / s0, q = h1[static_cast<std::size_t>(b)] / s1;
    kl += p * std::log(p / q);
  }
  return std::max(0.0, kl);
}

std::string to_string(DriverStat s) { return s == DriverStat::Cohen ? "cohen" : "kl"; }

DriverStat driver_stat_from_string(const std::string& s) {
  if (s == "cohen") return DriverStat::Cohen;
  if (s == "kl") return DriverStat::Kl;
  throw ConfigError("unknown driver statistic '" + s + "' (cohen, kl)");
}

std::vector<int> DriverRanking::top(int k) const {
  return {order.begin(), order.begin() + std::min<std::ptrdiff_t>(k, static_cast<std::ptrdiff_t>(order.size()))};
}

DriverRanking rank_drivers(const Eigen::MatrixXd& Z, const Labels& labels, DriverStat stat) {
  DriverRanking r;
  r.values.resize(Z.cols());
  for (Eigen::Index k = 0; k < Z.cols(); ++k)
    r.values(k) = stat == DriverStat::Cohen ? cohens_d(Z.col(k), labels) : kl_histogram(Z.col(k), labels);
  r.order.resize(static_cast<std::size_t>(Z.cols()));
  std::iota(r.order.begin(), r.order.end(), 0);
  std::stable_sort(r.order.begin(), r.order.end(), [&](int a, int b) { return r.values(a) > r.values(b); });
  return r;
}

double cohen_kl_overlap(const DriverRanking& cohen, const DriverRanking& kl, int k) {
  const auto a = cohen.top(k), b = kl.top(k);
  int hit = 0;
  for (int x : a) hit += std::count(b.begin(), b.end(), x) ? 1 : 0;
  return a.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(k);
}

double z_at_top3(const MatchResult& match, const std::vector<int>& top, const std::set<int>& regime_varying) {
  int hit = 0;
  for (int k : top) {
    const int f = match.factor_of(k);
    if (f >= 0 && regime_varying.count(f)) ++hit;
  }
  return hit / 3.0;
}

SupportScore xz_at_top3(const Eigen::MatrixXd& A, const MatchResult& match, const synth::SupportMap& support,
                        const std::vector<int>& top, std::optional<double> gate) {
  SupportScore s;
  for (int k : top) {
    if (k < 0 || k >= A.cols()) throw ConfigError("xz_at_top3: latent index out of range");
    const Eigen::VectorXd col = A.col(k).cwiseAbs();
    const double mass = influence::top_k_mass(col, 3);
    s.mass.push_back(mass);
    const int f = match.factor_of(k);
    double p = 0.0;
    if (f >= 0 && support.regime_varying.count(f) && (!gate || mass >= *gate)) {
      const auto truth = support.support(f);
      int hit = 0;
      for (int i : influence::top_k(col, 3)) hit += truth.count(i) ? 1 : 0;
      p = hit / 3.0;
    }
    s.precision.push_back(p);
    s.score += p / 3.0;
  }
  return s;
}

std::vector<GateRow> gate_sweep(const Eigen::MatrixXd& A, const MatchResult& match, const synth::SupportMap& support,
                                const std::vector<int>& top, const std::vector<double>& gates) {
  std::vector<GateRow> rows;
  for (double g : gates) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << g;
    rows.push_back({os.str(), xz_at_top3(A, match, support, top, g).score});
  }
  rows.push_back({"none", xz_at_top3(A, match, support, top, std::nullopt).score});
  return rows;
}

double regime_accuracy(const Eigen::MatrixXd& Z, const Labels& labels, const ProbeOptions& opts) {
  check_labels(Z.rows(), labels, "regime_accuracy");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(Z.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  auto rng = make_rng(opts.seed, 101);
  shuffle(idx, rng);
  const auto ntr = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(opts.train_fraction * Z.rows())), 1, Z.rows() - 1);
  const std::vector<Eigen::Index> tr(idx.begin(), idx.begin() + ntr), te(idx.begin() + ntr, idx.end());

  const Eigen::MatrixXd Ztr = Z(tr, Eigen::all);
  const Eigen::RowVectorXd mean = Ztr.colwise().mean();
  Eigen::RowVectorXd sd = ((Ztr.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(ntr)).sqrt();
  for (Eigen::Index j = 0; j < sd.size(); ++j)
    if (!(sd(j) > 1e-12)) sd(j) = 1.0;
  auto design = [&](const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), Z.cols() + 1);
    X.leftCols(Z.cols()) = (Z(rows, Eigen::all).rowwise() - mean).array().rowwise() / sd.array();
    X.col(Z.cols()).setOnes();
    return X;
  };
  const Eigen::MatrixXd X = design(tr), Xte = design(te);
  Eigen::VectorXd y(ntr);
  for (Eigen::Index t = 0; t < ntr; ++t) y(t) = labels[static_cast<std::size_t>(tr[static_cast<std::size_t>(t)])] ? 1.0 : 0.0;

  const double n = static_cast<double>(ntr);
  const Eigen::MatrixXd gram = X.transpose() * X / n;
  const double L = 0.25 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff() + opts.l2;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(X.cols());
  for (int s = 0; s < opts.steps; ++s) {
    const Eigen::VectorXd p = ((-(X * w)).array().exp() + 1.0).inverse();
    Eigen::VectorXd grad = X.transpose() * (p - y) / n;
    grad.head(Z.cols()) += opts.l2 * w.head(Z.cols());
    w -= grad / L;
  }
  const Eigen::VectorXd score = Xte * w;
  int correct = 0;
  for (std::size_t t = 0; t < te.size(); ++t) {
    const bool pred = score(static_cast<Eigen::Index>(t)) > 0.0;
    correct += pred == (labels[static_cast<std::size_t>(te[t])] != 0) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(te.size());
}

Eigen::VectorXd top3_masses(const Eigen::MatrixXd& A) {
  Eigen::VectorXd m(A.cols());
  for (Eigen::Index k = 0; k < A.cols(); ++k) m(k) = influence::top_k_mass(A.col(k).cwiseAbs(), 3);
  return m;
}

RhoEstimate rho_from_errors(double dense_mse, double additive_mse, double total_variance) {
  RhoEstimate r;
  r.dense_mse = dense_mse;
  r.additive_mse = additive_mse;
  r.total_variance = total_variance;
  r.sigma_r = additive_mse - dense_mse;
  r.sigma_g = total_variance - dense_mse;
  r.available = r.sigma_g > 0.0 && std::isfinite(r.sigma_g) && std::isfinite(r.sigma_r);
  r.raw = r.available ? r.sigma_r / r.sigma_g : 0.0;
  r.rho = std::clamp(r.raw, 0.0, 1.0);
  return r;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json gates = nlohmann::json::array();
  for (const auto& g : gate_sweep) gates.push_back({{"gate", g.gate}, {"xz_top3", g.xz}});
  return {{"mcc", opt_json(mcc)},
          {"matched_count", opt_json(matched_count)},
          {"z_top3", opt_json(z_top3)},
          {"xz_top3", opt_json(xz_top3)},
          {"gate", gate},
          {"gate_sweep", gates},
          {"regime_accuracy", opt_json(regime_accuracy)},
          {"cohens_d", cohens_d},
          {"kl", kl},
          {"ranking", ranking},
          {"driver", driver},
          {"driver_channel", opt_json(driver_channel)},
          {"top3_mass", top3_mass},
          {"mean_top3_mass_top3", mean_top3_mass_top3},
          {"concentration", concentration},
          {"assignment", assignment},
          {"rho", rho ? rho_json(*rho) : nlohmann::json(nullptr)},
          {"cohen_kl_overlap", cohen_kl_overlap},
          {"matched_factor", matched_factor},
          {"extra", extra}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.mcc = json_opt<double>(j, "mcc");
  r.matched_count = json_opt<int>(j, "matched_count");
  r.z_top3 = json_opt<double>(j, "z_top3");
  r.xz_top3 = json_opt<double>(j, "xz_top3");
  r.gate = j.value("gate", 0.5);
  for (const auto& g : j.value("gate_sweep", nlohmann::json::array()))
    r.gate_sweep.push_back({g.at("gate").get<std::string>(), g.at("xz_top3").get<double>()});
  r.regime_accuracy = json_opt<double>(j, "regime_accuracy");
  r.cohens_d = j.value("cohens_d", std::vector<double>{});
  r.kl = j.value("kl", std::vector<double>{});
  r.ranking = j.value("ranking", std::vector<int>{});
  r.driver = j.value("driver", -1);
  r.driver_channel = json_opt<int>(j, "driver_channel");
  r.top3_mass = j.value("top3_mass", std::vector<double>{});
  r.mean_top3_mass_top3 = j.value("mean_top3_mass_top3", 0.0);
  r.concentration = j.value("concentration", std::vector<double>{});
  r.assignment = j.value("assignment", std::vector<int>{});
  if (j.contains("rho") && !j["rho"].is_null()) {
    const auto& q = j["rho"];
    RhoEstimate e;
    e.dense_mse = q.at("dense_mse").get<double>();
    e.additive_mse = q.at("additive_mse").get<double>();
    e.total_variance = q.at("total_variance").get<double>();
    e.sigma_r = q.at("sigma_r").get<double>();
    e.sigma_g = q.at("sigma_g").get<double>();
    e.raw = q.at("raw").get<double>();
    e.available = q.at("available").get<bool>();
    e.rho = e.available ? q.at("rho").get<double>() : 0.0;
    r.rho = e;
  }
  r.cohen_kl_overlap = j.value("cohen_kl_overlap", 0.0);
  r.matched_factor = j.value("matched_factor", std::vector<int>{});
  r.extra = j.value("extra", nlohmann::json::object());
  return r;
}

std::vector<std::string> MetricsReport::csv_header() {
  return {"mcc", "matched_count", "z_top3", "xz_top3", "gate", "regime_accuracy", "driver", "driver_channel",
          "driver_cohens_d", "mean_top3_mass_top3", "rho", "rho_available", "cohen_kl_overlap",
          "xz_gate_0.50", "xz_gate_0.60", "xz_gate_0.70", "xz_gate_none"};
}

std::vector<std::string> MetricsReport::csv_row() const {
  std::vector<std::string> row{opt_str(mcc), opt_str(matched_count), opt_str(z_top3), opt_str(xz_top3), fmt(gate),
                               opt_str(regime_accuracy), std::to_string(driver), opt_str(driver_channel),
                               driver >= 0 && static_cast<std::size_t>(driver) < cohens_d.size()
                                   ? fmt(cohens_d[static_cast<std::size_t>(driver)])
                                   : "",
                               fmt(mean_top3_mass_top3),
                               rho && rho->available ? fmt(rho->rho) : "",
                               rho ? (rho->available ? "1" : "0") : "",
                               fmt(cohen_kl_overlap)};
  for (const char* g : {"0.50", "0.60", "0.70", "none"}) {
    std::string v;
    for (const auto& r : gate_sweep)
      if (r.gate == g) v = fmt(r.xz);
    row.push_back(v);
  }
  return row;
}

void MetricsReport::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream js(dir / "metrics.json");
  if (!js) throw RuntimeFailure("cannot write " + (dir / "metrics.json").string());
  js << to_json().dump(2) << '\n';
  write_csv(dir / "metrics.csv", csv_header(), {csv_row()});
}

MetricsReport compute_report(const ReportInputs& in) {
  MetricsReport r;
  r.gate = in.gate;
  const auto n = in.Zhat.cols();
  const auto cohen = rank_drivers(in.Zhat, in.labels, DriverStat::Cohen);
  const auto kl = rank_drivers(in.Zhat, in.labels, DriverStat::Kl);
  r.cohens_d.assign(cohen.values.data(), cohen.values.data() + n);
  r.kl.assign(kl.values.data(), kl.values.data() + n);
  r.ranking = cohen.order;
  r.driver = cohen.driver();
  r.cohen_kl_overlap = cohen_kl_overlap(cohen, kl);
  ProbeOptions probe;
  probe.seed = in.seed;
  r.regime_accuracy = regime_accuracy(in.Zhat, in.labels, probe);
  const auto top = cohen.top(3);

  if (in.A.size()) {
    if (in.A.cols() != n) throw DataError("compute_report: influence matrix has " + std::to_string(in.A.cols()) + " columns for " + std::to_string(n) + " latents");
    const auto masses = top3_masses(in.A);
    r.top3_mass.assign(masses.data(), masses.data() + masses.size());
    double m = 0.0;
    for (int k : top) m += masses(k);
    r.mean_top3_mass_top3 = top.empty() ? 0.0 : m / static_cast<double>(top.size());
    const auto as = influence::assign_variables(in.A);
    r.assignment = as.factor;
    r.concentration.assign(as.concentration.data(), as.concentration.data() + as.concentration.size());
    if (r.driver >= 0) {
      Eigen::Index ch = 0;
      in.A.col(r.driver).maxCoeff(&ch);
      r.driver_channel = static_cast<int>(ch);
    }
  }
  if (in.Ztrue) {
    const auto match = hungarian_mcc(*in.Ztrue, in.Zhat);
    r.mcc = match.mcc;
    r.matched_count = match.matched_count;
    for (Eigen::Index k = 0; k < n; ++k) r.matched_factor.push_back(match.factor_of(static_cast<int>(k)));
    if (in.support) {
      r.z_top3 = z_at_top3(match, top, in.support->regime_varying);
      if (in.A.size()) {
        r.xz_top3 = xz_at_top3(in.A, match, *in.support, top, in.gate).score;
        r.gate_sweep = gate_sweep(in.A, match, *in.support, top);
      }
    }
  }
  r.rho = in.rho;
  return r;
}

std::string aligned_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < width.size(); ++c) {
      const std::string& s = c < cells.size() ? cells[c] : std::string();
      os << (c ? "  " : "") << std::setw(static_cast<int>(width[c])) << std::left << s;
    }
    os << '\n';
  };
  line(header);
  std::vector<std::string> rule;
  for (auto w : width) rule.emplace_back(w, '-');
  line(rule);
  for (const auto& row : rows) line(row);
  return os.str();
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const bool quote = cells[c].find_first_of(",\"\n") != std::string::npos;
      if (c) out << ',';
      if (quote) {
        out << '"';
        for (char ch : cells[c]) out << (ch == '"' ? "\"\"" : std::string(1, ch));
        out << '"';
      } else {
        out << cells[c];
      }
    }
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

}  // namespace mosaic::metrics
