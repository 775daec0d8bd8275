#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "mosaic/common.hpp"
#include "mosaic/influence.hpp"

namespace mosaic::influence {

std::string to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::Contrast: return "contrast";
    case ScoreKind::Variance: return "variance";
    case ScoreKind::Range: return "range";
    case ScoreKind::Jacobian: return "jacobian";
  }
  return "contrast";
}

ScoreKind score_kind_from_string(const std::string& s) {
  if (s == "contrast") return ScoreKind::Contrast;
  if (s == "variance") return ScoreKind::Variance;
  if (s == "range") return ScoreKind::Range;
  if (s == "jacobian") return ScoreKind::Jacobian;
  throw ConfigError("unknown influence score '" + s + "' (contrast, variance, range, jacobian)");
}

void InfluenceMatrix::validate() const {
  if (!A.allFinite()) throw DataError("influence matrix has non-finite entries");
  if ((A.array() < 0.0).any()) throw DataError("influence matrix has negative entries");
}

nlohmann::json InfluenceMatrix::sidecar() const {
  nlohmann::json j = {{"score", to_string(kind)}, {"channels", channels()}, {"latents", latents()}};
  if (stat_mean.size()) {
    j["stats"] = {{"mean", std::vector<double>(stat_mean.data(), stat_mean.data() + stat_mean.size())},
                  {"std", std::vector<double>(stat_std.data(), stat_std.data() + stat_std.size())}};
  }
  j["channel_names"] = channel_names;
  return j;
}

void InfluenceMatrix::save(const std::filesystem::path& stem) const {
  auto csv = stem;
  csv += ".csv";
  std::ofstream out(csv);
  if (!out) throw RuntimeFailure("cannot write " + csv.string());
  out << "channel";
  for (int j = 0; j < latents(); ++j) out << ",z" << j;
  out << '\n';
  out.precision(17);
  for (int i = 0; i < channels(); ++i) {
    out << (static_cast<std::size_t>(i) < channel_names.size() ? channel_names[static_cast<std::size_t>(i)]
                                                               : "x" + std::to_string(i));
    for (int j = 0; j < latents(); ++j) out << ',' << A(i, j);
    out << '\n';
  }
  auto side = stem;
  side += ".json";
  std::ofstream js(side);
  js << sidecar().dump(2) << '\n';
}

InfluenceMatrix InfluenceMatrix::load(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw DataError("cannot open influence matrix " + csv.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  InfluenceMatrix m;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    m.channel_names.push_back(cell);
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError(csv.string() + ": non-numeric influence value '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw DataError(csv.string() + ": ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(csv.string() + ": no rows");
  m.A.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m.A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  auto side = csv;
  side.replace_extension(".json");
  if (std::ifstream js(side); js) {
    const auto j = nlohmann::json::parse(js, nullptr, false);
    if (!j.is_discarded()) {
      m.kind = score_kind_from_string(j.value("score", "contrast"));
      if (j.contains("stats")) {
        const auto mean = j["stats"]["mean"].get<std::vector<double>>();
        const auto sd = j["stats"]["std"].get<std::vector<double>>();
        m.stat_mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        m.stat_std = Eigen::Map<const Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
      }
    }
  }
  m.validate();
  return m;
}

double column_entropy(const Eigen::Ref<const Eigen::VectorXd>& a) {
  const double total = a.sum() + kEntropyEps;
  double h = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double p = a(i) / total;
    h -= p * std::log(p + kEntropyEps);
  }
  return h;
}

std::vector<int> alive_mask(const Eigen::MatrixXd& A, double frac) {
  const Eigen::VectorXd mass = A.colwise().sum().transpose();
  std::vector<int> alive;
  if (mass.size() == 0) return alive;
  const double threshold = frac * mass.maxCoeff();
  for (Eigen::Index j = 0; j < mass.size(); ++j)
    if (mass(j) > threshold) alive.push_back(static_cast<int>(j));
  return alive;
}

double entropy_penalty(const Eigen::MatrixXd& A, double frac) {
  const auto alive = alive_mask(A, frac);
  if (alive.empty()) {
    spdlog::warn("entropy penalty: every influence column is dead; penalty set to 0");
    return 0.0;
  }
  double sum = 0.0;
  for (int j : alive) sum += column_entropy(A.col(j));
  return sum / static_cast<double>(alive.size());
}

std::vector<int> top_k(const Eigen::Ref<const Eigen::VectorXd>& column, int k) {
  std::vector<int> idx(static_cast<std::size_t>(column.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return column(a) > column(b); });
  idx.resize(static_cast<std::size_t>(std::clamp<Eigen::Index>(k, 0, column.size())));
  return idx;
}

double top_k_mass(const Eigen::Ref<const Eigen::VectorXd>& column, int k) {
  const double total = column.sum();
  if (total <= 0.0) return 0.0;
  double top = 0.0;
  for (int i : top_k(column, k)) top += column(i);
  return top / total;
}

std::set<int> recover_support(const Eigen::MatrixXd& A, int j, const SupportOptions& opts, bool* used_fallback) {
  if (used_fallback) *used_fallback = false;
  const Eigen::VectorXd col = A.col(j);
  const double max = col.size() ? col.maxCoeff() : 0.0;
  if (max <= 0.0) {
    spdlog::warn("recover_support: influence column {} is zero; support is empty", j);
    return {};
  }
  const auto order = top_k(col, static_cast<int>(col.size()));
  const int window = std::min<int>(opts.window, static_cast<int>(order.size()));
  double best_ratio = 0.0;
  int cut = -1;
  for (int k = 0; k + 1 < window; ++k) {
    const double hi = col(order[static_cast<std::size_t>(k)]);
    const double lo = col(order[static_cast<std::size_t>(k + 1)]);
    const double ratio = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (ratio > best_ratio) best_ratio = ratio, cut = k + 1;
  }
  std::set<int> out;
  if (cut > 0 && best_ratio > opts.ratio_gap) {
    for (int k = 0; k < cut; ++k) out.insert(order[static_cast<std::size_t>(k)]);
    return out;
  }
  if (used_fallback) *used_fallback = true;
  for (Eigen::Index i = 0; i < col.size(); ++i)
    if (col(i) >= opts.fallback_frac * max) out.insert(static_cast<int>(i));
  return out;
}

SupportEstimate recover_supports(const Eigen::MatrixXd& A, const SupportOptions& opts) {
  SupportEstimate est;
  est.options = opts;
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    bool fb = false;
    est.per_factor.push_back(recover_support(A, static_cast<int>(j), opts, &fb));
    est.used_fallback.push_back(fb);
  }
  return est;
}

Assignment assign_variables(const Eigen::MatrixXd& A) {
  Assignment out;
  const auto n = A.cols();
  out.factor.resize(static_cast<std::size_t>(A.rows()));
  out.concentration.resize(A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < n; ++j)
      if (A(i, j) > A(i, best)) best = j;
    out.factor[static_cast<std::size_t>(i)] = static_cast<int>(best);
    const double total = A.row(i).sum();
    out.concentration(i) = total > 0.0 ? A(i, best) / total : 1.0 / static_cast<double>(n);
  }
  return out;
}

}  // namespace mosaic::influence
