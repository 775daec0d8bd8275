// End-to-end acceptance harness. Trains every run the criteria need (reusing
// finished runs whose configuration is unchanged), then prints one PASS/FAIL
// line per criterion. Exit status is 0 only when all criteria pass.
//
// usage: acceptance [--work DIR] [--fresh] [--only N,M,...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "lab/runs.hpp"
#include "mosaic/common.hpp"
#include "mosaic/metrics.hpp"
#include "mosaic/model.hpp"
#include "mosaic/oracle.hpp"
#include "mosaic/synthbench.hpp"
#include "mosaic/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mosaic;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int prec = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

struct Verdict {
  int id = 0;
  bool pass = false;
  std::string detail;
};

struct Run {
  std::string name;
  fs::path dir;
  metrics::MetricsReport report;
  double seconds = 0.0;

  double xz() const { return report.xz_top3.value_or(0.0); }
  double mcc() const { return report.mcc.value_or(0.0); }
  double rho() const { return report.rho ? report.rho->rho : std::nan(""); }
};

class Lab {
 public:
  explicit Lab(fs::path work) : work_(std::move(work)) {}

  /// Trains `cfg` into runs/<name>, or reloads it when an identical finished run exists.
  const Run& run(const std::string& name, const RunConfig& cfg, const std::optional<fs::path>& resume = std::nullopt) {
    if (auto it = cache_.find(name); it != cache_.end()) return it->second;
    const fs::path dir = work_ / "runs" / name;
    const json key = {{"config", cfg.to_json()}, {"resume", resume ? json(resume->string()) : json(nullptr)}};
    Run r;
    r.name = name;
    r.dir = dir;
    if (reusable(dir, key)) {
      r.report = metrics::MetricsReport::from_json(read(dir / "metrics.json"));
      r.seconds = read(dir / lab::RunFiles::record).value("seconds", 0.0);
      std::cout << "[run] " << name << ": reused (" << num(r.seconds, 1) << " s)\n" << std::flush;
    } else {
      fs::remove_all(dir);
      fs::create_directories(dir);
      std::cout << "[run] " << name << ": training" << (resume ? " Stage 2 from " + resume->parent_path().filename().string() : "")
                << "\n"
                << std::flush;
      lab::RunOptions opts;
      opts.resume = resume;
      opts.verbose = false;
      opts.label = name;
      auto out = lab::execute_run(cfg, dir, opts);
      if (!out.report) throw RuntimeFailure("run " + name + " produced no metrics");
      r.report = *out.report;
      r.seconds = out.record.seconds;
      std::ofstream(dir / "acceptance_key.json") << key.dump(2) << "\n";
      std::cout << "[run] " << name << ": done in " << num(r.seconds, 1) << " s, MCC " << num(r.mcc()) << ", X_Z "
                << num(r.xz()) << "\n"
                << std::flush;
    }
    return cache_.emplace(name, std::move(r)).first->second;
  }

 private:
  static json read(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot read " + p.string());
    return json::parse(in);
  }

  static bool reusable(const fs::path& dir, const json& key) {
    const auto k = dir / "acceptance_key.json", rec = dir / lab::RunFiles::record, met = dir / "metrics.json";
    if (!fs::exists(k) || !fs::exists(rec) || !fs::exists(met)) return false;
    try {
      return read(k) == key && read(rec).value("ok", false);
    } catch (const std::exception&) {
      return false;
    }
  }

  fs::path work_;
  std::map<std::string, Run> cache_;
};

RunConfig synthetic(double nd = 1000.0, std::uint64_t seed = 0) {
  auto c = RunConfig::preset("synthetic");
  c.apply({{"n_over_d", nd}, {"train.stage1_epochs", 40}, {"train.stage2_epochs", 40}, {"train.seed", seed}});
  return c;
}

RunConfig with(RunConfig c, const json& overrides) {
  c.apply(overrides);
  return c;
}

fs::path stage1_of(const Run& r) { return r.dir / lab::RunFiles::stage1; }

int inversions(const std::vector<double>& v) {
  int n = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] < v[i - 1]) ++n;
  return n;
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
  return "[" + s + "]";
}

// Criteria.

Verdict criterion1(Lab& lab) {
  const auto& a = lab.run("base-s0", synthetic(1000, 0));
  const auto& b = lab.run("base-s1", synthetic(1000, 1));
  const double mcc = 0.5 * (a.mcc() + b.mcc()), xz = 0.5 * (a.xz() + b.xz());
  const double secs = a.seconds + b.seconds;
  const bool pass = mcc >= 0.65 && xz >= 0.50 && secs <= 7200.0;
  return {1, pass,
          "MCC " + num(a.mcc()) + "/" + num(b.mcc()) + " mean " + num(mcc) + " (>= 0.65); X_Z " + num(a.xz()) + "/" +
              num(b.xz()) + " mean " + num(xz) + " (>= 0.50); " + num(secs, 0) + " s (<= 7200)"};
}

Verdict criterion2(Lab& lab) {
  std::vector<double> xz, mcc;
  for (double nd : {50.0, 500.0, 5000.0}) {
    const auto& r = lab.run("nd" + std::to_string(static_cast<int>(nd)), synthetic(nd, 0));
    xz.push_back(r.xz());
    mcc.push_back(r.mcc());
  }
  const bool pass = inversions(xz) == 0 && inversions(mcc) <= 1;
  return {2, pass,
          "N/D 50,500,5000: X_Z " + list(xz) + " (0 inversions allowed), MCC " + list(mcc) + " (1 inversion allowed)"};
}

bool same_tensors(const MosaicModel& a, const MosaicModel& b, std::string& why) {
  const auto pa = a->named_parameters(true), pb = b->named_parameters(true);
  const auto ba = a->named_buffers(true), bb = b->named_buffers(true);
  if (pa.size() != pb.size() || ba.size() != bb.size()) {
    why = "tensor counts differ";
    return false;
  }
  for (const auto& item : pa) {
    const auto* other = pb.find(item.key());
    if (!other || !torch::equal(item.value(), *other)) {
      why = "parameter " + item.key() + " differs";
      return false;
    }
  }
  for (const auto& item : ba) {
    const auto* other = bb.find(item.key());
    if (!other || !torch::equal(item.value(), *other)) {
      why = "buffer " + item.key() + " differs";
      return false;
    }
  }
  if (a->stats.to_json() != b->stats.to_json()) {
    why = "latent statistics differ";
    return false;
  }
  return true;
}

Verdict criterion3(Lab& lab) {
  const auto& full = lab.run("base-s0", synthetic(1000, 0));
  const auto& dense = lab.run("ablate-dense", with(synthetic(1000, 0), {{"train.dense_stage2", true}}));
  const auto& nosp = lab.run("ablate-nosparsity", with(synthetic(1000, 0), {{"train.sparsity", "none"}}));
  const bool a = dense.report.xz_top3.has_value() && *dense.report.xz_top3 == 0.0;
  const bool b = full.xz() - nosp.xz() >= 0.2;
  const auto ref = load_checkpoint(stage1_of(full));
  std::string why = "identical";
  bool c = true;
  for (const Run* r : {&dense, &nosp}) {
    std::string w;
    if (!same_tensors(ref, load_checkpoint(stage1_of(*r)), w)) {
      c = false;
      why = r->name + ": " + w;
    }
  }
  return {3, a && b && c,
          "(a) dense X_Z " + num(dense.xz()) + " (== 0) " + (a ? "ok" : "no") + "; (b) full " + num(full.xz()) +
              " - noSparsity " + num(nosp.xz()) + " = " + num(full.xz() - nosp.xz()) + " (>= 0.2) " + (b ? "ok" : "no") +
              "; (c) Stage-1 tensors " + why};
}

Verdict criterion4(Lab& lab) {
  std::vector<double> xz, mcc;
  for (double alpha : {0.0, 1.0, 2.0}) {
    const auto& r = alpha == 0.0 ? lab.run("base-s0", synthetic(1000, 0))
                                 : lab.run("alpha" + num(alpha, 1), with(synthetic(1000, 0), {{"synth.alpha", alpha}}));
    xz.push_back(r.xz());
    mcc.push_back(r.mcc());
  }
  const double drop = mcc.front() - mcc.back();
  const bool pass = inversions({xz.rbegin(), xz.rend()}) == 0 && drop <= 0.1;
  return {4, pass, "alpha 0,1,2: X_Z " + list(xz) + " (non-increasing), MCC " + list(mcc) + ", drop " + num(drop) + " (<= 0.1)"};
}

Verdict criterion5() {
  // Equivalence on 4 x 250 random inputs.
  ModelConfig mc;
  mc.latent_dim = 8;
  mc.transition_hidden = 128;
  mc.lag = 2;
  mc.validate();
  torch::manual_seed(11);
  TransitionPrior prior(mc);
  double max_diff = 0.0;
  for (int rep = 0; rep < 4; ++rep) {
    const int B = 250;
    auto hist = torch::randn({B, mc.lag, mc.latent_dim});
    auto cur = torch::randn({B, mc.latent_dim});
    auto regime = torch::randint(0, 2, {B}, torch::kInt64);
    const auto v1 = prior->logdet_v1(hist, cur, regime);
    const auto v2 = prior->logdet_v2(hist, cur, regime);
    max_diff = std::max(max_diff, (v1 - v2).abs().max().item<double>());
  }
  const auto z8 = benchmark_transition({"Z=8", 8, 256, 3, 128}, 5, 1, 0);
  const auto z64 = benchmark_transition({"Z=64", 64, 256, 3, 128}, 3, 1, 0);
  const double growth = z64.v1_ms / z8.v1_ms;
  const bool pass = max_diff <= 1e-3 && z8.speedup >= 10.0 && growth >= 4.0;
  std::ostringstream os;
  os << "max |v1 - v2| " << std::scientific << std::setprecision(2) << max_diff << " over 1000 inputs (<= 1e-3); speedup "
     << std::fixed << std::setprecision(1) << z8.speedup << "x (>= 10); v1 Z=64/Z=8 " << growth << "x (>= 4)";
  return {5, pass, os.str()};
}

Verdict criterion6(Lab& lab) {
  const auto& ent = lab.run("base-s0", synthetic(1000, 0));
  const auto& gl = lab.run("grouplasso-1000",
                           with(synthetic(1000, 0), {{"train.sparsity", "group_lasso"}, {"train.lambda_max", 1000.0}}),
                           stage1_of(ent));
  const double gap = ent.xz() - gl.xz();
  const double mass = std::abs(ent.report.mean_top3_mass_top3 - gl.report.mean_top3_mass_top3);
  return {6, gap >= 0.2 && mass <= 0.1,
          "X_Z entropy " + num(ent.xz()) + " vs group lasso " + num(gl.xz()) + ", gap " + num(gap) + " (>= 0.2); top-3 mass " +
              num(ent.report.mean_top3_mass_top3) + " vs " + num(gl.report.mean_top3_mass_top3) + ", diff " + num(mass) +
              " (<= 0.1)"};
}

Verdict criterion7(Lab& lab) {
  const auto& clean = lab.run("base-s0", synthetic(1000, 0));
  const auto& noisy = lab.run("flip0.10", with(synthetic(1000, 0), {{"synth.label_flip_rate", 0.10}}));
  const double drop = clean.xz() - noisy.xz();
  return {7, drop <= 0.15, "X_Z p=0 " + num(clean.xz()) + ", p=0.10 " + num(noisy.xz()) + ", drop " + num(drop) + " (<= 0.15)"};
}

Verdict criterion8(Lab& lab) {
  const auto M = synth::tokamak_mixing(synth::TokamakConfig{});
  std::set<int> group;  // channels loaded by the MHD or Density source
  for (int s : {0, 1})
    for (int ch = 0; ch < synth::kTokamakChannels; ++ch)
      if (M(s, ch) != 0.0) group.insert(ch);
  int hits = 0;
  std::vector<double> acc;
  std::string chans;
  for (std::uint64_t seed : {0, 1, 2}) {
    auto cfg = RunConfig::preset("tokamak");
    cfg.apply({{"train.seed", seed}});
    const auto& r = lab.run("tokamak-s" + std::to_string(seed), cfg);
    const int ch = r.report.driver_channel.value_or(-1);
    if (group.count(ch)) ++hits;
    chans += (chans.empty() ? "" : ",") + (ch >= 0 ? synth::tokamak_channel_names()[static_cast<std::size_t>(ch)] : "none");
    acc.push_back(r.report.regime_accuracy.value_or(0.0));
  }
  const double mean_acc = std::accumulate(acc.begin(), acc.end(), 0.0) / 3.0;
  return {8, hits >= 2 && mean_acc >= 0.85,
          "driver channels " + chans + ": " + std::to_string(hits) + "/3 in MHD+Density (>= 2); regime accuracy " + list(acc) +
              " mean " + num(mean_acc) + " (>= 0.85)"};
}

Verdict criterion9() {
  const auto t0 = Clock::now();
  const auto report = oracle::run_battery();
  const double secs = seconds_since(t0);
  std::string failed;
  int n = 0;
  for (const auto& c : report.at("checks")) {
    ++n;
    if (!c.at("pass").get<bool>()) failed += (failed.empty() ? "" : ",") + c.at("name").get<std::string>();
  }
  const bool pass = report.at("pass").get<bool>() && secs < 300.0;
  return {9, pass,
          std::to_string(n) + " checks, " + (failed.empty() ? "all pass" : "failed: " + failed) + "; " + num(secs, 1) +
              " s (< 300)"};
}

Verdict criterion10(Lab& lab) {
  const auto& add = lab.run("base-s0", synthetic(1000, 0));
  const auto& inter = lab.run("alpha1.0", with(synthetic(1000, 0), {{"synth.alpha", 1.0}}));
  const double r0 = add.rho(), r1 = inter.rho();
  const bool avail = add.report.rho && add.report.rho->available && inter.report.rho && inter.report.rho->available;
  return {10, avail && r0 <= 0.06 && r1 > r0,
          "rho alpha=0 " + num(r0) + " (<= 0.06), alpha=1 " + num(r1) + " (> alpha=0)" + (avail ? "" : "; estimate unavailable")};
}

// Metric unit suite.

double assignment_cost(const Eigen::MatrixXd& C, const std::vector<int>& cols) {
  double s = 0.0;
  for (std::size_t r = 0; r < cols.size(); ++r) s += C(static_cast<Eigen::Index>(r), cols[r]);
  return s;
}

double exhaustive_min(const Eigen::MatrixXd& C) {
  std::vector<int> perm(static_cast<std::size_t>(C.cols()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    best = std::min(best, assignment_cost(C, {perm.begin(), perm.begin() + C.rows()}));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Verdict criterion11() {
  std::vector<std::string> failures;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N01(0.0, 1.0);

  // Hungarian vs exhaustive.
  double worst = 0.0;
  for (int trial = 0; trial < 300; ++trial) {
    const int rows = 1 + static_cast<int>(rng() % 6);
    const int cols = rows + static_cast<int>(rng() % (7 - rows));
    Eigen::MatrixXd C(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) C(i, j) = trial % 3 == 0 ? std::floor(4 * U(rng)) : U(rng);
    const auto a = metrics::hungarian(C);
    std::set<int> distinct(a.begin(), a.end());
    check(static_cast<int>(distinct.size()) == rows, "hungarian assignment not injective");
    worst = std::max(worst, std::abs(assignment_cost(C, a) - exhaustive_min(C)));
  }
  check(worst <= 1e-12, "hungarian cost gap " + num(worst, 15));

  // Cohen's d closed forms.
  {
    Eigen::VectorXd z(4);
    z << 0, 2, 3, 5;
    const metrics::Labels l{0, 0, 1, 1};
    check(std::abs(metrics::cohens_d(z, l) - 3.0) <= 1e-12, "cohen d {0,2} vs {3,5} != 3");
    Eigen::VectorXd z2(6);
    z2 << 1, 1, 1, 1, 3, 5;  // means 1 and 3, population variances 0 and 8/3
    const metrics::Labels l2{0, 0, 0, 1, 1, 1};
    check(std::abs(metrics::cohens_d(z2, l2) - 2.0 / std::sqrt(4.0 / 3.0)) <= 1e-12, "cohen d unequal variances");
    const Eigen::VectorXd affine = (-2.5 * z2.array() + 7.0).matrix();
    check(std::abs(metrics::cohens_d(affine, l2) - metrics::cohens_d(z2, l2)) <= 1e-12, "cohen d not affine invariant");
  }

  // Histogram KL vs Gaussian closed form.
  struct GaussCase {
    double m1, s1;
  };
  for (const auto& g : {GaussCase{1.0, 1.0}, GaussCase{0.5, 1.5}, GaussCase{2.0, 1.0}}) {
    const int n = 200000;
    Eigen::VectorXd z(2 * n);
    metrics::Labels l(2 * n);
    for (int i = 0; i < n; ++i) {
      z(i) = N01(rng);
      l[static_cast<std::size_t>(i)] = 0;
      z(n + i) = g.m1 + g.s1 * N01(rng);
      l[static_cast<std::size_t>(n + i)] = 1;
    }
    const double exact = std::log(g.s1) + (1.0 + g.m1 * g.m1) / (2.0 * g.s1 * g.s1) - 0.5;
    const double est = metrics::kl_histogram(z, l);
    check(std::abs(est - exact) <= 0.15 * exact,
          "KL N(0,1)||N(" + num(g.m1, 1) + "," + num(g.s1, 1) + ") " + num(est) + " vs " + num(exact));
  }

  // Gate monotonicity on random influence matrices against the synthetic support.
  {
    const auto support = synth::SupportMap::double_well();
    const int W = 400, nt = support.n_factors(), nh = 12;
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::MatrixXd Zt(W, nt), Zl(W, nh);
      for (int i = 0; i < W; ++i) {
        for (int j = 0; j < nt; ++j) Zt(i, j) = N01(rng);
        for (int k = 0; k < nh; ++k) Zl(i, k) = k < nt ? Zt(i, (k + trial) % nt) + 0.5 * N01(rng) : N01(rng);
      }
      const auto match = metrics::hungarian_mcc(Zt, Zl);
      Eigen::MatrixXd A(support.D, nh);
      for (int i = 0; i < support.D; ++i)
        for (int k = 0; k < nh; ++k) A(i, k) = std::pow(U(rng), 1.0 + 8.0 * U(rng));
      const std::vector<int> top{0, 1, 2};
      std::vector<double> gates;
      for (double g = 0.1; g <= 0.95; g += 0.05) gates.push_back(g);
      const auto rows = metrics::gate_sweep(A, match, support, top, gates);
      std::vector<double> xs;
      for (const auto& r : rows)
        if (r.gate != "none") xs.push_back(r.xz);
      bool mono = true;
      for (std::size_t i = 1; i < xs.size(); ++i) mono = mono && xs[i] <= xs[i - 1] + 1e-15;
      const double ungated = rows.back().xz;
      check(mono && ungated + 1e-15 >= xs.front(), "gate sweep not monotone (trial " + std::to_string(trial) + ")");
      if (!mono) break;
    }
  }

  // Top-3 mass hand cases.
  {
    Eigen::MatrixXd A(4, 4);
    A << 1, 5, 4, 0, 1, 0, 3, 2, 1, 0, 2, 0, 1, 0, 1, 0;
    const auto m = metrics::top3_masses(A);
    check(std::abs(m(0) - 0.75) <= 1e-12, "top-3 mass uniform column != 0.75");
    check(std::abs(m(1) - 1.0) <= 1e-12, "top-3 mass one-hot column != 1");
    check(std::abs(m(2) - 0.9) <= 1e-12, "top-3 mass {4,3,2,1} != 0.9");
    check(std::abs(m(3) - 1.0) <= 1e-12, "top-3 mass single nonzero != 1");
  }

  std::string detail = "hungarian (300 cases, gap " + num(worst, 15) + "), Cohen's d, KL, gate, top-3 mass: ";
  if (failures.empty()) return {11, true, detail + "all within tolerance"};
  for (std::size_t i = 0; i < failures.size(); ++i) detail += (i ? "; " : "") + failures[i];
  return {11, false, detail};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = MOSAIC_ACCEPTANCE_WORK;
  bool fresh = false;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--fresh") {
      fresh = true;
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: acceptance [--work DIR] [--fresh] [--only N,M,...]\n";
      return 2;
    }
  }
  if (fresh) {
    fs::remove_all(work / "runs");
    fs::remove_all(work / "cache");
  }
  fs::create_directories(work);
  if (!std::getenv("MOSAIC_LAB_CACHE")) setenv("MOSAIC_LAB_CACHE", (work / "cache").c_str(), 1);

  Lab lab(work);
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria = {
      {11, [] { return criterion11(); }},     {9, [] { return criterion9(); }},       {5, [] { return criterion5(); }},
      {1, [&] { return criterion1(lab); }},   {3, [&] { return criterion3(lab); }},   {6, [&] { return criterion6(lab); }},
      {7, [&] { return criterion7(lab); }},   {4, [&] { return criterion4(lab); }},   {10, [&] { return criterion10(lab); }},
      {2, [&] { return criterion2(lab); }},   {8, [&] { return criterion8(lab); }},
  };
  const auto t0 = Clock::now();
  std::map<int, Verdict> verdicts;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    const auto tc = Clock::now();
    try {
      verdicts[id] = fn();
    } catch (const std::exception& e) {
      verdicts[id] = {id, false, std::string("error: ") + e.what()};
    }
    const auto& v = verdicts[id];
    std::cout << "[criterion " << id << "] " << (v.pass ? "PASS" : "FAIL") << " after " << num(seconds_since(tc), 1) << " s\n"
              << std::flush;
  }

  json summary = json::array();
  int failed = 0;
  std::cout << "\n";
  for (const auto& [id, v] : verdicts) {
    std::cout << "criterion " << std::setw(2) << id << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << "\n";
    summary.push_back({{"criterion", id}, {"pass", v.pass}, {"detail", v.detail}});
    if (!v.pass) ++failed;
  }
  std::cout << "total " << num(seconds_since(t0), 0) << " s; " << verdicts.size() - failed << "/" << verdicts.size()
            << " criteria pass\n";
  std::ofstream(work / "acceptance.json") << summary.dump(2) << "\n";
  return failed == 0 ? 0 : 1;
}
