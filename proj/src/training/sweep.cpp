#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mosaic/common.hpp"
#include "mosaic/training.hpp"

namespace mosaic {
namespace {

nlohmann::json parse_scalar(const std::string& v) {
  try {
    return nlohmann::json::parse(v);
  } catch (const nlohmann::json::exception&) {
    return v;
  }
}

double as_number(const std::string& axis, const std::string& v) {
  auto j = parse_scalar(v);
  if (!j.is_number()) throw ConfigError("sweep axis '" + axis + "': value '" + v + "' is not a number");
  return j.get<double>();
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

SweepSpec make_sweep(const std::string& axis, const std::vector<std::string>& values, const std::vector<std::uint64_t>& seeds) {
  if (values.empty()) throw ConfigError("sweep: no values given for axis '" + axis + "'");
  if (seeds.empty()) throw ConfigError("sweep: at least one seed is required");
  SweepSpec spec;
  spec.axis = axis;
  spec.seeds = seeds;
  for (const auto& v : values) {
    SweepPoint p;
    p.label = v;
    if (axis == "alpha") {
      p.overrides["synth.alpha"] = as_number(axis, v);
    } else if (axis == "nd") {
      p.overrides["n_over_d"] = as_number(axis, v);
    } else if (axis == "label_noise") {
      p.overrides["synth.label_flip_rate"] = as_number(axis, v);
    } else if (axis == "zdim") {
      p.overrides["model.latent_dim"] = static_cast<int>(as_number(axis, v));
    } else if (axis == "lambda") {
      p.overrides["train.lambda_max"] = as_number(axis, v);
    } else if (axis == "ablation") {
      if (v == "full") {
      } else if (v == "noSparsity") {
        p.overrides["train.sparsity"] = "none";
      } else if (v == "noTemporal") {
        p.overrides["train.no_temporal"] = true;
      } else if (v == "denseStage2") {
        p.overrides["train.dense_stage2"] = true;
      } else {
        throw ConfigError("sweep: unknown ablation '" + v + "' (full, noSparsity, noTemporal, denseStage2)");
      }
    } else if (axis == "sparsity") {
      // "kind" or "kind:lambda_max"
      const auto colon = v.find(':');
      p.overrides["train.sparsity"] = to_string(sparsity_kind_from_string(v.substr(0, colon)));
      if (colon != std::string::npos) p.overrides["train.lambda_max"] = as_number(axis, v.substr(colon + 1));
    } else {
      p.overrides[axis] = parse_scalar(v);
    }
    spec.points.push_back(std::move(p));
  }
  return spec;
}

nlohmann::json RunRecord::to_json() const {
  return {{"label", label}, {"seed", seed}, {"ok", ok}, {"error", error}, {"metrics", metrics}, {"seconds", seconds}};
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
  RunRecord r;
  r.label = j.at("label").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.ok = j.at("ok").get<bool>();
  r.error = j.value("error", std::string());
  r.metrics = j.value("metrics", nlohmann::json::object());
  r.seconds = j.value("seconds", 0.0);
  return r;
}

const std::vector<std::string>& sweep_metrics() {
  static const std::vector<std::string> names{"mcc", "matched_count", "z_top3", "xz_top3", "regime_accuracy",
                                              "driver_cohens_d", "mean_top3_mass_top3", "cohen_kl_overlap", "rho"};
  return names;
}

nlohmann::json sweep_scalars(const metrics::MetricsReport& r) {
  nlohmann::json j = nlohmann::json::object();
  if (r.mcc) j["mcc"] = *r.mcc;
  if (r.matched_count) j["matched_count"] = *r.matched_count;
  if (r.z_top3) j["z_top3"] = *r.z_top3;
  if (r.xz_top3) j["xz_top3"] = *r.xz_top3;
  if (r.regime_accuracy) j["regime_accuracy"] = *r.regime_accuracy;
  if (r.driver >= 0 && static_cast<std::size_t>(r.driver) < r.cohens_d.size())
    j["driver_cohens_d"] = r.cohens_d[static_cast<std::size_t>(r.driver)];
  if (!r.top3_mass.empty()) j["mean_top3_mass_top3"] = r.mean_top3_mass_top3;
  j["cohen_kl_overlap"] = r.cohen_kl_overlap;
  if (r.rho && r.rho->available) j["rho"] = r.rho->rho;
  return j;
}

std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records) {
  std::vector<AggregateRow> rows;
  std::map<std::string, std::size_t> where;
  std::map<std::string, std::map<std::string, std::vector<double>>> values;
  for (const auto& r : records) {
    auto it = where.find(r.label);
    if (it == where.end()) {
      it = where.emplace(r.label, rows.size()).first;
      rows.emplace_back();
      rows.back().label = r.label;
    }
    auto& row = rows[it->second];
    ++row.runs;
    if (!r.ok) {
      ++row.failures;
      continue;
    }
    for (const auto& name : sweep_metrics())
      if (r.metrics.contains(name) && r.metrics.at(name).is_number()) values[r.label][name].push_back(r.metrics.at(name).get<double>());
  }
  for (auto& row : rows) {
    for (auto& [name, v] : values[row.label]) {
      // Sorting makes the sums independent of record order.
      std::sort(v.begin(), v.end());
      double sum = 0.0;
      for (double x : v) sum += x;
      const double mean = sum / static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      row.stats[name] = {mean, std::sqrt(ss / static_cast<double>(v.size()))};
    }
  }
  return rows;
}

void write_sweep(const SweepSpec& spec, const std::vector<RunRecord>& records, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& names = sweep_metrics();

  std::vector<std::string> header{spec.axis, "seed", "ok", "seconds"};
  header.insert(header.end(), names.begin(), names.end());
  header.push_back("error");
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : records) {
    std::vector<std::string> row{r.label, std::to_string(r.seed), r.ok ? "1" : "0", fmt(r.seconds)};
    for (const auto& name : names)
      row.push_back(r.metrics.contains(name) && r.metrics.at(name).is_number() ? fmt(r.metrics.at(name).get<double>()) : "");
    row.push_back(r.error);
    rows.push_back(std::move(row));
  }
  metrics::write_csv(dir / "sweep.csv", header, rows);

  const auto agg = aggregate(records);
  std::vector<std::string> sheader{spec.axis, "runs", "failures"};
  for (const auto& name : names) {
    sheader.push_back(name + "_mean");
    sheader.push_back(name + "_std");
  }
  std::vector<std::vector<std::string>> srows;
  nlohmann::json summary = {{"axis", spec.axis}, {"seeds", spec.seeds}, {"rows", nlohmann::json::array()}};
  for (const auto& a : agg) {
    std::vector<std::string> row{a.label, std::to_string(a.runs), std::to_string(a.failures)};
    nlohmann::json js = {{"label", a.label}, {"runs", a.runs}, {"failures", a.failures}, {"metrics", nlohmann::json::object()}};
    for (const auto& name : names) {
      auto it = a.stats.find(name);
      if (it == a.stats.end()) {
        row.insert(row.end(), {"", ""});
        continue;
      }
      row.push_back(fmt(it->second.first));
      row.push_back(fmt(it->second.second));
      js["metrics"][name] = {{"mean", it->second.first}, {"std", it->second.second}};
    }
    srows.push_back(std::move(row));
    summary["rows"].push_back(std::move(js));
  }
  metrics::write_csv(dir / "summary.csv", sheader, srows);
  std::ofstream out(dir / "summary.json");
  if (!out) throw RuntimeFailure("cannot write " + (dir / "summary.json").string());
  out << summary.dump(2) << '\n';
}

}  // namespace mosaic
