#include "commands.hpp"

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "manifest.hpp"
#include "mosaic/common.hpp"
#include "mosaic/oracle.hpp"
#include "mosaic/training.hpp"
#include "plot.hpp"
#include "runs.hpp"

extern char** environ;

namespace mosaic::lab {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + " is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << text;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string absolute_or_null(const std::optional<std::string>& p) { return p ? fs::absolute(*p).lexically_normal().string() : ""; }

json path_or_null(const std::optional<std::string>& p) { return p ? json(absolute_or_null(p)) : json(nullptr); }

std::optional<fs::path> opt_path(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return fs::path(j.at(key).get<std::string>());
}

json inputs_of(std::initializer_list<std::pair<const char*, std::optional<fs::path>>> items) {
  json j = json::object();
  for (const auto& [name, p] : items)
    if (p) j[name] = p->string();
  return j;
}

// Claims the output directory; returns false when an identical completed run is already there.
bool begin(const CommandContext& ctx, RunManifest& m) {
  if (ctx.out.empty()) throw ConfigError(m.command + ": --out is required");
  if (claim(ctx.out, m, ctx.force) == Claim::UpToDate) {
    std::cout << m.command << ": " << ctx.out.string() << " is up to date (use --force to re-run)\n";
    return false;
  }
  return true;
}

template <typename Fn>
int guarded(const CommandContext& ctx, RunManifest& m, Fn&& body) {
  try {
    return body();
  } catch (...) {
    m.status = "failed";
    m.finished = utc_timestamp();
    m.save(ctx.out);
    throw;
  }
}

// generate ------------------------------------------------------------------

int cmd_generate(const json& o, const CommandContext& ctx) {
  const auto cfg = RunConfig::from_json(o.at("config"));
  RunManifest m;
  m.command = "generate";
  m.options = o;
  m.seeds = {cfg.dataset == "synthetic" ? cfg.synth.seed : cfg.tokamak.seed};
  if (!begin(ctx, m)) return kOk;
  return guarded(ctx, m, [&] {
    const auto ds = make_dataset(cfg);
    synth::save_dataset(ds, ctx.out);
    std::vector<std::string> outs{"meta.json"};
    for (const auto& e : fs::directory_iterator(ctx.out / "data")) outs.push_back("data/" + e.path().filename().string());
    complete(ctx.out, m, outs);
    const auto counts = ds.class_counts();
    std::cout << "generated " << ds.windows << " windows x " << ds.steps << " frames x " << ds.channels << " channels (classes "
              << counts[0] << "/" << counts[1] << ") -> " << ctx.out.string() << "\n";
    return kOk;
  });
}

// train ---------------------------------------------------------------------

int cmd_train(const json& o, const CommandContext& ctx) {
  const auto cfg = RunConfig::from_json(o.at("config"));
  RunManifest m;
  m.command = "train";
  m.options = o;
  m.inputs = inputs_of({{"data", opt_path(o, "data")}, {"resume", opt_path(o, "resume")}});
  m.seeds = {cfg.train.seed};
  if (!begin(ctx, m)) return kOk;
  return guarded(ctx, m, [&] {
    RunOptions ro;
    ro.data_dir = opt_path(o, "data");
    ro.resume = opt_path(o, "resume");
    const auto res = execute_run(cfg, ctx.out, ro);
    complete(ctx.out, m, {RunFiles::model, RunFiles::stage1, RunFiles::log, RunFiles::config, RunFiles::record, "metrics.json", "metrics.csv"});
    const auto& r = *res.report;
    std::cout << metrics::aligned_table(metrics::MetricsReport::csv_header(), {r.csv_row()});
    return kOk;
  });
}

// evaluate ------------------------------------------------------------------

std::string report_text(const metrics::MetricsReport& r, const std::vector<std::string>& channels) {
  std::ostringstream os;
  auto opt = [](const auto& v) { return v ? fmt(static_cast<double>(*v)) : std::string("-"); };
  std::vector<std::vector<std::string>> rows{{"MCC", opt(r.mcc)},
                                             {"matched factors", r.matched_count ? std::to_string(*r.matched_count) : "-"},
                                             {"Z@top3", opt(r.z_top3)},
                                             {"X_Z@top3 (gate " + fmt(r.gate, 2) + ")", opt(r.xz_top3)},
                                             {"regime accuracy", opt(r.regime_accuracy)},
                                             {"driver latent", r.driver >= 0 ? "z" + std::to_string(r.driver) : "-"},
                                             {"driver channel", r.driver_channel && static_cast<std::size_t>(*r.driver_channel) < channels.size()
                                                                    ? channels[static_cast<std::size_t>(*r.driver_channel)]
                                                                    : "-"},
                                             {"mean top-3 mass (top-3 latents)", fmt(r.mean_top3_mass_top3)},
                                             {"Cohen/KL top-3 overlap", fmt(r.cohen_kl_overlap)},
                                             {"interaction ratio estimate", r.rho && r.rho->available ? fmt(r.rho->rho) : "-"}};
  for (const auto& g : r.gate_sweep) rows.push_back({"X_Z@top3 gate " + g.gate, fmt(g.xz)});
  os << metrics::aligned_table({"metric", "value"}, rows) << "\n";
  std::vector<std::vector<std::string>> lat;
  for (std::size_t k = 0; k < r.cohens_d.size(); ++k) {
    lat.push_back({"z" + std::to_string(k), fmt(r.cohens_d[k]), k < r.kl.size() ? fmt(r.kl[k]) : "-",
                   k < r.top3_mass.size() ? fmt(r.top3_mass[k]) : "-",
                   k < r.matched_factor.size() && r.matched_factor[k] >= 0 ? "f" + std::to_string(r.matched_factor[k]) : "-"});
  }
  os << metrics::aligned_table({"latent", "cohens_d", "kl", "top3_mass", "matched"}, lat);
  return os.str();
}

void write_influence_csv(const fs::path& path, const Eigen::MatrixXd& A, const std::vector<std::string>& channels) {
  std::vector<std::string> header{"channel"};
  for (Eigen::Index j = 0; j < A.cols(); ++j) header.push_back("z" + std::to_string(j));
  std::vector<std::vector<std::string>> rows;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    std::vector<std::string> row{static_cast<std::size_t>(i) < channels.size() ? channels[static_cast<std::size_t>(i)] : "x" + std::to_string(i)};
    for (Eigen::Index j = 0; j < A.cols(); ++j) row.push_back(fmt(A(i, j), 10));
    rows.push_back(std::move(row));
  }
  metrics::write_csv(path, header, rows);
}

int cmd_evaluate(const json& o, const CommandContext& ctx) {
  const auto ckpt = opt_path(o, "checkpoint");
  if (!ckpt) throw ConfigError("evaluate: --checkpoint is required");
  RunManifest m;
  m.command = "evaluate";
  m.options = o;
  m.inputs = inputs_of({{"data", opt_path(o, "data")}, {"checkpoint", ckpt}});
  m.seeds = {o.value("seed", std::uint64_t{0})};
  if (!begin(ctx, m)) return kOk;
  return guarded(ctx, m, [&] {
    json prov;
    auto model = load_checkpoint(*ckpt, &prov);
    synth::TimeSeriesDataset ds;
    if (auto d = opt_path(o, "data")) {
      ds = synth::load_dataset(*d);
    } else {
      if (!prov.contains("config")) throw ConfigError("evaluate: the checkpoint records no run config; pass --data");
      ds = obtain_dataset(RunConfig::from_json(prov.at("config")));
    }
    EvalOptions eo;
    if (o.contains("score") && !o.at("score").is_null()) eo.score = influence::score_kind_from_string(o.at("score").get<std::string>());
    eo.gate = o.value("gate", 0.5);
    eo.rho = o.value("rho", true);
    eo.seed = o.value("seed", std::uint64_t{0});
    const auto report = evaluate(*model, ds, eo);
    report.save(ctx.out);
    std::vector<std::string> outs{"metrics.json", "metrics.csv", "report.txt"};
    if (model->stage >= 2) {
      write_influence_csv(ctx.out / "influence.csv", influence_of(*model, ds, eo.score).A, ds.channel_names);
      outs.push_back("influence.csv");
    }
    const auto text = report_text(report, ds.channel_names);
    write_text(ctx.out / "report.txt", text);
    complete(ctx.out, m, outs);
    std::cout << text;
    return kOk;
  });
}

// sweep ---------------------------------------------------------------------

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ? c : '_');
  return out;
}

struct SweepJob {
  std::string label;
  std::uint64_t seed;
  RunConfig cfg;
  fs::path dir;
};

int run_workers(const std::vector<SweepJob*>& jobs, const CommandContext& ctx) {
  const auto self = ctx.self.empty() ? fs::read_symlink("/proc/self/exe") : ctx.self;
  std::map<pid_t, SweepJob*> running;
  std::size_t next = 0, done = 0;
  int failures = 0;
  auto launch = [&](SweepJob* job) {
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    const auto logp = (job->dir / "worker.log").string();
    posix_spawn_file_actions_addopen(&fa, 1, logp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_adddup2(&fa, 1, 2);
    const std::string exe = self.string(), dir = job->dir.string();
    std::vector<char*> argv{const_cast<char*>(exe.c_str()), const_cast<char*>("worker"), const_cast<char*>(dir.c_str()), nullptr};
    pid_t pid = 0;
    const int rc = posix_spawn(&pid, exe.c_str(), &fa, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&fa);
    if (rc != 0) throw RuntimeFailure("sweep: cannot spawn worker (" + std::string(std::strerror(rc)) + ")");
    running[pid] = job;
  };
  const int limit = std::max(1, ctx.jobs);
  while (done < jobs.size()) {
    while (next < jobs.size() && static_cast<int>(running.size()) < limit) launch(jobs[next++]);
    int status = 0;
    const pid_t pid = ::waitpid(-1, &status, 0);
    if (pid < 0) throw RuntimeFailure("sweep: waitpid failed");
    auto it = running.find(pid);
    if (it == running.end()) continue;
    ++done;
    const bool ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
    if (!ok) ++failures;
    std::cout << "[" << done << "/" << jobs.size() << "] " << it->second->label << " seed " << it->second->seed << ": "
              << (ok ? "done" : "FAILED (see " + (it->second->dir / "worker.log").string() + ")") << std::endl;
    running.erase(it);
  }
  return failures;
}

int cmd_sweep(const json& o, const CommandContext& ctx) {
  const auto base = RunConfig::from_json(o.at("config"));
  const auto spec = make_sweep(o.at("axis").get<std::string>(), o.at("values").get<std::vector<std::string>>(),
                               o.at("seeds").get<std::vector<std::uint64_t>>());
  RunManifest m;
  m.command = "sweep";
  m.options = o;
  m.seeds = spec.seeds;
  if (!begin(ctx, m)) return kOk;
  return guarded(ctx, m, [&] {
    std::vector<SweepJob> jobs;
    for (const auto& p : spec.points)
      for (auto seed : spec.seeds) {
        auto cfg = base;
        cfg.apply(p.overrides);
        cfg.train.seed = seed;
        cfg.validate();
        jobs.push_back({p.label, seed, cfg, ctx.out / "runs" / (safe_name(p.label) + "-s" + std::to_string(seed))});
      }
    std::vector<SweepJob*> pending;
    for (auto& j : jobs) {
      fs::create_directories(j.dir);
      const auto rec_path = j.dir / RunFiles::record;
      if (fs::exists(rec_path) && fs::exists(j.dir / RunFiles::config) && read_json(j.dir / RunFiles::config) == j.cfg.to_json() &&
          read_json(rec_path).value("ok", false)) {
        std::cout << "reusing " << j.dir.string() << "\n";
        continue;
      }
      fs::remove(rec_path);
      write_text(j.dir / "run.json", json{{"label", j.label}, {"seed", j.seed}, {"config", j.cfg.to_json()}}.dump(2) + "\n");
      pending.push_back(&j);
    }
    run_workers(pending, ctx);

    std::vector<RunRecord> records;
    for (const auto& j : jobs) {
      const auto rec_path = j.dir / RunFiles::record;
      if (fs::exists(rec_path)) {
        records.push_back(RunRecord::from_json(read_json(rec_path)));
      } else {
        RunRecord r;
        r.label = j.label;
        r.seed = j.seed;
        r.error = "worker produced no record; see " + (j.dir / "worker.log").string();
        records.push_back(r);
      }
    }
    write_sweep(spec, records, ctx.out);

    std::vector<std::string> header{spec.axis, "runs", "failures"};
    const std::vector<std::string> shown{"mcc", "xz_top3", "z_top3", "regime_accuracy", "mean_top3_mass_top3", "rho"};
    header.insert(header.end(), shown.begin(), shown.end());
    std::vector<std::vector<std::string>> rows;
    for (const auto& a : aggregate(records)) {
      std::vector<std::string> row{a.label, std::to_string(a.runs), std::to_string(a.failures)};
      for (const auto& name : shown) {
        auto it = a.stats.find(name);
        row.push_back(it == a.stats.end() ? "-" : fmt(it->second.first, 3) + " +/- " + fmt(it->second.second, 3));
      }
      rows.push_back(std::move(row));
    }
    const auto table = metrics::aligned_table(header, rows);
    write_text(ctx.out / "table.txt", table);
    std::vector<std::string> outs{"sweep.csv", "summary.csv", "summary.json", "table.txt"};
    for (const auto& j : jobs) outs.push_back(fs::relative(j.dir, ctx.out).generic_string() + "/");
    complete(ctx.out, m, outs);
    std::cout << table;
    const bool any_failed = std::any_of(records.begin(), records.end(), [](const RunRecord& r) { return !r.ok; });
    return any_failed ? kFailure : kOk;
  });
}

int cmd_worker(const fs::path& dir) {
  const auto spec = read_json(dir / "run.json");
  RunRecord failed;
  failed.label = spec.value("label", std::string());
  failed.seed = spec.value("seed", std::uint64_t{0});
  auto fail = [&](const std::string& what, int code) {
    failed.error = what;
    write_text(dir / RunFiles::record, failed.to_json().dump(2) + "\n");
    std::cerr << "error: " << what << "\n";
    return code;
  };
  try {
    const auto cfg = RunConfig::from_json(spec.at("config"));
    RunOptions ro;
    ro.label = failed.label;
    execute_run(cfg, dir, ro);
    return kOk;
  } catch (const ConfigError& e) {
    return fail(e.what(), kUsage);
  } catch (const DataError& e) {
    return fail(e.what(), kUsage);
  } catch (const std::exception& e) {
    return fail(e.what(), kFailure);
  }
}

// bench / oracle --------------------------------------------------------------

int cmd_bench(const json& o, const CommandContext& ctx) {
  RunManifest m;
  m.command = "bench";
  m.options = o;
  m.seeds = {o.value("seed", std::uint64_t{0})};
  if (!begin(ctx, m)) return kOk;
  return guarded(ctx, m, [&] {
    std::vector<std::string> wanted = o.value("configs", std::vector<std::string>{});
    std::vector<BenchRow> rows;
    torch::set_num_threads(1);
    for (const auto& c : default_bench_configs()) {
      if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.name) == wanted.end()) continue;
      log_info("benchmarking " + c.name);
      rows.push_back(benchmark_transition(c, o.value("iterations", 30), o.value("warmup", 5), o.value("seed", std::uint64_t{0})));
    }
    if (rows.empty()) throw ConfigError("bench: no configuration matches --configs");
    write_bench_csv(rows, ctx.out / "bench.csv");
    std::vector<std::vector<std::string>> t;
    for (const auto& r : rows)
      t.push_back({r.cfg.name, std::to_string(r.cfg.Z), std::to_string(r.cfg.B), std::to_string(r.cfg.T), std::to_string(r.cfg.H),
                   fmt(r.v1_ms, 3), fmt(r.v2_ms, 3), fmt(r.speedup, 1) + "x", [&] {
                     char b[32];
                     std::snprintf(b, sizeof b, "%.2e", r.max_abs_diff);
                     return std::string(b);
                   }()});
    const auto table = metrics::aligned_table({"config", "Z", "B", "T", "H", "v1_ms", "v2_ms", "speedup", "max_abs_diff"}, t);
    write_text(ctx.out / "table.txt", table);
    complete(ctx.out, m, {"bench.csv", "table.txt"});
    std::cout << table;
    return kOk;
  });
}

int cmd_oracle(const json& o, const CommandContext& ctx) {
  RunManifest m;
  m.command = "oracle";
  m.options = o;
  m.seeds = {o.value("seed", std::uint64_t{7})};
  if (!begin(ctx, m)) return kOk;
  return guarded(ctx, m, [&] {
    oracle::BatteryOptions bo;
    bo.nodes = o.value("nodes", bo.nodes);
    bo.entropy_columns = o.value("entropy_columns", bo.entropy_columns);
    bo.seed = o.value("seed", bo.seed);
    bo.include_rate_probe = o.value("rate_probe", bo.include_rate_probe);
    const auto report = oracle::run_battery(bo);
    write_text(ctx.out / "oracle.json", report.dump(2) + "\n");
    std::vector<std::vector<std::string>> rows;
    for (const auto& c : report.at("checks"))
      rows.push_back({c.at("name").get<std::string>(), c.at("pass").get<bool>() ? "PASS" : "FAIL", c.at("measured").dump(),
                      c.at("tolerance").dump()});
    const auto table = metrics::aligned_table({"check", "result", "measured", "tolerance"}, rows);
    write_text(ctx.out / "table.txt", table);
    complete(ctx.out, m, {"oracle.json", "table.txt"});
    std::cout << table;
    return report.at("pass").get<bool>() ? kOk : kFailure;
  });
}

// plot ----------------------------------------------------------------------

Eigen::MatrixXd read_influence_csv(const fs::path& path, std::vector<std::string>& channels) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  const auto cols = static_cast<Eigen::Index>(split(line, ',').size()) - 1;
  if (cols < 1) throw DataError(path.string() + ": no latent columns");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    auto cells = split(line, ',');
    if (cells.empty()) continue;
    if (static_cast<Eigen::Index>(cells.size()) != cols + 1) throw DataError(path.string() + ": ragged row");
    channels.push_back(cells[0]);
    std::vector<double> r;
    for (std::size_t k = 1; k < cells.size(); ++k) r.push_back(std::stod(cells[k]));
    rows.push_back(std::move(r));
  }
  Eigen::MatrixXd A(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Eigen::Index j = 0; j < cols; ++j) A(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  return A;
}

int cmd_plot(const json& o, const CommandContext& ctx) {
  const auto kind = o.at("kind").get<std::string>();
  const fs::path input = o.at("input").get<std::string>();
  if (!fs::exists(input)) throw DataError("plot: input not found: " + input.string());
  RunManifest m;
  m.command = "plot";
  m.options = o;
  m.inputs = {{"input", input.string()}};
  if (!begin(ctx, m)) return kOk;
  return guarded(ctx, m, [&] {
    std::vector<std::string> outs;
    if (kind == "heatmap") {
      std::vector<std::string> channels;
      const auto A = read_influence_csv(input / "influence.csv", channels);
      const auto rep = metrics::MetricsReport::from_json(read_json(input / "metrics.json"));
      outs = influence_heatmap(A, rep.matched_factor, channels).write(ctx.out, "heatmap");
    } else if (kind == "cohen") {
      const auto rep = metrics::MetricsReport::from_json(read_json(input / "metrics.json"));
      BarSpec bs;
      bs.values = rep.cohens_d;
      for (std::size_t k = 0; k < bs.values.size(); ++k) bs.labels.push_back("z" + std::to_string(k));
      bs.highlight = rep.driver;
      bs.title = "Cross-regime effect size per latent";
      bs.x_label = "latent";
      bs.y_label = "Cohen's d";
      outs = bar_chart(bs).write(ctx.out, "cohens_d");
    } else if (kind == "sweep") {
      const auto summary = read_json(input / "summary.json");
      const auto manifest = RunManifest::load(input);
      const auto axis = manifest.options.value("axis", summary.value("axis", std::string("value")));
      auto names = o.value("metrics", std::vector<std::string>{});
      if (names.empty()) names = {"mcc", "xz_top3"};
      LineSpec ls;
      for (const auto& row : summary.at("rows")) ls.x_ticks.push_back(row.at("label").get<std::string>());
      for (const auto& name : names) {
        Series s;
        s.name = name;
        for (const auto& row : summary.at("rows")) {
          const auto& mj = row.at("metrics");
          s.y.push_back(mj.contains(name) ? mj.at(name).at("mean").get<double>() : std::nan(""));
          s.err.push_back(mj.contains(name) ? mj.at(name).at("std").get<double>() : 0.0);
        }
        ls.series.push_back(std::move(s));
      }
      ls.title = "Sweep over " + axis;
      ls.x_label = axis;
      ls.y_label = "mean +/- std over seeds";
      outs = line_chart(ls).write(ctx.out, "sweep");
    } else {
      throw ConfigError("plot: unknown kind '" + kind + "' (heatmap, cohen, sweep)");
    }
    complete(ctx.out, m, outs);
    for (const auto& f : outs) std::cout << (ctx.out / f).string() << "\n";
    return kOk;
  });
}

// command-line plumbing -------------------------------------------------------

json parse_override(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

struct ConfigFlags {
  std::string preset = "synthetic";
  std::optional<std::string> config;
  std::vector<std::string> sets;

  void add(CLI::App* app) {
    app->add_option("--preset", preset, "named defaults: synthetic | tokamak")->capture_default_str();
    app->add_option("--config", config, "JSON run config overlaid on the preset");
    app->add_option("--set", sets, "override a dotted key, e.g. --set train.beta=0.01 (repeatable)");
  }

  RunConfig resolve(const json& extra_sets = json::object()) const {
    auto cfg = RunConfig::preset(preset);
    if (config) {
      auto j = cfg.to_json();
      j.merge_patch(read_json(*config));
      cfg = RunConfig::from_json(j);
    }
    // All overrides land together so cross-field checks see the final values.
    json overrides = extra_sets;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      overrides[s.substr(0, eq)] = parse_override(s.substr(eq + 1));
    }
    if (!overrides.empty()) cfg.apply(overrides);
    return cfg;
  }
};

}  // namespace

int run_command(const std::string& command, const json& options, const CommandContext& ctx) {
  if (command == "generate") return cmd_generate(options, ctx);
  if (command == "train") return cmd_train(options, ctx);
  if (command == "evaluate") return cmd_evaluate(options, ctx);
  if (command == "sweep") return cmd_sweep(options, ctx);
  if (command == "bench") return cmd_bench(options, ctx);
  if (command == "oracle") return cmd_oracle(options, ctx);
  if (command == "plot") return cmd_plot(options, ctx);
  throw ConfigError("unknown command '" + command + "'");
}

int run_cli(int argc, char** argv) {
  CLI::App app{"mosaic-lab: temporal latent learning with sparse additive support recovery"};
  app.require_subcommand(1);
  CommandContext ctx;
  std::string out;
  auto common = [&](CLI::App* sub, bool needs_out = true) {
    auto* opt = sub->add_option("--out", out, "artifact directory");
    if (needs_out) opt->required();
    sub->add_flag("--force", ctx.force, "re-run even if the directory holds an identical or different run");
  };

  // generate
  auto* gen = app.add_subcommand("generate", "build a benchmark dataset");
  ConfigFlags gen_cfg;
  gen_cfg.add(gen);
  std::optional<std::uint64_t> gen_seed;
  std::optional<double> gen_nd;
  gen->add_option("--seed", gen_seed, "data seed");
  gen->add_option("--n-over-d", gen_nd, "desk-scale level (windows per channel)");
  common(gen);

  // train
  auto* tr = app.add_subcommand("train", "run both training stages and evaluate");
  ConfigFlags tr_cfg;
  tr_cfg.add(tr);
  std::optional<std::string> tr_data, tr_resume, tr_ablate;
  std::optional<std::uint64_t> tr_seed;
  tr->add_option("--data", tr_data, "dataset directory (default: generate from the config)");
  tr->add_option("--resume", tr_resume, "Stage-1 checkpoint; runs Stage 2 only");
  tr->add_option("--seed", tr_seed, "training seed");
  tr->add_option("--ablate", tr_ablate, "none | no-temporal | no-sparsity | dense-stage2")
      ->check(CLI::IsMember({"none", "no-temporal", "no-sparsity", "dense-stage2"}));
  common(tr);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "score a checkpoint on a dataset");
  std::optional<std::string> ev_data, ev_ckpt, ev_score;
  double ev_gate = 0.5;
  bool ev_no_rho = false;
  std::uint64_t ev_seed = 0;
  ev->add_option("--data", ev_data, "dataset directory (default: regenerate from the checkpoint's config)");
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--score", ev_score, "influence score: contrast | variance | range | jacobian")
      ->check(CLI::IsMember({"contrast", "variance", "range", "jacobian"}));
  ev->add_option("--gate", ev_gate, "concentration gate for X_Z@top3")->capture_default_str();
  ev->add_flag("--no-rho", ev_no_rho, "skip the interaction-ratio estimate");
  ev->add_option("--seed", ev_seed, "seed for the regime probe split")->capture_default_str();
  common(ev);

  // sweep
  auto* sw = app.add_subcommand("sweep", "train and evaluate over an axis of values and seeds");
  ConfigFlags sw_cfg;
  sw_cfg.add(sw);
  std::optional<std::string> sw_spec, sw_axis, sw_values, sw_seeds;
  sw->add_option("--spec", sw_spec, "JSON spec {preset, set, axis, values, seeds}");
  sw->add_option("--axis", sw_axis, "alpha | nd | ablation | label_noise | zdim | sparsity | lambda | <dotted key>");
  sw->add_option("--values", sw_values, "comma-separated axis values");
  sw->add_option("--seeds", sw_seeds, "comma-separated training seeds (default 0)");
  sw->add_option("--jobs", ctx.jobs, "parallel worker processes")->capture_default_str();
  common(sw);

  // bench
  auto* be = app.add_subcommand("bench", "time the per-dimension and batched transition-prior log-det");
  int be_iters = 30, be_warm = 5;
  std::uint64_t be_seed = 0;
  std::optional<std::string> be_configs;
  be->add_option("--iterations", be_iters)->capture_default_str();
  be->add_option("--warmup", be_warm)->capture_default_str();
  be->add_option("--seed", be_seed)->capture_default_str();
  be->add_option("--configs", be_configs, "comma-separated subset of configuration names");
  common(be);

  // oracle
  auto* orc = app.add_subcommand("oracle", "run the closed-form verification battery");
  oracle::BatteryOptions bo;
  bool no_probe = false;
  orc->add_option("--nodes", bo.nodes, "quadrature nodes per axis")->capture_default_str();
  orc->add_option("--entropy-columns", bo.entropy_columns)->capture_default_str();
  orc->add_option("--seed", bo.seed)->capture_default_str();
  orc->add_flag("--no-rate-probe", no_probe, "skip the estimation-rate probe");
  common(orc);

  // plot
  auto* pl = app.add_subcommand("plot", "render figures (SVG + PNG)");
  std::string pl_kind, pl_input;
  std::optional<std::string> pl_metrics;
  pl->add_option("kind", pl_kind, "heatmap | cohen | sweep")->required();
  pl->add_option("--input", pl_input, "evaluate directory (heatmap, cohen) or sweep directory")->required();
  pl->add_option("--metrics", pl_metrics, "sweep metrics to plot (comma-separated)");
  common(pl);

  // replay
  auto* rp = app.add_subcommand("replay", "re-run a command from its manifest");
  std::string rp_manifest;
  rp->add_option("manifest", rp_manifest, "manifest.json or the directory holding it")->required();
  rp->add_option("--jobs", ctx.jobs, "parallel worker processes (sweeps)");
  common(rp);

  auto* wk = app.add_subcommand("worker", "")->group("");
  std::string wk_dir;
  wk->add_option("dir", wk_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (wk->parsed()) return cmd_worker(wk_dir);
    ctx.out = out;
    if (gen->parsed()) {
      json extra = json::object();
      auto cfg = gen_cfg.resolve();
      if (gen_seed) (cfg.dataset == "synthetic" ? cfg.synth.seed : cfg.tokamak.seed) = *gen_seed;
      if (gen_nd) cfg.n_over_d = *gen_nd;
      cfg.validate();
      return run_command("generate", {{"config", cfg.to_json()}}, ctx);
    }
    if (tr->parsed()) {
      auto cfg = tr_cfg.resolve();
      if (tr_seed) cfg.train.seed = *tr_seed;
      if (tr_ablate) {
        if (*tr_ablate == "no-temporal") cfg.train.no_temporal = true;
        if (*tr_ablate == "no-sparsity") cfg.train.sparsity = SparsityKind::None;
        if (*tr_ablate == "dense-stage2") cfg.train.dense_stage2 = true;
      }
      cfg.validate();
      return run_command("train", {{"config", cfg.to_json()}, {"data", path_or_null(tr_data)}, {"resume", path_or_null(tr_resume)}}, ctx);
    }
    if (ev->parsed())
      return run_command("evaluate",
                         {{"data", path_or_null(ev_data)},
                          {"checkpoint", path_or_null(ev_ckpt)},
                          {"score", ev_score ? json(*ev_score) : json(nullptr)},
                          {"gate", ev_gate},
                          {"rho", !ev_no_rho},
                          {"seed", ev_seed}},
                         ctx);
    if (sw->parsed()) {
      json spec = sw_spec ? read_json(*sw_spec) : json::object();
      auto flags = sw_cfg;
      if (spec.contains("preset") && flags.preset == "synthetic") flags.preset = spec.at("preset").get<std::string>();
      const auto cfg = flags.resolve(spec.value("set", json::object()));
      std::string axis = sw_axis ? *sw_axis : spec.value("axis", std::string());
      if (axis.empty()) throw ConfigError("sweep: --axis (or a spec file with \"axis\") is required");
      std::vector<std::string> values;
      if (sw_values) values = split(*sw_values, ',');
      else
        for (const auto& v : spec.value("values", json::array())) values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      std::vector<std::uint64_t> seeds;
      if (sw_seeds)
        for (const auto& s : split(*sw_seeds, ',')) seeds.push_back(std::stoull(s));
      else
        seeds = spec.value("seeds", std::vector<std::uint64_t>{0});
      return run_command("sweep", {{"config", cfg.to_json()}, {"axis", axis}, {"values", values}, {"seeds", seeds}}, ctx);
    }
    if (be->parsed())
      return run_command("bench",
                         {{"iterations", be_iters},
                          {"warmup", be_warm},
                          {"seed", be_seed},
                          {"configs", be_configs ? split(*be_configs, ',') : std::vector<std::string>{}}},
                         ctx);
    if (orc->parsed())
      return run_command(
          "oracle", {{"nodes", bo.nodes}, {"entropy_columns", bo.entropy_columns}, {"seed", bo.seed}, {"rate_probe", !no_probe}}, ctx);
    if (pl->parsed())
      return run_command("plot",
                         {{"kind", pl_kind},
                          {"input", absolute_or_null(pl_input)},
                          {"metrics", pl_metrics ? split(*pl_metrics, ',') : std::vector<std::string>{}}},
                         ctx);
    if (rp->parsed()) {
      const auto m = RunManifest::load(rp_manifest);
      return run_command(m.command, m.options, ctx);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace mosaic::lab
