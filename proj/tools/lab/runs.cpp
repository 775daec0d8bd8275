#include "runs.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <unistd.h>

#include "mosaic/common.hpp"

namespace mosaic::lab {
namespace fs = std::filesystem;

std::optional<fs::path> cache_root() {
  const char* env = std::getenv("MOSAIC_LAB_CACHE");
  if (!env || !*env) return std::nullopt;
  return fs::path(env);
}

synth::TimeSeriesDataset obtain_dataset(const RunConfig& cfg, const std::optional<fs::path>& data_dir) {
  if (data_dir) return synth::load_dataset(*data_dir);
  const auto root = cache_root();
  if (!root) return make_dataset(cfg);
  const auto dir = *root / "datasets" / cfg.data_key();
  if (fs::exists(dir / "meta.json")) return synth::load_dataset(dir);
  auto ds = make_dataset(cfg);
  // Build beside the final location and rename, so concurrent workers never see a partial dataset.
  const auto tmp = *root / "datasets" / (cfg.data_key() + ".tmp" + std::to_string(::getpid()));
  fs::remove_all(tmp);
  synth::save_dataset(ds, tmp);
  std::error_code ec;
  fs::rename(tmp, dir, ec);
  if (ec) fs::remove_all(tmp);  // another worker got there first
  return ds;
}

nlohmann::json run_provenance(const RunConfig& cfg) {
  return {{"config", cfg.to_json()}, {"data_key", cfg.data_key()}};
}

RunOutcome execute_run(const RunConfig& cfg, const fs::path& dir, const RunOptions& opts) {
  cfg.validate();
  fs::create_directories(dir);
  {
    std::ofstream out(dir / RunFiles::config);
    out << cfg.to_json().dump(2) << '\n';
  }
  const auto t0 = std::chrono::steady_clock::now();
  RunOutcome res;
  res.record.label = opts.label;
  res.record.seed = cfg.train.seed;

  const auto ds = obtain_dataset(cfg, opts.data_dir);
  TrainOptions topts;
  topts.stage1_checkpoint = dir / RunFiles::stage1;
  topts.failure_checkpoint = dir / RunFiles::failure;
  if (opts.resume) {
    topts.resume = load_checkpoint(*opts.resume);
    if (fs::absolute(*opts.resume) != fs::absolute(dir / RunFiles::stage1))
      fs::copy_file(*opts.resume, dir / RunFiles::stage1, fs::copy_options::overwrite_existing);
  }
  const int total1 = cfg.train.stage1_epochs, total2 = cfg.train.stage2_epochs;
  const std::string tag = opts.label.empty() ? std::string() : "[" + opts.label + "] ";
  if (opts.verbose) {
    topts.on_epoch = [&](const EpochRecord& e) {
      char buf[256];
      if (e.stage == 1)
        std::snprintf(buf, sizeof buf, "%sstage 1 epoch %d/%d  recon %.4f  kl %.4f  temporal %.4f  (%.1f s)", tag.c_str(), e.epoch + 1,
                      total1, e.recon, e.gaussian_kl, e.temporal_kl, e.seconds);
      else
        std::snprintf(buf, sizeof buf, "%sstage 2 epoch %d/%d  recon %.4f  sparsity %.4f  lambda %.2f  alive %d  (%.1f s)", tag.c_str(),
                      e.epoch + 1, total2, e.recon, e.sparsity, e.lambda, e.alive, e.seconds);
      log_info(buf);
    };
  }
  if (opts.verbose)
    log_info(tag + "training on " + std::to_string(ds.windows) + " windows x " + std::to_string(ds.channels) + " channels");
  res.trained = train(ds, cfg.model, cfg.train, topts);
  res.trained.log.save_csv(dir / RunFiles::log);
  save_checkpoint(res.trained.model, dir / RunFiles::model, run_provenance(cfg));

  if (opts.evaluate) {
    EvalOptions eo;
    eo.seed = cfg.train.seed;
    res.report = evaluate(*res.trained.model, ds, eo);
    res.report->save(dir);
    res.record.metrics = sweep_scalars(*res.report);
  }
  res.record.ok = true;
  res.record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ofstream out(dir / RunFiles::record);
  out << res.record.to_json().dump(2) << '\n';
  return res;
}

}  // namespace mosaic::lab
