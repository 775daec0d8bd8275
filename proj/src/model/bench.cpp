#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mosaic/common.hpp"
#include "mosaic/model.hpp"

namespace mosaic {
namespace {

template <typename Fn>
double mean_ms(Fn&& fn, int iterations, int warmup) {
  for (int i = 0; i < warmup; ++i) fn();
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < iterations; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / iterations;
}

}  // namespace

std::vector<BenchConfig> default_bench_configs() {
  return {{"Synthetic", 8, 256, 3, 128}, {"RNA", 4, 256, 3, 128}, {"Cross-domain", 8, 256, 3, 128}, {"Stress test", 64, 256, 3, 64}};
}

BenchRow benchmark_transition(const BenchConfig& bc, int iterations, int warmup, std::uint64_t seed) {
  if (iterations < 1 || warmup < 0) throw ConfigError("bench: iterations must be >= 1 and warmup >= 0");
  ModelConfig cfg;
  cfg.latent_dim = bc.Z;
  cfg.transition_hidden = bc.H;
  cfg.lag = 2;
  if (bc.T <= cfg.lag) throw ConfigError("bench: T must exceed the lag (2)");
  cfg.validate();

  torch::manual_seed(seed);
  TransitionPrior prior(cfg);
  const int64_t BW = static_cast<int64_t>(bc.B) * (bc.T - cfg.lag);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed + 1);
  auto hist = torch::randn({BW, cfg.lag, bc.Z}, gen);
  auto cur = torch::randn({BW, bc.Z}, gen);
  auto regime = torch::randint(0, 2, {BW}, gen, torch::kLong);

  BenchRow row;
  row.cfg = bc;
  torch::Tensor ld1, ld2;
  row.v1_ms = mean_ms([&] { ld1 = prior->logdet_v1(hist, cur, regime); (void)prior->residual_v1(hist, cur, regime); },
                      iterations, warmup);
  row.v2_ms = mean_ms([&] { torch::Tensor r; ld2 = prior->logdet_v2(hist, cur, regime, false, &r); }, iterations, warmup);
  row.speedup = row.v1_ms / row.v2_ms;
  row.max_abs_diff = (ld1 - ld2).abs().max().item<double>();
  return row;
}

void write_bench_csv(const std::vector<BenchRow>& rows, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("bench: cannot write " + path.string());
  out << "config,v1_ms,v2_ms,speedup,max_abs_diff,Z,B,T,H\n";
  out << std::setprecision(6);
  for (const auto& r : rows)
    out << '"' << r.cfg.name << "\"," << r.v1_ms << ',' << r.v2_ms << ',' << r.speedup << ',' << r.max_abs_diff << ','
        << r.cfg.Z << ',' << r.cfg.B << ',' << r.cfg.T << ',' << r.cfg.H << '\n';
}

}  // namespace mosaic
