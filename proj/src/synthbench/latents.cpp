#include <cmath>

#include "mosaic/synthbench.hpp"

namespace mosaic::synth {

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

// Streams of the latent simulator; observation noise uses kNoiseStream.
constexpr std::uint64_t kLangevinStream = 1;
constexpr std::uint64_t kModulatorStream = 2;  // + latent index
constexpr std::uint64_t kNoiseStream = 1000;

}  // namespace

LatentTrajectory simulate_latents(const SynthConfig& cfg) {
  cfg.validate();
  const std::int64_t N = cfg.N;
  constexpr int n = 6;

  Rng langevin = make_rng(cfg.seed, kLangevinStream);
  std::vector<Rng> ar;
  for (int j = 1; j < n; ++j) ar.push_back(make_rng(cfg.seed, kModulatorStream + static_cast<std::uint64_t>(j)));

  const double sp1 = softplus(1.0);
  const double w2 = cfg.well_width * cfg.well_width;
  const double kappa = cfg.modulation_gain;
  const double diffusion = std::sqrt(2.0 * cfg.temperature * cfg.dt);

  std::vector<double> raw(static_cast<std::size_t>(N * n));
  std::vector<Well> well(static_cast<std::size_t>(N));
  double x = cfg.z0_init;
  double z[n] = {0, 0, 0, 0, 0, 0};  // z[1..5]: z1, z2, z3, u1, u2

  for (std::int64_t t = 0; t < N; ++t) {
    const double B = cfg.barrier * softplus(1.0 + kappa * z[3]) / sp1;
    const double dL = cfg.well_depth * softplus(1.0 + kappa * z[1]) / sp1;
    const double dR = cfg.well_depth * softplus(1.0 + kappa * z[2]) / sp1;
    const double gL = std::exp(-(x + 1.0) * (x + 1.0) / (2.0 * w2));
    const double gR = std::exp(-(x - 1.0) * (x - 1.0) / (2.0 * w2));
    const double grad = 4.0 * B * x * (x * x - 1.0) + dL * gL * (x + 1.0) / w2 + dR * gR * (x - 1.0) / w2;
    const double xi = standard_normal(langevin);
    x = x - cfg.dt * grad + diffusion * xi;

    const double side = x < 0.0 ? -1.0 : 1.0;
    const double mean[n] = {0.0, side * cfg.regime_coupling, -side * cfg.regime_coupling, 0.0, 0.0, 0.0};
    for (int j = 1; j < n; ++j) {
      const double e = standard_normal(ar[static_cast<std::size_t>(j - 1)]);
      const bool frozen = cfg.freeze_modulators && j <= 3;
      if (!frozen) z[j] = cfg.ar_rho * z[j] + (1.0 - cfg.ar_rho) * mean[j] + cfg.ar_innovation * e;
    }

    double* row = raw.data() + t * n;
    row[0] = x;
    for (int j = 1; j < n; ++j) row[j] = z[j];
    well[static_cast<std::size_t>(t)] = x < 0.0 ? Well::A : Well::B;
  }

  LatentTrajectory traj;
  traj.n_true = n;
  traj.frames = N;
  traj.well = std::move(well);
  traj.raw_std.assign(n, 0.0);
  traj.Z = std::move(raw);
  for (int j = 0; j < n; ++j) {
    double mean = 0.0;
    for (std::int64_t t = 0; t < N; ++t) mean += traj.Z[static_cast<std::size_t>(t * n + j)];
    mean /= static_cast<double>(N);
    double var = 0.0;
    for (std::int64_t t = 0; t < N; ++t) {
      const double d = traj.Z[static_cast<std::size_t>(t * n + j)] - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(N));
    traj.raw_std[static_cast<std::size_t>(j)] = sd;
    const double scale = sd > 1e-12 ? 1.0 / sd : 1.0;
    for (std::int64_t t = 0; t < N; ++t) {
      double& v = traj.Z[static_cast<std::size_t>(t * n + j)];
      v = (v - mean) * scale;
    }
  }

  RegimeLabels rl = assign_regimes(traj.well, cfg.regime_definition,
                                   {cfg.smoothing_window, cfg.transition_buffer, cfg.lookahead});
  traj.labels = std::move(rl.labels);
  traj.discarded = std::move(rl.discarded);
  return traj;
}

FrameSeries mix_observations(const LatentTrajectory& traj, const SupportMap& sm, const SynthConfig& cfg) {
  if (sm.D != cfg.D)
    throw ConfigError("support map has " + std::to_string(sm.D) + " channels but D = " + std::to_string(cfg.D));
  if (sm.n_factors() != traj.n_true)
    throw ConfigError("support map has " + std::to_string(sm.n_factors()) + " factors but the trajectory has " +
                      std::to_string(traj.n_true));
  sm.validate();

  // parents[i]: factors feeding channel i (empty for noise channels).
  std::vector<std::vector<int>> parents(static_cast<std::size_t>(sm.D));
  for (int i = 0; i < sm.D; ++i) {
    parents[static_cast<std::size_t>(i)] = sm.owners(i);
    if (parents[static_cast<std::size_t>(i)].empty() && !sm.noise.count(i))
      throw ConfigError("channel " + std::to_string(i) + " has no assignment");
  }
  std::vector<std::vector<InteractionTerm>> inter(static_cast<std::size_t>(sm.D));
  if (cfg.alpha > 0.0) {
    for (const auto& term : interaction_terms(sm)) inter[static_cast<std::size_t>(term.channel)].push_back(term);
  }

  FrameSeries fs;
  fs.frames = traj.frames;
  fs.channels = sm.D;
  fs.X.resize(static_cast<std::size_t>(traj.frames * sm.D));
  Rng noise = make_rng(cfg.seed, kNoiseStream);
  for (std::int64_t t = 0; t < traj.frames; ++t) {
    for (int i = 0; i < sm.D; ++i) {
      double v = 0.0;
      const int family = i % kMixingFamilies;
      for (int j : parents[static_cast<std::size_t>(i)]) v += mixing_family(family, traj.z(t, j));
      for (const auto& term : inter[static_cast<std::size_t>(i)])
        v += cfg.alpha * std::tanh(traj.z(t, term.a) * traj.z(t, term.b));
      const double e = standard_normal(noise);
      fs.X[static_cast<std::size_t>(t * sm.D + i)] = v + cfg.noise_sigma * e;
    }
  }
  fs.labels = traj.labels;
  fs.discarded = traj.discarded;
  fs.latent_dim = traj.n_true;
  fs.Z = traj.Z;
  fs.source_frames = traj.frames;
  fs.stride = 1;
  return fs;
}

}  // namespace mosaic::synth
