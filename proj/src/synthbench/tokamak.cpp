#include <cmath>

#include "mosaic/synthbench.hpp"

namespace mosaic::synth {

namespace {

constexpr int kSources = 4;
constexpr std::uint64_t kMixingStream = 0;
constexpr std::uint64_t kSourceStreamBase = 100;
constexpr std::uint64_t kNoiseStreamBase = 1'000'000;

// Channel blocks per source: MHD, Density, Energy, Shape.
const std::vector<std::vector<int>>& source_blocks() {
  static const std::vector<std::vector<int>> blocks = {{0, 1, 2}, {3, 4}, {5, 6, 7}, {8, 9, 10, 11}};
  return blocks;
}

}  // namespace

void TokamakConfig::validate() const {
  if (shots_per_class < 1) throw ConfigError("shots_per_class: must be >= 1");
  if (shot_length < 2) throw ConfigError("shot_length: must be >= 2");
  if (!(ar_rho > 0.0 && ar_rho < 1.0)) throw ConfigError("ar_rho: must lie in (0, 1)");
  if (innovation_std < 0.0) throw ConfigError("innovation_std: must be >= 0");
  if (!(mixing_low > 0.0 && mixing_high >= mixing_low)) throw ConfigError("mixing range: need 0 < low <= high");
  if (noise_std < 0.0) throw ConfigError("noise_std: must be >= 0");
  if (lag < 1) throw ConfigError("lag: must be >= 1");
  const int first = second_half_only ? shot_length / 2 + 1 : 1;
  if (shot_length - first + 1 < lag + 1) throw ConfigError("shot_length: too short for lag " + std::to_string(lag));
}

nlohmann::json TokamakConfig::to_json() const {
  return {{"shots_per_class", shots_per_class}, {"shot_length", shot_length},
          {"ar_rho", ar_rho},                   {"innovation_std", innovation_std},
          {"mixing_low", mixing_low},           {"mixing_high", mixing_high},
          {"noise_std", noise_std},             {"ramp_mhd", ramp_mhd},
          {"ramp_density", ramp_density},       {"lag", lag},
          {"second_half_only", second_half_only}, {"seed", seed}};
}

TokamakConfig TokamakConfig::from_json(const nlohmann::json& j) {
  TokamakConfig c;
  const nlohmann::json defaults = c.to_json();
  for (const auto& [key, _] : j.items())
    if (!defaults.contains(key)) throw ConfigError("tokamak config: unknown key '" + key + "'");
  try {
    c.shots_per_class = j.value("shots_per_class", c.shots_per_class);
    c.shot_length = j.value("shot_length", c.shot_length);
    c.ar_rho = j.value("ar_rho", c.ar_rho);
    c.innovation_std = j.value("innovation_std", c.innovation_std);
    c.mixing_low = j.value("mixing_low", c.mixing_low);
    c.mixing_high = j.value("mixing_high", c.mixing_high);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.ramp_mhd = j.value("ramp_mhd", c.ramp_mhd);
    c.ramp_density = j.value("ramp_density", c.ramp_density);
    c.lag = j.value("lag", c.lag);
    c.second_half_only = j.value("second_half_only", c.second_half_only);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("tokamak config: ") + e.what());
  }
  c.validate();
  return c;
}

const std::vector<std::string>& tokamak_channel_names() {
  static const std::vector<std::string> names = {"q95",    "li",      "locked_mode", "nbar",
                                                 "greenwald_frac", "wMHD", "betaN", "prad_ratio",
                                                 "Ip",     "elongation", "triangularity", "delta"};
  return names;
}

const std::vector<std::string>& tokamak_source_names() {
  static const std::vector<std::string> names = {"MHD", "Density", "Energy", "Shape"};
  return names;
}

double tokamak_progress(int t, int T) {
  const double half = 0.5 * T;
  return t > half ? (t - half) / T : 0.0;
}

Eigen::Matrix<double, 4, 12> tokamak_mixing(const TokamakConfig& cfg) {
  Eigen::Matrix<double, 4, 12> M = Eigen::Matrix<double, 4, 12>::Zero();
  Rng rng = make_rng(cfg.seed, kMixingStream);
  for (int s = 0; s < kSources; ++s)
    for (int ch : source_blocks()[static_cast<std::size_t>(s)])
      M(s, ch) = cfg.mixing_low + (cfg.mixing_high - cfg.mixing_low) * uniform01(rng);
  return M;
}

TokamakShot simulate_tokamak_shot(const TokamakConfig& cfg, const Eigen::Matrix<double, 4, 12>& mixing, int shot_index,
                                  int regime) {
  const int T = cfg.shot_length;
  Rng src = make_rng(cfg.seed, kSourceStreamBase + static_cast<std::uint64_t>(shot_index));
  Rng noise = make_rng(cfg.seed, kNoiseStreamBase + 2 * static_cast<std::uint64_t>(shot_index) +
                                     static_cast<std::uint64_t>(regime));
  const double stationary = cfg.innovation_std / std::sqrt(1.0 - cfg.ar_rho * cfg.ar_rho);

  TokamakShot shot;
  shot.sources.resize(static_cast<std::size_t>(T * kSources));
  shot.X.resize(static_cast<std::size_t>(T * kTokamakChannels));
  double state[kSources];
  for (double& s : state) s = stationary * standard_normal(src);
  for (int t = 1; t <= T; ++t) {
    if (t > 1)
      for (double& s : state) s = cfg.ar_rho * s + cfg.innovation_std * standard_normal(src);
    // The ramp acts on the source state, so it carries through the AR recursion.
    if (regime == 1) {
      const double p = tokamak_progress(t, T);
      state[0] += cfg.ramp_mhd * p;
      state[1] += cfg.ramp_density * p;
    }
    const double* observed = state;
    for (int s = 0; s < kSources; ++s) shot.sources[static_cast<std::size_t>((t - 1) * kSources + s)] = observed[s];
    for (int c = 0; c < kTokamakChannels; ++c) {
      double v = 0.0;
      for (int s = 0; s < kSources; ++s) v += mixing(s, c) * observed[s];
      shot.X[static_cast<std::size_t>((t - 1) * kTokamakChannels + c)] = v + cfg.noise_std * standard_normal(noise);
    }
  }
  return shot;
}

TimeSeriesDataset generate_tokamak(const TokamakConfig& cfg) {
  cfg.validate();
  const auto M = tokamak_mixing(cfg);
  const int T = cfg.shot_length;
  const int steps = cfg.lag + 1;

  std::vector<TokamakShot> shots;
  std::vector<int> regimes;
  for (int regime = 0; regime < 2; ++regime) {
    for (int s = 0; s < cfg.shots_per_class; ++s) {
      shots.push_back(simulate_tokamak_shot(cfg, M, s, regime));
      regimes.push_back(regime);
    }
  }

  // Per-channel standardization over every frame of every shot.
  std::vector<double> mean(kTokamakChannels, 0.0), sd(kTokamakChannels, 0.0);
  const double frames = static_cast<double>(shots.size()) * T;
  for (const auto& sh : shots)
    for (int t = 0; t < T; ++t)
      for (int c = 0; c < kTokamakChannels; ++c) mean[c] += sh.X[static_cast<std::size_t>(t * kTokamakChannels + c)];
  for (double& m : mean) m /= frames;
  for (const auto& sh : shots)
    for (int t = 0; t < T; ++t)
      for (int c = 0; c < kTokamakChannels; ++c) {
        const double d = sh.X[static_cast<std::size_t>(t * kTokamakChannels + c)] - mean[c];
        sd[c] += d * d;
      }
  for (double& s : sd) s = std::sqrt(s / frames);

  const int first_frame = cfg.second_half_only ? T / 2 + 1 : 1;  // 1-based, earliest frame a window may use
  TimeSeriesDataset ds;
  ds.steps = steps;
  ds.channels = kTokamakChannels;
  ds.latent_dim = kSources;
  for (std::size_t k = 0; k < shots.size(); ++k) {
    const auto& sh = shots[k];
    for (int end = first_frame + cfg.lag; end <= T; ++end) {
      for (int t = end - cfg.lag; t <= end; ++t)
        for (int c = 0; c < kTokamakChannels; ++c) {
          const double v = sh.X[static_cast<std::size_t>((t - 1) * kTokamakChannels + c)];
          ds.X.push_back(static_cast<float>(sd[c] > 0 ? (v - mean[c]) / sd[c] : v - mean[c]));
        }
      ds.C.push_back(static_cast<std::uint8_t>(regimes[k]));
      for (int s = 0; s < kSources; ++s)
        ds.Ztrue.push_back(static_cast<float>(sh.sources[static_cast<std::size_t>((end - 1) * kSources + s)]));
      ++ds.windows;
    }
  }

  SupportMap sm;
  sm.D = kTokamakChannels;
  for (const auto& block : source_blocks()) sm.factors.push_back({{block.begin(), block.end()}, {}});
  sm.regime_varying = {0, 1};
  sm.factor_names = tokamak_source_names();
  ds.support = sm;
  ds.channel_names = tokamak_channel_names();
  ds.metadata["generator"] = "tokamak";
  ds.metadata["config"] = cfg.to_json();
  ds.metadata["provenance"] = content_hash(cfg.to_json().dump());
  ds.metadata["standardization"] = {{"mean", mean}, {"std", sd}};
  nlohmann::json mix = nlohmann::json::array();
  for (int s = 0; s < kSources; ++s) {
    std::vector<double> row;
    for (int c = 0; c < kTokamakChannels; ++c) row.push_back(M(s, c));
    mix.push_back(row);
  }
  ds.metadata["mixing"] = mix;
  return ds;
}

}  // namespace mosaic::synth
