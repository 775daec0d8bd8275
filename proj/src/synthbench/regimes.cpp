#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "mosaic/synthbench.hpp"

namespace mosaic::synth {

namespace {

constexpr std::uint64_t kFlipStream = 7;
constexpr std::uint64_t kBalanceStream = 11;
constexpr std::uint64_t kCapStream = 13;

// Centered rolling mean of occupancy (truncated at the ends), thresholded at 0.5.
std::vector<std::uint8_t> smoothed_state(const std::vector<Well>& well, int window) {
  const auto T = static_cast<std::int64_t>(well.size());
  const std::int64_t half = window / 2;
  std::vector<std::int64_t> prefix(static_cast<std::size_t>(T + 1), 0);
  for (std::int64_t t = 0; t < T; ++t)
    prefix[static_cast<std::size_t>(t + 1)] = prefix[static_cast<std::size_t>(t)] + (well[static_cast<std::size_t>(t)] == Well::B);
  std::vector<std::uint8_t> state(static_cast<std::size_t>(T));
  for (std::int64_t t = 0; t < T; ++t) {
    const std::int64_t lo = std::max<std::int64_t>(0, t - half);
    const std::int64_t hi = std::min<std::int64_t>(T, t + half + 1);
    const auto ones = prefix[static_cast<std::size_t>(hi)] - prefix[static_cast<std::size_t>(lo)];
    state[static_cast<std::size_t>(t)] = 2 * ones > (hi - lo) ? 1 : 0;
  }
  return state;
}

std::vector<std::int64_t> indices_of(const std::vector<std::uint8_t>& labels, std::uint8_t cls) {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == cls) out.push_back(static_cast<std::int64_t>(i));
  return out;
}

}  // namespace

RegimeLabels assign_regimes(const std::vector<Well>& well, RegimeDefinition definition, const RegimeOptions& opts) {
  if (opts.smoothing_window < 1 || opts.smoothing_window % 2 == 0)
    throw ConfigError("smoothing_window must be a positive odd integer");
  const auto T = static_cast<std::int64_t>(well.size());
  const std::vector<std::uint8_t> state = smoothed_state(well, opts.smoothing_window);
  RegimeLabels out;
  out.labels.assign(static_cast<std::size_t>(T), 0);
  out.discarded.assign(static_cast<std::size_t>(T), 0);

  if (definition == RegimeDefinition::WellOccupancy) {
    out.labels = state;
    for (std::int64_t t = 1; t < T; ++t) {
      if (state[static_cast<std::size_t>(t)] == state[static_cast<std::size_t>(t - 1)]) continue;
      const std::int64_t lo = std::max<std::int64_t>(0, t - opts.transition_buffer);
      const std::int64_t hi = std::min<std::int64_t>(T - 1, t + opts.transition_buffer);
      for (std::int64_t u = lo; u <= hi; ++u) out.discarded[static_cast<std::size_t>(u)] = 1;
    }
    return out;
  }

  if (T <= opts.lookahead)
    throw DataError("pre-transition labelling needs more than " + std::to_string(opts.lookahead) +
                    " frames, got " + std::to_string(T));
  // next_b[t]: first frame >= t whose smoothed state is B, or T.
  std::vector<std::int64_t> next_b(static_cast<std::size_t>(T + 1), T);
  for (std::int64_t t = T - 1; t >= 0; --t)
    next_b[static_cast<std::size_t>(t)] = state[static_cast<std::size_t>(t)] ? t : next_b[static_cast<std::size_t>(t + 1)];
  for (std::int64_t t = 0; t < T; ++t) {
    if (state[static_cast<std::size_t>(t)]) {
      out.discarded[static_cast<std::size_t>(t)] = 1;
      continue;
    }
    const std::int64_t crossing = next_b[static_cast<std::size_t>(t)];
    if (crossing - t <= opts.lookahead) {
      out.labels[static_cast<std::size_t>(t)] = 1;
    } else if (t + opts.lookahead >= T) {
      out.discarded[static_cast<std::size_t>(t)] = 1;  // future beyond the trajectory
    }
  }
  return out;
}

std::vector<std::uint8_t> flip_labels(const std::vector<std::uint8_t>& labels, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("label_flip_rate must lie in [0, 1]");
  std::vector<std::uint8_t> out = labels;
  Rng rng = make_rng(seed, kFlipStream);
  for (std::uint8_t cls : {std::uint8_t{0}, std::uint8_t{1}}) {
    std::vector<std::int64_t> idx = indices_of(labels, cls);
    shuffle(idx, rng);
    const auto flips = static_cast<std::size_t>(std::llround(p * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < flips; ++k) out[static_cast<std::size_t>(idx[k])] = 1 - cls;
  }
  return out;
}

FrameSeries subsample(const FrameSeries& frames, int k, int lag) {
  if (k < 1) throw ConfigError("subsample_stride must be >= 1");
  FrameSeries out;
  out.channels = frames.channels;
  out.latent_dim = frames.latent_dim;
  out.source_frames = frames.source_frames ? frames.source_frames : frames.frames;
  out.stride = frames.stride * k;
  for (std::int64_t t = 0; t < frames.frames; t += k) {
    const auto row = static_cast<std::size_t>(t);
    out.X.insert(out.X.end(), frames.X.begin() + static_cast<std::ptrdiff_t>(row * static_cast<std::size_t>(frames.channels)),
                 frames.X.begin() + static_cast<std::ptrdiff_t>((row + 1) * static_cast<std::size_t>(frames.channels)));
    if (frames.latent_dim > 0 && !frames.Z.empty()) {
      const auto d = static_cast<std::size_t>(frames.latent_dim);
      out.Z.insert(out.Z.end(), frames.Z.begin() + static_cast<std::ptrdiff_t>(row * d),
                   frames.Z.begin() + static_cast<std::ptrdiff_t>((row + 1) * d));
    }
    out.labels.push_back(frames.labels[row]);
    out.discarded.push_back(frames.discarded.empty() ? 0 : frames.discarded[row]);
    ++out.frames;
  }
  if (out.frames < lag + 1)
    throw DataError("subsampling with stride " + std::to_string(k) + " leaves " + std::to_string(out.frames) +
                    " frames, fewer than lag + 1 = " + std::to_string(lag + 1));
  return out;
}

TimeSeriesDataset window_and_balance(const FrameSeries& frames, int lag, bool balance, std::uint64_t seed) {
  if (lag < 1) throw ConfigError("lag must be >= 1");
  const int D = frames.channels;
  const int steps = lag + 1;
  std::vector<std::int64_t> ends;
  std::int64_t run = 0;  // consecutive kept frames ending at t
  for (std::int64_t t = 0; t < frames.frames; ++t) {
    const bool dropped = !frames.discarded.empty() && frames.discarded[static_cast<std::size_t>(t)];
    run = dropped ? 0 : run + 1;
    if (run >= steps) ends.push_back(t);
  }

  std::vector<std::int64_t> by_class[2];
  for (std::int64_t t : ends) by_class[frames.labels[static_cast<std::size_t>(t)] ? 1 : 0].push_back(t);
  for (int c = 0; c < 2 && balance; ++c) {
    if (by_class[c].empty())
      throw DataError("regime class " + std::to_string(c) + " has no complete window");
  }
  if (balance && by_class[0].size() != by_class[1].size()) {
    const int major = by_class[0].size() > by_class[1].size() ? 0 : 1;
    Rng rng = make_rng(seed, kBalanceStream);
    auto& v = by_class[major];
    shuffle(v, rng);
    v.resize(by_class[1 - major].size());
    std::sort(v.begin(), v.end());
    ends.clear();
    std::merge(by_class[0].begin(), by_class[0].end(), by_class[1].begin(), by_class[1].end(), std::back_inserter(ends));
  }

  TimeSeriesDataset ds;
  ds.windows = static_cast<std::int64_t>(ends.size());
  ds.steps = steps;
  ds.channels = D;
  ds.latent_dim = frames.Z.empty() ? 0 : frames.latent_dim;
  ds.X.reserve(static_cast<std::size_t>(ds.windows * steps * D));
  for (std::int64_t t : ends) {
    for (std::int64_t s = t - lag; s <= t; ++s)
      for (int i = 0; i < D; ++i) ds.X.push_back(static_cast<float>(frames.x(s, i)));
    ds.C.push_back(frames.labels[static_cast<std::size_t>(t)]);
    for (int j = 0; j < ds.latent_dim; ++j)
      ds.Ztrue.push_back(static_cast<float>(frames.Z[static_cast<std::size_t>(t * frames.latent_dim + j)]));
  }
  ds.metadata["effective_frames"] = frames.frames;
  ds.metadata["source_frames"] = frames.source_frames ? frames.source_frames : frames.frames;
  ds.metadata["subsample_stride"] = frames.stride;
  ds.metadata["balanced"] = balance;
  return ds;
}

TimeSeriesDataset cap_windows(const TimeSeriesDataset& ds, std::int64_t max_windows, std::uint64_t seed) {
  if (max_windows <= 0 || ds.windows <= max_windows) return ds;
  std::vector<std::int64_t> by_class[2];
  for (std::int64_t w = 0; w < ds.windows; ++w) by_class[ds.C[static_cast<std::size_t>(w)] ? 1 : 0].push_back(w);
  const auto n0 = static_cast<std::int64_t>(by_class[0].size());
  std::int64_t keep0 = std::llround(static_cast<double>(max_windows) * static_cast<double>(n0) / static_cast<double>(ds.windows));
  keep0 = std::clamp<std::int64_t>(keep0, 0, n0);
  const std::int64_t keep[2] = {keep0, max_windows - keep0};
  Rng rng = make_rng(seed, kCapStream);
  std::vector<std::int64_t> chosen;
  for (int c = 0; c < 2; ++c) {
    auto v = by_class[c];
    shuffle(v, rng);
    v.resize(static_cast<std::size_t>(std::min<std::int64_t>(keep[c], static_cast<std::int64_t>(v.size()))));
    chosen.insert(chosen.end(), v.begin(), v.end());
  }
  std::sort(chosen.begin(), chosen.end());
  TimeSeriesDataset out = ds.select(chosen);
  out.metadata["capped_from"] = ds.windows;
  return out;
}

int stride_for_level(double n_over_d, int D, std::int64_t base_windows) {
  if (!(n_over_d > 0.0) || D < 1) throw ConfigError("N/D level and D must be positive");
  const double target = n_over_d * D;
  return std::max(1, static_cast<int>(std::floor(static_cast<double>(base_windows) / target)));
}

TimeSeriesDataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const SupportMap sm = SupportMap::double_well();
  const LatentTrajectory traj = simulate_latents(cfg);
  FrameSeries frames = mix_observations(traj, sm, cfg);

  // Parent correlation of each single-parent channel, measured on source frames.
  nlohmann::json parent_corr = nlohmann::json::object();
  for (int i = 0; i < sm.D; ++i) {
    const auto owners = sm.owners(i);
    if (owners.size() != 1) continue;
    double sx = 0, sz = 0, sxx = 0, szz = 0, sxz = 0;
    const auto n = static_cast<double>(frames.frames);
    for (std::int64_t t = 0; t < frames.frames; ++t) {
      const double x = frames.x(t, i), z = traj.z(t, owners[0]);
      sx += x, sz += z, sxx += x * x, szz += z * z, sxz += x * z;
    }
    const double cov = sxz / n - sx / n * sz / n;
    const double den = std::sqrt((sxx / n - sx * sx / n / n) * (szz / n - sz * sz / n / n));
    parent_corr[std::to_string(i)] = den > 0 ? cov / den : 0.0;
  }

  if (cfg.subsample_stride > 1) frames = subsample(frames, cfg.subsample_stride, cfg.lag);
  TimeSeriesDataset ds = window_and_balance(frames, cfg.lag, cfg.balance, cfg.seed);
  ds = cap_windows(ds, cfg.max_windows, cfg.seed);
  if (cfg.label_flip_rate > 0.0) {
    ds.C_clean = ds.C;
    ds.C = flip_labels(ds.C, cfg.label_flip_rate, cfg.seed);
  }
  ds.support = sm;
  for (int i = 0; i < sm.D; ++i) ds.channel_names.push_back("x" + std::to_string(i));
  ds.metadata["generator"] = "double_well";
  ds.metadata["config"] = cfg.to_json();
  ds.metadata["provenance"] = content_hash(cfg.to_json().dump());
  ds.metadata["parent_correlation"] = parent_corr;
  ds.metadata["latent_raw_std"] = traj.raw_std;
  const auto counts = ds.class_counts();
  ds.metadata["class_counts"] = {counts[0], counts[1]};
  spdlog::debug("double-well dataset: {} windows ({} / {})", ds.windows, counts[0], counts[1]);
  return ds;
}

Eigen::MatrixXd TimeSeriesDataset::last_frames() const {
  Eigen::MatrixXd out(windows, channels);
  for (std::int64_t w = 0; w < windows; ++w)
    for (int i = 0; i < channels; ++i) out(w, i) = x(w, steps - 1, i);
  return out;
}

Eigen::MatrixXd TimeSeriesDataset::ztrue_matrix() const {
  Eigen::MatrixXd out(windows, latent_dim);
  for (std::int64_t w = 0; w < windows; ++w)
    for (int j = 0; j < latent_dim; ++j) out(w, j) = Ztrue[static_cast<std::size_t>(w * latent_dim + j)];
  return out;
}

std::array<std::int64_t, 2> TimeSeriesDataset::class_counts() const {
  std::array<std::int64_t, 2> c{0, 0};
  for (auto v : C) ++c[v ? 1 : 0];
  return c;
}

TimeSeriesDataset TimeSeriesDataset::select(const std::vector<std::int64_t>& idx) const {
  TimeSeriesDataset out;
  out.windows = static_cast<std::int64_t>(idx.size());
  out.steps = steps;
  out.channels = channels;
  out.latent_dim = latent_dim;
  out.support = support;
  out.channel_names = channel_names;
  out.metadata = metadata;
  const auto block = static_cast<std::size_t>(steps * channels);
  out.X.reserve(idx.size() * block);
  for (std::int64_t w : idx) {
    if (w < 0 || w >= windows) throw DataError("window index " + std::to_string(w) + " out of range");
    const auto off = static_cast<std::size_t>(w) * block;
    out.X.insert(out.X.end(), X.begin() + static_cast<std::ptrdiff_t>(off), X.begin() + static_cast<std::ptrdiff_t>(off + block));
    out.C.push_back(C[static_cast<std::size_t>(w)]);
    if (!C_clean.empty()) out.C_clean.push_back(C_clean[static_cast<std::size_t>(w)]);
    for (int j = 0; j < latent_dim && !Ztrue.empty(); ++j)
      out.Ztrue.push_back(Ztrue[static_cast<std::size_t>(w * latent_dim + j)]);
  }
  return out;
}

}  // namespace mosaic::synth
