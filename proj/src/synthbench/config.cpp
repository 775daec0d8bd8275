#include <algorithm>
#include <cmath>
#include <map>

#include "mosaic/synthbench.hpp"

namespace mosaic::synth {

std::string to_string(RegimeDefinition d) {
  return d == RegimeDefinition::WellOccupancy ? "well_occupancy" : "pre_transition";
}

RegimeDefinition regime_definition_from_string(const std::string& s) {
  if (s == "well_occupancy" || s == "A") return RegimeDefinition::WellOccupancy;
  if (s == "pre_transition" || s == "B") return RegimeDefinition::PreTransition;
  throw ConfigError("regime_definition: unknown value '" + s +
                    "' (expected well_occupancy or pre_transition)");
}

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field + ": " + what);
}

}  // namespace

void SynthConfig::validate() const {
  require(n_true == 6, "n_true", "the double-well generator has exactly 6 latents");
  require(D >= 1, "D", "must be positive");
  require(lag >= 1, "lag", "must be >= 1");
  require(N >= lag + 1, "N", "must be >= lag + 1 (" + std::to_string(lag + 1) + ")");
  require(alpha >= 0.0 && std::isfinite(alpha), "alpha", "must be finite and >= 0");
  require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), "noise_sigma", "must be >= 0");
  require(label_flip_rate >= 0.0 && label_flip_rate <= 1.0, "label_flip_rate", "must lie in [0, 1]");
  require(subsample_stride >= 1, "subsample_stride", "must be >= 1");
  require(temperature >= 0.0, "temperature", "must be >= 0");
  require(dt > 0.0, "dt", "must be positive");
  require(barrier > 0.0, "barrier", "must be positive");
  require(well_depth >= 0.0, "well_depth", "must be >= 0");
  require(well_width > 0.0, "well_width", "must be positive");
  require(ar_rho >= 0.0 && ar_rho < 1.0, "ar_rho", "must lie in [0, 1)");
  require(ar_innovation >= 0.0, "ar_innovation", "must be >= 0");
  require(smoothing_window >= 1 && smoothing_window % 2 == 1, "smoothing_window",
          "must be a positive odd integer");
  require(transition_buffer >= 0, "transition_buffer", "must be >= 0");
  require(lookahead >= 1, "lookahead", "must be >= 1");
  require(max_windows >= 0, "max_windows", "must be >= 0");
}

nlohmann::json SynthConfig::to_json() const {
  return {{"n_true", n_true},
          {"D", D},
          {"N", N},
          {"alpha", alpha},
          {"noise_sigma", noise_sigma},
          {"lag", lag},
          {"regime_definition", to_string(regime_definition)},
          {"label_flip_rate", label_flip_rate},
          {"subsample_stride", subsample_stride},
          {"seed", seed},
          {"temperature", temperature},
          {"dt", dt},
          {"barrier", barrier},
          {"well_depth", well_depth},
          {"well_width", well_width},
          {"modulation_gain", modulation_gain},
          {"z0_init", z0_init},
          {"ar_rho", ar_rho},
          {"ar_innovation", ar_innovation},
          {"regime_coupling", regime_coupling},
          {"freeze_modulators", freeze_modulators},
          {"smoothing_window", smoothing_window},
          {"transition_buffer", transition_buffer},
          {"lookahead", lookahead},
          {"balance", balance},
          {"max_windows", max_windows}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  const nlohmann::json defaults = c.to_json();
  for (const auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("synth config: unknown key '" + key + "'");
  }
  try {
    c.n_true = j.value("n_true", c.n_true);
    c.D = j.value("D", c.D);
    c.N = j.value("N", c.N);
    c.alpha = j.value("alpha", c.alpha);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.lag = j.value("lag", c.lag);
    if (j.contains("regime_definition"))
      c.regime_definition = regime_definition_from_string(j.at("regime_definition").get<std::string>());
    c.label_flip_rate = j.value("label_flip_rate", c.label_flip_rate);
    c.subsample_stride = j.value("subsample_stride", c.subsample_stride);
    c.seed = j.value("seed", c.seed);
    c.temperature = j.value("temperature", c.temperature);
    c.dt = j.value("dt", c.dt);
    c.barrier = j.value("barrier", c.barrier);
    c.well_depth = j.value("well_depth", c.well_depth);
    c.well_width = j.value("well_width", c.well_width);
    c.modulation_gain = j.value("modulation_gain", c.modulation_gain);
    c.z0_init = j.value("z0_init", c.z0_init);
    c.ar_rho = j.value("ar_rho", c.ar_rho);
    c.ar_innovation = j.value("ar_innovation", c.ar_innovation);
    c.regime_coupling = j.value("regime_coupling", c.regime_coupling);
    c.freeze_modulators = j.value("freeze_modulators", c.freeze_modulators);
    c.smoothing_window = j.value("smoothing_window", c.smoothing_window);
    c.transition_buffer = j.value("transition_buffer", c.transition_buffer);
    c.lookahead = j.value("lookahead", c.lookahead);
    c.balance = j.value("balance", c.balance);
    c.max_windows = j.value("max_windows", c.max_windows);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

std::set<int> SupportMap::support(int j) const {
  std::set<int> s = factors.at(static_cast<std::size_t>(j)).primary;
  const auto& sh = factors.at(static_cast<std::size_t>(j)).shared;
  s.insert(sh.begin(), sh.end());
  return s;
}

std::vector<int> SupportMap::owners(int i) const {
  std::vector<int> out;
  for (int j = 0; j < n_factors(); ++j) {
    const auto& f = factors[static_cast<std::size_t>(j)];
    if (f.primary.count(i) || f.shared.count(i)) out.push_back(j);
  }
  return out;
}

void SupportMap::validate() const {
  if (D < 1) throw ConfigError("support map: D must be positive");
  std::map<int, int> primary_count;
  std::map<int, int> shared_count;
  auto in_range = [&](int c) {
    if (c < 0 || c >= D)
      throw ConfigError("support map: channel " + std::to_string(c) + " outside [0, " +
                        std::to_string(D) + ")");
  };
  for (const auto& f : factors) {
    for (int c : f.primary) in_range(c), ++primary_count[c];
    for (int c : f.shared) in_range(c), ++shared_count[c];
  }
  for (int c : noise) in_range(c);
  for (int j : regime_varying) {
    if (j < 0 || j >= n_factors())
      throw ConfigError("support map: regime-varying factor " + std::to_string(j) + " does not exist");
  }
  for (int c = 0; c < D; ++c) {
    const int p = primary_count.count(c) ? primary_count[c] : 0;
    const int s = shared_count.count(c) ? shared_count[c] : 0;
    const int n = static_cast<int>(noise.count(c));
    if (p > 1) throw ConfigError("support map: channel " + std::to_string(c) + " is primary for several factors");
    if (s != 0 && s != 2)
      throw ConfigError("support map: shared channel " + std::to_string(c) + " must belong to exactly two factors");
    if (p + (s ? 1 : 0) + n != 1)
      throw ConfigError("support map: channel " + std::to_string(c) +
                        " must be exactly one of primary, shared or noise");
  }
  if (!factor_names.empty() && factor_names.size() != factors.size())
    throw ConfigError("support map: factor_names size mismatch");
}

nlohmann::json SupportMap::to_json() const {
  nlohmann::json fs = nlohmann::json::array();
  for (std::size_t j = 0; j < factors.size(); ++j) {
    fs.push_back({{"name", j < factor_names.size() ? factor_names[j] : "f" + std::to_string(j)},
                  {"primary", factors[j].primary},
                  {"shared", factors[j].shared}});
  }
  return {{"D", D}, {"factors", fs}, {"noise", noise}, {"regime_varying", regime_varying}};
}

SupportMap SupportMap::from_json(const nlohmann::json& j) {
  SupportMap sm;
  try {
    sm.D = j.at("D").get<int>();
    for (const auto& f : j.at("factors")) {
      sm.factors.push_back({f.at("primary").get<std::set<int>>(), f.at("shared").get<std::set<int>>()});
      sm.factor_names.push_back(f.value("name", "f" + std::to_string(sm.factors.size() - 1)));
    }
    sm.noise = j.at("noise").get<std::set<int>>();
    sm.regime_varying = j.at("regime_varying").get<std::set<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("support map: ") + e.what());
  }
  sm.validate();
  return sm;
}

SupportMap SupportMap::double_well() {
  SupportMap sm;
  sm.D = 30;
  sm.factors = {
      {{0, 1, 2, 3}, {4}},          // z0
      {{5, 6, 7}, {8}},             // z1
      {{9, 10, 11, 12}, {4}},       // z2
      {{13, 14, 15, 16}, {8}},      // z3
      {{17, 18, 19, 20}, {21}},     // u1
      {{22, 23, 24, 25, 26}, {21}}  // u2
  };
  sm.noise = {27, 28, 29};
  sm.regime_varying = {0, 1, 2};
  sm.factor_names = {"z0", "z1", "z2", "z3", "u1", "u2"};
  return sm;
}

double mixing_family(int index, double z) {
  switch (index) {
    case 0: return std::tanh(5.0 * z);
    case 1: return z * z * z / 4.0;
    case 2: return std::erf(3.0 * z);
    case 3: return std::atan(5.0 * z);
    case 4: return std::cbrt(z);
    default: throw ConfigError("mixing family index " + std::to_string(index) + " out of range");
  }
}

std::vector<InteractionTerm> interaction_terms(const SupportMap& sm) {
  std::vector<InteractionTerm> out;
  const int n = sm.n_factors();
  for (int a = 0; a < n; ++a) {
    int taken = 0;
    for (int ch : sm.factors[static_cast<std::size_t>(a)].primary) {
      if (taken++ == 2) break;
      out.push_back({ch, a, (a + 1) % n});
    }
  }
  return out;
}

}  // namespace mosaic::synth
