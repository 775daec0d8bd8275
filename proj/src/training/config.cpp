#include <cmath>
#include <set>

#include "mosaic/common.hpp"
#include "mosaic/training.hpp"

namespace mosaic {
namespace {

nlohmann::json parse_value(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    return text;
  }
}

nlohmann::json::json_pointer pointer_for(const std::string& dotted) {
  if (dotted.empty()) throw ConfigError("config override: empty key");
  std::string p;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    const auto part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("config override: malformed key '" + dotted + "'");
    p += "/" + part;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return nlohmann::json::json_pointer(p);
}

}  // namespace

std::string to_string(SparsityKind k) {
  switch (k) {
    case SparsityKind::Entropy: return "entropy";
    case SparsityKind::GroupLasso: return "group_lasso";
    case SparsityKind::None: return "none";
  }
  return "entropy";
}

SparsityKind sparsity_kind_from_string(const std::string& s) {
  if (s == "entropy") return SparsityKind::Entropy;
  if (s == "group_lasso" || s == "groupLasso" || s == "group-lasso") return SparsityKind::GroupLasso;
  if (s == "none") return SparsityKind::None;
  throw ConfigError("unknown sparsity kind '" + s + "' (expected entropy, group_lasso or none)");
}

std::string to_string(ReconReduction r) { return r == ReconReduction::Mean ? "mean" : "channel_sum"; }

ReconReduction recon_reduction_from_string(const std::string& s) {
  if (s == "channel_sum") return ReconReduction::ChannelSum;
  if (s == "mean") return ReconReduction::Mean;
  throw ConfigError("unknown recon reduction '" + s + "' (expected channel_sum or mean)");
}

void TrainConfig::validate() const {
  if (!(beta >= 0.0) || !(gamma >= 0.0)) throw ConfigError("train: beta and gamma must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (stage1_epochs < 0 || stage2_epochs < 0) throw ConfigError("train: epoch counts must be >= 0");
  if (!(lambda_max >= 0.0)) throw ConfigError("train: lambda_max must be >= 0");
  if (warmup_epochs < 0 || ramp_epochs < 1) throw ConfigError("train: warmup must be >= 0 and ramp >= 1");
  if (stage2_epochs > 0 && warmup_epochs + ramp_epochs > stage2_epochs)
    throw ConfigError("train: warmup_epochs + ramp_epochs must not exceed stage2_epochs");
  if (!(grad_clip > 0.0)) throw ConfigError("train: grad_clip must be positive");
  if (!(alive_frac >= 0.0 && alive_frac < 1.0)) throw ConfigError("train: alive_frac must lie in [0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"beta", beta},
          {"gamma", gamma},
          {"lr", lr},
          {"weight_decay", weight_decay},
          {"batch_size", batch_size},
          {"stage1_epochs", stage1_epochs},
          {"stage2_epochs", stage2_epochs},
          {"lambda_max", lambda_max},
          {"warmup_epochs", warmup_epochs},
          {"ramp_epochs", ramp_epochs},
          {"sparsity", to_string(sparsity)},
          {"recon", to_string(recon)},
          {"stage2_batch_sum", stage2_batch_sum},
          {"no_temporal", no_temporal},
          {"dense_stage2", dense_stage2},
          {"grad_clip", grad_clip},
          {"alive_frac", alive_frac},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  const auto defaults = c.to_json();
  for (const auto& [key, _] : j.items())
    if (!defaults.contains(key)) throw ConfigError("train config: unknown key '" + key + "'");
  try {
    c.beta = j.value("beta", c.beta);
    c.gamma = j.value("gamma", c.gamma);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.stage1_epochs = j.value("stage1_epochs", c.stage1_epochs);
    c.stage2_epochs = j.value("stage2_epochs", c.stage2_epochs);
    c.lambda_max = j.value("lambda_max", c.lambda_max);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.ramp_epochs = j.value("ramp_epochs", c.ramp_epochs);
    if (j.contains("sparsity")) c.sparsity = sparsity_kind_from_string(j.at("sparsity").get<std::string>());
    if (j.contains("recon")) c.recon = recon_reduction_from_string(j.at("recon").get<std::string>());
    c.stage2_batch_sum = j.value("stage2_batch_sum", c.stage2_batch_sum);
    c.no_temporal = j.value("no_temporal", c.no_temporal);
    c.dense_stage2 = j.value("dense_stage2", c.dense_stage2);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.alive_frac = j.value("alive_frac", c.alive_frac);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::type_error& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

double stage2_recon_weight(const TrainConfig& cfg) { return cfg.stage2_batch_sum ? static_cast<double>(cfg.batch_size) : 1.0; }

double lambda_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ConfigError("lambda_schedule: epoch must be >= 0");
  if (cfg.sparsity == SparsityKind::None || cfg.dense_stage2) return 0.0;
  if (epoch < cfg.warmup_epochs) return 0.0;
  const double frac = static_cast<double>(epoch - cfg.warmup_epochs + 1) / cfg.ramp_epochs;
  return cfg.lambda_max * std::min(1.0, frac);
}

void RunConfig::validate() const {
  if (dataset != "synthetic" && dataset != "tokamak") throw ConfigError("run config: dataset must be synthetic or tokamak");
  synth.validate();
  tokamak.validate();
  model.validate();
  train.validate();
  if (n_over_d && !(*n_over_d > 0.0)) throw ConfigError("run config: n_over_d must be positive");
  const int D = dataset == "synthetic" ? synth.D : synth::kTokamakChannels;
  const int lag = dataset == "synthetic" ? synth.lag : tokamak.lag;
  if (model.D != D) throw ConfigError("run config: model.D (" + std::to_string(model.D) + ") must equal the dataset's " + std::to_string(D));
  if (model.lag != lag) throw ConfigError("run config: model.lag must equal the dataset lag");
}

nlohmann::json RunConfig::to_json() const {
  return {{"name", name},
          {"dataset", dataset},
          {"synth", synth.to_json()},
          {"n_over_d", n_over_d ? nlohmann::json(*n_over_d) : nlohmann::json(nullptr)},
          {"tokamak", tokamak.to_json()},
          {"model", model.to_json()},
          {"train", train.to_json()}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> keys{"name", "dataset", "synth", "n_over_d", "tokamak", "model", "train"};
  for (const auto& [key, _] : j.items())
    if (!keys.count(key)) throw ConfigError("run config: unknown key '" + key + "'");
  RunConfig c;
  try {
    c.name = j.value("name", c.name);
    c.dataset = j.value("dataset", c.dataset);
    if (j.contains("synth")) c.synth = synth::SynthConfig::from_json(j.at("synth"));
    if (j.contains("n_over_d") && !j.at("n_over_d").is_null()) c.n_over_d = j.at("n_over_d").get<double>();
    if (j.contains("tokamak")) c.tokamak = synth::TokamakConfig::from_json(j.at("tokamak"));
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
    if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
  } catch (const nlohmann::json::type_error& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<std::string> RunConfig::preset_names() { return {"synthetic", "tokamak"}; }

RunConfig RunConfig::preset(const std::string& name) {
  RunConfig c;
  c.name = name;
  if (name == "synthetic") {
    c.dataset = "synthetic";
    c.model.D = c.synth.D;
    c.model.latent_dim = 12;
    c.model.encoder_hidden = 128;
  } else if (name == "tokamak") {
    c.dataset = "tokamak";
    c.model.D = synth::kTokamakChannels;
    c.model.latent_dim = 5;
    c.model.encoder_hidden = 64;
  } else {
    throw ConfigError("unknown preset '" + name + "' (available: synthetic, tokamak)");
  }
  c.model.additive_hidden = 4;
  c.model.lag = 2;
  c.validate();
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) { apply({{key, parse_value(value)}}); }

void RunConfig::apply(const nlohmann::json& overrides) {
  auto j = to_json();
  for (const auto& [key, value] : overrides.items()) {
    const auto ptr = pointer_for(key);
    if (!j.contains(ptr)) throw ConfigError("config override: unknown key '" + key + "'");
    // Numbers given as strings on the command line stay strings only where the field is a string.
    auto& slot = j[ptr];
    if (value.is_string() && !slot.is_string() && !slot.is_null())
      throw ConfigError("config override: '" + key + "' expects a " + std::string(slot.type_name()) + ", got '" +
                        value.get<std::string>() + "'");
    slot = value;
  }
  *this = from_json(j);
}

std::string RunConfig::data_key() const {
  nlohmann::json j = {{"dataset", dataset}};
  if (dataset == "synthetic") {
    j["synth"] = synth.to_json();
    j["n_over_d"] = n_over_d ? nlohmann::json(*n_over_d) : nlohmann::json(nullptr);
  } else {
    j["tokamak"] = tokamak.to_json();
  }
  return content_hash(j.dump());
}

synth::TimeSeriesDataset make_dataset(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.dataset == "tokamak") return synth::generate_tokamak(cfg.tokamak);
  if (!cfg.n_over_d) return synth::generate_synthetic(cfg.synth);

  // Level datasets thin the full trajectory by a stride, then cap to N/D·D windows.
  auto base_cfg = cfg.synth;
  base_cfg.subsample_stride = 1;
  base_cfg.max_windows = 0;
  base_cfg.label_flip_rate = 0.0;
  const auto base = synth::generate_synthetic(base_cfg);
  auto level_cfg = cfg.synth;
  level_cfg.subsample_stride = synth::stride_for_level(*cfg.n_over_d, cfg.synth.D, base.windows);
  level_cfg.max_windows = static_cast<std::int64_t>(std::llround(*cfg.n_over_d * cfg.synth.D));
  auto ds = synth::generate_synthetic(level_cfg);
  // Subsampling loses a few windows to labelling and balancing; tighten the stride until the cap binds.
  while (ds.windows < level_cfg.max_windows && level_cfg.subsample_stride > 1) {
    --level_cfg.subsample_stride;
    ds = synth::generate_synthetic(level_cfg);
  }
  if (ds.windows < level_cfg.max_windows)
    log_warn("level N/D=" + std::to_string(*cfg.n_over_d) + " needs " + std::to_string(level_cfg.max_windows) +
             " windows, the trajectory yields " + std::to_string(ds.windows));
  ds.metadata["subsample_stride"] = level_cfg.subsample_stride;
  ds.metadata["n_over_d"] = *cfg.n_over_d;
  ds.metadata["base_windows"] = base.windows;
  return ds;
}

}  // namespace mosaic
