#include <cmath>

#include "mosaic/common.hpp"
#include "mosaic/model.hpp"

namespace mosaic {
namespace {

namespace F = torch::nn::functional;

torch::nn::Sequential make_mlp(const std::vector<int>& widths, double slope) {
  torch::nn::Sequential seq;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    seq->push_back(torch::nn::Linear(widths[i], widths[i + 1]));
    if (i + 2 < widths.size()) seq->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(slope)));
  }
  return seq;
}

// Matches torch::nn::Linear's default: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
torch::Tensor uniform_init(at::IntArrayRef shape, int fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return torch::empty(shape).uniform_(-bound, bound);
}

void check_last_dim(const torch::Tensor& t, int64_t want, const char* what) {
  if (t.dim() < 1 || t.size(-1) != want)
    throw ConfigError(std::string(what) + ": expected last dimension " + std::to_string(want) + ", got shape " +
                      c10::str(t.sizes()));
}

}  // namespace

void ModelConfig::validate() const {
  if (D < 1) throw ConfigError("model: D must be >= 1");
  if (latent_dim < 1) throw ConfigError("model: latent_dim must be >= 1");
  if (encoder_hidden < 1 || additive_hidden < 1 || transition_hidden < 1 || regime_embed_dim < 1)
    throw ConfigError("model: all widths must be positive");
  if (encoder_depth < 2) throw ConfigError("model: encoder_depth must be >= 2");
  if (lag < 1) throw ConfigError("model: lag must be >= 1");
  if (!(slope >= 0.0 && slope < 1.0)) throw ConfigError("model: slope must lie in [0, 1)");
  if (!std::isfinite(laplace_log_scale_init)) throw ConfigError("model: laplace_log_scale_init must be finite");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"D", D},
          {"latent_dim", latent_dim},
          {"encoder_hidden", encoder_hidden},
          {"encoder_depth", encoder_depth},
          {"slope", slope},
          {"additive_hidden", additive_hidden},
          {"lag", lag},
          {"regime_embed_dim", regime_embed_dim},
          {"transition_hidden", transition_hidden},
          {"laplace_log_scale_init", laplace_log_scale_init}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k == "D") c.D = it->get<int>();
    else if (k == "latent_dim") c.latent_dim = it->get<int>();
    else if (k == "encoder_hidden") c.encoder_hidden = it->get<int>();
    else if (k == "encoder_depth") c.encoder_depth = it->get<int>();
    else if (k == "slope") c.slope = it->get<double>();
    else if (k == "additive_hidden") c.additive_hidden = it->get<int>();
    else if (k == "lag") c.lag = it->get<int>();
    else if (k == "regime_embed_dim") c.regime_embed_dim = it->get<int>();
    else if (k == "transition_hidden") c.transition_hidden = it->get<int>();
    else if (k == "laplace_log_scale_init") c.laplace_log_scale_init = it->get<double>();
    else throw ConfigError("model: unknown config key '" + k + "'");
  }
  c.validate();
  return c;
}

EncoderImpl::EncoderImpl(const ModelConfig& cfg) : D(cfg.D), n(cfg.latent_dim) {
  std::vector<int> widths{cfg.D};
  for (int i = 0; i + 1 < cfg.encoder_depth; ++i) widths.push_back(cfg.encoder_hidden);
  widths.push_back(2 * cfg.latent_dim);
  net = register_module("net", make_mlp(widths, cfg.slope));
}

std::pair<torch::Tensor, torch::Tensor> EncoderImpl::forward(const torch::Tensor& x) {
  check_last_dim(x, D, "encode");
  auto out = net->forward(x);
  auto parts = out.split(n, -1);
  return {parts[0], parts[1]};
}

void EncoderImpl::zero_output() {
  torch::NoGradGuard ng;
  auto last = net->ptr(net->size() - 1)->as<torch::nn::Linear>();
  last->weight.zero_();
  last->bias.zero_();
}

torch::Tensor reparameterize(const torch::Tensor& mu, const torch::Tensor& logvar, const torch::Tensor& noise) {
  if (mu.sizes() != logvar.sizes() || mu.sizes() != noise.sizes())
    throw ConfigError("reparameterize: mu, logvar and noise shapes differ");
  return mu + (0.5 * logvar).exp() * noise;
}

DenseDecoderImpl::DenseDecoderImpl(const ModelConfig& cfg) : D(cfg.D), n(cfg.latent_dim) {
  std::vector<int> widths{cfg.latent_dim};
  for (int i = 0; i + 1 < cfg.encoder_depth; ++i) widths.push_back(cfg.encoder_hidden);
  widths.push_back(cfg.D);
  net = register_module("net", make_mlp(widths, cfg.slope));
}

torch::Tensor DenseDecoderImpl::forward(const torch::Tensor& z) {
  check_last_dim(z, n, "decode_dense");
  return net->forward(z);
}

AdditiveDecoderImpl::AdditiveDecoderImpl(const ModelConfig& cfg)
    : D(cfg.D), n(cfg.latent_dim), H(cfg.additive_hidden), slope(cfg.slope) {
  w1 = register_parameter("w1", uniform_init({n, H}, 1));
  b1 = register_parameter("b1", uniform_init({n, H}, 1));
  w2 = register_parameter("w2", uniform_init({n, H, D}, H));
  b2 = register_parameter("b2", uniform_init({n, D}, H));
  bias = register_parameter("bias", torch::zeros({D}));
}

torch::Tensor AdditiveDecoderImpl::components(const torch::Tensor& z) {
  check_last_dim(z, n, "decode_additive");
  if (z.dim() != 2) throw ConfigError("decode_additive: expected (batch, n) latents");
  auto h = F::leaky_relu(z.unsqueeze(-1) * w1 + b1, F::LeakyReLUFuncOptions().negative_slope(slope));  // (B, n, H)
  auto out = torch::bmm(h.transpose(0, 1), w2).transpose(0, 1);                                       // (B, n, D)
  return out + b2;
}

torch::Tensor AdditiveDecoderImpl::forward(const torch::Tensor& z) { return components(z).sum(1) + bias; }

TransitionPriorImpl::TransitionPriorImpl(const ModelConfig& cfg)
    : n(cfg.latent_dim), L(cfg.lag), F(cfg.transition_input()), Hd(cfg.transition_hidden),
      E(cfg.regime_embed_dim), slope(cfg.slope) {
  w1 = register_parameter("w1", uniform_init({n, F, Hd}, F));
  b1 = register_parameter("b1", uniform_init({n, Hd}, F));
  w2 = register_parameter("w2", uniform_init({n, Hd, Hd}, Hd));
  b2 = register_parameter("b2", uniform_init({n, Hd}, Hd));
  w3 = register_parameter("w3", uniform_init({n, Hd}, Hd));
  b3 = register_parameter("b3", uniform_init({n}, Hd));
  log_scale = register_parameter("log_scale", torch::full({n}, cfg.laplace_log_scale_init));
  embed = register_module("embed", torch::nn::Embedding(2, E));
}

torch::Tensor TransitionPriorImpl::inputs(const torch::Tensor& hist, const torch::Tensor& cur, const torch::Tensor& regime) {
  if (hist.dim() != 3 || hist.size(1) != L || hist.size(2) != n)
    throw ConfigError("transition: history must be (batch, " + std::to_string(L) + ", " + std::to_string(n) + "), got " +
                      c10::str(hist.sizes()));
  if (cur.dim() != 2 || cur.size(0) != hist.size(0) || cur.size(1) != n)
    throw ConfigError("transition: current latents must be (batch, " + std::to_string(n) + "), got " + c10::str(cur.sizes()));
  if (regime.dim() != 1 || regime.size(0) != hist.size(0))
    throw ConfigError("transition: regime must be (batch), got " + c10::str(regime.sizes()));
  const auto B = hist.size(0);
  auto flat = hist.reshape({B, 1, L * n}).expand({B, n, L * n});
  auto e = embed->forward(regime.to(torch::kLong)).to(hist.dtype()).unsqueeze(1).expand({B, n, E});
  return torch::cat({flat, cur.unsqueeze(-1), e}, -1);  // (B, n, F)
}

torch::Tensor TransitionPriorImpl::residual_v2(const torch::Tensor& hist, const torch::Tensor& cur, const torch::Tensor& regime) {
  const auto opt = F::LeakyReLUFuncOptions().negative_slope(slope);
  auto x = inputs(hist, cur, regime).transpose(0, 1);        // (n, B, F)
  auto h = F::leaky_relu(torch::bmm(x, w1) + b1.unsqueeze(1), opt);  // (n, B, Hd)
  h = F::leaky_relu(torch::bmm(h, w2) + b2.unsqueeze(1), opt);
  auto r = torch::bmm(h, w3.unsqueeze(-1)).squeeze(-1) + b3.unsqueeze(1);  // (n, B)
  return r.transpose(0, 1);
}

torch::Tensor TransitionPriorImpl::residual_dim(int j, const torch::Tensor& input_j) {
  const auto opt = F::LeakyReLUFuncOptions().negative_slope(slope);
  auto h = F::leaky_relu(torch::mm(input_j, w1[j]) + b1[j], opt);
  h = F::leaky_relu(torch::mm(h, w2[j]) + b2[j], opt);
  return torch::mv(h, w3[j]) + b3[j];
}

torch::Tensor TransitionPriorImpl::residual_v1(const torch::Tensor& hist, const torch::Tensor& cur, const torch::Tensor& regime) {
  auto x = inputs(hist, cur, regime);
  std::vector<torch::Tensor> cols;
  cols.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) cols.push_back(residual_dim(j, x.select(1, j)));
  return torch::stack(cols, 1);
}

torch::Tensor TransitionPriorImpl::logdet_v2(const torch::Tensor& hist, const torch::Tensor& cur, const torch::Tensor& regime,
                                             bool create_graph, torch::Tensor* residual_out) {
  torch::AutoGradMode grad_on(true);
  torch::Tensor z = cur.requires_grad() ? cur : cur.detach().requires_grad_(true);
  auto r = residual_v2(hist, z, regime);
  // ∂r_j/∂z_k = 0 for k ≠ j, so the gradient of Σ r is the diagonal.
  auto g = torch::autograd::grad({r.sum()}, {z}, {}, /*retain_graph=*/true, create_graph)[0];
  if (residual_out) *residual_out = r;
  return g.abs().clamp_min(kLogDetFloor).log();
}

torch::Tensor TransitionPriorImpl::logdet_v1(const torch::Tensor& hist, const torch::Tensor& cur, const torch::Tensor& regime) {
  torch::AutoGradMode grad_on(true);
  auto x_all = inputs(hist.detach(), cur.detach(), regime).detach();
  const auto B = x_all.size(0);
  const int slot = L * n;
  std::vector<torch::Tensor> cols;
  for (int j = 0; j < n; ++j) {
    auto x = x_all.select(1, j).clone().requires_grad_(true);  // (B, F)
    auto r = residual_dim(j, x);                              // (B)
    auto jac = torch::empty({B, B, F}, x.options().requires_grad(false));
    for (int64_t b = 0; b < B; ++b) {
      auto seed = torch::zeros_like(r);
      seed[b] = 1.0;
      jac[b] = torch::autograd::grad({r}, {x}, {seed}, /*retain_graph=*/true)[0];
    }
    cols.push_back(jac.diagonal(0, 0, 1).select(0, slot));  // diagonal(0,0,1) puts the batch axis last: (F, B)
  }
  return torch::stack(cols, 1).abs().clamp_min(kLogDetFloor).log();
}

torch::Tensor laplace_logprob(const torch::Tensor& residual, const torch::Tensor& log_scale, const torch::Tensor& logdet) {
  return -residual.abs() * (-log_scale).exp() - log_scale - std::log(2.0) + logdet;
}

PriorEvaluation TransitionPriorImpl::evaluate(const torch::Tensor& hist, const torch::Tensor& cur, const torch::Tensor& regime,
                                              bool create_graph) {
  PriorEvaluation ev;
  ev.logdet = logdet_v2(hist, cur, regime, create_graph, &ev.residual);
  if (!create_graph) ev.residual = ev.residual.detach();
  ev.log_scale = log_scale;
  ev.logprob = laplace_logprob(ev.residual, log_scale, ev.logdet);
  return ev;
}

nlohmann::json LatentStats::to_json() const { return {{"mean", mean}, {"std", std}}; }

LatentStats LatentStats::from_json(const nlohmann::json& j) {
  LatentStats s;
  if (j.is_null()) return s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  if (s.mean.size() != s.std.size()) throw DataError("latent stats: mean/std lengths differ");
  return s;
}

MosaicModelImpl::MosaicModelImpl(const ModelConfig& c) : cfg(c) {
  cfg.validate();
  encoder = register_module("encoder", Encoder(cfg));
  dense = register_module("dense", DenseDecoder(cfg));
  additive = register_module("additive", AdditiveDecoder(cfg));
  prior = register_module("prior", TransitionPrior(cfg));
}

MosaicModel make_model(const ModelConfig& cfg, std::uint64_t seed) {
  torch::manual_seed(seed);
  return MosaicModel(cfg);
}

}  // namespace mosaic
