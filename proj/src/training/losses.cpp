#include <cmath>
#include <numbers>

#include "mosaic/common.hpp"
#include "mosaic/training.hpp"

namespace mosaic {
namespace {

constexpr int64_t kEncodeChunk = 4096;

void check_batch(const MosaicModelImpl& m, const torch::Tensor& x) {
  if (x.dim() != 3 || x.size(2) != m.cfg.D || x.size(1) != m.cfg.lag + 1)
    throw DataError("loss: expected windows (B, " + std::to_string(m.cfg.lag + 1) + ", " + std::to_string(m.cfg.D) +
                    "), got " + c10::str(x.sizes()));
}

// log N(z; mu, exp(logvar)) summed over latents, with z = mu + exp(logvar/2)·noise.
torch::Tensor gaussian_logpdf_at_noise(const torch::Tensor& logvar, const torch::Tensor& noise) {
  const double log2pi = std::log(2.0 * std::numbers::pi);
  return (-0.5 * noise * noise - 0.5 * logvar - 0.5 * log2pi).sum(-1);
}

}  // namespace

WindowTensors to_tensors(const synth::TimeSeriesDataset& ds) {
  if (ds.windows < 1) throw DataError("dataset has no windows");
  if (static_cast<std::int64_t>(ds.X.size()) != ds.windows * ds.steps * ds.channels || static_cast<std::int64_t>(ds.C.size()) != ds.windows)
    throw DataError("dataset arrays do not match its declared shape");
  WindowTensors t;
  t.x = torch::from_blob(const_cast<float*>(ds.X.data()), {ds.windows, ds.steps, ds.channels}, torch::kFloat32).clone();
  std::vector<int64_t> labels(ds.C.begin(), ds.C.end());
  t.regime = torch::tensor(labels, torch::kInt64);
  return t;
}

torch::Tensor gaussian_kl(const torch::Tensor& mu, const torch::Tensor& logvar) {
  return 0.5 * (mu * mu + logvar.exp() - 1.0 - logvar).sum(-1);
}

torch::Tensor temporal_kl_samples(MosaicModelImpl& m, const torch::Tensor& x, const torch::Tensor& regime,
                                  const torch::Tensor& noise, bool create_graph) {
  check_batch(m, x);
  const int L = m.cfg.lag;
  auto [mu, logvar] = m.encoder->forward(x);
  auto z = reparameterize(mu, logvar, noise);
  auto hist = z.narrow(1, 0, L);
  auto cur = z.select(1, L);
  auto log_q = gaussian_logpdf_at_noise(logvar.select(1, L), noise.select(1, L));
  auto ev = m.prior->evaluate(hist, cur, regime, create_graph);
  return log_q - ev.logprob.sum(-1);
}

namespace {

torch::Tensor recon_error(const torch::Tensor& xhat, const torch::Tensor& x, const TrainConfig& cfg) {
  auto sq = (xhat - x).pow(2);
  return cfg.recon == ReconReduction::Mean ? sq.mean() : sq.sum(-1).mean();
}

}  // namespace

Stage1Terms stage1_loss(MosaicModelImpl& m, const torch::Tensor& x, const torch::Tensor& regime, const torch::Tensor& noise,
                        const TrainConfig& cfg) {
  check_batch(m, x);
  const int L = m.cfg.lag;
  auto [mu, logvar] = m.encoder->forward(x);
  auto z = reparameterize(mu, logvar, noise);
  auto xhat = m.dense->forward(z);

  Stage1Terms t;
  t.recon = recon_error(xhat, x, cfg);
  t.gaussian_kl = gaussian_kl(mu.narrow(1, 0, L), logvar.narrow(1, 0, L)).mean();
  const double gamma = cfg.effective_gamma();
  if (gamma > 0.0) {
    auto log_q = gaussian_logpdf_at_noise(logvar.select(1, L), noise.select(1, L));
    auto ev = m.prior->evaluate(z.narrow(1, 0, L), z.select(1, L), regime, /*create_graph=*/true);
    t.temporal_kl = (log_q - ev.logprob.sum(-1)).mean();
  } else {
    t.temporal_kl = torch::zeros({}, x.options());
  }
  t.total = t.recon + cfg.beta * t.gaussian_kl + gamma * t.temporal_kl;
  return t;
}

Posterior encode_frozen(MosaicModelImpl& m, const torch::Tensor& x) {
  check_batch(m, x);
  torch::NoGradGuard ng;
  std::vector<torch::Tensor> mus, lvs;
  for (int64_t s = 0; s < x.size(0); s += kEncodeChunk) {
    auto [mu, lv] = m.encoder->forward(x.narrow(0, s, std::min(kEncodeChunk, x.size(0) - s)));
    mus.push_back(mu);
    lvs.push_back(lv);
  }
  return {torch::cat(mus), torch::cat(lvs)};
}

Stage2Terms stage2_loss(MosaicModelImpl& m, const torch::Tensor& x, const Posterior& post, const torch::Tensor& noise,
                        double lambda, const TrainConfig& cfg) {
  check_batch(m, x);
  const auto B = x.size(0), S = x.size(1);
  const int n = m.cfg.latent_dim;
  auto z = reparameterize(post.mu.detach(), post.logvar.detach(), noise).reshape({B * S, n});

  Stage2Terms t;
  if (cfg.dense_stage2) {
    auto xhat = m.dense->forward(z).reshape({B, S, m.cfg.D});
    t.recon = recon_error(xhat, x, cfg);
    t.sparsity = torch::zeros({}, x.options());
    t.alive = -1;
    t.total = stage2_recon_weight(cfg) * t.recon;
    return t;
  }

  auto xhat = m.additive->forward(z).reshape({B, S, m.cfg.D});
  t.recon = recon_error(xhat, x, cfg);
  if (m.stats.empty()) throw DataError("stage 2: latent standardization stats are missing");
  auto mean = torch::tensor(m.stats.mean, torch::kFloat64).to(x.dtype());
  auto std = torch::tensor(m.stats.std, torch::kFloat64).to(x.dtype());
  auto A = influence::contrast_tensor(*m.additive, mean, std);
  {
    auto mass = A.detach().sum(0);
    t.alive = (mass > cfg.alive_frac * mass.max()).sum().item<int>();
  }
  switch (cfg.sparsity) {
    case SparsityKind::Entropy: t.sparsity = influence::entropy_penalty_tensor(A, cfg.alive_frac); break;
    case SparsityKind::GroupLasso: t.sparsity = influence::group_lasso_penalty_tensor(A); break;
    case SparsityKind::None: t.sparsity = influence::entropy_penalty_tensor(A.detach(), cfg.alive_frac); break;
  }
  const double w = stage2_recon_weight(cfg);
  t.total = lambda > 0.0 ? w * t.recon + lambda * t.sparsity : w * t.recon;
  return t;
}

LatentStats posterior_stats(const torch::Tensor& mu_last) {
  if (mu_last.dim() != 2 || mu_last.size(0) < 1) throw DataError("posterior stats: expected (W, n) posterior means");
  auto d = mu_last.detach().to(torch::kFloat64);
  auto mean = d.mean(0);
  auto std = d.std(0, /*unbiased=*/false).clamp_min(1e-6);
  LatentStats s;
  s.mean.assign(mean.data_ptr<double>(), mean.data_ptr<double>() + mean.numel());
  s.std.assign(std.data_ptr<double>(), std.data_ptr<double>() + std.numel());
  return s;
}

}  // namespace mosaic
