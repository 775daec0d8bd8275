#include "mosaic/common.hpp"
#include "mosaic/training.hpp"

namespace mosaic {
namespace {

torch::Tensor final_frames(const synth::TimeSeriesDataset& ds) {
  return to_tensors(ds).x.select(1, ds.lag()).contiguous();
}

torch::Tensor final_means(MosaicModelImpl& m, const synth::TimeSeriesDataset& ds) {
  if (ds.channels != m.cfg.D) throw DataError("evaluate: dataset channels do not match the model");
  torch::NoGradGuard ng;
  auto x = final_frames(ds);
  std::vector<torch::Tensor> out;
  constexpr int64_t chunk = 4096;
  for (int64_t s = 0; s < x.size(0); s += chunk) out.push_back(m.encoder->forward(x.narrow(0, s, std::min(chunk, x.size(0) - s))).first);
  return torch::cat(out);
}

}  // namespace

Eigen::MatrixXd posterior_means(MosaicModelImpl& m, const synth::TimeSeriesDataset& ds) {
  return influence::to_eigen(final_means(m, ds));
}

influence::InfluenceMatrix influence_of(MosaicModelImpl& m, const synth::TimeSeriesDataset& ds,
                                        std::optional<influence::ScoreKind> kind) {
  if (m.stage < 2) throw DataError("influence: the model has not completed Stage 2");
  const auto k = kind.value_or(m.dense_stage2 ? influence::ScoreKind::Jacobian : influence::ScoreKind::Contrast);
  if (m.dense_stage2 && k != influence::ScoreKind::Jacobian)
    throw ConfigError("influence: a dense Stage-2 decoder only supports the jacobian score");
  switch (k) {
    case influence::ScoreKind::Contrast: return influence::influence_contrast(*m.additive, m.stats);
    case influence::ScoreKind::Variance: return influence::influence_variance(*m.additive, final_means(m, ds));
    case influence::ScoreKind::Range: return influence::influence_range(*m.additive, final_means(m, ds));
    case influence::ScoreKind::Jacobian: {
      auto z = final_means(m, ds);
      if (m.dense_stage2) return influence::influence_jacobian([&](const torch::Tensor& v) { return m.dense->forward(v); }, z);
      return influence::influence_jacobian([&](const torch::Tensor& v) { return m.additive->forward(v); }, z);
    }
  }
  throw ConfigError("influence: unknown score kind");
}

metrics::RhoEstimate estimate_rho(MosaicModelImpl& m, const synth::TimeSeriesDataset& ds) {
  // The dense decoder is the Stage-1 one only when Stage 2 fit the additive decoder.
  if (m.stage < 2 || m.dense_stage2) return {};
  torch::NoGradGuard ng;
  auto x = final_frames(ds).to(torch::kFloat64);
  auto z = final_means(m, ds);
  auto dense_mse = (m.dense->forward(z).to(torch::kFloat64) - x).pow(2).mean().item<double>();
  auto additive_mse = (m.additive->forward(z).to(torch::kFloat64) - x).pow(2).mean().item<double>();
  auto total_var = x.var(0, /*unbiased=*/false).mean().item<double>();
  return metrics::rho_from_errors(dense_mse, additive_mse, total_var);
}

metrics::MetricsReport evaluate(MosaicModelImpl& m, const synth::TimeSeriesDataset& ds, const EvalOptions& opts) {
  metrics::ReportInputs in;
  in.Zhat = posterior_means(m, ds);
  in.labels = ds.eval_labels();
  if (ds.has_truth()) in.Ztrue = ds.ztrue_matrix();
  in.support = ds.support;
  std::optional<influence::InfluenceMatrix> im;
  if (m.stage >= 2) {
    im = influence_of(m, ds, opts.score);
    in.A = im->A;
  }
  if (opts.rho && m.stage >= 2 && !m.dense_stage2) in.rho = estimate_rho(m, ds);
  in.gate = opts.gate;
  in.seed = opts.seed;
  auto report = metrics::compute_report(in);
  report.extra["stage"] = m.stage;
  report.extra["windows"] = ds.windows;
  if (im) report.extra["score"] = influence::to_string(im->kind);
  return report;
}

}  // namespace mosaic
