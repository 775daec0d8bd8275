#include <algorithm>

#include "mosaic/common.hpp"
#include "mosaic/influence_scores.hpp"

namespace mosaic::influence {
namespace {

constexpr int64_t kChunk = 4096;

InfluenceMatrix wrap(const torch::Tensor& A, ScoreKind kind) {
  InfluenceMatrix im;
  im.A = to_eigen(A);
  im.kind = kind;
  im.validate();
  return im;
}

void check_samples(const torch::Tensor& z, int n, const char* what) {
  if (z.dim() != 2 || z.size(1) != n || z.size(0) < 1)
    throw DataError(std::string(what) + ": expected (N, " + std::to_string(n) + ") latent samples, got " + c10::str(z.sizes()));
}

}  // namespace

Eigen::MatrixXd to_eigen(const torch::Tensor& t) {
  if (t.dim() != 2) throw ConfigError("to_eigen: expected a 2-D tensor");
  auto c = t.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  Eigen::MatrixXd m(c.size(0), c.size(1));
  auto acc = c.accessor<double, 2>();
  for (int64_t i = 0; i < c.size(0); ++i)
    for (int64_t j = 0; j < c.size(1); ++j) m(i, j) = acc[i][j];
  return m;
}

torch::Tensor from_eigen(const Eigen::MatrixXd& m, torch::Dtype dtype) {
  auto t = torch::empty({m.rows(), m.cols()}, torch::kFloat64);
  auto acc = t.accessor<double, 2>();
  for (int64_t i = 0; i < m.rows(); ++i)
    for (int64_t j = 0; j < m.cols(); ++j) acc[i][j] = m(i, j);
  return t.to(dtype);
}

torch::Tensor contrast_tensor(AdditiveDecoderImpl& dec, const torch::Tensor& mean, const torch::Tensor& std) {
  if (mean.dim() != 1 || mean.size(0) != dec.n || std.sizes() != mean.sizes())
    throw DataError("contrast: standardization stats must have length " + std::to_string(dec.n));
  if ((std <= 0).any().item<bool>()) throw DataError("contrast: standardization std must be positive");
  auto probes = torch::stack({mean + std, mean - std});  // (2, n)
  auto comps = dec.components(probes);                    // (2, n, D)
  return (comps[0] - comps[1]).abs().transpose(0, 1);
}

torch::Tensor variance_from_components(const torch::Tensor& components) {
  if (components.dim() != 3) throw ConfigError("variance score: expected (N, n, D) components");
  return components.var(0, /*unbiased=*/false).transpose(0, 1);
}

torch::Tensor range_from_components(const torch::Tensor& components) {
  if (components.dim() != 3) throw ConfigError("range score: expected (G, n, D) components");
  return (components.amax(0) - components.amin(0)).transpose(0, 1);
}

InfluenceMatrix influence_contrast(AdditiveDecoderImpl& dec, const LatentStats& stats) {
  if (stats.empty()) throw DataError("contrast: standardization stats unavailable");
  torch::NoGradGuard ng;
  auto opts = dec.w1.options();
  auto mean = torch::tensor(stats.mean, torch::kFloat64).to(opts.dtype());
  auto std = torch::tensor(stats.std, torch::kFloat64).to(opts.dtype());
  auto im = wrap(contrast_tensor(dec, mean, std), ScoreKind::Contrast);
  im.stat_mean = Eigen::Map<const Eigen::VectorXd>(stats.mean.data(), static_cast<Eigen::Index>(stats.mean.size()));
  im.stat_std = Eigen::Map<const Eigen::VectorXd>(stats.std.data(), static_cast<Eigen::Index>(stats.std.size()));
  return im;
}

InfluenceMatrix influence_variance(AdditiveDecoderImpl& dec, const torch::Tensor& z) {
  check_samples(z, dec.n, "variance score");
  torch::NoGradGuard ng;
  const auto N = z.size(0);
  // Two passes in double over chunks keep memory bounded for long datasets.
  auto sum = torch::zeros({dec.n, dec.D}, torch::kFloat64);
  for (int64_t s = 0; s < N; s += kChunk) sum += dec.components(z.narrow(0, s, std::min(kChunk, N - s))).to(torch::kFloat64).sum(0);
  auto mean = sum / static_cast<double>(N);
  auto ss = torch::zeros_like(sum);
  for (int64_t s = 0; s < N; s += kChunk) {
    auto c = dec.components(z.narrow(0, s, std::min(kChunk, N - s))).to(torch::kFloat64) - mean;
    ss += (c * c).sum(0);
  }
  return wrap((ss / static_cast<double>(N)).transpose(0, 1), ScoreKind::Variance);
}

InfluenceMatrix influence_range(AdditiveDecoderImpl& dec, const torch::Tensor& z, double q_lo, double q_hi, int grid) {
  check_samples(z, dec.n, "range score");
  if (!(0.0 <= q_lo && q_lo < q_hi && q_hi <= 1.0)) throw ConfigError("range score: need 0 <= q_lo < q_hi <= 1");
  if (grid < 2) throw ConfigError("range score: grid must have at least 2 points");
  torch::NoGradGuard ng;
  auto zd = z.to(torch::kFloat64);
  auto lo = torch::quantile(zd, q_lo, 0);
  auto hi = torch::quantile(zd, q_hi, 0);
  auto t = torch::linspace(0.0, 1.0, grid, torch::kFloat64).unsqueeze(1);
  auto pts = (lo + t * (hi - lo)).to(dec.w1.dtype());  // (grid, n)
  return wrap(range_from_components(dec.components(pts)), ScoreKind::Range);
}

InfluenceMatrix influence_jacobian(const DecoderFn& decoder, const torch::Tensor& z) {
  if (z.dim() != 2 || z.size(0) < 1) throw DataError("jacobian score: expected (N, n) latent samples");
  torch::AutoGradMode grad_on(true);
  const auto N = z.size(0);
  torch::Tensor acc;
  for (int64_t s = 0; s < N; s += kChunk) {
    auto zc = z.narrow(0, s, std::min(kChunk, N - s)).detach().clone().requires_grad_(true);
    auto x = decoder(zc);
    if (x.dim() != 2 || x.size(0) != zc.size(0)) throw DataError("jacobian score: decoder must map (N, n) to (N, D)");
    if (!acc.defined()) acc = torch::zeros({x.size(1), z.size(1)}, torch::kFloat64);
    // Samples are independent, so the gradient of a channel's batch sum holds every per-sample row.
    for (int64_t i = 0; i < x.size(1); ++i) {
      auto g = torch::autograd::grad({x.select(1, i).sum()}, {zc}, {}, /*retain_graph=*/true)[0];
      acc[i] += g.abs().to(torch::kFloat64).sum(0);
    }
  }
  return wrap(acc / static_cast<double>(N), ScoreKind::Jacobian);
}

torch::Tensor entropy_penalty_tensor(const torch::Tensor& A, double alive_frac) {
  if (A.dim() != 2) throw ConfigError("entropy penalty: expected a (D, n) matrix");
  auto mass = A.sum(0);
  auto m = mass.detach();
  auto alive = (m > alive_frac * m.max()).to(A.dtype());
  const double count = alive.sum().item<double>();
  if (count == 0.0) {
    log_warn("entropy penalty: no alive columns, penalty set to 0");
    return (A * 0.0).sum();
  }
  auto p = A / (mass + kEntropyEps);
  auto H = -(p * (p + kEntropyEps).log()).sum(0);
  return (H * alive).sum() / count;
}

torch::Tensor group_lasso_penalty_tensor(const torch::Tensor& A) {
  if (A.dim() != 2) throw ConfigError("group-lasso penalty: expected a (D, n) matrix");
  return ((A * A).sum(0) + kEntropyEps).sqrt().sum();
}

}  // namespace mosaic::influence
