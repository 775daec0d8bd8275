#pragma once

// Decoder-driven influence scores and the differentiable sparsity penalties
// used in Stage 2.

#include <functional>

#include <Eigen/Dense>
#include <torch/torch.h>

#include "mosaic/influence.hpp"
#include "mosaic/model.hpp"

namespace mosaic::influence {

using DecoderFn = std::function<torch::Tensor(const torch::Tensor&)>;

Eigen::MatrixXd to_eigen(const torch::Tensor& t);  // 2-D tensor -> double matrix
torch::Tensor from_eigen(const Eigen::MatrixXd& m, torch::Dtype dtype = torch::kFloat32);

/// |f_j(mean_j + std_j) - f_j(mean_j - std_j)| as a (D, n̂) tensor; differentiable in the decoder.
torch::Tensor contrast_tensor(AdditiveDecoderImpl& dec, const torch::Tensor& mean, const torch::Tensor& std);

/// Population variance over samples of per-component outputs C (N, n̂, D), as (D, n̂).
torch::Tensor variance_from_components(const torch::Tensor& components);
/// max - min over grid points of per-component outputs C (G, n̂, D), as (D, n̂).
torch::Tensor range_from_components(const torch::Tensor& components);

InfluenceMatrix influence_contrast(AdditiveDecoderImpl& dec, const LatentStats& stats);
/// z: (N, n̂) samples from the encoder marginal.
InfluenceMatrix influence_variance(AdditiveDecoderImpl& dec, const torch::Tensor& z);
/// Grid of `grid` points per latent spanning the empirical [q_lo, q_hi] interval.
InfluenceMatrix influence_range(AdditiveDecoderImpl& dec, const torch::Tensor& z, double q_lo = 0.05, double q_hi = 0.95,
                                int grid = 512);
/// A_ij = mean over samples of |∂x̂_i/∂z_j|, one reverse pass per channel.
InfluenceMatrix influence_jacobian(const DecoderFn& decoder, const torch::Tensor& z);

/// Mean normalized column entropy over alive columns; the alive mask is not differentiated.
torch::Tensor entropy_penalty_tensor(const torch::Tensor& A, double alive_frac = 0.01);
/// Σ_j ||A_:,j||_2, smoothed at zero.
torch::Tensor group_lasso_penalty_tensor(const torch::Tensor& A);

}  // namespace mosaic::influence
