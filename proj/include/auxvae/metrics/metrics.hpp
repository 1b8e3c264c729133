#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "auxvae/tensor/tensor.hpp"

namespace auxvae::metrics {

// Corr(u_j, z_l) over an evaluation set, d x d_z.
struct CorrMatrixReport {
  tensor::Tensor<double> corr;
  std::vector<std::string> factor_names;
  std::vector<std::size_t> latent_indices;
  std::size_t samples = 0;
};

// u: N x d, z: N x d_z, N >= 2. Names default to u0, u1, ...
CorrMatrixReport corr_report(const tensor::Tensor<double>& u, const tensor::Tensor<double>& z,
                             std::vector<std::string> factor_names = {});

// Linear disentanglement score: mean over factors of max_l |c| / sum_l |c|.
// A row of zeros scores 1/d_z. Result in [1/d_z, 1].
double lds(const tensor::Tensor<double>& corr);
double lds(const CorrMatrixReport& report);

// Univariate OLS R^2 of each latent predicting each factor, d x d_z.
tensor::Tensor<double> sap_scores(const tensor::Tensor<double>& u, const tensor::Tensor<double>& z);
// Mean over factors of the gap between the best and second best R^2.
double sap(const tensor::Tensor<double>& u, const tensor::Tensor<double>& z);

struct SsimOptions {
  double dynamic_range = 1.0;
  double k1 = 0.01;
  double k2 = 0.03;
  std::size_t window = 7;
};

// Mean SSIM over all window x window uniform windows lying inside the image.
// x, y: H x W. Local variances use the unbiased (n - 1) normalisation.
double ssim(const tensor::Tensor<double>& x, const tensor::Tensor<double>& y,
            const SsimOptions& options = {});

// Per-image SSIM for two N x C x H x W batches (channels averaged).
std::vector<double> ssim_batch(const tensor::Tensor<float>& x, const tensor::Tensor<float>& y,
                               const SsimOptions& options = {});

// Mean squared difference over all elements.
double mse(const tensor::Tensor<double>& x, const tensor::Tensor<double>& y);
double mse(const tensor::Tensor<float>& x, const tensor::Tensor<float>& y);

struct Summary {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
  std::size_t count = 0;
};

// Quartiles by linear interpolation between order statistics.
Summary summarize(std::vector<double> values);
double median(std::vector<double> values);

struct MetricsReport {
  double lds = 0.0;
  double sap = 0.0;
  double mse = 0.0;
  Summary ssim;
  CorrMatrixReport corr;
};

// "metric,value" rows, a blank line, then the factor x latent block.
void write_metrics_csv(std::ostream& os, const MetricsReport& report);

}  // namespace auxvae::metrics
