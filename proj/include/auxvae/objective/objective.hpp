#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "auxvae/genmodel/model.hpp"
#include "auxvae/tensor/graph.hpp"

namespace auxvae::objective {

inline constexpr double kCorrEpsilon = 1e-8;
inline constexpr double kPriorVarianceFloor = 1e-12;

// Conditional prior N(mu0, diag(var0)). The first d means are the auxiliary
// values u, the rest zero; the first d variances are aux_variance (1/n_train
// by default), the rest one.
template <typename T>
struct PriorSpec {
  tensor::Tensor<T> mu0;     // B x d_z
  std::vector<double> var0;  // d_z
  std::size_t n_train = 1;
  std::size_t d = 0;
  std::size_t d_z = 0;
};

// u: B x d with d <= d_z. aux_variance <= 0 selects 1/n_train.
template <typename T>
PriorSpec<T> make_prior(const tensor::Tensor<T>& u, std::size_t n_train, std::size_t d_z,
                        double aux_variance = 0.0);

// Closed-form KL(N(mu, exp(logvar)) || prior) summed over latents and
// averaged over the batch.
template <typename T>
tensor::Var<T> kl_diag_gaussians(const tensor::Var<T>& mu, const tensor::Var<T>& logvar,
                                 const PriorSpec<T>& prior);

// count draws; row i uses prior mean row i mod B. Deterministic in seed.
tensor::Tensor<double> sample_conditional_prior(const PriorSpec<double>& prior, std::size_t count,
                                                std::uint64_t seed);

// Moments of one batch, unbiased (B - 1) normalisation.
template <typename T>
struct Moments {
  tensor::Var<T> cov;    // m_v x m_w
  tensor::Var<T> var_v;  // m_v
  tensor::Var<T> var_w;  // m_w
};

template <typename T>
Moments<T> batch_moments(const tensor::Var<T>& v, const tensor::Var<T>& w);

// cov / ((sqrt(var_v) + eps)(sqrt(var_w) + eps)), entrywise.
template <typename T>
tensor::Var<T> corr_from_moments(const Moments<T>& m, double eps = kCorrEpsilon);

// Pearson correlations between the columns of v (B x m_v) and w (B x m_w).
template <typename T>
tensor::Var<T> batch_corr(const tensor::Var<T>& v, const tensor::Var<T>& w,
                          double eps = kCorrEpsilon);

// Same quantity without a graph, two-pass in double precision.
tensor::Tensor<double> batch_corr_values(const tensor::Tensor<double>& v,
                                         const tensor::Tensor<double>& w,
                                         double eps = kCorrEpsilon);

// Cross-batch running estimates of the correlation moments. Each named
// regulariser keeps its own entry; gradients flow through the current batch
// share only.
struct CorrelationState {
  double momentum = 0.9;
  struct Entry {
    tensor::Tensor<double> cov;
    tensor::Tensor<double> var_v;
    tensor::Tensor<double> var_w;
  };
  std::map<std::string, Entry> entries;
};

// Correlation between v and w, from the batch alone when state is null,
// otherwise from the running estimate stored under key (which is updated).
template <typename T>
tensor::Var<T> correlation(const tensor::Var<T>& v, const tensor::Var<T>& w,
                           CorrelationState* state, const std::string& key,
                           double eps = kCorrEpsilon);

// Columns v, v^2, ..., v^K side by side: B x (K*m).
template <typename T>
tensor::Var<T> stack_powers(const tensor::Var<T>& v, std::size_t k_max);

// Mean of |Corr(v^k, w^k')| over 1 <= k, k' <= K and all column pairs.
// Zero when either side has no columns.
template <typename T>
tensor::Var<T> r0(const tensor::Var<T>& v, const tensor::Var<T>& w, std::size_t k_max,
                  CorrelationState* state = nullptr, const std::string& key = "r0",
                  double eps = kCorrEpsilon);

// Mean of 1 - |Corr(v^k, w^k')| for single-column v and w.
template <typename T>
tensor::Var<T> r1(const tensor::Var<T>& v, const tensor::Var<T>& w, std::size_t k_max,
                  CorrelationState* state = nullptr, const std::string& key = "r1",
                  double eps = kCorrEpsilon);

enum class CorrMode { kBatch, kEma };

std::string to_string(CorrMode m);
CorrMode parse_corr_mode(const std::string& text);

struct LossConfig {
  double beta = 5.0;
  double lambda1 = 1.0;
  double lambda2 = 0.1;
  std::size_t k_max = 3;
  std::size_t samples = 1;  // J
  double eps = kCorrEpsilon;
  // <= 0 selects 1/n_train.
  double aux_variance = 0.0;
};

// intra_explicit and inter hold the weighted terms, so
// total = recon + beta * kl + intra_explicit + inter.
template <typename T>
struct LossBreakdown {
  tensor::Var<T> total;
  tensor::Var<T> recon;
  tensor::Var<T> kl;
  tensor::Var<T> intra_explicit;
  tensor::Var<T> inter;
};

struct LossValues {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  double intra_explicit = 0.0;
  double inter = 0.0;
};

template <typename T>
LossValues values_of(const LossBreakdown<T>& b);

// Full Aux-VAE objective on a batch. x: B x C x H x W in [0, 1]; u: B x d
// with d = arch.d; noise: J tensors of shape B x d_z. Regularisers act on
// the posterior means. ConfigError when d = 0 and lambda1 > 0.
template <typename T>
LossBreakdown<T> aux_vae_loss(const genmodel::ArchitectureDescriptor& arch,
                              const nn::BoundParams<T>& params, const tensor::Var<T>& x,
                              const tensor::Tensor<T>& u, std::size_t n_train,
                              const LossConfig& config, const std::vector<tensor::Tensor<T>>& noise,
                              CorrelationState* state = nullptr);

// beta-VAE objective with a standard normal prior and a single noise draw.
template <typename T>
LossBreakdown<T> beta_vae_loss(const genmodel::ArchitectureDescriptor& arch,
                               const nn::BoundParams<T>& params, const tensor::Var<T>& x,
                               double beta, const tensor::Tensor<T>& noise);

// Training log: epoch,step,total,recon,kl,intra_explicit,inter.
void write_log_header(std::ostream& os);
void write_log_row(std::ostream& os, std::size_t epoch, std::size_t step, const LossValues& v);

}  // namespace auxvae::objective
