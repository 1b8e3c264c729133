#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "auxvae/datagen/datagen.hpp"
#include "auxvae/metrics/metrics.hpp"
#include "auxvae/trainer/trainer.hpp"

namespace auxvae::experiments {

// ---- latent traversal ----

struct TraversalSpec {
  std::size_t latent = 0;
  std::size_t steps = 8;
  std::size_t base = 0;        // row of the evaluation set
  double range_sigmas = 3.0;   // grid spans mu_j +- range_sigmas * std_j
};

struct Traversal {
  std::size_t latent = 0;
  std::vector<double> values;   // increasing
  tensor::Tensor<float> images; // steps x C x H x W
  double sensitivity = 0.0;     // mean L2 distance between neighbouring images
};

// Encodes eval[base], replaces coordinate `latent` of its posterior mean by
// each grid value and decodes. The grid is centred on the mean of that
// coordinate over eval; one step yields the base's own value.
Traversal traverse(const genmodel::Model<float>& model, const datagen::Dataset& eval,
                   const TraversalSpec& spec);

// Same decode for explicit coordinate values.
Traversal traverse_values(const genmodel::Model<float>& model, const tensor::Tensor<float>& image,
                          std::size_t latent, const std::vector<double>& values);

// Binary PGM (P5), images side by side with 2-pixel black separators.
// Channels are averaged; values are clipped to [0, 1] and scaled to 255.
void write_pgm_strip(const std::filesystem::path& path, const tensor::Tensor<float>& images);
// step,latent,value
void write_traversal_csv(std::ostream& os, const Traversal& t);

// ---- perturbation study ----

enum class PerturbTarget { kNone, kAux, kRecon };

std::string to_string(PerturbTarget t);
PerturbTarget parse_perturb_target(const std::string& text);

struct PerturbationSpec {
  PerturbTarget target = PerturbTarget::kNone;
  std::size_t samples = 1000;
  double noise_scale = 1.0;  // multiple of the per-latent std of mu
};

struct Distribution {
  std::string label;
  std::vector<double> ssim;  // per image, in evaluation order
  metrics::Summary summary;
};

// SSIM between each of the first `samples` images and the decode of its
// posterior mean with Gaussian noise added to the targeted block only.
Distribution perturb_study(const genmodel::Model<float>& model, const datagen::Dataset& test,
                           const PerturbationSpec& spec, std::uint64_t seed);

// ---- FGSM ----

// x' = clip(x + eps * sign(grad_x L), 0, 1) with L the checkpoint's own
// training loss evaluated at the posterior mean (no sampling noise). x is a
// batch of at least two images; u holds the batch's normalised auxiliary
// factors (ignored for beta-VAE checkpoints).
tensor::Tensor<float> fgsm_attack(const trainer::Checkpoint& ckpt, const tensor::Tensor<float>& x,
                                  const tensor::Tensor<float>& u, double eps, std::size_t n_train);

// For each eps, attacks the first `samples` test images in batches and
// reports SSIM(x, reconstruct(x')). The split and n_train come from the
// checkpoint's split seed applied to ds.
std::vector<Distribution> robustness_curve(const trainer::Checkpoint& ckpt, const datagen::Dataset& ds,
                                           const std::vector<double>& eps_list, std::size_t samples,
                                           std::size_t batch = 64);

// label,image,ssim; `column` names the label column.
void write_distributions_csv(std::ostream& os, const std::string& column,
                             const std::vector<Distribution>& dists);

}  // namespace auxvae::experiments
