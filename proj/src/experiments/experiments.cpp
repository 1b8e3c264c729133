#include "auxvae/experiments/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "auxvae/tensor/ops.hpp"

namespace auxvae::experiments {

using tensor::Shape;
using tensor::Tensor;

namespace {

struct ColumnStats {
  std::vector<double> mean, sd;
};

ColumnStats column_stats(const Tensor<float>& z) {
  const std::size_t n = z.dim(0), m = z.dim(1);
  ColumnStats s{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) s.mean[j] += z[i * m + j];
  for (auto& v : s.mean) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double d = z[i * m + j] - s.mean[j];
      s.sd[j] += d * d;
    }
  for (auto& v : s.sd) v = n > 1 ? std::sqrt(v / static_cast<double>(n - 1)) : 0.0;
  return s;
}

Tensor<float> first_rows(const Tensor<float>& t, std::size_t count) {
  return genmodel::take_rows(t, 0, count);
}

}  // namespace

// ---- traversal ----

Traversal traverse_values(const genmodel::Model<float>& model, const Tensor<float>& image,
                          std::size_t latent, const std::vector<double>& values) {
  const std::size_t dz = model.arch.d_z;
  if (latent >= dz) {
    throw ConfigError("traverse: latent " + std::to_string(latent) + " out of range (d_z = " +
                      std::to_string(dz) + ")");
  }
  if (values.empty()) throw ConfigError("traverse: need at least one value");
  if (image.rank() != 4 || image.dim(0) != 1) throw ShapeError("traverse: expected a single 1 x C x H x W image");
  const auto mu = genmodel::encode_values(model, image).mu;
  Tensor<float> z(Shape{values.size(), dz});
  for (std::size_t k = 0; k < values.size(); ++k) {
    for (std::size_t j = 0; j < dz; ++j) z[k * dz + j] = mu[j];
    z[k * dz + latent] = static_cast<float>(values[k]);
  }
  Traversal t;
  t.latent = latent;
  t.values = values;
  t.images = genmodel::decode_values(model, z);
  const std::size_t px = t.images.size() / values.size();
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < values.size(); ++k) {
    double sq = 0.0;
    for (std::size_t p = 0; p < px; ++p) {
      const double d = t.images[(k + 1) * px + p] - t.images[k * px + p];
      sq += d * d;
    }
    total += std::sqrt(sq);
  }
  t.sensitivity = values.size() > 1 ? total / static_cast<double>(values.size() - 1) : 0.0;
  return t;
}

Traversal traverse(const genmodel::Model<float>& model, const datagen::Dataset& eval, const TraversalSpec& spec) {
  if (spec.steps < 1) throw ConfigError("traverse: steps must be at least 1");
  if (spec.base >= eval.size()) {
    throw ConfigError("traverse: base image " + std::to_string(spec.base) + " not in a set of " +
                      std::to_string(eval.size()));
  }
  if (spec.latent >= model.arch.d_z) {
    throw ConfigError("traverse: latent " + std::to_string(spec.latent) + " out of range (d_z = " +
                      std::to_string(model.arch.d_z) + ")");
  }
  if (!(spec.range_sigmas >= 0.0)) throw ConfigError("traverse: range_sigmas must be nonnegative");
  const Tensor<float> image = genmodel::take_rows(eval.images, spec.base, spec.base + 1);
  std::vector<double> values;
  if (spec.steps == 1) {
    values.push_back(genmodel::encode_values(model, image).mu[spec.latent]);
  } else {
    const auto stats = column_stats(genmodel::encode_values(model, eval.images).mu);
    const double lo = stats.mean[spec.latent] - spec.range_sigmas * stats.sd[spec.latent];
    const double hi = stats.mean[spec.latent] + spec.range_sigmas * stats.sd[spec.latent];
    for (std::size_t k = 0; k < spec.steps; ++k) {
      values.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(spec.steps - 1));
    }
  }
  return traverse_values(model, image, spec.latent, values);
}

void write_pgm_strip(const std::filesystem::path& path, const Tensor<float>& images) {
  if (images.rank() != 4 || images.dim(0) == 0) throw ShapeError("pgm strip: expected N x C x H x W images");
  const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  constexpr std::size_t gap = 2;
  const std::size_t width = n * w + (n - 1) * gap;
  std::vector<unsigned char> pixels(width * h, 0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t col = 0; col < w; ++col) {
        double v = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) v += images[((k * c + ch) * h + r) * w + col];
        v = std::clamp(v / static_cast<double>(c), 0.0, 1.0);
        pixels[r * width + k * (w + gap) + col] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << width << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

void write_traversal_csv(std::ostream& os, const Traversal& t) {
  os << "step,latent,value\n";
  for (std::size_t k = 0; k < t.values.size(); ++k) {
    os << k << ',' << t.latent << ',' << trainer::format_double(t.values[k]) << '\n';
  }
}

// ---- perturbation ----

std::string to_string(PerturbTarget t) {
  switch (t) {
    case PerturbTarget::kNone: return "none";
    case PerturbTarget::kAux: return "aux";
    case PerturbTarget::kRecon: return "recon";
  }
  return "none";
}

PerturbTarget parse_perturb_target(const std::string& text) {
  if (text == "none") return PerturbTarget::kNone;
  if (text == "aux") return PerturbTarget::kAux;
  if (text == "recon") return PerturbTarget::kRecon;
  throw ConfigError("unknown perturbation target '" + text + "' (expected none, aux or recon)");
}

Distribution perturb_study(const genmodel::Model<float>& model, const datagen::Dataset& test,
                           const PerturbationSpec& spec, std::uint64_t seed) {
  const std::size_t d = model.arch.d, dz = model.arch.d_z;
  if (spec.target == PerturbTarget::kAux && d == 0) throw ConfigError("perturb: model has no auxiliary latents");
  if (spec.target == PerturbTarget::kRecon && d == dz) throw ConfigError("perturb: model has no residual latents");
  if (spec.samples < 2 || spec.samples > test.size()) {
    throw ConfigError("perturb: samples must be in [2, " + std::to_string(test.size()) + "], got " +
                      std::to_string(spec.samples));
  }
  if (!(spec.noise_scale >= 0.0)) throw ConfigError("perturb: noise_scale must be nonnegative");
  const Tensor<float> x = first_rows(test.images, spec.samples);
  Tensor<float> z = genmodel::encode_values(model, x).mu;
  const auto stats = column_stats(z);
  const std::size_t lo = spec.target == PerturbTarget::kRecon ? d : 0;
  const std::size_t hi = spec.target == PerturbTarget::kAux ? d : spec.target == PerturbTarget::kRecon ? dz : 0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (std::size_t i = 0; i < spec.samples; ++i)
    for (std::size_t j = 0; j < dz; ++j) {
      const double e = normal(rng);  // drawn for every latent so targets share a stream
      if (j >= lo && j < hi) z[i * dz + j] = static_cast<float>(z[i * dz + j] + spec.noise_scale * stats.sd[j] * e);
    }
  Distribution out;
  out.label = to_string(spec.target);
  out.ssim = metrics::ssim_batch(x, genmodel::decode_values(model, z));
  out.summary = metrics::summarize(out.ssim);
  return out;
}

// ---- FGSM ----

Tensor<float> fgsm_attack(const trainer::Checkpoint& ckpt, const Tensor<float>& x, const Tensor<float>& u,
                          double eps, std::size_t n_train) {
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw ConfigError("fgsm: eps must be finite and nonnegative");
  if (x.rank() != 4 || x.dim(0) < 2) throw ShapeError("fgsm: expected a batch of at least two images");
  for (float v : x.values()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ConfigError("fgsm: images must lie in [0, 1]");
  }
  const auto& cfg = ckpt.config;
  const auto& arch = ckpt.model.arch;
  const std::size_t b = x.dim(0);
  tensor::Graph<float> g;
  nn::BoundParams<float> bound(g, ckpt.model.params, false);
  const auto xv = g.leaf(x, true);
  const Tensor<float> zero(Shape{b, arch.d_z});
  objective::LossBreakdown<float> loss =
      cfg.objective == trainer::ObjectiveKind::kAuxVae
          ? objective::aux_vae_loss(arch, bound, xv, u, n_train, cfg.loss,
                                    std::vector<Tensor<float>>(cfg.loss.samples, zero))
          : objective::beta_vae_loss(arch, bound, xv, cfg.loss.beta, zero);
  const Tensor<float> grad = tensor::backward(loss.total)[xv];
  if (!grad.all_finite()) throw NumericalError("fgsm: gradient with respect to the input is not finite");
  Tensor<float> out = x;
  const float step = static_cast<float>(eps);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float s = grad[i] > 0 ? 1.0f : grad[i] < 0 ? -1.0f : 0.0f;
    out[i] = std::clamp(x[i] + step * s, 0.0f, 1.0f);
  }
  return out;
}

std::vector<Distribution> robustness_curve(const trainer::Checkpoint& ckpt, const datagen::Dataset& ds,
                                           const std::vector<double>& eps_list, std::size_t samples,
                                           std::size_t batch) {
  if (eps_list.empty()) throw ConfigError("robustness: empty eps list");
  if (batch < 2) throw ConfigError("robustness: batch must be at least 2");
  const auto idx = datagen::split_indices(ds.size(), ckpt.config.split_seed);
  const datagen::Dataset test = datagen::subset(ds, idx.test);
  if (samples < 2 || samples > test.size()) {
    throw ConfigError("robustness: samples must be in [2, " + std::to_string(test.size()) + "]");
  }
  const Tensor<float> x = first_rows(test.images, samples);
  const Tensor<float> u = first_rows(test.factor_columns(ckpt.config.aux_factors()), samples);
  // Chunk boundaries; a trailing single image joins the previous chunk.
  std::vector<std::size_t> bounds{0};
  while (bounds.back() < samples) bounds.push_back(std::min(samples, bounds.back() + batch));
  if (bounds.size() > 2 && bounds[bounds.size() - 1] - bounds[bounds.size() - 2] < 2) bounds.erase(bounds.end() - 2);

  std::vector<Distribution> out;
  for (double eps : eps_list) {
    Tensor<float> attacked(x.shape());
    const std::size_t px = x.size() / samples;
    for (std::size_t c = 0; c + 1 < bounds.size(); ++c) {
      const auto xa = fgsm_attack(ckpt, genmodel::take_rows(x, bounds[c], bounds[c + 1]),
                                  genmodel::take_rows(u, bounds[c], bounds[c + 1]), eps, idx.train.size());
      std::copy(xa.data(), xa.data() + xa.size(), attacked.data() + bounds[c] * px);
    }
    Distribution d;
    d.label = trainer::format_double(eps);
    d.ssim = metrics::ssim_batch(x, genmodel::reconstruct_values(ckpt.model, attacked));
    d.summary = metrics::summarize(d.ssim);
    out.push_back(std::move(d));
  }
  return out;
}

void write_distributions_csv(std::ostream& os, const std::string& column, const std::vector<Distribution>& dists) {
  os << column << ",image,ssim\n";
  for (const auto& d : dists)
    for (std::size_t i = 0; i < d.ssim.size(); ++i) {
      os << d.label << ',' << i << ',' << trainer::format_double(d.ssim[i]) << '\n';
    }
}

}  // namespace auxvae::experiments
