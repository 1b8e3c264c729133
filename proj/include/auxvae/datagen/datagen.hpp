#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "auxvae/io.hpp"
#include "auxvae/tensor/tensor.hpp"

namespace auxvae::datagen {

using Range = std::pair<double, double>;

// n x F draws with exactly one sample in each of the n equal strata of
// every dimension. Deterministic in seed.
tensor::Tensor<double> lhs_sample(std::size_t n, const std::vector<Range>& ranges,
                                  std::uint64_t seed);

// Galaxy parameters. flux in counts, radius (half-light) and psf_fwhm in
// arcsec, g1/g2 reduced shear.
struct GalaxyFactors {
  double flux = 5e4;
  double radius = 0.5;
  double g1 = 0.0;
  double g2 = 0.0;
  double psf_fwhm = 0.3;
};

inline const std::vector<std::string> kGalaxyFactorNames{"flux", "radius", "g1", "g2", "psf"};
// flux, radius, g1, g2, psf.
const std::vector<Range>& galaxy_ranges();

enum class FluxNormalization {
  // Rescale the rendered stamp so its pixels sum to the flux.
  kStamp,
  // Analytic profile normalisation; light outside the stamp is lost.
  kAnalytic,
};

std::string to_string(FluxNormalization m);
FluxNormalization parse_flux_normalization(const std::string& text);

struct RenderConfig {
  std::size_t size = 33;
  double pixel_scale = 0.1;  // arcsec per pixel
  std::size_t oversample = 3;
  double psf_truncation = 4.0;  // kernel half-width in PSF sigmas
  FluxNormalization normalization = FluxNormalization::kStamp;

  void validate() const;
  // Canonical one-line description used in fingerprints.
  std::string describe() const;
};

struct GalaxyImage {
  tensor::Tensor<double> pixels;  // size x size, row = y, column = x
  bool unresolved = false;        // radius < 0.25 pixel
};

// Sheared exponential disk, r_s = radius / 1.6783, convolved with a
// truncated Gaussian PSF on an oversampled grid, then box-downsampled.
GalaxyImage render_galaxy(const GalaxyFactors& f, const RenderConfig& cfg = {});

// Shear matrix S = (1 / sqrt(1 - g1^2 - g2^2)) [[1 + g1, g2], [g2, 1 - g1]].
std::array<double, 4> shear_matrix(double g1, double g2);

enum class SpriteShape { kSquare = 0, kEllipse = 1 };

inline constexpr std::size_t kSpriteSize = 64;
inline const std::vector<std::string> kSpriteFactorNames{"shape", "scale", "orientation", "posx",
                                                         "posy"};
const std::vector<Range>& sprite_ranges();

// 64 x 64 anti-aliased sprite (4 x 4 supersampling), values in [0, 1].
tensor::Tensor<double> render_dsprite(SpriteShape shape, double scale, double orientation,
                                      double posx, double posy);

enum class DatasetKind { kGalaxy, kDsprites };

std::string to_string(DatasetKind k);
DatasetKind parse_dataset_kind(const std::string& text);

struct Dataset {
  tensor::Tensor<float> images;   // N x C x H x W in [0, 1]
  tensor::Tensor<float> factors;  // N x F normalised to [0, 1]
  tensor::Tensor<float> raw;      // N x F physical values
  std::vector<std::string> names;
  io::Digest fingerprint{};
  std::size_t unresolved = 0;  // sources flagged by the renderer (not stored on disk)

  std::size_t size() const { return images.rank() ? images.dim(0) : 0; }
  // Column index of a factor name (ConfigError if absent).
  std::size_t factor_index(const std::string& name) const;
  // N x k block of normalised factors for the named columns, in order.
  tensor::Tensor<float> factor_columns(const std::vector<std::string>& columns) const;
  // Image shape without the batch axis.
  tensor::Shape image_shape() const;
};

struct BuildOptions {
  RenderConfig render;
  std::size_t workers = 1;
};

// Factors from Latin-hypercube sampling (galaxy) or a shape grid with
// stratified jitter on the continuous factors (dsprites). Images are divided
// by the dataset-wide maximum pixel and clipped to [0, 1]. n >= 10.
Dataset build_dataset(DatasetKind kind, std::size_t n, std::uint64_t seed,
                      const BuildOptions& options = {});

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

// Sizes by floor of n * r_i / sum(r), leftover items to the largest
// remainders (earlier split on ties); a seeded shuffle assigns indices.
SplitIndices split_indices(std::size_t n, std::uint64_t seed,
                           const std::array<double, 3>& ratios = {7, 2, 1});
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios = {7, 2, 1});

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& rows);

struct Splits {
  Dataset train, val, test;
};
Splits split(const Dataset& ds, std::uint64_t seed, const std::array<double, 3>& ratios = {7, 2, 1});

// "AXVD" little-endian container; see save_dataset for the layout.
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::vector<std::uint8_t> bytes, const std::string& origin = "buffer");

}  // namespace auxvae::datagen
