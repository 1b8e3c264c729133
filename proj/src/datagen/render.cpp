#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "auxvae/datagen/datagen.hpp"

namespace auxvae::datagen {

using tensor::Shape;
using tensor::Tensor;

namespace {

constexpr double kHalfLightToScale = 1.6783;
constexpr double kFwhmToSigma = 2.3548;
constexpr double kPi = 3.14159265358979323846;

void check_range(const Range& r, std::size_t dim) {
  if (!std::isfinite(r.first) || !std::isfinite(r.second) || !(r.first < r.second)) {
    throw ConfigError("range " + std::to_string(dim) + " must be finite with lo < hi");
  }
}

// Zero-padded "same" convolution along rows (axis 1) or columns (axis 0).
void convolve_axis(std::vector<double>& img, std::size_t n, const std::vector<double>& kernel,
                   bool along_rows) {
  const long radius = static_cast<long>(kernel.size() / 2);
  std::vector<double> out(img.size(), 0.0);
  const long ln = static_cast<long>(n);
  for (long a = 0; a < ln; ++a)
    for (long b = 0; b < ln; ++b) {
      double acc = 0.0;
      for (long t = -radius; t <= radius; ++t) {
        const long q = b + t;
        if (q < 0 || q >= ln) continue;
        acc += kernel[static_cast<std::size_t>(t + radius)] *
               (along_rows ? img[static_cast<std::size_t>(a * ln + q)]
                           : img[static_cast<std::size_t>(q * ln + a)]);
      }
      if (along_rows) {
        out[static_cast<std::size_t>(a * ln + b)] = acc;
      } else {
        out[static_cast<std::size_t>(b * ln + a)] = acc;
      }
    }
  img.swap(out);
}

}  // namespace

Tensor<double> lhs_sample(std::size_t n, const std::vector<Range>& ranges, std::uint64_t seed) {
  if (n < 1) throw ConfigError("lhs_sample: n must be at least 1");
  for (std::size_t j = 0; j < ranges.size(); ++j) check_range(ranges[j], j);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tensor<double> out(Shape{n, ranges.size()});
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < ranges.size(); ++j) {
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto [lo, hi] = ranges[j];
    for (std::size_t i = 0; i < n; ++i) {
      const double t = (static_cast<double>(perm[i]) + unit(rng)) / static_cast<double>(n);
      // Keep the draw inside its stratum after scaling.
      out[i * ranges.size() + j] = std::clamp(lo + t * (hi - lo), lo, hi);
    }
  }
  return out;
}

const std::vector<Range>& galaxy_ranges() {
  static const std::vector<Range> r{{1e4, 1e5}, {0.1, 1.0}, {-0.5, 0.5}, {-0.5, 0.5}, {0.2, 0.4}};
  return r;
}

std::string to_string(FluxNormalization m) {
  return m == FluxNormalization::kStamp ? "stamp" : "analytic";
}

FluxNormalization parse_flux_normalization(const std::string& text) {
  if (text == "stamp") return FluxNormalization::kStamp;
  if (text == "analytic") return FluxNormalization::kAnalytic;
  throw ConfigError("unknown flux normalization '" + text + "' (expected stamp or analytic)");
}

void RenderConfig::validate() const {
  if (size < 3 || size % 2 == 0) throw ConfigError("render: image size must be odd and >= 3");
  if (!(pixel_scale > 0.0)) throw ConfigError("render: pixel scale must be positive");
  if (oversample < 1) throw ConfigError("render: oversample must be >= 1");
  if (!(psf_truncation > 0.0)) throw ConfigError("render: PSF truncation must be positive");
}

std::string RenderConfig::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "size=" << size << " pixel_scale=" << pixel_scale << " oversample=" << oversample
     << " psf_truncation=" << psf_truncation << " normalization=" << to_string(normalization);
  return os.str();
}

std::array<double, 4> shear_matrix(double g1, double g2) {
  const double g2sum = g1 * g1 + g2 * g2;
  if (!(g2sum < 1.0)) throw ConfigError("shear: |g| must be below 1");
  const double k = 1.0 / std::sqrt(1.0 - g2sum);
  return {k * (1 + g1), k * g2, k * g2, k * (1 - g1)};
}

GalaxyImage render_galaxy(const GalaxyFactors& f, const RenderConfig& cfg) {
  cfg.validate();
  if (!(f.radius > 0.0) || !(f.psf_fwhm > 0.0) || !(f.flux >= 0.0)) {
    throw ConfigError("render_galaxy: radius and psf must be positive, flux nonnegative");
  }
  const double g2sum = f.g1 * f.g1 + f.g2 * f.g2;
  if (!(g2sum < 1.0)) throw ConfigError("render_galaxy: |g| must be below 1");

  const std::size_t os = cfg.oversample;
  const std::size_t n = cfg.size * os;
  const double sub = cfg.pixel_scale / static_cast<double>(os);
  const double half = static_cast<double>(cfg.size) / 2.0;
  const double rs = f.radius / kHalfLightToScale;
  // Inverse shear: (1/sqrt(1-g^2)) [[1-g1, -g2], [-g2, 1+g1]].
  const double k = 1.0 / std::sqrt(1.0 - g2sum);
  const double a = k * (1 - f.g1), b = -k * f.g2, d = k * (1 + f.g1);

  std::vector<double> img(n * n);
  for (std::size_t iy = 0; iy < n; ++iy) {
    const double y = ((static_cast<double>(iy) + 0.5) / static_cast<double>(os) - half) * cfg.pixel_scale;
    for (std::size_t ix = 0; ix < n; ++ix) {
      const double x =
          ((static_cast<double>(ix) + 0.5) / static_cast<double>(os) - half) * cfg.pixel_scale;
      const double xp = a * x + b * y;
      const double yp = b * x + d * y;
      img[iy * n + ix] = std::exp(-std::sqrt(xp * xp + yp * yp) / rs);
    }
  }
  if (cfg.normalization == FluxNormalization::kAnalytic) {
    // Unit total flux for the untruncated profile.
    const double norm = sub * sub / (2.0 * kPi * rs * rs);
    for (double& v : img) v *= norm;
  }

  const double sigma = f.psf_fwhm / kFwhmToSigma / sub;
  const std::size_t radius = static_cast<std::size_t>(std::ceil(cfg.psf_truncation * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double ksum = 0.0;
  for (std::size_t t = 0; t < kernel.size(); ++t) {
    const double u = static_cast<double>(t) - static_cast<double>(radius);
    kernel[t] = std::exp(-u * u / (2.0 * sigma * sigma));
    ksum += kernel[t];
  }
  for (double& v : kernel) v /= ksum;
  convolve_axis(img, n, kernel, true);
  convolve_axis(img, n, kernel, false);

  GalaxyImage out;
  out.pixels = Tensor<double>(Shape{cfg.size, cfg.size});
  for (std::size_t r = 0; r < cfg.size; ++r)
    for (std::size_t c = 0; c < cfg.size; ++c) {
      double s = 0.0;
      for (std::size_t p = 0; p < os; ++p)
        for (std::size_t q = 0; q < os; ++q) s += img[(r * os + p) * n + c * os + q];
      out.pixels[r * cfg.size + c] = s;
    }
  if (cfg.normalization == FluxNormalization::kStamp) {
    double total = 0.0;
    for (double v : out.pixels.values()) total += v;
    for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] /= total;
  }
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] *= f.flux;
  out.unresolved = f.radius < 0.25 * cfg.pixel_scale;
  return out;
}

const std::vector<Range>& sprite_ranges() {
  static const std::vector<Range> r{{0.0, 1.0}, {0.5, 1.0}, {0.0, 2 * kPi}, {0.0, 1.0}, {0.0, 1.0}};
  return r;
}

Tensor<double> render_dsprite(SpriteShape shape, double scale, double orientation, double posx,
                              double posy) {
  if (!(scale >= 0.5 && scale <= 1.0)) throw ConfigError("render_dsprite: scale must be in [0.5, 1]");
  if (!(posx >= 0.0 && posx <= 1.0 && posy >= 0.0 && posy <= 1.0)) {
    throw ConfigError("render_dsprite: positions must be in [0, 1]");
  }
  if (!std::isfinite(orientation)) throw ConfigError("render_dsprite: orientation must be finite");
  // Both shapes have a symmetry period; reducing makes equivalent angles identical.
  const double period = shape == SpriteShape::kEllipse ? kPi : kPi / 2;
  double theta = std::fmod(orientation, period);
  if (theta < 0) theta += period;
  const double cs = std::cos(theta), sn = std::sin(theta);

  // Centres range over [16, 48] so the largest sprite stays inside the frame.
  const double cx = 16.0 + 32.0 * posx, cy = 16.0 + 32.0 * posy;
  const double half_side = 10.0 * scale;
  const double semi_a = 12.0 * scale, semi_b = 6.0 * scale;
  constexpr std::size_t ss = 4;
  Tensor<double> img(Shape{kSpriteSize, kSpriteSize});
  for (std::size_t r = 0; r < kSpriteSize; ++r)
    for (std::size_t c = 0; c < kSpriteSize; ++c) {
      int inside = 0;
      for (std::size_t k = 0; k < ss; ++k)
        for (std::size_t l = 0; l < ss; ++l) {
          const double dx = static_cast<double>(c) + (static_cast<double>(l) + 0.5) / ss - cx;
          const double dy = static_cast<double>(r) + (static_cast<double>(k) + 0.5) / ss - cy;
          const double u = cs * dx + sn * dy;
          const double v = -sn * dx + cs * dy;
          const bool in = shape == SpriteShape::kSquare
                              ? std::abs(u) <= half_side && std::abs(v) <= half_side
                              : (u * u) / (semi_a * semi_a) + (v * v) / (semi_b * semi_b) <= 1.0;
          inside += in;
        }
      img[r * kSpriteSize + c] = static_cast<double>(inside) / (ss * ss);
    }
  return img;
}

}  // namespace auxvae::datagen
