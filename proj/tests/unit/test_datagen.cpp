#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "auxvae/datagen/datagen.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace auxvae;
using namespace auxvae::datagen;
using tensor::Tensor;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Pixel (r, c) of a square image rotated by 90 degrees: out(r, c) = in(c, n-1-r).
Tensor<double> rotate90(const Tensor<double>& img) {
  const std::size_t n = img.dim(0);
  Tensor<double> out(img.shape());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = img[c * n + (n - 1 - r)];
  return out;
}

double total(const Tensor<double>& img) {
  double s = 0;
  for (double v : img.values()) s += v;
  return s;
}

struct Moments {
  double qxx, qyy, qxy;
};

Moments second_moments(const Tensor<double>& img) {
  const std::size_t n = img.dim(0);
  double s = 0, mx = 0, my = 0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const double v = img[r * n + c];
      s += v;
      mx += v * c;
      my += v * r;
    }
  mx /= s;
  my /= s;
  Moments m{0, 0, 0};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const double v = img[r * n + c], dx = c - mx, dy = r - my;
      m.qxx += v * dx * dx;
      m.qyy += v * dy * dy;
      m.qxy += v * dx * dy;
    }
  return m;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("auxvae_test_" + name);
}

}  // namespace

TEST_CASE("lhs puts exactly one draw in every stratum") {
  for (std::size_t n : {1u, 4u, 37u, 500u}) {
    const std::vector<Range> ranges{{0, 1}, {-2, 3}, {1e4, 1e5}};
    const auto s = lhs_sample(n, ranges, 11);
    for (std::size_t j = 0; j < ranges.size(); ++j) {
      std::vector<int> hits(n, 0);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = (s[i * 3 + j] - ranges[j].first) / (ranges[j].second - ranges[j].first);
        const auto bin = std::min<std::size_t>(n - 1, static_cast<std::size_t>(t * n));
        ++hits[bin];
      }
      CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    }
  }
  const auto a = lhs_sample(20, {{0, 1}}, 3), b = lhs_sample(20, {{0, 1}}, 3);
  CHECK(a == b);
  CHECK_THROWS_AS(lhs_sample(5, {{1, 1}}, 0), ConfigError);
  CHECK_THROWS_AS(lhs_sample(5, {{0, NAN}}, 0), ConfigError);
  CHECK_THROWS_AS(lhs_sample(0, {{0, 1}}, 0), ConfigError);
}

TEST_CASE("lhs marginal histogram is exactly uniform") {
  const std::size_t n = 65536, bins = 64;
  const auto s = lhs_sample(n, galaxy_ranges(), 5);
  for (std::size_t j = 0; j < 5; ++j) {
    const auto [lo, hi] = galaxy_ranges()[j];
    std::vector<std::size_t> h(bins, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = (s[i * 5 + j] - lo) / (hi - lo);
      ++h[std::min<std::size_t>(bins - 1, static_cast<std::size_t>(t * bins))];
    }
    for (auto c : h) CHECK(c == n / bins);
  }
}

TEST_CASE("unsheared galaxy is invariant under a quarter turn") {
  for (double radius : {0.1, 0.45, 1.0}) {
    GalaxyFactors f;
    f.radius = radius;
    const auto img = render_galaxy(f).pixels;
    const double peak = *std::max_element(img.values().begin(), img.values().end());
    CHECK(testing::max_abs_diff(img, rotate90(img)) / peak < 1e-6);
  }
}

TEST_CASE("rendering is linear in flux") {
  GalaxyFactors f{2e4, 0.6, 0.2, -0.1, 0.35};
  const auto a = render_galaxy(f).pixels;
  f.flux *= 2;
  const auto b = render_galaxy(f).pixels;
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(2 * a[i]).epsilon(1e-14));
}

TEST_CASE("positive g1 stretches along x") {
  GalaxyFactors f{5e4, 0.5, 0.3, 0.0, 0.3};
  const auto m = second_moments(render_galaxy(f).pixels);
  CHECK(m.qxx > m.qyy);
  CHECK(std::abs(m.qxy) < 1e-9 * (m.qxx + m.qyy));
  f.g1 = -0.3;
  const auto n = second_moments(render_galaxy(f).pixels);
  CHECK(n.qxx < n.qyy);
  f.g1 = 0;
  f.g2 = 0.3;
  CHECK(second_moments(render_galaxy(f).pixels).qxy > 0);
}

TEST_CASE("shear matrix preserves area") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.7, 0.7);
  int done = 0;
  while (done < 100) {
    const double g1 = u(rng), g2 = u(rng);
    if (g1 * g1 + g2 * g2 >= 0.99) continue;
    const auto s = shear_matrix(g1, g2);
    CHECK(s[0] * s[3] - s[1] * s[2] == doctest::Approx(1.0).epsilon(1e-12));
    ++done;
  }
  CHECK_THROWS_AS(shear_matrix(0.8, 0.6), ConfigError);
  GalaxyFactors bad;
  bad.g1 = 1.0;
  CHECK_THROWS_AS(render_galaxy(bad), ConfigError);
}

TEST_CASE("negating the shear equals a quarter turn") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> g(-0.5, 0.5), r(0.1, 1.0);
  for (int t = 0; t < 10; ++t) {
    GalaxyFactors f{5e4, r(rng), g(rng), g(rng), 0.3};
    const auto a = render_galaxy(f).pixels;
    f.g1 = -f.g1;
    f.g2 = -f.g2;
    const auto b = render_galaxy(f).pixels;
    const double peak = *std::max_element(a.values().begin(), a.values().end());
    CHECK(testing::max_abs_diff(rotate90(a), b) / peak < 1e-4);
  }
}

TEST_CASE("pixel sum matches flux across the factor ranges") {
  // Corners of the factor box plus random interior points.
  std::vector<GalaxyFactors> cases;
  for (double radius : {0.1, 1.0})
    for (double g : {-0.5, 0.5})
      for (double psf : {0.2, 0.4}) cases.push_back({1e4, radius, g, -g, psf});
  const auto interior = lhs_sample(40, galaxy_ranges(), 9);
  for (std::size_t i = 0; i < 40; ++i) {
    const double* r = interior.data() + i * 5;
    cases.push_back({r[0], r[1], r[2], r[3], r[4]});
  }
  for (const auto& f : cases) {
    const double ratio = total(render_galaxy(f).pixels) / f.flux;
    CHECK(ratio >= 0.98);
    CHECK(ratio <= 1.0 + 1e-12);
  }
}

TEST_CASE("analytic normalization loses light outside the stamp") {
  RenderConfig cfg;
  cfg.normalization = FluxNormalization::kAnalytic;
  const GalaxyFactors small{1e4, 0.2, 0, 0, 0.3}, large{1e4, 1.0, 0, 0, 0.3};
  const double a = total(render_galaxy(small, cfg).pixels) / 1e4;
  const double b = total(render_galaxy(large, cfg).pixels) / 1e4;
  CHECK(a == doctest::Approx(1.0).epsilon(0.02));
  CHECK(b < 0.9);
  // Enclosed light of an exponential disk inside the stamp half-width, as a bound.
  const double x = 1.65 / (1.0 / 1.6783);
  CHECK(b < 1 - (1 + x) * std::exp(-x) + 0.05);
  CHECK(render_galaxy({1e4, 0.02, 0, 0, 0.3}).unresolved);
  CHECK_FALSE(render_galaxy(small).unresolved);
  CHECK(parse_flux_normalization(to_string(FluxNormalization::kAnalytic)) == FluxNormalization::kAnalytic);
  CHECK_THROWS_AS(parse_flux_normalization("peak"), ConfigError);
  RenderConfig even;
  even.size = 32;
  CHECK_THROWS_AS(render_galaxy(small, even), ConfigError);
}

TEST_CASE("sprite symmetries and area") {
  for (double theta : {0.0, 0.4, 1.3, 2.9}) {
    CHECK(render_dsprite(SpriteShape::kEllipse, 0.8, theta, 0.3, 0.6) ==
          render_dsprite(SpriteShape::kEllipse, 0.8, theta + kPi, 0.3, 0.6));
  }
  const auto sq = render_dsprite(SpriteShape::kSquare, 0.7, 0.0, 0.5, 0.5);
  for (std::size_t r = 0; r < kSpriteSize; ++r)
    for (std::size_t c = 0; c < kSpriteSize; ++c) CHECK(sq[r * 64 + c] == sq[r * 64 + 63 - c]);
  for (auto shape : {SpriteShape::kSquare, SpriteShape::kEllipse}) {
    const double big = total(render_dsprite(shape, 1.0, 0.7, 0.5, 0.5));
    const double small = total(render_dsprite(shape, 0.5, 0.7, 0.5, 0.5));
    CHECK(big / small == doctest::Approx(4.0).epsilon(0.1));
  }
  for (double v : sq.values()) CHECK((v >= 0.0 && v <= 1.0));
  CHECK_THROWS_AS(render_dsprite(SpriteShape::kSquare, 0.2, 0, 0.5, 0.5), ConfigError);
  CHECK_THROWS_AS(render_dsprite(SpriteShape::kSquare, 0.7, 0, 1.5, 0.5), ConfigError);
}

TEST_CASE("galaxy dataset is deterministic and normalized") {
  BuildOptions two;
  two.workers = 2;
  const auto a = build_dataset(DatasetKind::kGalaxy, 40, 17);
  const auto b = build_dataset(DatasetKind::kGalaxy, 40, 17, two);
  CHECK(encode_dataset(a) == encode_dataset(b));
  CHECK(a.images.shape() == tensor::Shape{40, 1, 33, 33});
  CHECK(*std::max_element(a.images.values().begin(), a.images.values().end()) == 1.0f);
  for (float v : a.images.values()) CHECK((v >= 0.0f && v <= 1.0f));
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      const auto [lo, hi] = galaxy_ranges()[j];
      CHECK(a.raw[i * 5 + j] >= static_cast<float>(lo));
      CHECK(a.raw[i * 5 + j] <= static_cast<float>(hi));
      CHECK(a.factors[i * 5 + j] ==
            doctest::Approx((a.raw[i * 5 + j] - lo) / (hi - lo)).epsilon(1e-5));
    }
  CHECK(a.fingerprint != build_dataset(DatasetKind::kGalaxy, 40, 18).fingerprint);
  CHECK(a.factor_index("g2") == 3);
  CHECK_THROWS_AS(a.factor_index("shape"), ConfigError);
  const auto cols = a.factor_columns({"psf", "flux"});
  CHECK(cols.shape() == tensor::Shape{40, 2});
  CHECK(cols[2] == a.factors[5 + 4]);
  CHECK(a.image_shape() == tensor::Shape{1, 33, 33});
  CHECK_THROWS_AS(build_dataset(DatasetKind::kGalaxy, 9, 1), ConfigError);
}

TEST_CASE("sprite dataset alternates shapes") {
  const auto ds = build_dataset(DatasetKind::kDsprites, 12, 4);
  CHECK(ds.images.shape() == tensor::Shape{12, 1, 64, 64});
  for (std::size_t i = 0; i < 12; ++i) CHECK(ds.factors[i * 5] == static_cast<float>(i % 2));
  CHECK(ds.names == kSpriteFactorNames);
  CHECK(parse_dataset_kind("dsprites") == DatasetKind::kDsprites);
  CHECK_THROWS_AS(parse_dataset_kind("mnist"), ConfigError);
}

TEST_CASE("split sizes and partition") {
  CHECK(split_sizes(10) == std::array<std::size_t, 3>{7, 2, 1});
  CHECK(split_sizes(16384) == std::array<std::size_t, 3>{11469, 3277, 1638});
  for (std::size_t n = 10; n < 300; n += 7) {
    const auto sz = split_sizes(n);
    CHECK(sz[0] + sz[1] + sz[2] == n);
    const double exact[3] = {0.7 * n, 0.2 * n, 0.1 * n};
    for (int k = 0; k < 3; ++k) CHECK(std::abs(static_cast<double>(sz[k]) - exact[k]) < 1.0);
    const auto idx = split_indices(n, n);
    std::set<std::size_t> all(idx.train.begin(), idx.train.end());
    all.insert(idx.val.begin(), idx.val.end());
    all.insert(idx.test.begin(), idx.test.end());
    CHECK(all.size() == n);
    CHECK(*all.rbegin() == n - 1);
  }
  CHECK(split_indices(50, 1).train == split_indices(50, 1).train);
  CHECK(split_indices(50, 1).train != split_indices(50, 2).train);
  CHECK_THROWS_AS(split_sizes(10, {0, 0, 0}), ConfigError);

  const auto ds = build_dataset(DatasetKind::kGalaxy, 20, 3);
  const auto parts = split(ds, 5);
  CHECK(parts.train.size() == 14);
  CHECK(parts.val.size() == 4);
  CHECK(parts.test.size() == 2);
  const auto idx = split_indices(20, 5);
  CHECK(parts.val.raw[0] == ds.raw[idx.val[0] * 5]);
  CHECK_THROWS_AS(subset(ds, {20}), ShapeError);
}

TEST_CASE("dataset file round trip is bit exact") {
  const auto ds = build_dataset(DatasetKind::kDsprites, 10, 2);
  const auto path = temp_file("roundtrip.axvd");
  save_dataset(path, ds);
  const auto back = load_dataset(path);
  CHECK(encode_dataset(back) == encode_dataset(ds));
  CHECK(back.names == ds.names);
  CHECK(back.fingerprint == ds.fingerprint);
  std::filesystem::remove(path);

  auto bytes = encode_dataset(ds);
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_dataset(bytes), IoError);
  bytes = encode_dataset(ds);
  bytes.pop_back();
  CHECK_THROWS_AS(decode_dataset(bytes), IoError);
  bytes = encode_dataset(ds);
  bytes.push_back(0);
  CHECK_THROWS_AS(decode_dataset(bytes), IoError);
  CHECK_THROWS_AS(load_dataset(temp_file("missing.axvd")), IoError);
}
