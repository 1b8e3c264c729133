#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include "auxvae/datagen/datagen.hpp"

namespace auxvae::datagen {

using tensor::Shape;
using tensor::Tensor;

namespace {

constexpr char kMagic[4] = {'A', 'X', 'V', 'D'};
constexpr std::uint32_t kVersion = 1;

// Runs body(i) for i in [0, n) over `workers` threads with a static
// interleaved assignment, so results never depend on scheduling.
template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F body) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::string to_string(DatasetKind k) { return k == DatasetKind::kGalaxy ? "galaxy" : "dsprites"; }

DatasetKind parse_dataset_kind(const std::string& text) {
  if (text == "galaxy") return DatasetKind::kGalaxy;
  if (text == "dsprites") return DatasetKind::kDsprites;
  throw ConfigError("unknown dataset kind '" + text + "' (expected galaxy or dsprites)");
}

std::size_t Dataset::factor_index(const std::string& name) const {
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j] == name) return j;
  }
  std::string known;
  for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("dataset has no factor '" + name + "' (available: " + known + ")");
}

Tensor<float> Dataset::factor_columns(const std::vector<std::string>& columns) const {
  std::vector<std::size_t> idx;
  for (const auto& c : columns) idx.push_back(factor_index(c));
  const std::size_t n = size(), f = names.size();
  Tensor<float> out(Shape{n, idx.size()});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < idx.size(); ++j) out[i * idx.size() + j] = factors[i * f + idx[j]];
  return out;
}

Shape Dataset::image_shape() const {
  return Shape(images.shape().begin() + 1, images.shape().end());
}

Dataset build_dataset(DatasetKind kind, std::size_t n, std::uint64_t seed,
                      const BuildOptions& options) {
  if (n < 10) throw ConfigError("build_dataset: n must be at least 10");
  const auto& ranges = kind == DatasetKind::kGalaxy ? galaxy_ranges() : sprite_ranges();
  const std::size_t f = ranges.size();
  Tensor<double> raw(Shape{n, f});
  std::size_t side = 0;
  if (kind == DatasetKind::kGalaxy) {
    options.render.validate();
    raw = lhs_sample(n, ranges, seed);
    side = options.render.size;
  } else {
    // Shape alternates on a grid; the continuous factors are stratified.
    const std::vector<Range> cont(ranges.begin() + 1, ranges.end());
    const Tensor<double> c = lhs_sample(n, cont, seed);
    for (std::size_t i = 0; i < n; ++i) {
      raw[i * f] = static_cast<double>(i % 2);
      for (std::size_t j = 1; j < f; ++j) raw[i * f + j] = c[i * (f - 1) + j - 1];
    }
    side = kSpriteSize;
  }

  std::vector<double> pixels(n * side * side);
  std::vector<char> unresolved(n, 0);
  parallel_for(n, options.workers, [&](std::size_t i) {
    const double* r = raw.data() + i * f;
    Tensor<double> img;
    if (kind == DatasetKind::kGalaxy) {
      auto g = render_galaxy({r[0], r[1], r[2], r[3], r[4]}, options.render);
      img = std::move(g.pixels);
      unresolved[i] = g.unresolved;
    } else {
      img = render_dsprite(r[0] < 0.5 ? SpriteShape::kSquare : SpriteShape::kEllipse, r[1], r[2],
                           r[3], r[4]);
    }
    std::copy(img.data(), img.data() + img.size(), pixels.begin() + i * side * side);
  });

  double peak = 0.0;
  for (double v : pixels) peak = std::max(peak, v);
  if (!(peak > 0.0) || !std::isfinite(peak)) throw NumericalError("build_dataset: images are empty");

  Dataset ds;
  ds.images = Tensor<float>(Shape{n, 1, side, side});
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    ds.images[i] = static_cast<float>(std::clamp(pixels[i] / peak, 0.0, 1.0));
  }
  ds.raw = Tensor<float>(Shape{n, f});
  ds.factors = Tensor<float>(Shape{n, f});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      const double v = raw[i * f + j];
      ds.raw[i * f + j] = static_cast<float>(v);
      const double t = (v - ranges[j].first) / (ranges[j].second - ranges[j].first);
      ds.factors[i * f + j] = static_cast<float>(std::clamp(t, 0.0, 1.0));
    }
  ds.names = kind == DatasetKind::kGalaxy ? kGalaxyFactorNames : kSpriteFactorNames;
  std::string provenance = "kind=" + to_string(kind) + " n=" + std::to_string(n) +
                           " seed=" + std::to_string(seed);
  if (kind == DatasetKind::kGalaxy) provenance += " " + options.render.describe();
  ds.fingerprint = io::sha256(provenance);
  ds.unresolved = static_cast<std::size_t>(std::count(unresolved.begin(), unresolved.end(), 1));
  return ds;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("split: ratios must be nonnegative");
    total += r;
  }
  if (!(total > 0.0)) throw ConfigError("split: ratios must not all be zero");
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> rem{};
  std::size_t used = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double exact = static_cast<double>(n) * ratios[k] / total;
    sizes[k] = static_cast<std::size_t>(std::floor(exact));
    rem[k] = exact - static_cast<double>(sizes[k]);
    used += sizes[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; used < n; ++k, ++used) ++sizes[order[k % 3]];
  return sizes;
}

SplitIndices split_indices(std::size_t n, std::uint64_t seed, const std::array<double, 3>& ratios) {
  const auto sizes = split_sizes(n, ratios);
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  SplitIndices s;
  s.train.assign(perm.begin(), perm.begin() + sizes[0]);
  s.val.assign(perm.begin() + sizes[0], perm.begin() + sizes[0] + sizes[1]);
  s.test.assign(perm.begin() + sizes[0] + sizes[1], perm.end());
  return s;
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& rows) {
  const std::size_t n = ds.size(), f = ds.names.size();
  const std::size_t px = n ? ds.images.size() / n : 0;
  Shape is = ds.images.shape();
  is[0] = rows.size();
  Dataset out;
  out.images = Tensor<float>(is);
  out.factors = Tensor<float>(Shape{rows.size(), f});
  out.raw = Tensor<float>(Shape{rows.size(), f});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw ShapeError("subset: row " + std::to_string(rows[i]) + " out of range");
    std::copy(ds.images.data() + rows[i] * px, ds.images.data() + (rows[i] + 1) * px,
              out.images.data() + i * px);
    std::copy(ds.factors.data() + rows[i] * f, ds.factors.data() + (rows[i] + 1) * f,
              out.factors.data() + i * f);
    std::copy(ds.raw.data() + rows[i] * f, ds.raw.data() + (rows[i] + 1) * f, out.raw.data() + i * f);
  }
  out.names = ds.names;
  out.fingerprint = ds.fingerprint;
  return out;
}

Splits split(const Dataset& ds, std::uint64_t seed, const std::array<double, 3>& ratios) {
  const auto idx = split_indices(ds.size(), seed, ratios);
  return {subset(ds, idx.train), subset(ds, idx.val), subset(ds, idx.test)};
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  if (ds.images.rank() != 4) throw ShapeError("dataset images must be N x C x H x W");
  const std::size_t n = ds.size(), f = ds.names.size();
  if (ds.factors.shape() != Shape{n, f} || ds.raw.shape() != Shape{n, f}) {
    throw ShapeError("dataset factor blocks must be N x F");
  }
  io::BinaryWriter w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  for (std::size_t e : ds.images.shape()) w.u32(static_cast<std::uint32_t>(e));
  w.u32(static_cast<std::uint32_t>(f));
  w.f32s(ds.images.data(), ds.images.size());
  w.f32s(ds.factors.data(), ds.factors.size());
  w.f32s(ds.raw.data(), ds.raw.size());
  for (const auto& name : ds.names) w.str(name);
  w.bytes(ds.fingerprint.data(), ds.fingerprint.size());
  return w.buffer();
}

Dataset decode_dataset(std::vector<std::uint8_t> bytes, const std::string& origin) {
  io::BinaryReader r(std::move(bytes), origin);
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kMagic)) throw IoError(origin + ": not a dataset file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw IoError(origin + ": unsupported dataset version " + std::to_string(version));
  Shape is(4);
  for (auto& e : is) e = r.u32();
  const std::size_t f = r.u32();
  const std::size_t n = is[0];
  const std::size_t count = tensor::element_count(is);
  if (count > r.remaining() / sizeof(float)) throw IoError(origin + ": image block truncated");
  Dataset ds;
  ds.images = Tensor<float>(is);
  r.f32s(ds.images.data(), count);
  ds.factors = Tensor<float>(Shape{n, f});
  r.f32s(ds.factors.data(), n * f);
  ds.raw = Tensor<float>(Shape{n, f});
  r.f32s(ds.raw.data(), n * f);
  for (std::size_t j = 0; j < f; ++j) ds.names.push_back(r.str());
  r.bytes(ds.fingerprint.data(), ds.fingerprint.size());
  r.expect_end();
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  io::BinaryWriter w;
  const auto bytes = encode_dataset(ds);
  w.bytes(bytes.data(), bytes.size());
  w.save(path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  auto r = io::BinaryReader::open(path);
  std::vector<std::uint8_t> bytes(r.remaining());
  r.bytes(bytes.data(), bytes.size());
  return decode_dataset(std::move(bytes), path.string());
}

}  // namespace auxvae::datagen
