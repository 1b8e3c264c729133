#include "auxvae/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace auxvae::metrics {

using tensor::Shape;
using tensor::Tensor;

namespace {

void require_pair(const Tensor<double>& u, const Tensor<double>& z, const char* what) {
  if (u.rank() != 2 || z.rank() != 2 || u.dim(0) != z.dim(0)) {
    throw ShapeError(std::string(what) + ": expected N x d and N x d_z with equal N, got " +
                     tensor::to_string(u.shape()) + " and " + tensor::to_string(z.shape()));
  }
}

struct ColumnStats {
  std::vector<double> mean;
  std::vector<double> ss;  // sum of squared deviations
};

ColumnStats column_stats(const Tensor<double>& t) {
  const std::size_t n = t.dim(0), m = t.dim(1);
  ColumnStats s{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) s.mean[j] += t[i * m + j];
  for (auto& v : s.mean) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double dv = t[i * m + j] - s.mean[j];
      s.ss[j] += dv * dv;
    }
  return s;
}

// Cross products of centred columns, d x d_z.
Tensor<double> cross(const Tensor<double>& u, const ColumnStats& su, const Tensor<double>& z,
                     const ColumnStats& sz) {
  const std::size_t n = u.dim(0), d = u.dim(1), dz = z.dim(1);
  Tensor<double> c(Shape{d, dz});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double a = u[i * d + j] - su.mean[j];
      for (std::size_t l = 0; l < dz; ++l) c[j * dz + l] += a * (z[i * dz + l] - sz.mean[l]);
    }
  return c;
}

}  // namespace

CorrMatrixReport corr_report(const Tensor<double>& u, const Tensor<double>& z,
                             std::vector<std::string> factor_names) {
  require_pair(u, z, "corr_report");
  const std::size_t n = u.dim(0), d = u.dim(1), dz = z.dim(1);
  if (n < 2) throw ShapeError("corr_report: need at least 2 samples");
  if (factor_names.empty()) {
    for (std::size_t j = 0; j < d; ++j) factor_names.push_back("u" + std::to_string(j));
  }
  if (factor_names.size() != d) throw ConfigError("corr_report: factor name count does not match d");
  const auto su = column_stats(u), sz = column_stats(z);
  Tensor<double> c = cross(u, su, z, sz);
  const double norm = static_cast<double>(n - 1);
  constexpr double eps = 1e-8;
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t l = 0; l < dz; ++l) {
      c[j * dz + l] = (c[j * dz + l] / norm) /
                      ((std::sqrt(su.ss[j] / norm) + eps) * (std::sqrt(sz.ss[l] / norm) + eps));
    }
  CorrMatrixReport r;
  r.corr = std::move(c);
  r.factor_names = std::move(factor_names);
  for (std::size_t l = 0; l < dz; ++l) r.latent_indices.push_back(l);
  r.samples = n;
  return r;
}

double lds(const Tensor<double>& corr) {
  if (corr.rank() != 2 || corr.dim(0) == 0 || corr.dim(1) == 0) {
    throw ShapeError("lds: need a non-empty d x d_z matrix, got " + tensor::to_string(corr.shape()));
  }
  const std::size_t d = corr.dim(0), dz = corr.dim(1);
  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double mx = 0.0, sum = 0.0;
    for (std::size_t l = 0; l < dz; ++l) {
      const double a = std::abs(corr[j * dz + l]);
      if (!std::isfinite(a)) throw NumericalError("lds: non-finite correlation");
      mx = std::max(mx, a);
      sum += a;
    }
    total += sum > 0.0 ? mx / sum : 1.0 / static_cast<double>(dz);
  }
  return total / static_cast<double>(d);
}

double lds(const CorrMatrixReport& report) { return lds(report.corr); }

Tensor<double> sap_scores(const Tensor<double>& u, const Tensor<double>& z) {
  require_pair(u, z, "sap");
  if (u.dim(0) < 10) throw ShapeError("sap: need at least 10 samples");
  const std::size_t d = u.dim(1), dz = z.dim(1);
  const auto su = column_stats(u), sz = column_stats(z);
  Tensor<double> s = cross(u, su, z, sz);
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t l = 0; l < dz; ++l) {
      const double denom = su.ss[j] * sz.ss[l];
      const double sxy = s[j * dz + l];
      s[j * dz + l] = denom > 0.0 ? std::min(1.0, sxy * sxy / denom) : 0.0;
    }
  return s;
}

double sap(const Tensor<double>& u, const Tensor<double>& z) {
  require_pair(u, z, "sap");
  if (z.dim(1) < 2) throw ConfigError("sap: needs at least two latents");
  if (u.dim(1) == 0) throw ConfigError("sap: needs at least one factor");
  const Tensor<double> s = sap_scores(u, z);
  const std::size_t d = s.dim(0), dz = s.dim(1);
  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> row(s.data() + j * dz, s.data() + (j + 1) * dz);
    std::partial_sort(row.begin(), row.begin() + 2, row.end(), std::greater<>());
    total += row[0] - row[1];
  }
  return total / static_cast<double>(d);
}

double ssim(const Tensor<double>& x, const Tensor<double>& y, const SsimOptions& options) {
  if (x.shape() != y.shape()) {
    throw ShapeError("ssim: shape mismatch " + tensor::to_string(x.shape()) + " vs " +
                     tensor::to_string(y.shape()));
  }
  if (x.rank() != 2) throw ShapeError("ssim: images must be H x W, got " + tensor::to_string(x.shape()));
  const std::size_t h = x.dim(0), w = x.dim(1), k = options.window;
  if (k < 2 || h < k || w < k) {
    throw ShapeError("ssim: window " + std::to_string(k) + " does not fit " + tensor::to_string(x.shape()));
  }
  const double c1 = std::pow(options.k1 * options.dynamic_range, 2);
  const double c2 = std::pow(options.k2 * options.dynamic_range, 2);
  // Summed-area tables of x, y, x^2, y^2, xy.
  const std::size_t W1 = w + 1;
  std::vector<double> sx((h + 1) * W1), sy(sx.size()), sxx(sx.size()), syy(sx.size()), sxy(sx.size());
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double a = x[i * w + j], b = y[i * w + j];
      const std::size_t p = (i + 1) * W1 + (j + 1), up = i * W1 + (j + 1), left = (i + 1) * W1 + j,
                        diag = i * W1 + j;
      sx[p] = a + sx[up] + sx[left] - sx[diag];
      sy[p] = b + sy[up] + sy[left] - sy[diag];
      sxx[p] = a * a + sxx[up] + sxx[left] - sxx[diag];
      syy[p] = b * b + syy[up] + syy[left] - syy[diag];
      sxy[p] = a * b + sxy[up] + sxy[left] - sxy[diag];
    }
  const double np = static_cast<double>(k * k);
  const double cov_norm = np / (np - 1.0);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + k <= h; ++i)
    for (std::size_t j = 0; j + k <= w; ++j) {
      auto box = [&](const std::vector<double>& s) {
        return s[(i + k) * W1 + (j + k)] - s[i * W1 + (j + k)] - s[(i + k) * W1 + j] + s[i * W1 + j];
      };
      const double mx = box(sx) / np, my = box(sy) / np;
      const double vx = cov_norm * (box(sxx) / np - mx * mx);
      const double vy = cov_norm * (box(syy) / np - my * my);
      const double cxy = cov_norm * (box(sxy) / np - mx * my);
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / static_cast<double>(count);
}

std::vector<double> ssim_batch(const Tensor<float>& x, const Tensor<float>& y,
                               const SsimOptions& options) {
  if (x.shape() != y.shape() || x.rank() != 4) {
    throw ShapeError("ssim_batch: expected two equal N x C x H x W batches, got " +
                     tensor::to_string(x.shape()) + " and " + tensor::to_string(y.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<double> out(n, 0.0);
  Tensor<double> a(Shape{h, w}), b(Shape{h, w});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (i * c + ch) * h * w;
      for (std::size_t p = 0; p < h * w; ++p) {
        a[p] = x[off + p];
        b[p] = y[off + p];
      }
      out[i] += ssim(a, b, options);
    }
    out[i] /= static_cast<double>(c);
  }
  return out;
}

namespace {

template <typename T>
double mse_impl(const Tensor<T>& x, const Tensor<T>& y) {
  if (x.shape() != y.shape()) {
    throw ShapeError("mse: shape mismatch " + tensor::to_string(x.shape()) + " vs " +
                     tensor::to_string(y.shape()));
  }
  if (x.size() == 0) throw ShapeError("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dv = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    s += dv * dv;
  }
  return s / static_cast<double>(x.size());
}

double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

double mse(const Tensor<double>& x, const Tensor<double>& y) { return mse_impl(x, y); }
double mse(const Tensor<float>& x, const Tensor<float>& y) { return mse_impl(x, y); }

Summary summarize(std::vector<double> values) {
  if (values.empty()) throw ShapeError("summarize: no values");
  std::sort(values.begin(), values.end());
  Summary s;
  s.count = values.size();
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile_sorted(values, 0.25);
  s.median = quantile_sorted(values, 0.5);
  s.q3 = quantile_sorted(values, 0.75);
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  return s;
}

double median(std::vector<double> values) { return summarize(std::move(values)).median; }

void write_metrics_csv(std::ostream& os, const MetricsReport& r) {
  char buf[128];
  auto row = [&](const char* name, double v) {
    std::snprintf(buf, sizeof buf, "%s,%.17g\n", name, v);
    os << buf;
  };
  os << "metric,value\n";
  row("lds", r.lds);
  row("sap", r.sap);
  row("mse", r.mse);
  row("ssim_min", r.ssim.min);
  row("ssim_q1", r.ssim.q1);
  row("ssim_median", r.ssim.median);
  row("ssim_q3", r.ssim.q3);
  row("ssim_max", r.ssim.max);
  row("ssim_mean", r.ssim.mean);
  row("samples", static_cast<double>(r.corr.samples));
  os << '\n';
  os << "factor";
  for (std::size_t l : r.corr.latent_indices) os << ",z" << l;
  os << '\n';
  const std::size_t dz = r.corr.latent_indices.size();
  for (std::size_t j = 0; j < r.corr.factor_names.size(); ++j) {
    os << r.corr.factor_names[j];
    for (std::size_t l = 0; l < dz; ++l) {
      std::snprintf(buf, sizeof buf, ",%.17g", r.corr.corr[j * dz + l]);
      os << buf;
    }
    os << '\n';
  }
}

}  // namespace auxvae::metrics
