#include "auxvae/objective/objective.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "auxvae/tensor/ops.hpp"

namespace auxvae::objective {

using tensor::Shape;
using tensor::Tensor;
using tensor::Var;

namespace {

template <typename T>
Var<T> zero_scalar(tensor::Graph<T>& g) {
  return g.constant(Tensor<T>::scalar(T(0)));
}

template <typename T>
void require_finite(const Var<T>& v, const char* what) {
  if (!v.value().all_finite()) throw NumericalError(std::string(what) + " contains non-finite values");
}

template <typename T>
Tensor<T> vector_tensor(const std::vector<double>& v) {
  Tensor<T> t(Shape{v.size()});
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<T>(v[i]);
  return t;
}

template <typename T>
Tensor<double> to_double(const Tensor<T>& t) {
  return t.template cast<double>();
}

}  // namespace

template <typename T>
PriorSpec<T> make_prior(const Tensor<T>& u, std::size_t n_train, std::size_t d_z,
                        double aux_variance) {
  if (u.rank() != 2) throw ShapeError("make_prior: u must be B x d, got " + tensor::to_string(u.shape()));
  if (n_train < 1) throw ConfigError("make_prior: n_train must be at least 1");
  const std::size_t b = u.dim(0);
  const std::size_t d = u.dim(1);
  if (d > d_z) {
    throw ConfigError("make_prior: d = " + std::to_string(d) + " exceeds d_z = " +
                      std::to_string(d_z));
  }
  PriorSpec<T> p;
  p.n_train = n_train;
  p.d = d;
  p.d_z = d_z;
  p.mu0 = Tensor<T>(Shape{b, d_z});
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < d; ++j) p.mu0[i * d_z + j] = u[i * d + j];
  }
  const double aux = aux_variance > 0.0 ? aux_variance : 1.0 / static_cast<double>(n_train);
  p.var0.assign(d_z, 1.0);
  for (std::size_t j = 0; j < d; ++j) p.var0[j] = std::max(aux, kPriorVarianceFloor);
  return p;
}

template <typename T>
Var<T> kl_diag_gaussians(const Var<T>& mu, const Var<T>& logvar, const PriorSpec<T>& prior) {
  if (mu.shape() != logvar.shape() || mu.shape() != prior.mu0.shape()) {
    throw ShapeError("kl: mu " + tensor::to_string(mu.shape()) + ", logvar " +
                     tensor::to_string(logvar.shape()) + " and prior mean " +
                     tensor::to_string(prior.mu0.shape()) + " must agree");
  }
  require_finite(mu, "kl: mu");
  require_finite(logvar, "kl: logvar");
  for (double v : prior.var0) {
    if (!(v > 0.0) || !std::isfinite(v)) throw NumericalError("kl: prior variance must be finite and positive");
  }
  tensor::Graph<T>& g = mu.graph();
  const std::size_t b = mu.shape()[0];
  std::vector<double> inv(prior.var0.size());
  std::vector<double> offset(prior.var0.size());
  for (std::size_t l = 0; l < inv.size(); ++l) {
    const double v = std::max(prior.var0[l], kPriorVarianceFloor);
    inv[l] = 1.0 / v;
    offset[l] = std::log(v) - 1.0;
  }
  Var<T> inv_c = g.constant(vector_tensor<T>(inv));
  Var<T> diff = tensor::sub(mu, g.constant(prior.mu0));
  Var<T> terms = tensor::add(tensor::mul(tensor::square(diff), inv_c),
                             tensor::mul(tensor::exp(logvar), inv_c));
  terms = tensor::add(tensor::sub(terms, logvar), g.constant(vector_tensor<T>(offset)));
  return tensor::scale(tensor::sum(terms), static_cast<T>(0.5 / static_cast<double>(b)));
}

Tensor<double> sample_conditional_prior(const PriorSpec<double>& prior, std::size_t count,
                                        std::uint64_t seed) {
  const std::size_t rows = prior.mu0.rank() == 2 ? prior.mu0.dim(0) : 0;
  if (rows == 0) throw ShapeError("sample_conditional_prior: prior has no mean rows");
  const std::size_t d_z = prior.d_z;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Tensor<double> out(Shape{count, d_z});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t r = i % rows;
    for (std::size_t l = 0; l < d_z; ++l) {
      const double sd = std::sqrt(std::max(prior.var0[l], kPriorVarianceFloor));
      out[i * d_z + l] = prior.mu0[r * d_z + l] + sd * nd(rng);
    }
  }
  return out;
}

template <typename T>
Moments<T> batch_moments(const Var<T>& v, const Var<T>& w) {
  const Shape sv = v.shape();
  const Shape sw = w.shape();
  if (sv.size() != 2 || sw.size() != 2 || sv[0] != sw[0]) {
    throw ShapeError("batch_corr: operands must be B x m with equal B, got " + tensor::to_string(sv) +
                     " and " + tensor::to_string(sw));
  }
  if (sv[0] < 2) throw ShapeError("batch_corr: need at least 2 rows, got " + std::to_string(sv[0]));
  const T norm = static_cast<T>(1.0 / static_cast<double>(sv[0] - 1));
  Var<T> vc = tensor::sub(v, tensor::mean_rows(v));
  Var<T> wc = tensor::sub(w, tensor::mean_rows(w));
  Moments<T> m;
  m.cov = tensor::scale(tensor::matmul(tensor::transpose(vc), wc), norm);
  m.var_v = tensor::scale(tensor::sum_rows(tensor::square(vc)), norm);
  m.var_w = tensor::scale(tensor::sum_rows(tensor::square(wc)), norm);
  return m;
}

template <typename T>
Var<T> corr_from_moments(const Moments<T>& m, double eps) {
  const T e = static_cast<T>(eps);
  Var<T> inv_v = tensor::reciprocal(tensor::add_scalar(tensor::sqrt(m.var_v), e));
  Var<T> inv_w = tensor::reciprocal(tensor::add_scalar(tensor::sqrt(m.var_w), e));
  Var<T> c = tensor::mul(m.cov, inv_w);
  return tensor::transpose(tensor::mul(tensor::transpose(c), inv_v));
}

template <typename T>
Var<T> batch_corr(const Var<T>& v, const Var<T>& w, double eps) {
  return corr_from_moments(batch_moments(v, w), eps);
}

Tensor<double> batch_corr_values(const Tensor<double>& v, const Tensor<double>& w, double eps) {
  if (v.rank() != 2 || w.rank() != 2 || v.dim(0) != w.dim(0)) {
    throw ShapeError("batch_corr: operands must be B x m with equal B, got " +
                     tensor::to_string(v.shape()) + " and " + tensor::to_string(w.shape()));
  }
  const std::size_t n = v.dim(0), mv = v.dim(1), mw = w.dim(1);
  if (n < 2) throw ShapeError("batch_corr: need at least 2 rows, got " + std::to_string(n));
  auto centred = [n](const Tensor<double>& t) {
    const std::size_t m = t.dim(1);
    Tensor<double> c(t.shape());
    for (std::size_t j = 0; j < m; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += t[i * m + j];
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) c[i * m + j] = t[i * m + j] - mean;
    }
    return c;
  };
  const Tensor<double> vc = centred(v), wc = centred(w);
  auto sd = [n](const Tensor<double>& c, std::size_t j) {
    const std::size_t m = c.dim(1);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += c[i * m + j] * c[i * m + j];
    return std::sqrt(s / static_cast<double>(n - 1));
  };
  std::vector<double> sv(mv), sw(mw);
  for (std::size_t a = 0; a < mv; ++a) sv[a] = sd(vc, a);
  for (std::size_t b = 0; b < mw; ++b) sw[b] = sd(wc, b);
  Tensor<double> out(Shape{mv, mw});
  for (std::size_t a = 0; a < mv; ++a) {
    for (std::size_t b = 0; b < mw; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += vc[i * mv + a] * wc[i * mw + b];
      out[a * mw + b] = s / static_cast<double>(n - 1) / ((sv[a] + eps) * (sw[b] + eps));
    }
  }
  return out;
}

template <typename T>
Var<T> correlation(const Var<T>& v, const Var<T>& w, CorrelationState* state,
                   const std::string& key, double eps) {
  Moments<T> m = batch_moments(v, w);
  if (state == nullptr) return corr_from_moments(m, eps);
  auto it = state->entries.find(key);
  if (it != state->entries.end()) {
    auto& e = it->second;
    if (e.cov.shape() != m.cov.shape()) {
      throw ShapeError("correlation state '" + key + "': shape changed from " +
                       tensor::to_string(e.cov.shape()) + " to " + tensor::to_string(m.cov.shape()));
    }
    tensor::Graph<T>& g = v.graph();
    const T keep = static_cast<T>(state->momentum);
    const T fresh = static_cast<T>(1.0 - state->momentum);
    auto mix = [&](const Var<T>& batch, const Tensor<double>& prev) {
      Tensor<T> p = prev.template cast<T>();
      for (std::size_t i = 0; i < p.size(); ++i) p[i] *= keep;
      return tensor::add(tensor::scale(batch, fresh), g.constant(std::move(p)));
    };
    m.cov = mix(m.cov, e.cov);
    m.var_v = mix(m.var_v, e.var_v);
    m.var_w = mix(m.var_w, e.var_w);
  }
  state->entries[key] = {to_double(m.cov.value()), to_double(m.var_v.value()),
                         to_double(m.var_w.value())};
  return corr_from_moments(m, eps);
}

template <typename T>
Var<T> stack_powers(const Var<T>& v, std::size_t k_max) {
  if (k_max < 1) throw ConfigError("polynomial degree K must be at least 1");
  std::vector<Var<T>> parts{v};
  for (std::size_t k = 2; k <= k_max; ++k) parts.push_back(tensor::mul(parts.back(), v));
  return k_max == 1 ? v : tensor::concat(parts, 1);
}

template <typename T>
Var<T> r0(const Var<T>& v, const Var<T>& w, std::size_t k_max, CorrelationState* state,
          const std::string& key, double eps) {
  if (k_max < 1) throw ConfigError("r0: K must be at least 1");
  const std::size_t mv = v.shape().at(1), mw = w.shape().at(1);
  if (mv == 0 || mw == 0) return zero_scalar(v.graph());
  Var<T> c = correlation(stack_powers(v, k_max), stack_powers(w, k_max), state, key, eps);
  const double norm = static_cast<double>(k_max * k_max * mv * mw);
  return tensor::scale(tensor::sum(tensor::abs(c)), static_cast<T>(1.0 / norm));
}

template <typename T>
Var<T> r1(const Var<T>& v, const Var<T>& w, std::size_t k_max, CorrelationState* state,
          const std::string& key, double eps) {
  if (k_max < 1) throw ConfigError("r1: K must be at least 1");
  if (v.shape().at(1) != 1 || w.shape().at(1) != 1) {
    throw ShapeError("r1: both operands must have one column, got " + tensor::to_string(v.shape()) +
                     " and " + tensor::to_string(w.shape()));
  }
  Var<T> c = correlation(stack_powers(v, k_max), stack_powers(w, k_max), state, key, eps);
  const double norm = static_cast<double>(k_max * k_max);
  return tensor::add_scalar(tensor::scale(tensor::sum(tensor::abs(c)), static_cast<T>(-1.0 / norm)),
                            T(1));
}

std::string to_string(CorrMode m) { return m == CorrMode::kBatch ? "batch" : "ema"; }

CorrMode parse_corr_mode(const std::string& text) {
  if (text == "batch") return CorrMode::kBatch;
  if (text == "ema") return CorrMode::kEma;
  throw ConfigError("unknown correlation mode '" + text + "' (expected batch or ema)");
}

template <typename T>
LossValues values_of(const LossBreakdown<T>& b) {
  return {static_cast<double>(b.total.value().item()), static_cast<double>(b.recon.value().item()),
          static_cast<double>(b.kl.value().item()),
          static_cast<double>(b.intra_explicit.value().item()),
          static_cast<double>(b.inter.value().item())};
}

namespace {

template <typename T>
Var<T> columns_except(const Var<T>& m, std::size_t j) {
  const std::size_t d = m.shape()[1];
  if (j == 0) return tensor::slice(m, 1, 1, d);
  if (j + 1 == d) return tensor::slice(m, 1, 0, j);
  return tensor::concat(std::vector<Var<T>>{tensor::slice(m, 1, 0, j), tensor::slice(m, 1, j + 1, d)},
                        1);
}

template <typename T>
std::size_t check_batch(const genmodel::ArchitectureDescriptor& arch, const Var<T>& x) {
  const Shape s = x.shape();
  if (s.size() != 4 || Shape(s.begin() + 1, s.end()) != arch.image) {
    throw ShapeError("loss: batch " + tensor::to_string(s) + " does not match image shape " +
                     tensor::to_string(arch.image));
  }
  return s[0];
}

template <typename T>
void check_noise(const Tensor<T>& n, std::size_t b, std::size_t d_z) {
  if (n.shape() != Shape{b, d_z}) {
    throw ShapeError("loss: noise " + tensor::to_string(n.shape()) + " must be " +
                     tensor::to_string(Shape{b, d_z}));
  }
}

}  // namespace

template <typename T>
LossBreakdown<T> aux_vae_loss(const genmodel::ArchitectureDescriptor& arch,
                              const nn::BoundParams<T>& params, const Var<T>& x,
                              const Tensor<T>& u, std::size_t n_train, const LossConfig& config,
                              const std::vector<Tensor<T>>& noise, CorrelationState* state) {
  const std::size_t b = check_batch(arch, x);
  const std::size_t d = arch.d;
  if (u.shape() != Shape{b, d}) {
    throw ShapeError("aux_vae_loss: auxiliary block " + tensor::to_string(u.shape()) + " must be " +
                     tensor::to_string(Shape{b, d}));
  }
  if (d == 0 && config.lambda1 > 0.0) {
    throw ConfigError("aux_vae_loss: lambda1 > 0 needs at least one auxiliary latent");
  }
  if (config.samples < 1 || noise.size() != config.samples) {
    throw ConfigError("aux_vae_loss: expected " + std::to_string(config.samples) +
                      " noise draws, got " + std::to_string(noise.size()));
  }
  if (b < 2) throw ShapeError("aux_vae_loss: batch needs at least 2 samples");
  tensor::Graph<T>& g = x.graph();

  auto post = genmodel::encode(arch, params, x);
  const auto prior = make_prior(u, n_train, arch.d_z, config.aux_variance);

  LossBreakdown<T> out;
  out.kl = kl_diag_gaussians(post.mu, post.logvar, prior);

  Var<T> recon;
  for (std::size_t j = 0; j < noise.size(); ++j) {
    check_noise(noise[j], b, arch.d_z);
    Var<T> z = genmodel::reparameterize(post, g.constant(noise[j]));
    Var<T> nll = tensor::bce_with_logits_sum(genmodel::decode_logits(arch, params, z), x);
    recon = j == 0 ? nll : tensor::add(recon, nll);
  }
  out.recon = tensor::scale(recon, static_cast<T>(1.0 / static_cast<double>(b * noise.size())));

  auto [mu_aux, mu_recon] = genmodel::partition(post.mu, d);
  Var<T> u_var = g.constant(u);

  out.intra_explicit = zero_scalar(g);
  if (config.lambda1 != 0.0) {
    Var<T> acc;
    for (std::size_t j = 0; j < d; ++j) {
      Var<T> uj = tensor::slice(u_var, 1, j, j + 1);
      Var<T> explicit_term = r1(uj, tensor::slice(mu_aux, 1, j, j + 1), config.k_max, state,
                                "r1." + std::to_string(j), config.eps);
      Var<T> term = explicit_term;
      if (d > 1) {
        term = tensor::add(term, r0(uj, columns_except(mu_aux, j), config.k_max, state,
                                    "r0." + std::to_string(j), config.eps));
      }
      acc = j == 0 ? term : tensor::add(acc, term);
    }
    out.intra_explicit = tensor::scale(acc, static_cast<T>(config.lambda1));
  }

  out.inter = zero_scalar(g);
  if (config.lambda2 != 0.0 && d > 0 && d < arch.d_z) {
    out.inter = tensor::scale(r0(u_var, mu_recon, config.k_max, state, "inter", config.eps),
                              static_cast<T>(config.lambda2));
  }

  out.total = tensor::add(tensor::add(out.recon, tensor::scale(out.kl, static_cast<T>(config.beta))),
                          tensor::add(out.intra_explicit, out.inter));
  return out;
}

template <typename T>
LossBreakdown<T> beta_vae_loss(const genmodel::ArchitectureDescriptor& arch,
                               const nn::BoundParams<T>& params, const Var<T>& x, double beta,
                               const Tensor<T>& noise) {
  const std::size_t b = check_batch(arch, x);
  check_noise(noise, b, arch.d_z);
  tensor::Graph<T>& g = x.graph();
  auto post = genmodel::encode(arch, params, x);
  require_finite(post.mu, "kl: mu");
  require_finite(post.logvar, "kl: logvar");
  const T inv_b = static_cast<T>(1.0 / static_cast<double>(b));

  // KL to N(0, I): 0.5 * sum(mu^2 + sigma^2 - log sigma^2 - 1).
  Var<T> kl_terms = tensor::sub(tensor::add(tensor::square(post.mu), tensor::exp(post.logvar)),
                                post.logvar);
  Var<T> kl = tensor::scale(tensor::add_scalar(tensor::sum(kl_terms),
                                               static_cast<T>(-static_cast<double>(b * arch.d_z))),
                            static_cast<T>(0.5) * inv_b);

  Var<T> sd = tensor::exp(tensor::scale(post.logvar, static_cast<T>(0.5)));
  Var<T> z = tensor::add(post.mu, tensor::mul(sd, g.constant(noise)));
  Var<T> recon =
      tensor::scale(tensor::bce_with_logits_sum(genmodel::decode_logits(arch, params, z), x), inv_b);

  LossBreakdown<T> out;
  out.recon = recon;
  out.kl = kl;
  out.intra_explicit = zero_scalar(g);
  out.inter = zero_scalar(g);
  out.total = tensor::add(recon, tensor::scale(kl, static_cast<T>(beta)));
  return out;
}

void write_log_header(std::ostream& os) { os << "epoch,step,total,recon,kl,intra_explicit,inter\n"; }

void write_log_row(std::ostream& os, std::size_t epoch, std::size_t step, const LossValues& v) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%.9g,%.9g,%.9g,%.9g\n", epoch, step, v.total, v.recon,
                v.kl, v.intra_explicit, v.inter);
  os << buf;
}

#define AUXVAE_INSTANTIATE_OBJECTIVE(T)                                                          \
  template PriorSpec<T> make_prior(const Tensor<T>&, std::size_t, std::size_t, double);          \
  template Var<T> kl_diag_gaussians(const Var<T>&, const Var<T>&, const PriorSpec<T>&);          \
  template Moments<T> batch_moments(const Var<T>&, const Var<T>&);                               \
  template Var<T> corr_from_moments(const Moments<T>&, double);                                  \
  template Var<T> batch_corr(const Var<T>&, const Var<T>&, double);                              \
  template Var<T> correlation(const Var<T>&, const Var<T>&, CorrelationState*,                   \
                              const std::string&, double);                                       \
  template Var<T> stack_powers(const Var<T>&, std::size_t);                                      \
  template Var<T> r0(const Var<T>&, const Var<T>&, std::size_t, CorrelationState*,               \
                     const std::string&, double);                                                \
  template Var<T> r1(const Var<T>&, const Var<T>&, std::size_t, CorrelationState*,               \
                     const std::string&, double);                                                \
  template LossValues values_of(const LossBreakdown<T>&);                                        \
  template LossBreakdown<T> aux_vae_loss(const genmodel::ArchitectureDescriptor&,                \
                                         const nn::BoundParams<T>&, const Var<T>&,               \
                                         const Tensor<T>&, std::size_t, const LossConfig&,       \
                                         const std::vector<Tensor<T>>&, CorrelationState*);      \
  template LossBreakdown<T> beta_vae_loss(const genmodel::ArchitectureDescriptor&,               \
                                          const nn::BoundParams<T>&, const Var<T>&, double,      \
                                          const Tensor<T>&);

AUXVAE_INSTANTIATE_OBJECTIVE(float)
AUXVAE_INSTANTIATE_OBJECTIVE(double)

}  // namespace auxvae::objective
