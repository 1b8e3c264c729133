#include "auxvae/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "auxvae/nn/adam.hpp"

namespace auxvae::trainer {

using tensor::Shape;
using tensor::Tensor;

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

Tensor<double> to_double(const Tensor<float>& t) { return t.cast<double>(); }

const char* first_nonfinite(const objective::LossValues& v) {
  if (!std::isfinite(v.recon)) return "recon";
  if (!std::isfinite(v.kl)) return "kl";
  if (!std::isfinite(v.intra_explicit)) return "intra_explicit";
  if (!std::isfinite(v.inter)) return "inter";
  if (!std::isfinite(v.total)) return "total";
  return nullptr;
}

}  // namespace

std::string to_string(ObjectiveKind k) { return k == ObjectiveKind::kAuxVae ? "aux_vae" : "beta_vae"; }

ObjectiveKind parse_objective_kind(const std::string& text) {
  if (text == "aux_vae") return ObjectiveKind::kAuxVae;
  if (text == "beta_vae") return ObjectiveKind::kBetaVae;
  throw ConfigError("unknown objective '" + text + "' (expected aux_vae or beta_vae)");
}

std::vector<std::string> case_factors(const std::string& name) {
  if (name == "case1") return {"flux", "radius", "g1", "g2", "psf"};
  if (name == "case2") return {"radius", "g1", "g2"};
  if (name == "case3") return {"flux", "psf"};
  if (name == "none") return {};
  std::vector<std::string> out;
  std::stringstream ss(name);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw ConfigError("case '" + name + "': empty factor name");
    if (std::find(out.begin(), out.end(), item) != out.end()) {
      throw ConfigError("case '" + name + "': factor '" + item + "' listed twice");
    }
    out.push_back(item);
  }
  if (out.empty()) throw ConfigError("case must name at least one factor or be 'none'");
  return out;
}

std::vector<std::string> TrainConfig::aux_factors() const {
  return objective == ObjectiveKind::kAuxVae ? eval_factors() : std::vector<std::string>{};
}

void TrainConfig::validate() const {
  const std::size_t d = aux_factors().size();
  if (d_z < 1) throw ConfigError("d_z must be at least 1");
  if (d > d_z) {
    throw ConfigError("case '" + case_name + "' has " + std::to_string(d) +
                      " auxiliary factors, more than d_z = " + std::to_string(d_z));
  }
  if (batch < 2) throw ConfigError("batch must be at least 2");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(loss.beta >= 0.0)) throw ConfigError("beta must be nonnegative");
  if (!(loss.lambda1 >= 0.0) || !(loss.lambda2 >= 0.0)) throw ConfigError("lambda1 and lambda2 must be nonnegative");
  if (loss.k_max < 1) throw ConfigError("k_max must be at least 1");
  if (loss.samples < 1) throw ConfigError("samples must be at least 1");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be nonnegative");
  if (objective == ObjectiveKind::kAuxVae && d == 0 && loss.lambda1 > 0.0) {
    throw ConfigError("aux_vae with no auxiliary factors needs lambda1 = 0");
  }
}

TrainConfig TrainConfig::from_config(const ConfigFile& c) {
  TrainConfig t;
  t.dataset = c.get("data", "path", "");
  t.split_seed = c.get_u64("data", "split_seed", t.split_seed);
  t.objective = parse_objective_kind(c.get("model", "objective", to_string(t.objective)));
  t.case_name = c.get("model", "case", t.case_name);
  t.arch = genmodel::parse_arch_variant(c.get("model", "arch", genmodel::to_string(t.arch)));
  t.d_z = c.get_size("model", "d_z", t.d_z);
  const double default_beta = t.objective == ObjectiveKind::kBetaVae ? 10.0 : t.loss.beta;
  t.loss.beta = c.get_double("loss", "beta", default_beta);
  t.loss.lambda1 = c.get_double("loss", "lambda1", t.loss.lambda1);
  t.loss.lambda2 = c.get_double("loss", "lambda2", t.loss.lambda2);
  t.loss.k_max = c.get_size("loss", "k_max", t.loss.k_max);
  t.loss.samples = c.get_size("loss", "samples", t.loss.samples);
  t.loss.eps = c.get_double("loss", "eps", t.loss.eps);
  t.loss.aux_variance = c.get_double("loss", "aux_variance", t.loss.aux_variance);
  t.corr_mode = objective::parse_corr_mode(c.get("loss", "corr_mode", objective::to_string(t.corr_mode)));
  t.batch = c.get_size("train", "batch", t.batch);
  t.lr = c.get_double("train", "lr", t.lr);
  t.epochs = c.get_size("train", "epochs", t.epochs);
  t.seed = c.get_u64("train", "seed", t.seed);
  t.clip_norm = c.get_double("train", "clip_norm", t.clip_norm);
  t.validate();
  return t;
}

void TrainConfig::write_to(ConfigFile& c) const {
  c.set("data", "path", dataset);
  c.set("data", "split_seed", std::to_string(split_seed));
  c.set("model", "objective", to_string(objective));
  c.set("model", "case", case_name);
  c.set("model", "arch", genmodel::to_string(arch));
  c.set("model", "d_z", std::to_string(d_z));
  c.set("loss", "beta", format_double(loss.beta));
  c.set("loss", "lambda1", format_double(loss.lambda1));
  c.set("loss", "lambda2", format_double(loss.lambda2));
  c.set("loss", "k_max", std::to_string(loss.k_max));
  c.set("loss", "samples", std::to_string(loss.samples));
  c.set("loss", "eps", format_double(loss.eps));
  c.set("loss", "aux_variance", format_double(loss.aux_variance));
  c.set("loss", "corr_mode", objective::to_string(corr_mode));
  c.set("train", "batch", std::to_string(batch));
  c.set("train", "lr", format_double(lr));
  c.set("train", "epochs", std::to_string(epochs));
  c.set("train", "seed", std::to_string(seed));
  c.set("train", "clip_norm", format_double(clip_norm));
}

std::string TrainConfig::to_text() const {
  ConfigFile c;
  write_to(c);
  return c.to_text();
}

// ---- checkpoint format ----

namespace {

constexpr char kCkptMagic[4] = {'A', 'X', 'V', 'C'};
constexpr std::uint32_t kCkptVersion = 1;

ConfigFile::Schema checkpoint_schema() {
  auto s = full_schema();
  s["checkpoint"] = {"final_epoch", "log_digest"};
  return s;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  io::BinaryWriter w;
  w.bytes(kCkptMagic, 4);
  w.u32(kCkptVersion);
  w.str(ckpt.model.arch.to_text());
  w.u32(static_cast<std::uint32_t>(ckpt.model.params.size()));
  for (const auto& p : ckpt.model.params) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t e : p.value.shape()) w.u32(static_cast<std::uint32_t>(e));
    w.f32s(p.value.data(), p.value.size());
  }
  ConfigFile c;
  ckpt.config.write_to(c);
  c.set("checkpoint", "final_epoch", std::to_string(ckpt.final_epoch));
  c.set("checkpoint", "log_digest", ckpt.log_digest.empty() ? "none" : ckpt.log_digest);
  w.str(c.to_text());
  w.u64(ckpt.seed);
  return w.buffer();
}

Checkpoint decode_checkpoint(std::vector<std::uint8_t> bytes, const std::string& origin) {
  io::BinaryReader r(std::move(bytes), origin);
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kCkptMagic)) throw IoError(origin + ": not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCkptVersion) {
    throw IoError(origin + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  try {
    ckpt.model.arch = genmodel::ArchitectureDescriptor::from_text(r.str());
  } catch (const ConfigError& e) {
    throw IoError(origin + ": bad architecture block: " + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw IoError(origin + ": parameter '" + name + "' has implausible rank");
    Shape s(rank);
    for (auto& e : s) e = r.u32();
    const std::size_t n = tensor::element_count(s);
    if (n > r.remaining() / sizeof(float)) throw IoError(origin + ": parameter '" + name + "' truncated");
    Tensor<float> t(s);
    r.f32s(t.data(), n);
    ckpt.model.params.add(std::move(name), std::move(t));
  }
  const std::string text = r.str();
  ckpt.seed = r.u64();
  r.expect_end();
  try {
    const auto c = ConfigFile::parse(text, checkpoint_schema(), origin + " (config)");
    ckpt.config = TrainConfig::from_config(c);
    ckpt.final_epoch = c.get_size("checkpoint", "final_epoch", 0);
    ckpt.log_digest = c.get("checkpoint", "log_digest", "none");
    if (ckpt.log_digest == "none") ckpt.log_digest.clear();
  } catch (const ConfigError& e) {
    throw IoError(origin + ": bad config block: " + e.what());
  }
  // The parameter set must be exactly what the architecture expects.
  const auto fresh = genmodel::init_model<float>(ckpt.model.arch, 0);
  if (fresh.params.size() != ckpt.model.params.size()) {
    throw IoError(origin + ": parameter count does not match the architecture");
  }
  for (const auto& p : fresh.params) {
    if (!ckpt.model.params.contains(p.name) ||
        ckpt.model.params.at(p.name).value.shape() != p.value.shape()) {
      throw IoError(origin + ": parameter '" + p.name + "' missing or misshapen");
    }
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::BinaryWriter w;
  const auto bytes = encode_checkpoint(ckpt);
  w.bytes(bytes.data(), bytes.size());
  w.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto r = io::BinaryReader::open(path);
  std::vector<std::uint8_t> bytes(r.remaining());
  r.bytes(bytes.data(), bytes.size());
  return decode_checkpoint(std::move(bytes), path.string());
}

// ---- training ----

TrainResult train(const TrainConfig& cfg, const datagen::Dataset& ds, const EpochCallback& on_epoch) {
  cfg.validate();
  const auto aux = cfg.aux_factors();
  const auto arch = genmodel::ArchitectureDescriptor::make(cfg.arch, ds.image_shape(), cfg.d_z, aux.size());
  for (const auto& f : cfg.eval_factors()) ds.factor_index(f);

  const datagen::Dataset train_set = datagen::subset(ds, datagen::split_indices(ds.size(), cfg.split_seed).train);
  const std::size_t n = train_set.size();
  if (n < cfg.batch) {
    throw ConfigError("training split has " + std::to_string(n) + " samples, fewer than batch = " +
                      std::to_string(cfg.batch));
  }
  const Tensor<float> u_all = train_set.factor_columns(aux);

  TrainResult result;
  result.checkpoint.model = genmodel::init_model<float>(arch, cfg.seed);
  result.checkpoint.config = cfg;
  result.checkpoint.seed = cfg.seed;
  auto& params = result.checkpoint.model.params;

  // One stream for batch order and reparameterisation noise.
  std::mt19937_64 rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  objective::CorrelationState ema;
  objective::CorrelationState* state = cfg.corr_mode == objective::CorrMode::kEma ? &ema : nullptr;
  const nn::AdamOptions adam{cfg.lr};

  std::ostringstream log;
  objective::write_log_header(log);
  std::vector<std::size_t> order(n);
  std::size_t step = 0;
  objective::LossValues last_finite;
  const std::size_t steps_per_epoch = n / cfg.batch;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    objective::LossValues sum;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::vector<std::size_t> rows(order.begin() + s * cfg.batch, order.begin() + (s + 1) * cfg.batch);
      std::vector<Tensor<float>> noise;
      const std::size_t draws = cfg.objective == ObjectiveKind::kAuxVae ? cfg.loss.samples : 1;
      for (std::size_t j = 0; j < draws; ++j) {
        Tensor<float> eps(Shape{cfg.batch, cfg.d_z});
        for (auto& v : eps.values()) v = normal(rng);
        noise.push_back(std::move(eps));
      }

      tensor::Graph<float> g;
      nn::BoundParams<float> bound(g, params, true);
      const auto x = g.constant(genmodel::gather_rows(train_set.images, rows));
      ++step;
      auto forward = [&] {
        try {
          return cfg.objective == ObjectiveKind::kAuxVae
                     ? objective::aux_vae_loss(arch, bound, x, genmodel::gather_rows(u_all, rows), n,
                                               cfg.loss, noise, state)
                     : objective::beta_vae_loss(arch, bound, x, cfg.loss.beta, noise[0]);
        } catch (const NumericalError& e) {
          // Non-finite encoder output trips the loss's own guards.
          throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                               std::to_string(step) + ": forward pass is not finite (" + e.what() +
                               "; last finite step " + std::to_string(step - 1) + ", total " +
                               format_double(last_finite.total) + ")");
        }
      };
      objective::LossBreakdown<float> loss = forward();
      const auto values = objective::values_of(loss);
      if (const char* bad = first_nonfinite(values)) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step) + ": loss component '" + bad +
                             "' is not finite (last finite step " + std::to_string(step - 1) +
                             ", total " + format_double(last_finite.total) + ")");
      }
      auto grads = bound.gradients(tensor::backward(loss.total));
      for (const auto& [name, gr] : grads) {
        if (!gr.all_finite()) {
          throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                               std::to_string(step) + ": gradient of '" + name + "' is not finite");
        }
      }
      if (cfg.clip_norm > 0.0) nn::clip_global_norm(grads, cfg.clip_norm);
      nn::adam_step(params, grads, adam);

      last_finite = values;
      objective::write_log_row(log, epoch, step, values);
      result.steps.push_back(values);
      sum.total += values.total;
      sum.recon += values.recon;
      sum.kl += values.kl;
      sum.intra_explicit += values.intra_explicit;
      sum.inter += values.inter;
    }
    if (on_epoch) {
      const double k = 1.0 / static_cast<double>(steps_per_epoch);
      on_epoch(epoch, {sum.total * k, sum.recon * k, sum.kl * k, sum.intra_explicit * k, sum.inter * k});
    }
  }
  result.log_csv = log.str();
  result.checkpoint.final_epoch = cfg.epochs;
  result.checkpoint.log_digest = io::to_hex(io::sha256(result.log_csv));
  return result;
}

// ---- evaluation ----

metrics::MetricsReport metrics_from_latents(const Tensor<double>& u, const Tensor<double>& mu,
                                            const Tensor<float>& images, const Tensor<float>& recon,
                                            const std::vector<std::string>& names) {
  metrics::MetricsReport r;
  r.corr = metrics::corr_report(u, mu, names);
  r.lds = metrics::lds(r.corr);
  r.sap = mu.dim(1) >= 2 ? metrics::sap(u, mu) : 0.0;
  r.mse = metrics::mse(images, recon);
  r.ssim = metrics::summarize(metrics::ssim_batch(images, recon));
  return r;
}

metrics::MetricsReport evaluate(const Checkpoint& ckpt, const datagen::Dataset& split) {
  const auto names = ckpt.config.eval_factors();
  if (names.empty()) throw ConfigError("evaluate: checkpoint case names no factors");
  if (split.image_shape() != ckpt.model.arch.image) {
    throw ShapeError("evaluate: dataset images " + tensor::to_string(split.image_shape()) +
                     " do not match the model's " + tensor::to_string(ckpt.model.arch.image));
  }
  const Tensor<double> u = to_double(split.factor_columns(names));
  const auto post = genmodel::encode_values(ckpt.model, split.images);
  const auto recon = genmodel::decode_values(ckpt.model, post.mu);
  return metrics_from_latents(u, to_double(post.mu), split.images, recon, names);
}

// ---- grid search ----

void rank_cells(std::vector<GridCell>& cells) {
  if (cells.empty()) throw ConfigError("grid search: empty grid");
  auto scale = [&](auto get, auto set) {
    double lo = get(cells[0]), hi = lo;
    for (const auto& c : cells) lo = std::min(lo, get(c)), hi = std::max(hi, get(c));
    for (auto& c : cells) set(c, hi > lo ? (get(c) - lo) / (hi - lo) : 0.0);
  };
  scale([](const GridCell& c) { return c.mse; }, [](GridCell& c, double v) { c.mse_scaled = v; });
  scale([](const GridCell& c) { return 1.0 - c.lds; }, [](GridCell& c, double v) { c.lds_gap_scaled = v; });
  std::vector<std::size_t> order(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    cells[i].score = cells[i].mse_scaled * cells[i].lds_gap_scaled;
    order[i] = i;
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cells[a].score < cells[b].score; });
  for (std::size_t r = 0; r < order.size(); ++r) cells[order[r]].rank = r + 1;
}

GridResult grid_search(const TrainConfig& base, const std::vector<double>& betas,
                       const std::vector<double>& lambda1s, const std::vector<double>& lambda2s,
                       const datagen::Dataset& ds, std::size_t workers) {
  if (betas.empty() || lambda1s.empty() || lambda2s.empty()) throw ConfigError("grid search: empty grid");
  std::vector<GridCell> cells;
  for (double b : betas)
    for (double l1 : lambda1s)
      for (double l2 : lambda2s) {
        GridCell c;
        c.beta = b;
        c.lambda1 = l1;
        c.lambda2 = l2;
        c.seed = base.seed + cells.size();
        cells.push_back(c);
      }
  auto config_of = [&](const GridCell& c) {
    TrainConfig t = base;
    t.loss.beta = c.beta;
    t.loss.lambda1 = c.lambda1;
    t.loss.lambda2 = c.lambda2;
    t.seed = c.seed;
    t.validate();
    return t;
  };
  for (const auto& c : cells) config_of(c);  // reject bad cells before any training

  const datagen::Dataset val = datagen::subset(ds, datagen::split_indices(ds.size(), base.split_seed).val);
  auto run = [&](std::size_t i) {
    auto trained = train(config_of(cells[i]), ds);
    const auto report = evaluate(trained.checkpoint, val);
    cells[i].mse = report.mse;
    cells[i].lds = report.lds;
    cells[i].log_csv = std::move(trained.log_csv);
  };
  workers = std::max<std::size_t>(1, std::min(workers, cells.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < cells.size(); i += workers) run(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  rank_cells(cells);
  GridResult result;
  result.cells = std::move(cells);
  for (std::size_t i = 0; i < result.cells.size(); ++i)
    if (result.cells[i].rank == 1) result.best = i;
  result.best_config = config_of(result.cells[result.best]);
  return result;
}

void write_grid_csv(std::ostream& os, const GridResult& result) {
  os << "beta,lambda1,lambda2,seed,mse,lds,mse_scaled,lds_gap_scaled,score,rank\n";
  for (const auto& c : result.cells) {
    os << format_double(c.beta) << ',' << format_double(c.lambda1) << ',' << format_double(c.lambda2) << ','
       << c.seed << ',' << format_double(c.mse) << ',' << format_double(c.lds) << ','
       << format_double(c.mse_scaled) << ',' << format_double(c.lds_gap_scaled) << ','
       << format_double(c.score) << ',' << c.rank << '\n';
  }
}

}  // namespace auxvae::trainer
