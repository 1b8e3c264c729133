#include "auxvae/cli/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "auxvae/error.hpp"
#include "auxvae/experiments/experiments.hpp"
#include "auxvae/io.hpp"
#include "auxvae/trainer/config.hpp"
#include "auxvae/trainer/trainer.hpp"
#include "json.hpp"

namespace auxvae::cli {

namespace fs = std::filesystem;
using trainer::ConfigFile;
using trainer::format_double;
using Json = nlohmann::ordered_json;

namespace {

struct Options {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<std::size_t> workers;
  bool deterministic = false;
  std::string dataset;
  std::string checkpoint;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json file_entry(const fs::path& p) {
  Json j;
  j["path"] = p.string();
  j["sha256"] = io::to_hex(io::sha256_file(p));
  return j;
}

// Shared state of one command: resolved config, inputs, outputs, manifest.
class Run {
 public:
  Run(const Options& opt, std::ostream& log) : opt_(opt), log_(log), started_(utc_now()) {
    if (!opt.config_path.empty()) {
      cfg_ = ConfigFile::load(opt.config_path, trainer::full_schema());
      add_input(opt.config_path);
    }
    if (opt.deterministic) {
      cfg_.set("data", "workers", "1");
    } else if (opt.workers) {
      if (*opt.workers == 0) throw ConfigError("--workers must be at least 1");
      cfg_.set("data", "workers", std::to_string(*opt.workers));
    }
    std::error_code ec;
    fs::create_directories(opt.out, ec);
    if (ec) throw IoError("cannot create output directory '" + opt.out + "': " + ec.message());
  }

  ConfigFile& cfg() { return cfg_; }
  std::ostream& log() { return log_; }
  const Options& opt() const { return opt_; }
  Json& extra() { return extra_; }

  void add_input(const fs::path& p) {
    if (!fs::exists(p)) throw IoError("input '" + p.string() + "' does not exist");
    // Every command rewrites these two, so catch the clash before any work.
    for (const char* name : {"resolved.cfg", "manifest.json"}) {
      if (fs::weakly_canonical(p) == fs::weakly_canonical(fs::path(opt_.out) / name)) {
        throw ConfigError("input '" + p.string() + "' lies where an output will be written");
      }
    }
    inputs_.push_back(p);
  }

  // Output location inside --out; refuses to overwrite an input.
  fs::path output(const std::string& name) {
    const fs::path p = fs::path(opt_.out) / name;
    for (const auto& in : inputs_) {
      if (fs::weakly_canonical(in) == fs::weakly_canonical(p)) {
        throw ConfigError("output '" + p.string() + "' would overwrite input '" + in.string() + "'");
      }
    }
    outputs_.push_back(p);
    return p;
  }

  void write_text(const std::string& name, const std::string& text) { io::write_text(output(name), text); }

  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t s) { seed_ = s; }

  // Writes the resolved config and the manifest.
  void finish() {
    write_text("resolved.cfg", cfg_.to_text());
    Json m;
    m["command"] = opt_.command;
    Json config = Json::object();
    for (const auto& [section, keys] : cfg_.sections()) {
      for (const auto& [k, v] : keys) config[section][k] = v;
    }
    m["config"] = config;
    m["seed"] = seed_;
    m["workers"] = cfg_.get_size("data", "workers", 1);
    m["threads_deterministic"] = opt_.deterministic;
    m["inputs"] = Json::array();
    for (const auto& p : inputs_) m["inputs"].push_back(file_entry(p));
    m["outputs"] = Json::array();
    for (const auto& p : outputs_) m["outputs"].push_back(file_entry(p));
    if (!extra_.empty()) m["details"] = extra_;
    m["started"] = started_;
    m["finished"] = utc_now();
    io::write_text(fs::path(opt_.out) / "manifest.json", m.dump(2) + "\n");
  }

 private:
  Options opt_;
  std::ostream& log_;
  ConfigFile cfg_;
  std::vector<fs::path> inputs_, outputs_;
  std::string started_;
  std::uint64_t seed_ = 0;
  Json extra_;
};

datagen::RenderConfig render_config(ConfigFile& c) {
  datagen::RenderConfig r;
  r.size = c.get_size("render", "size", r.size);
  r.pixel_scale = c.get_double("render", "pixel_scale", r.pixel_scale);
  r.oversample = c.get_size("render", "oversample", r.oversample);
  r.psf_truncation = c.get_double("render", "psf_truncation", r.psf_truncation);
  r.normalization = datagen::parse_flux_normalization(
      c.get("render", "normalization", to_string(r.normalization)));
  r.validate();
  c.set("render", "size", std::to_string(r.size));
  c.set("render", "pixel_scale", format_double(r.pixel_scale));
  c.set("render", "oversample", std::to_string(r.oversample));
  c.set("render", "psf_truncation", format_double(r.psf_truncation));
  c.set("render", "normalization", to_string(r.normalization));
  return r;
}

datagen::Dataset load_input_dataset(Run& run) {
  std::string path = run.opt().dataset;
  if (path.empty()) path = run.cfg().get("data", "path", "");
  if (path.empty()) throw ConfigError("no dataset given: pass --dataset or set [data] path");
  run.add_input(path);
  run.cfg().set("data", "path", path);
  run.log() << "loading dataset " << path << "\n";
  return datagen::load_dataset(path);
}

trainer::Checkpoint load_input_checkpoint(Run& run) {
  if (run.opt().checkpoint.empty()) throw ConfigError("this command needs --checkpoint");
  run.add_input(run.opt().checkpoint);
  return trainer::load_checkpoint(run.opt().checkpoint);
}

// Test split of ds under the checkpoint's split seed.
datagen::Dataset test_split(const trainer::Checkpoint& ckpt, const datagen::Dataset& ds) {
  return datagen::subset(ds, datagen::split_indices(ds.size(), ckpt.config.split_seed).test);
}

trainer::TrainConfig train_config(Run& run) {
  if (run.opt().seed) run.cfg().set("train", "seed", std::to_string(*run.opt().seed));
  auto tc = trainer::TrainConfig::from_config(run.cfg());
  tc.write_to(run.cfg());
  run.set_seed(tc.seed);
  return tc;
}

void log_metrics(std::ostream& log, const metrics::MetricsReport& r) {
  log << "lds=" << r.lds << " sap=" << r.sap << " mse=" << r.mse << " ssim_median=" << r.ssim.median
      << "\n";
}

void cmd_generate(Run& run) {
  auto& c = run.cfg();
  if (run.opt().seed) c.set("data", "seed", std::to_string(*run.opt().seed));
  const auto kind = datagen::parse_dataset_kind(c.get("data", "kind", "galaxy"));
  const std::size_t n = c.get_size("data", "n", 16384);
  const std::uint64_t seed = c.get_u64("data", "seed", 0);
  datagen::BuildOptions bo;
  bo.workers = c.get_size("data", "workers", 1);
  if (bo.workers == 0) throw ConfigError("[data] workers must be at least 1");
  bo.render = render_config(c);
  c.set("data", "kind", to_string(kind));
  c.set("data", "n", std::to_string(n));
  c.set("data", "seed", std::to_string(seed));
  run.set_seed(seed);

  run.log() << "generating " << n << " " << to_string(kind) << " images (seed " << seed << ")\n";
  const auto ds = datagen::build_dataset(kind, n, seed, bo);
  datagen::save_dataset(run.output("dataset.axvd"), ds);

  const auto& names = kind == datagen::DatasetKind::kGalaxy ? datagen::kGalaxyFactorNames
                                                            : datagen::kSpriteFactorNames;
  const auto& ranges = kind == datagen::DatasetKind::kGalaxy ? datagen::galaxy_ranges()
                                                             : datagen::sprite_ranges();
  Json factors = Json::array();
  for (std::size_t j = 0; j < names.size(); ++j) {
    factors.push_back({{"name", names[j]}, {"low", ranges[j].first}, {"high", ranges[j].second}});
  }
  run.extra()["factors"] = factors;
  run.extra()["fingerprint"] = io::to_hex(ds.fingerprint);
  run.extra()["unresolved"] = ds.unresolved;
  if (ds.unresolved) run.log() << ds.unresolved << " sources below a quarter pixel\n";
}

void cmd_train(Run& run) {
  const auto ds = load_input_dataset(run);
  auto tc = train_config(run);
  tc.dataset = run.cfg().get("data", "path", "");
  run.log() << "training " << to_string(tc.objective) << " on " << tc.case_name << " for "
            << tc.epochs << " epochs\n";
  auto result = trainer::train(tc, ds, [&](std::size_t epoch, const objective::LossValues& v) {
    run.log() << "epoch " << epoch << "/" << tc.epochs << " total=" << v.total
              << " recon=" << v.recon << " kl=" << v.kl << " intra=" << v.intra_explicit
              << " inter=" << v.inter << "\n";
  });
  trainer::save_checkpoint(run.output("checkpoint.axvc"), result.checkpoint);
  run.write_text("train_log.csv", result.log_csv);
  run.extra()["factors"] = tc.aux_factors();
  run.extra()["steps"] = result.steps.size();
}

void cmd_gridsearch(Run& run) {
  const auto ds = load_input_dataset(run);
  auto base = train_config(run);
  base.dataset = run.cfg().get("data", "path", "");
  auto& c = run.cfg();
  const auto betas = c.get_doubles("grid", "beta", {base.loss.beta});
  const auto l1s = c.get_doubles("grid", "lambda1", {base.loss.lambda1});
  const auto l2s = c.get_doubles("grid", "lambda2", {base.loss.lambda2});
  auto join = [](const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : ",") + format_double(x);
    return s;
  };
  c.set("grid", "beta", join(betas));
  c.set("grid", "lambda1", join(l1s));
  c.set("grid", "lambda2", join(l2s));
  const std::size_t workers = c.get_size("data", "workers", 1);
  run.log() << "grid of " << betas.size() * l1s.size() * l2s.size() << " cells on " << workers
            << " worker(s)\n";
  const auto result = trainer::grid_search(base, betas, l1s, l2s, ds, workers);
  std::ostringstream csv;
  trainer::write_grid_csv(csv, result);
  run.write_text("grid.csv", csv.str());
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    run.write_text("grid_cell_" + std::to_string(i) + ".csv", result.cells[i].log_csv);
  }
  ConfigFile best;
  result.best_config.write_to(best);
  run.write_text("best.cfg", best.to_text());
  const auto& b = result.cells[result.best];
  run.log() << "best cell " << result.best << ": beta=" << b.beta << " lambda1=" << b.lambda1
            << " lambda2=" << b.lambda2 << " mse=" << b.mse << " lds=" << b.lds << "\n";
  run.extra()["best_cell"] = result.best;
}

void cmd_evaluate(Run& run) {
  const auto ckpt = load_input_checkpoint(run);
  const auto ds = load_input_dataset(run);
  ckpt.config.write_to(run.cfg());
  run.cfg().set("data", "path", run.cfg().get("data", "path", ""));
  run.set_seed(ckpt.seed);
  const auto report = trainer::evaluate(ckpt, test_split(ckpt, ds));
  std::ostringstream csv;
  metrics::write_metrics_csv(csv, report);
  run.write_text("metrics.csv", csv.str());
  log_metrics(run.log(), report);
  run.extra()["lds"] = report.lds;
  run.extra()["sap"] = report.sap;
  run.extra()["mse"] = report.mse;
  run.extra()["ssim_median"] = report.ssim.median;
}

void cmd_traverse(Run& run) {
  const auto ckpt = load_input_checkpoint(run);
  const auto ds = load_input_dataset(run);
  run.set_seed(ckpt.seed);
  const auto test = test_split(ckpt, ds);
  auto& c = run.cfg();
  experiments::TraversalSpec spec;
  spec.steps = c.get_size("traverse", "steps", spec.steps);
  spec.base = c.get_size("traverse", "base", spec.base);
  spec.range_sigmas = c.get_double("traverse", "range_sigmas", spec.range_sigmas);
  std::vector<std::size_t> latents;
  const auto which = c.get_list("traverse", "latent", {"all"});
  if (which == std::vector<std::string>{"all"}) {
    for (std::size_t j = 0; j < ckpt.model.arch.d_z; ++j) latents.push_back(j);
  } else {
    for (const auto& w : which) {
      std::size_t pos = 0;
      unsigned long v = 0;
      try {
        v = std::stoul(w, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != w.size()) throw ConfigError("[traverse] latent: '" + w + "' is not an index");
      latents.push_back(v);
    }
  }
  c.set("traverse", "steps", std::to_string(spec.steps));
  c.set("traverse", "base", std::to_string(spec.base));
  c.set("traverse", "range_sigmas", format_double(spec.range_sigmas));
  std::ostringstream sens;
  sens << "latent,sensitivity\n";
  for (std::size_t j : latents) {
    spec.latent = j;
    const auto t = experiments::traverse(ckpt.model, test, spec);
    const std::string stem = "traverse_z" + std::to_string(j);
    experiments::write_pgm_strip(run.output(stem + ".pgm"), t.images);
    std::ostringstream csv;
    experiments::write_traversal_csv(csv, t);
    run.write_text(stem + ".csv", csv.str());
    sens << j << "," << format_double(t.sensitivity) << "\n";
    run.log() << "latent " << j << " sensitivity " << t.sensitivity << "\n";
  }
  run.write_text("sensitivity.csv", sens.str());
}

void cmd_perturb(Run& run) {
  const auto ckpt = load_input_checkpoint(run);
  const auto ds = load_input_dataset(run);
  const auto test = test_split(ckpt, ds);
  auto& c = run.cfg();
  const std::uint64_t seed = run.opt().seed ? *run.opt().seed : ckpt.seed;
  run.set_seed(seed);
  experiments::PerturbationSpec spec;
  spec.samples = c.get_size("perturb", "samples", std::min<std::size_t>(1000, test.size()));
  spec.noise_scale = c.get_double("perturb", "noise_scale", spec.noise_scale);
  std::vector<std::string> targets{"none"};
  if (ckpt.model.arch.d > 0) targets.push_back("aux");
  if (ckpt.model.arch.d < ckpt.model.arch.d_z) targets.push_back("recon");
  targets = c.get_list("perturb", "target", targets);
  std::vector<experiments::Distribution> dists;
  std::string joined;
  for (const auto& name : targets) {
    spec.target = experiments::parse_perturb_target(name);
    dists.push_back(experiments::perturb_study(ckpt.model, test, spec, seed));
    run.log() << "target " << name << ": median ssim " << dists.back().summary.median << "\n";
    joined += (joined.empty() ? "" : ",") + name;
  }
  c.set("perturb", "target", joined);
  c.set("perturb", "samples", std::to_string(spec.samples));
  c.set("perturb", "noise_scale", format_double(spec.noise_scale));
  std::ostringstream csv;
  experiments::write_distributions_csv(csv, "target", dists);
  run.write_text("perturb.csv", csv.str());
  for (const auto& d : dists) run.extra()["median_ssim"][d.label] = d.summary.median;
}

void cmd_attack(Run& run) {
  const auto ckpt = load_input_checkpoint(run);
  const auto ds = load_input_dataset(run);
  run.set_seed(ckpt.seed);
  auto& c = run.cfg();
  const auto eps = c.get_doubles("attack", "eps", {0.0, 0.01, 0.05, 0.1});
  const std::size_t test_size = datagen::split_sizes(ds.size())[2];
  const std::size_t samples = c.get_size("attack", "samples", std::min<std::size_t>(1000, test_size));
  std::string joined;
  for (double e : eps) joined += (joined.empty() ? "" : ",") + format_double(e);
  c.set("attack", "eps", joined);
  c.set("attack", "samples", std::to_string(samples));
  const auto dists = experiments::robustness_curve(ckpt, ds, eps, samples);
  for (const auto& d : dists) {
    run.log() << "eps " << d.label << ": median ssim " << d.summary.median << "\n";
    run.extra()["median_ssim"][d.label] = d.summary.median;
  }
  std::ostringstream csv;
  experiments::write_distributions_csv(csv, "eps", dists);
  run.write_text("attack.csv", csv.str());
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& log, std::ostream& err) {
  CLI::App app{"Aux-VAE disentanglement lab", "auxvae"};
  app.require_subcommand(1, 1);
  Options opt;
  std::uint64_t seed = 0;
  std::size_t workers = 0;

  struct Command {
    const char* name;
    const char* help;
    void (*fn)(Run&);
    bool needs_checkpoint;
  };
  const std::vector<Command> commands{
      {"generate", "render a synthetic dataset", cmd_generate, false},
      {"train", "train a model on a dataset", cmd_train, false},
      {"gridsearch", "rank (beta, lambda1, lambda2) cells by scaled MSE x (1 - LDS)", cmd_gridsearch,
       false},
      {"evaluate", "metrics of a checkpoint on the test split", cmd_evaluate, true},
      {"traverse", "latent traversal strips", cmd_traverse, true},
      {"perturb", "SSIM under latent-block noise", cmd_perturb, true},
      {"attack", "FGSM robustness curve", cmd_attack, true},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& cmd : commands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", opt.config_path, "config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "seed override");
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
    sub->add_option("--workers", workers, "worker threads for data generation and grid search");
    sub->add_flag("--threads-deterministic", opt.deterministic, "single-threaded everything");
    if (std::string(cmd.name) != "generate") {
      sub->add_option("--dataset", opt.dataset, "dataset file (overrides [data] path)");
    }
    if (cmd.needs_checkpoint) {
      sub->add_option("--checkpoint", opt.checkpoint, "checkpoint file")->required();
    }
    subs.emplace_back(sub, &cmd);
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, log, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const Command* chosen = nullptr;
  for (const auto& [sub, cmd] : subs) {
    if (sub->parsed()) {
      chosen = cmd;
      if (sub->count("--seed")) opt.seed = seed;
      if (sub->count("--workers")) opt.workers = workers;
    }
  }
  opt.command = chosen->name;

  try {
    Run r(opt, log);
    chosen->fn(r);
    r.finish();
    log << "wrote " << (fs::path(opt.out) / "manifest.json").string() << "\n";
    return kExitOk;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ShapeError& e) {
    err << "input mismatch: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace auxvae::cli
