#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "auxvae/datagen/datagen.hpp"
#include "auxvae/genmodel/model.hpp"
#include "auxvae/metrics/metrics.hpp"
#include "auxvae/objective/objective.hpp"
#include "auxvae/trainer/config.hpp"

namespace auxvae::trainer {

enum class ObjectiveKind { kAuxVae, kBetaVae };

std::string to_string(ObjectiveKind k);
ObjectiveKind parse_objective_kind(const std::string& text);

// "case1" all five galaxy factors, "case2" the shape factors, "case3" flux
// and psf, "none" nothing; any other text is a comma separated factor list.
std::vector<std::string> case_factors(const std::string& name);

struct TrainConfig {
  std::string dataset;  // path, informational inside checkpoints
  std::uint64_t split_seed = 0;
  ObjectiveKind objective = ObjectiveKind::kAuxVae;
  std::string case_name = "case1";
  genmodel::ArchVariant arch = genmodel::ArchVariant::kMlp;
  std::size_t d_z = 10;
  objective::LossConfig loss;
  objective::CorrMode corr_mode = objective::CorrMode::kBatch;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  double clip_norm = 0.0;  // 0 disables clipping

  // Factors the metrics are computed against.
  std::vector<std::string> eval_factors() const { return case_factors(case_name); }
  // Factors fed to the prior; empty for the beta-VAE.
  std::vector<std::string> aux_factors() const;

  void validate() const;
  // Reads [data] path/split_seed, [model], [loss] and [train]. A beta-VAE
  // without an explicit beta uses beta = 10.
  static TrainConfig from_config(const ConfigFile& cfg);
  void write_to(ConfigFile& cfg) const;
  std::string to_text() const;
};

struct Checkpoint {
  genmodel::Model<float> model;
  TrainConfig config;
  std::size_t final_epoch = 0;
  std::uint64_t seed = 0;
  std::string log_digest;  // hex SHA-256 of the training log CSV
};

// "AXVC" little-endian container.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::vector<std::uint8_t> bytes, const std::string& origin = "buffer");
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<objective::LossValues> steps;
  std::string log_csv;
};

using EpochCallback = std::function<void(std::size_t epoch, const objective::LossValues& mean)>;

// Trains on the training split of ds. Every step draws a fresh shuffle-order
// batch (the trailing partial batch is dropped) and J noise tensors from one
// seeded stream, so runs are bit-reproducible. NumericalError on a
// non-finite loss or gradient, naming the component and the last finite step.
TrainResult train(const TrainConfig& cfg, const datagen::Dataset& ds,
                  const EpochCallback& on_epoch = {});

// The four metric families from ground-truth factors u (N x d), posterior
// means mu (N x d_z) and the images with their reconstructions.
metrics::MetricsReport metrics_from_latents(const tensor::Tensor<double>& u,
                                            const tensor::Tensor<double>& mu,
                                            const tensor::Tensor<float>& images,
                                            const tensor::Tensor<float>& recon,
                                            const std::vector<std::string>& names);

// Metrics of a checkpoint on a dataset split against its case factors.
metrics::MetricsReport evaluate(const Checkpoint& ckpt, const datagen::Dataset& split);

struct GridCell {
  double beta = 0, lambda1 = 0, lambda2 = 0;
  std::uint64_t seed = 0;
  double mse = 0, lds = 0;
  double mse_scaled = 0, lds_gap_scaled = 0;  // min-max over the grid
  double score = 0;                           // product of the two, lower is better
  std::size_t rank = 0;                       // 1 = best
  std::string log_csv;
};

struct GridResult {
  std::vector<GridCell> cells;  // grid order
  std::size_t best = 0;
  TrainConfig best_config;
};

// Min-max scales mse and (1 - lds) over the cells, scores their product and
// ranks ascending (ties keep grid order). A criterion with no spread scales
// to zero everywhere.
void rank_cells(std::vector<GridCell>& cells);

// Trains every (beta, lambda1, lambda2) cell on the training split and
// scores it on the validation split. Cell i uses seed base.seed + i.
GridResult grid_search(const TrainConfig& base, const std::vector<double>& betas,
                       const std::vector<double>& lambda1s, const std::vector<double>& lambda2s,
                       const datagen::Dataset& ds, std::size_t workers = 1);

void write_grid_csv(std::ostream& os, const GridResult& result);

}  // namespace auxvae::trainer
