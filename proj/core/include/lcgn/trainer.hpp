#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcgn/adam.hpp"
#include "lcgn/checkpoint.hpp"
#include "lcgn/config.hpp"
#include "lcgn/dataset.hpp"
#include "lcgn/heads.hpp"
#include "lcgn/model.hpp"

namespace lcgn {

struct TrainConfig {
  TaskKind task = TaskKind::vqa;
  FeatureMode feature_mode = FeatureMode::symbolic;
  int grid_g = 8;
  std::int64_t iterations = 4;  // message-passing rounds T
  std::int64_t d_txt = 512;
  std::int64_t d_ctx = 512;
  std::int64_t d_loc = 512;
  Ablation ablation = Ablation::none;
  LossKind loss_kind = LossKind::softmax;
  double lr = 0;        // 0: 3e-4 symbolic, 1e-4 grid
  int batch_size = 0;   // 0: 128 symbolic, 64 grid
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double ema_decay = 0.999;
  int epochs = 20;
  std::uint64_t seed = 0;

  // Fills the mode-dependent learning rate and batch size.
  TrainConfig resolved() const;
  void validate() const;
};

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& json_text);

// FNV-1a over the canonical config serialization, as a hex string.
std::string config_hash(const TrainConfig& cfg);

struct Metrics {
  double loss = 0;
  double acc = 0;
  double acc_relational = 0;
  std::int64_t count = 0;
  std::int64_t count_relational = 0;
};

struct EpochLog {
  int epoch = 0;
  Metrics train;
  Metrics val;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  double best_val_acc = 0;
  int best_epoch = -1;
  double epoch0_train_loss = 0;
};

// Model surface implied by a dataset and a training configuration.
ModelConfig model_config_for(const TrainConfig& cfg, const Dataset& data);

// Full training loop: seeded shuffling, Adam, EMA tracking, per-epoch
// metrics, best-by-validation-accuracy checkpointing. Writes the metrics log
// (one JSON record per epoch and split) when metrics_path is non-empty and
// the best checkpoint when checkpoint_path is non-empty.
TrainResult train(const TrainConfig& cfg, const Dataset& data,
                  const std::string& checkpoint_path,
                  const std::string& metrics_path);

// Evaluation over one split with the given parameter values.
Metrics evaluate_split(const ModelParams<float>& params,
                       const ModelConfig& model_config, const TrainConfig& cfg,
                       const Dataset& data,
                       const std::vector<TaskSample>& split);

struct CheckpointEval {
  Metrics metrics;
  TrainConfig config;
};

CheckpointEval evaluate_checkpoint(const std::string& checkpoint_path,
                                   const std::string& data_dir, bool use_ema,
                                   const std::string& split);

// Intersection over union of two (cx, cy, w, h) boxes.
double box_iou(const std::array<float, 4>& a, const std::array<float, 4>& b);

// Decodes a grid-mode prediction: the selected cell plus the regressed
// offset, in cell-width units.
std::array<float, 4> decode_grid_box(std::int64_t cell, const float* offset,
                                     int grid_g);

// Packing between live parameters and checkpoint tensors.
std::vector<CheckpointTensor> pack_params(const ModelParams<float>& params);
std::vector<CheckpointTensor> pack_ema(const EmaTable<float>& ema,
                                       const ModelParams<float>& params);
void unpack_params(const std::vector<CheckpointTensor>& tensors,
                   ModelParams<float>& params);

// One metrics record in the pinned key order.
std::string metrics_record(int epoch, const std::string& split,
                           const Metrics& m, const std::string& cfg_hash,
                           std::uint64_t seed);

}  // namespace lcgn
