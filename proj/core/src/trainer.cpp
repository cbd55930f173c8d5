#include "lcgn/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

namespace lcgn {

using ordered_json = nlohmann::ordered_json;

TrainConfig TrainConfig::resolved() const {
  TrainConfig out = *this;
  if (out.lr <= 0)
    out.lr = feature_mode == FeatureMode::symbolic ? 3e-4 : 1e-4;
  if (out.batch_size <= 0)
    out.batch_size = feature_mode == FeatureMode::symbolic ? 128 : 64;
  return out;
}

void TrainConfig::validate() const {
  if (lr < 0 || batch_size < 0 || epochs <= 0 || iterations < 1)
    throw ContractError("train config: rates and sizes must be positive");
  if (ema_decay < 0 || ema_decay >= 1)
    throw ContractError("train config: ema_decay must be in [0, 1)");
}

std::string train_config_to_json(const TrainConfig& cfg) {
  ordered_json j;
  j["task"] = to_string(cfg.task);
  j["feature_mode"] = to_string(cfg.feature_mode);
  j["grid_g"] = cfg.grid_g;
  j["steps"] = cfg.iterations;
  j["d_txt"] = cfg.d_txt;
  j["d_ctx"] = cfg.d_ctx;
  j["d_loc"] = cfg.d_loc;
  j["ablation"] = to_string(cfg.ablation);
  j["loss"] = to_string(cfg.loss_kind);
  j["lr"] = cfg.lr;
  j["batch_size"] = cfg.batch_size;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["eps"] = cfg.eps;
  j["ema_decay"] = cfg.ema_decay;
  j["epochs"] = cfg.epochs;
  j["seed"] = cfg.seed;
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& json_text) {
  const auto j = ordered_json::parse(json_text);
  TrainConfig cfg;
  cfg.task = task_from_string(j.at("task"));
  cfg.feature_mode = feature_mode_from_string(j.at("feature_mode"));
  cfg.grid_g = j.at("grid_g").get<int>();
  cfg.iterations = j.at("steps").get<std::int64_t>();
  cfg.d_txt = j.at("d_txt").get<std::int64_t>();
  cfg.d_ctx = j.at("d_ctx").get<std::int64_t>();
  cfg.d_loc = j.at("d_loc").get<std::int64_t>();
  cfg.ablation = ablation_from_string(j.at("ablation"));
  cfg.loss_kind = loss_kind_from_string(j.at("loss"));
  cfg.lr = j.at("lr").get<double>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.beta1 = j.at("beta1").get<double>();
  cfg.beta2 = j.at("beta2").get<double>();
  cfg.eps = j.at("eps").get<double>();
  cfg.ema_decay = j.at("ema_decay").get<double>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

std::string config_hash(const TrainConfig& cfg) {
  const std::string text = train_config_to_json(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

ModelConfig model_config_for(const TrainConfig& cfg, const Dataset& data) {
  ModelConfig mc;
  mc.lcgn.iterations = cfg.iterations;
  mc.lcgn.d_txt = cfg.d_txt;
  mc.lcgn.d_ctx = cfg.d_ctx;
  mc.lcgn.d_loc = cfg.d_loc;
  mc.lcgn.ablation = cfg.ablation;
  mc.lcgn.n_max = cfg.feature_mode == FeatureMode::symbolic
                      ? kMaxObjects
                      : static_cast<std::int64_t>(cfg.grid_g) * cfg.grid_g;
  mc.vocab_size = data.vocab.size();
  mc.d_feat = feature_width(cfg.feature_mode);
  mc.with_vqa_head = cfg.task == TaskKind::vqa;
  mc.with_ref_head = cfg.task == TaskKind::ref;
  mc.d_ans = mc.with_vqa_head
                 ? static_cast<std::int64_t>(data.answers.size())
                 : 0;
  return mc;
}

double box_iou(const std::array<float, 4>& a, const std::array<float, 4>& b) {
  const double ax0 = a[0] - a[2] / 2, ax1 = a[0] + a[2] / 2;
  const double ay0 = a[1] - a[3] / 2, ay1 = a[1] + a[3] / 2;
  const double bx0 = b[0] - b[2] / 2, bx1 = b[0] + b[2] / 2;
  const double by0 = b[1] - b[3] / 2, by1 = b[1] + b[3] / 2;
  const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  const double inter = iw * ih;
  const double area_a = std::max(0.0, ax1 - ax0) * std::max(0.0, ay1 - ay0);
  const double area_b = std::max(0.0, bx1 - bx0) * std::max(0.0, by1 - by0);
  const double uni = area_a + area_b - inter;
  return uni <= 0 ? 0.0 : inter / uni;
}

std::array<float, 4> decode_grid_box(std::int64_t cell, const float* offset,
                                     int grid_g) {
  const float cw = 1.0f / static_cast<float>(grid_g);
  const float cell_cx =
      (static_cast<float>(cell % grid_g) + 0.5f) * cw;
  const float cell_cy =
      (static_cast<float>(cell / grid_g) + 0.5f) * cw;
  return {cell_cx + offset[0] * cw, cell_cy + offset[1] * cw, offset[2] * cw,
          offset[3] * cw};
}

std::vector<CheckpointTensor> pack_params(const ModelParams<float>& params) {
  std::vector<CheckpointTensor> out;
  for (const auto& [name, t] : params.named())
    out.push_back({name, t.shape(),
                   std::vector<float>(t.data().begin(), t.data().end())});
  return out;
}

std::vector<CheckpointTensor> pack_ema(const EmaTable<float>& ema,
                                       const ModelParams<float>& params) {
  std::vector<CheckpointTensor> out;
  const auto& named = params.named();
  for (std::size_t i = 0; i < named.size(); ++i)
    out.push_back({ema.values[i].first, named[i].second.shape(),
                   ema.values[i].second});
  return out;
}

void unpack_params(const std::vector<CheckpointTensor>& tensors,
                   ModelParams<float>& params) {
  auto& named = params.named();
  if (named.size() != tensors.size())
    throw ContractError("checkpoint tensor count does not match the model");
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (named[i].first != tensors[i].name ||
        named[i].second.shape() != tensors[i].shape)
      throw ContractError("checkpoint tensor mismatch at " +
                          tensors[i].name);
    auto dst = named[i].second.mutable_data();
    std::copy(tensors[i].data.begin(), tensors[i].data.end(), dst.begin());
  }
}

std::string metrics_record(int epoch, const std::string& split,
                           const Metrics& m, const std::string& cfg_hash,
                           std::uint64_t seed) {
  ordered_json j;
  j["epoch"] = epoch;
  j["split"] = split;
  j["loss"] = m.loss;
  j["acc"] = m.acc;
  j["acc_relational"] = m.acc_relational;
  j["config_hash"] = cfg_hash;
  j["seed"] = seed;
  return j.dump();
}

namespace {

struct BatchOutcome {
  double loss_sum = 0;
  std::int64_t correct = 0, total = 0;
  std::int64_t correct_rel = 0, total_rel = 0;
};

// Correctness of one forward batch: exact answer match for VQA,
// target-index match for symbolic REF, IoU >= 0.5 for grid REF.
void tally(const Batch<float>& batch, const ForwardResult<float>& fwd,
           const TrainConfig& cfg, BatchOutcome& out) {
  const auto batch_n = static_cast<std::int64_t>(batch.tokens.size());
  out.loss_sum += static_cast<double>(fwd.loss.item()) *
                  static_cast<double>(batch_n);
  for (std::int64_t b = 0; b < batch_n; ++b) {
    bool ok = false;
    if (cfg.task == TaskKind::vqa) {
      const auto d_ans = fwd.vqa.y.dim(1);
      const float* row = fwd.vqa.y.data().data() + b * d_ans;
      std::int64_t best = 0;
      for (std::int64_t c = 1; c < d_ans; ++c)
        if (row[c] > row[best]) best = c;
      ok = best == batch.labels[static_cast<std::size_t>(b)];
    } else if (cfg.feature_mode == FeatureMode::symbolic) {
      ok = fwd.ref.p[static_cast<std::size_t>(b)] ==
           batch.targets[static_cast<std::size_t>(b)];
    } else {
      const auto cell = fwd.ref.p[static_cast<std::size_t>(b)];
      const float* u = fwd.ref.u.data().data() + b * 4;
      const auto pred = decode_grid_box(cell, u, cfg.grid_g);
      const auto gt_cell = batch.targets[static_cast<std::size_t>(b)];
      const float* gt_u = batch.gt_offsets.data().data() + b * 4;
      const auto gt = decode_grid_box(gt_cell, gt_u, cfg.grid_g);
      ok = box_iou(pred, gt) >= 0.5;
    }
    ++out.total;
    out.correct += ok;
    if (batch.relational[static_cast<std::size_t>(b)]) {
      ++out.total_rel;
      out.correct_rel += ok;
    }
  }
}

Metrics finish(const BatchOutcome& out) {
  Metrics m;
  m.count = out.total;
  m.count_relational = out.total_rel;
  m.loss = out.total ? out.loss_sum / static_cast<double>(out.total) : 0;
  m.acc = out.total ? static_cast<double>(out.correct) /
                          static_cast<double>(out.total)
                    : 0;
  m.acc_relational = out.total_rel
                         ? static_cast<double>(out.correct_rel) /
                               static_cast<double>(out.total_rel)
                         : 0;
  return m;
}

ForwardOptions forward_options(const TrainConfig& cfg, bool with_loss) {
  ForwardOptions opts;
  opts.task = cfg.task;
  opts.loss_kind = cfg.loss_kind;
  opts.with_loss = with_loss;
  opts.box_term =
      cfg.task == TaskKind::ref && cfg.feature_mode == FeatureMode::grid;
  return opts;
}

}  // namespace

Metrics evaluate_split(const ModelParams<float>& params,
                       const ModelConfig& model_config, const TrainConfig& cfg,
                       const Dataset& data,
                       const std::vector<TaskSample>& split) {
  const TrainConfig rc = cfg.resolved();
  FeatureCache features(rc.feature_mode, rc.grid_g);
  const auto opts = forward_options(rc, true);
  BatchOutcome outcome;
  std::vector<std::size_t> order(split.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(rc.batch_size)) {
    const std::size_t end =
        std::min(order.size(), start + static_cast<std::size_t>(rc.batch_size));
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
    auto batch = make_batch<float>(data, split, idx, features, data.vocab);
    auto fwd = model_forward(batch, params, model_config, opts);
    tally(batch, fwd, rc, outcome);
  }
  return finish(outcome);
}

TrainResult train(const TrainConfig& raw_cfg, const Dataset& data,
                  const std::string& checkpoint_path,
                  const std::string& metrics_path) {
  const TrainConfig cfg = raw_cfg.resolved();
  cfg.validate();
  const ModelConfig model_config = model_config_for(cfg, data);
  model_config.validate();

  auto params = ModelParams<float>::init(model_config, cfg.seed);
  auto adam_state = AdamState<float>::init(params);
  AdamConfig<float> adam_cfg;
  adam_cfg.lr = static_cast<float>(cfg.lr);
  adam_cfg.beta1 = static_cast<float>(cfg.beta1);
  adam_cfg.beta2 = static_cast<float>(cfg.beta2);
  adam_cfg.eps = static_cast<float>(cfg.eps);
  auto ema = EmaTable<float>::from(params);

  FeatureCache features(cfg.feature_mode, cfg.grid_g);
  const auto opts = forward_options(cfg, true);
  const auto hash = config_hash(cfg);

  std::ofstream metrics_out;
  if (!metrics_path.empty()) {
    metrics_out.open(metrics_path);
    if (!metrics_out)
      throw std::runtime_error("cannot write metrics log " + metrics_path);
  }

  TrainResult result;
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(cfg.seed * 0x9e3779b97f4a7c15ULL +
                                static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    BatchOutcome outcome;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::size_t> idx(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() + static_cast<std::ptrdiff_t>(end));
      auto batch = make_batch<float>(data, data.train, idx, features,
                                     data.vocab);
      Tape<float> tape;
      {
        TapeScope<float> scope(tape);
        auto fwd = model_forward(batch, params, model_config, opts);
        tape.backward(fwd.loss);
        tally(batch, fwd, cfg, outcome);
      }
      adam_state.step(params, adam_cfg);
      ema_update(ema, params, static_cast<float>(cfg.ema_decay));
    }

    EpochLog log;
    log.epoch = epoch;
    log.train = finish(outcome);
    if (epoch == 0) result.epoch0_train_loss = log.train.loss;

    // Validation always runs with the EMA weights.
    auto eval_params = params_with_values(model_config, ema);
    log.val = evaluate_split(eval_params, model_config, cfg, data, data.val);

    if (metrics_out) {
      metrics_out << metrics_record(epoch, "train", log.train, hash, cfg.seed)
                  << '\n'
                  << metrics_record(epoch, "val", log.val, hash, cfg.seed)
                  << '\n';
      metrics_out.flush();
    }

    if (log.val.acc > result.best_val_acc || result.best_epoch < 0) {
      result.best_val_acc = log.val.acc;
      result.best_epoch = epoch;
      if (!checkpoint_path.empty()) {
        Checkpoint ckpt;
        ckpt.config_json = train_config_to_json(cfg);
        ckpt.params = pack_params(params);
        ckpt.ema = pack_ema(ema, params);
        save_checkpoint(checkpoint_path, ckpt);
      }
    }
    result.epochs.push_back(log);
  }
  return result;
}

CheckpointEval evaluate_checkpoint(const std::string& checkpoint_path,
                                   const std::string& data_dir, bool use_ema,
                                   const std::string& split) {
  const auto ckpt = load_checkpoint(checkpoint_path);
  const auto cfg = train_config_from_json(ckpt.config_json).resolved();
  const auto data = load_dataset(data_dir);
  if (data.task != cfg.task)
    throw ContractError("checkpoint task " + to_string(cfg.task) +
                        " does not match dataset task " +
                        to_string(data.task));
  const auto model_config = model_config_for(cfg, data);
  auto params = ModelParams<float>::init(model_config, 0);
  unpack_params(use_ema ? ckpt.ema : ckpt.params, params);

  const auto& samples = split == "train" ? data.train : data.val;
  CheckpointEval out;
  out.config = cfg;
  out.metrics = evaluate_split(params, model_config, cfg, data, samples);
  return out;
}

}  // namespace lcgn
