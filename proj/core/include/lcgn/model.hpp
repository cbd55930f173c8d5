#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "lcgn/dataset.hpp"
#include "lcgn/heads.hpp"
#include "lcgn/lcgn.hpp"
#include "lcgn/params.hpp"
#include "lcgn/text_encoder.hpp"

namespace lcgn {

// Featurization cache keyed by scene id (features depend only on the scene
// and the mode).
class FeatureCache {
 public:
  FeatureCache(FeatureMode mode, int grid_g) : mode_(mode), grid_g_(grid_g) {}

  const SceneFeatures& get(const Scene& scene) {
    auto it = cache_.find(scene.id);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(scene.id, featurize(scene, mode_, grid_g_))
        .first->second;
  }

  FeatureMode mode() const { return mode_; }
  int grid_g() const { return grid_g_; }

 private:
  FeatureMode mode_;
  int grid_g_;
  std::unordered_map<std::int64_t, SceneFeatures> cache_;
};

template <typename S>
struct Batch {
  std::vector<std::vector<std::int64_t>> tokens;
  Tensor<S> x_feat;    // [B, N, d_feat]
  Tensor<S> ent_mask;  // [B, N]
  std::vector<std::int64_t> n_real;
  std::vector<std::int64_t> labels;   // VQA answer indices
  std::vector<std::int64_t> targets;  // REF entity indices (object or cell)
  Tensor<S> gt_offsets;               // [B, 4], grid-mode REF
  std::vector<bool> relational;
  std::vector<std::size_t> sample_indices;  // positions in the split
};

template <typename S>
Batch<S> make_batch(const Dataset& data,
                    const std::vector<TaskSample>& split,
                    const std::vector<std::size_t>& indices,
                    FeatureCache& features, const Vocabulary& vocab) {
  const auto batch = static_cast<std::int64_t>(indices.size());
  if (batch == 0) throw ContractError("make_batch: empty index list");

  Batch<S> out;
  out.sample_indices = indices;
  std::int64_t n_max = 0;
  for (auto idx : indices) {
    const auto& sample = split[idx];
    n_max = std::max(n_max,
                     features.get(data.scene_by_id(sample.scene_id)).n);
  }

  const std::int64_t d_feat = feature_width(features.mode());
  std::vector<S> feat(static_cast<std::size_t>(batch * n_max * d_feat), S(0));
  std::vector<S> mask(static_cast<std::size_t>(batch * n_max), S(0));
  std::vector<S> offsets(static_cast<std::size_t>(batch * 4), S(0));

  for (std::int64_t b = 0; b < batch; ++b) {
    const auto& sample = split[indices[static_cast<std::size_t>(b)]];
    const auto& scene = data.scene_by_id(sample.scene_id);
    const auto& sf = features.get(scene);

    out.tokens.push_back(tokenize(sample.text, vocab));
    out.n_real.push_back(sf.n);
    out.relational.push_back(sample.requires_relation);
    for (std::int64_t i = 0; i < sf.n; ++i) {
      mask[static_cast<std::size_t>(b * n_max + i)] = S(1);
      for (std::int64_t k = 0; k < d_feat; ++k)
        feat[static_cast<std::size_t>((b * n_max + i) * d_feat + k)] =
            static_cast<S>(sf.x[static_cast<std::size_t>(i * d_feat + k)]);
    }

    if (sample.task == TaskKind::vqa) {
      out.labels.push_back(data.label_of(sample.answer));
    } else if (features.mode() == FeatureMode::symbolic) {
      out.targets.push_back(sample.target_index);
    } else {
      const int g = features.grid_g();
      const float cell = 1.0f / static_cast<float>(g);
      const auto target_cell = grid_cell_of(sample.box[0], sample.box[1], g);
      out.targets.push_back(target_cell);
      const auto& cbox = sf.boxes[static_cast<std::size_t>(target_cell)];
      // Offset and size in cell-width units.
      offsets[static_cast<std::size_t>(b * 4 + 0)] =
          static_cast<S>((sample.box[0] - cbox[0]) / cell);
      offsets[static_cast<std::size_t>(b * 4 + 1)] =
          static_cast<S>((sample.box[1] - cbox[1]) / cell);
      offsets[static_cast<std::size_t>(b * 4 + 2)] =
          static_cast<S>(sample.box[2] / cell);
      offsets[static_cast<std::size_t>(b * 4 + 3)] =
          static_cast<S>(sample.box[3] / cell);
    }
  }

  out.x_feat = Tensor<S>({batch, n_max, d_feat}, std::move(feat));
  out.ent_mask = Tensor<S>({batch, n_max}, std::move(mask));
  out.gt_offsets = Tensor<S>({batch, 4}, std::move(offsets));
  return out;
}

template <typename S>
struct ForwardResult {
  EncodedText<S> enc;
  CommandSet<S> commands;
  LcgnResult<S> lcgn;
  VqaOutput<S> vqa;
  RefOutput<S> ref;
  Tensor<S> loss;  // scalar when requested
};

struct ForwardOptions {
  TaskKind task = TaskKind::vqa;
  LossKind loss_kind = LossKind::softmax;
  bool with_loss = true;
  bool box_term = false;  // REF grid mode adds the offset L2 term
};

// encode -> extract_commands -> input projection -> run_lcgn -> task head
// (-> loss).
template <typename S>
ForwardResult<S> model_forward(const Batch<S>& batch,
                               const ModelParams<S>& params,
                               const ModelConfig& config,
                               const ForwardOptions& opts) {
  ForwardResult<S> out;
  out.enc = encode(batch.tokens, params);
  const auto ablation = config.lcgn.ablation;
  if (ablation == Ablation::no_text || ablation == Ablation::no_lcgn)
    out.commands = commands_ablated_to_ones<S>(batch.x_feat.dim(0),
                                               config.lcgn.iterations,
                                               config.lcgn.d_txt);
  else
    out.commands = extract_commands(out.enc, params, config.lcgn.iterations);

  Tensor<S> x_loc = linear(batch.x_feat, params.input_proj);
  out.lcgn = run_lcgn(x_loc, batch.ent_mask, out.commands, config.lcgn,
                      params);

  if (opts.task == TaskKind::vqa) {
    out.vqa = vqa_head(out.lcgn.x_out, out.enc.q, params, batch.ent_mask);
    if (opts.with_loss)
      out.loss = vqa_loss(out.vqa.y, batch.labels, opts.loss_kind);
  } else {
    out.ref = ref_head(out.lcgn.x_out, out.enc.q, params, batch.ent_mask);
    if (opts.with_loss) {
      Tensor<S> u_gt = ref_box_offsets(out.lcgn.x_out, batch.targets, params);
      out.loss = ref_loss(out.ref.r, batch.ent_mask, batch.targets, u_gt,
                          batch.gt_offsets, opts.box_term);
    }
  }
  return out;
}

}  // namespace lcgn
