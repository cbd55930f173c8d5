#pragma once

#include <cstdint>
#include <vector>

#include "lcgn/params.hpp"
#include "lcgn/tensor.hpp"

namespace lcgn {

enum class LossKind { softmax, sigmoid };

inline std::string to_string(LossKind k) {
  return k == LossKind::softmax ? "softmax" : "sigmoid";
}

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "softmax") return LossKind::softmax;
  if (s == "sigmoid") return LossKind::sigmoid;
  throw ContractError("unknown loss kind: " + s);
}

template <typename S>
struct VqaOutput {
  Tensor<S> beta;  // [B, N] attention over entities
  Tensor<S> y;     // [B, d_ans] answer scores
};

template <typename S>
struct RefOutput {
  Tensor<S> r;                 // [B, N] matching scores
  std::vector<std::int64_t> p; // selected entity per sample
  Tensor<S> u;                 // [B, 4] box offset at the selected entity
};

// Eqs. 9-10: beta_i = softmax_i(W13(x_out_i . (W14 q))), then the pooled
// vector fused with q through the two-layer classifier.
template <typename S>
VqaOutput<S> vqa_head(const Tensor<S>& x_out, const Tensor<S>& q,
                      const ModelParams<S>& params, const Tensor<S>& mask) {
  const std::int64_t batch = x_out.dim(0), n = x_out.dim(1),
                     d_loc = x_out.dim(2);
  Tensor<S> gate = linear(q, params.w14).reshape({batch, 1, d_loc});
  Tensor<S> logits =
      linear(mul(x_out, gate), params.w13).reshape({batch, n});
  VqaOutput<S> out;
  out.beta = masked_softmax(logits, mask);
  Tensor<S> pooled =
      bmm(out.beta.reshape({batch, 1, n}), x_out).reshape({batch, d_loc});
  out.y = linear(relu(linear(concat_lastdim(pooled, q), params.w16)),
                 params.w15);
  return out;
}

// Softmax kind: negative log softmax at the label. Sigmoid kind: per-class
// binary cross-entropy against the one-hot target, summed over classes.
// Returns the batch mean.
template <typename S>
Tensor<S> vqa_loss(const Tensor<S>& y, const std::vector<std::int64_t>& labels,
                   LossKind kind) {
  Tensor<S> per_sample = kind == LossKind::softmax
                             ? softmax_cross_entropy(y, labels)
                             : sigmoid_cross_entropy_onehot(y, labels);
  return reduce_mean_all(per_sample);
}

// Eqs. 11-13: r_i = W17(x_out_i . (W18 q)), p = argmax over unmasked
// entities (lowest index on ties), u = W19 x_out_p.
template <typename S>
RefOutput<S> ref_head(const Tensor<S>& x_out, const Tensor<S>& q,
                      const ModelParams<S>& params, const Tensor<S>& mask) {
  const std::int64_t batch = x_out.dim(0), n = x_out.dim(1),
                     d_loc = x_out.dim(2);
  Tensor<S> gate = linear(q, params.w18).reshape({batch, 1, d_loc});
  RefOutput<S> out;
  out.r = linear(mul(x_out, gate), params.w17).reshape({batch, n});
  out.p = argmax_lastdim_masked(out.r, mask);
  out.u = linear(gather_dim1(x_out, out.p), params.w19);
  return out;
}

// Box offsets at given entity indices (the ground-truth cell during
// training).
template <typename S>
Tensor<S> ref_box_offsets(const Tensor<S>& x_out,
                          const std::vector<std::int64_t>& at,
                          const ModelParams<S>& params) {
  return linear(gather_dim1(x_out, at), params.w19);
}

// Softmax cross-entropy over the matching scores, plus (grid mode) the mean
// squared error between the offset predicted at the ground-truth cell and
// the ground-truth offset, weighted 1:1. Returns the batch mean.
template <typename S>
Tensor<S> ref_loss(const Tensor<S>& r, const Tensor<S>& mask,
                   const std::vector<std::int64_t>& targets,
                   const Tensor<S>& u_at_target, const Tensor<S>& gt_offset,
                   bool with_box_term) {
  Tensor<S> selection =
      reduce_mean_all(masked_softmax_cross_entropy(r, mask, targets));
  if (!with_box_term) return selection;
  Tensor<S> diff = sub(u_at_target, gt_offset);
  return add(selection, reduce_mean_all(mul(diff, diff)));
}

}  // namespace lcgn
