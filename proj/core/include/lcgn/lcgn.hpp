#pragma once

#include <cstdint>
#include <vector>

#include "lcgn/config.hpp"
#include "lcgn/params.hpp"
#include "lcgn/tensor.hpp"
#include "lcgn/text_encoder.hpp"

namespace lcgn {

// Per-sample record of the T connection-weight matrices, indexed
// [t][receiver i][sender j], restricted to the sample's real entities.
struct EdgeTrace {
  std::int64_t iterations = 0;
  std::int64_t n = 0;
  std::vector<float> w;  // iterations * n * n, row-major

  float at(std::int64_t t, std::int64_t i, std::int64_t j) const {
    return w[static_cast<std::size_t>((t * n + i) * n + j)];
  }
};

template <typename S>
struct LcgnResult {
  Tensor<S> x_out;                  // [B, N, d_loc]
  std::vector<Tensor<S>> trace_w;   // per round, [B, N, N] values
};

// x~_i = [x_loc_i ; x_ctx_i ; (W4 x_loc_i) . (W5 x_ctx_i)], width
// d_loc + 2 d_ctx.
template <typename S>
Tensor<S> joint_representation(const Tensor<S>& x_loc, const Tensor<S>& x_ctx,
                               const ModelParams<S>& params) {
  if (x_loc.ndim() != 3 || x_ctx.ndim() != 3 || x_loc.dim(0) != x_ctx.dim(0) ||
      x_loc.dim(1) != x_ctx.dim(1))
    throw ContractError("joint_representation: x_loc " +
                        shape_str(x_loc.shape()) + " vs x_ctx " +
                        shape_str(x_ctx.shape()));
  if (x_loc.dim(2) != params.w4.dim(1) || x_ctx.dim(2) != params.w5.dim(1))
    throw ContractError("joint_representation: feature widths do not match "
                        "W4/W5");
  return concat_lastdim(x_loc, x_ctx,
                        mul(linear(x_loc, params.w4),
                            linear(x_ctx, params.w5)));
}

// Eq. 5: w[i][j] = softmax over senders j of
// (W6 x~_i)^T ((W7 x~_j) . (W8 c_t)), for all pairs at once via one
// [N,d] x [d,N] product per sample. Masked senders are excluded from the
// softmax; masked receivers get all-zero rows.
template <typename S>
Tensor<S> edge_weights(const Tensor<S>& joint, const Tensor<S>& command,
                       const ModelParams<S>& params, const Tensor<S>& mask) {
  const std::int64_t batch = joint.dim(0), n = joint.dim(1);
  Tensor<S> recv = linear(joint, params.w6);  // [B, N, d_ctx]
  Tensor<S> gate =
      linear(command, params.w8).reshape({batch, 1, params.w8.dim(0)});
  Tensor<S> send = mul(linear(joint, params.w7), gate);  // [B, N, d_ctx]
  Tensor<S> logits = bmm(recv, send, false, true);       // [B, N, N]
  Tensor<S> w = masked_softmax(logits, mask.reshape({batch, 1, n}));
  return mul(w, mask.reshape({batch, n, 1}));
}

// Eqs. 6-7 with the matrix aggregation: unweighted messages
// m~_j = (W9 x~_j) . (W10 c_t) form the rows of M, the incoming sums are
// E . M with E[i][j] = w[j -> i], and the context update is
// x_ctx_i <- W11 [x_ctx_i ; sum_j m_{j,i}]. No N^2 message vectors are
// materialized.
template <typename S>
Tensor<S> propagate_step(const Tensor<S>& x_ctx, const Tensor<S>& joint,
                         const Tensor<S>& w, const Tensor<S>& command,
                         const ModelParams<S>& params) {
  const std::int64_t batch = joint.dim(0);
  Tensor<S> gate =
      linear(command, params.w10).reshape({batch, 1, params.w10.dim(0)});
  Tensor<S> messages = mul(linear(joint, params.w9), gate);  // [B, N, d_ctx]
  Tensor<S> incoming = bmm(w, messages);                     // E . M
  return linear(concat_lastdim(x_ctx, incoming), params.w11);
}

// T rounds of language-conditioned message passing (Eqs. 4-8) over the
// fully connected entity graph, then x_out_i = W12 [x_loc_i ; x_ctx_i].
//
// Ablations: no-text replaces every command with all ones; static-weights
// computes edge weights only in the first round and reuses them; no-lcgn
// bypasses message passing entirely and returns x_loc with an empty trace.
template <typename S>
LcgnResult<S> run_lcgn(const Tensor<S>& x_loc, const Tensor<S>& mask,
                       const CommandSet<S>& commands, const LcgnConfig& config,
                       const ModelParams<S>& params) {
  config.validate();
  if (x_loc.ndim() != 3 || x_loc.dim(2) != config.d_loc)
    throw ContractError("run_lcgn: features " + shape_str(x_loc.shape()) +
                        " do not match d_loc " + std::to_string(config.d_loc));
  if (x_loc.dim(1) > config.n_max)
    throw ContractError("run_lcgn: entity count exceeds n_max");

  LcgnResult<S> out;
  if (config.ablation == Ablation::no_lcgn) {
    out.x_out = x_loc;
    return out;
  }

  const std::int64_t batch = x_loc.dim(0), n = x_loc.dim(1);
  CommandSet<S> cmds = commands;
  if (config.ablation == Ablation::no_text)
    cmds = commands_ablated_to_ones<S>(batch, config.iterations, config.d_txt);
  if (cmds.c.dim(1) < config.iterations)
    throw ContractError("run_lcgn: command set has " +
                        std::to_string(cmds.c.dim(1)) + " rows, need " +
                        std::to_string(config.iterations));

  Tensor<S> x_ctx = add(Tensor<S>::zeros({batch, n, config.d_ctx}),
                        params.x_ctx_init);  // learned initial context
  Tensor<S> w_static;
  for (std::int64_t t = 0; t < config.iterations; ++t) {
    Tensor<S> command = select_dim1(cmds.c, t);
    Tensor<S> joint = joint_representation(x_loc, x_ctx, params);
    Tensor<S> w;
    if (config.ablation == Ablation::static_weights && t > 0) {
      w = w_static;
    } else {
      w = edge_weights(joint, command, params, mask);
      if (config.ablation == Ablation::static_weights) w_static = w;
    }
    x_ctx = propagate_step(x_ctx, joint, w, command, params);
    out.trace_w.push_back(
        Tensor<S>(w.shape(), {w.data().begin(), w.data().end()}));
  }
  out.x_out = linear(concat_lastdim(x_loc, x_ctx), params.w12);
  return out;
}

// Splits a batched trace into per-sample EdgeTrace records restricted to
// each sample's real entity count.
template <typename S>
std::vector<EdgeTrace> extract_traces(const LcgnResult<S>& result,
                                      const std::vector<std::int64_t>& n_real) {
  std::vector<EdgeTrace> out;
  if (result.trace_w.empty()) {
    out.resize(n_real.size());
    return out;
  }
  const std::int64_t rounds =
      static_cast<std::int64_t>(result.trace_w.size());
  const std::int64_t n_pad = result.trace_w[0].dim(1);
  for (std::size_t b = 0; b < n_real.size(); ++b) {
    EdgeTrace trace;
    trace.iterations = rounds;
    trace.n = n_real[b];
    trace.w.resize(static_cast<std::size_t>(rounds * trace.n * trace.n));
    for (std::int64_t t = 0; t < rounds; ++t) {
      const auto wv = result.trace_w[static_cast<std::size_t>(t)].data();
      for (std::int64_t i = 0; i < trace.n; ++i)
        for (std::int64_t j = 0; j < trace.n; ++j)
          trace.w[static_cast<std::size_t>((t * trace.n + i) * trace.n + j)] =
              static_cast<float>(
                  wv[(static_cast<std::int64_t>(b) * n_pad + i) * n_pad + j]);
    }
    out.push_back(std::move(trace));
  }
  return out;
}

// Appendix-B style analysis for one scene: the mean number of distinct
// argmax senders per receiver across K question traces, using the final
// round and lowest-index tie-breaking.
inline double unique_argmax_mean(const std::vector<EdgeTrace>& traces) {
  if (traces.empty())
    throw ContractError("unique_argmax_mean: no traces");
  const std::int64_t n = traces[0].n;
  for (const auto& t : traces)
    if (t.n != n || t.iterations == 0)
      throw ContractError("unique_argmax_mean: traces disagree on N or are "
                          "empty");
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    std::vector<std::int64_t> seen;
    for (const auto& trace : traces) {
      const std::int64_t t = trace.iterations - 1;
      std::int64_t best = 0;
      for (std::int64_t j = 1; j < n; ++j)
        if (trace.at(t, i, j) > trace.at(t, i, best)) best = j;
      if (std::find(seen.begin(), seen.end(), best) == seen.end())
        seen.push_back(best);
    }
    total += static_cast<double>(seen.size());
  }
  return total / static_cast<double>(n);
}

}  // namespace lcgn
