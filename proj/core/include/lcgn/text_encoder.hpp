#pragma once

#include <cstdint>
#include <vector>

#include "lcgn/params.hpp"
#include "lcgn/tensor.hpp"
#include "lcgn/vocab.hpp"

namespace lcgn {

// Batched encoding of tokenized text. h holds one d_txt vector per word
// (forward and backward halves concatenated); q concatenates the forward
// state at the last real word with the backward state at the first word;
// mask flags real (non-PAD) positions.
template <typename S>
struct EncodedText {
  Tensor<S> h;     // [B, S, d_txt]
  Tensor<S> q;     // [B, d_txt]
  Tensor<S> mask;  // [B, S], 0/1
};

template <typename S>
struct CommandSet {
  Tensor<S> c;      // [B, T, d_txt]
  Tensor<S> alpha;  // [B, T, S]; undefined for the all-ones ablation
};

namespace detail {

// Fused elementwise LSTM cell with carry masking: from pre-activation gates
// (packed i, f, g, o) and the previous state, computes
//   c_new = sigm(i) . tanh(g) + sigm(f) . c_prev
//   h_new = sigm(o) . tanh(c_new)
// and keeps the previous state wherever the step mask is 0. One tape node
// covers both outputs.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> lstm_cell(const Tensor<S>& gates,
                                          const Tensor<S>& h_prev,
                                          const Tensor<S>& c_prev,
                                          const Tensor<S>& step_mask) {
  const std::int64_t batch = gates.dim(0), hid = gates.dim(1) / 4;
  if (gates.dim(1) % 4 != 0 || h_prev.dim(1) != hid || c_prev.dim(1) != hid)
    throw ShapeError("lstm_cell: gate width must be 4x the state width");

  Tensor<S> h_out = Tensor<S>::zeros({batch, hid});
  Tensor<S> c_out = Tensor<S>::zeros({batch, hid});
  // Saved activations for the backward rule.
  Tensor<S> acts = Tensor<S>::zeros({batch, 4 * hid});
  Tensor<S> tanh_c = Tensor<S>::zeros({batch, hid});
  {
    const S* g = gates.data().data();
    const S* hp = h_prev.data().data();
    const S* cp = c_prev.data().data();
    const S* mk = step_mask.data().data();
    S* ho = h_out.mutable_data().data();
    S* co = c_out.mutable_data().data();
    S* av = acts.mutable_data().data();
    S* tc = tanh_c.mutable_data().data();
    auto sigm = [](S x) {
      return x >= S(0) ? S(1) / (S(1) + std::exp(-x))
                       : std::exp(x) / (S(1) + std::exp(x));
    };
    for (std::int64_t b = 0; b < batch; ++b) {
      const S m = mk[b];
      const S* grow = g + b * 4 * hid;
      S* arow = av + b * 4 * hid;
      for (std::int64_t k = 0; k < hid; ++k) {
        const S gi = sigm(grow[k]);
        const S gf = sigm(grow[hid + k]);
        const S gg = std::tanh(grow[2 * hid + k]);
        const S go = sigm(grow[3 * hid + k]);
        arow[k] = gi;
        arow[hid + k] = gf;
        arow[2 * hid + k] = gg;
        arow[3 * hid + k] = go;
        const S c_new = gf * cp[b * hid + k] + gi * gg;
        const S t = std::tanh(c_new);
        tc[b * hid + k] = t;
        const S h_new = go * t;
        co[b * hid + k] = m * c_new + (S(1) - m) * cp[b * hid + k];
        ho[b * hid + k] = m * h_new + (S(1) - m) * hp[b * hid + k];
      }
    }
  }

  if (detail::tracking<S>({&gates, &h_prev, &c_prev})) {
    Tensor<S> gc = gates, hc = h_prev, cc = c_prev, mc = step_mask,
              hoc = h_out, coc = c_out, ac = acts, tcc = tanh_c;
    h_out.set_requires_grad(true);
    h_out.ensure_grad();
    c_out.set_requires_grad(true);
    c_out.ensure_grad();
    active_tape<S>()->record([gc, hc, cc, mc, hoc, coc, ac, tcc, batch,
                              hid]() mutable {
      const S* dho = hoc.grad().data();
      const S* dco = coc.grad().data();
      const S* av = ac.data().data();
      const S* tc = tcc.data().data();
      const S* cp = cc.data().data();
      const S* mk = mc.data().data();
      S* dg = gc.requires_grad() ? gc.grad().data() : nullptr;
      S* dhp = hc.requires_grad() ? hc.grad().data() : nullptr;
      S* dcp = cc.requires_grad() ? cc.grad().data() : nullptr;
      for (std::int64_t b = 0; b < batch; ++b) {
        const S m = mk[b];
        const S* arow = av + b * 4 * hid;
        for (std::int64_t k = 0; k < hid; ++k) {
          const S gi = arow[k], gf = arow[hid + k], gg = arow[2 * hid + k],
                  go = arow[3 * hid + k];
          const S t = tc[b * hid + k];
          const S dh_new = dho[b * hid + k] * m;
          const S dc_new =
              dco[b * hid + k] * m + dh_new * go * (S(1) - t * t);
          if (dhp) dhp[b * hid + k] += dho[b * hid + k] * (S(1) - m);
          if (dcp)
            dcp[b * hid + k] +=
                dco[b * hid + k] * (S(1) - m) + dc_new * gf;
          if (dg) {
            S* grow = dg + b * 4 * hid;
            grow[k] += dc_new * gg * gi * (S(1) - gi);
            grow[hid + k] += dc_new * cp[b * hid + k] * gf * (S(1) - gf);
            grow[2 * hid + k] += dc_new * gi * (S(1) - gg * gg);
            grow[3 * hid + k] += dh_new * t * go * (S(1) - go);
          }
        }
      }
    });
  }
  return {h_out, c_out};
}

// One masked step: gates from the packed [i,f,g,o] weights. The input
// projection W_x x_s for all steps is hoisted into one matrix product by
// the caller.
template <typename S>
void lstm_step(const Tensor<S>& x_gates, const Tensor<S>& step_mask,
               const LstmWeights<S>& w, Tensor<S>& h, Tensor<S>& c) {
  Tensor<S> gates = add(add(x_gates, linear(h, w.wh)), w.b);
  auto [h_out, c_out] = lstm_cell(gates, h, c, step_mask);
  h = h_out;
  c = c_out;
}

}  // namespace detail

// Runs the bidirectional LSTM over a right-padded token batch. Every
// sequence must be non-empty and no longer than the padded width.
template <typename S>
EncodedText<S> encode(const std::vector<std::vector<std::int64_t>>& tokens,
                      const ModelParams<S>& params) {
  const auto batch = static_cast<std::int64_t>(tokens.size());
  if (batch == 0) throw ContractError("encode: empty batch");
  std::int64_t steps = 0;
  for (const auto& seq : tokens) {
    if (seq.empty()) throw ContractError("encode: empty token sequence");
    steps = std::max(steps, static_cast<std::int64_t>(seq.size()));
  }

  std::vector<std::int64_t> flat(static_cast<std::size_t>(batch * steps),
                                 Vocabulary::kPad);
  std::vector<S> mask_data(static_cast<std::size_t>(batch * steps), S(0));
  for (std::int64_t b = 0; b < batch; ++b) {
    const auto& seq = tokens[static_cast<std::size_t>(b)];
    for (std::size_t s = 0; s < seq.size(); ++s) {
      flat[static_cast<std::size_t>(b * steps) + s] = seq[s];
      mask_data[static_cast<std::size_t>(b * steps) + s] = S(1);
    }
  }
  Tensor<S> mask({batch, steps}, std::move(mask_data));

  Tensor<S> emb = embedding(params.word_emb, flat, {batch, steps});
  const std::int64_t hid = params.config().lcgn.d_txt / 2;

  // Per-step mask columns as [B, 1] constants.
  std::vector<Tensor<S>> m_col;
  for (std::int64_t s = 0; s < steps; ++s) {
    std::vector<S> m(static_cast<std::size_t>(batch));
    for (std::int64_t b = 0; b < batch; ++b)
      m[static_cast<std::size_t>(b)] = mask.data()[b * steps + s];
    m_col.push_back(Tensor<S>({batch, 1}, std::move(m)));
  }

  std::vector<Tensor<S>> fw(static_cast<std::size_t>(steps)),
      bw(static_cast<std::size_t>(steps));
  Tensor<S> fw_gates = linear(emb, params.lstm_fw.wx);  // [B, S, 4H]
  Tensor<S> bw_gates = linear(emb, params.lstm_bw.wx);
  Tensor<S> h = Tensor<S>::zeros({batch, hid});
  Tensor<S> c = Tensor<S>::zeros({batch, hid});
  for (std::int64_t s = 0; s < steps; ++s) {
    detail::lstm_step(select_dim1(fw_gates, s),
                      m_col[static_cast<std::size_t>(s)], params.lstm_fw, h,
                      c);
    fw[static_cast<std::size_t>(s)] = h;
  }
  Tensor<S> q_fw = h;  // carried forward state at the last real word

  h = Tensor<S>::zeros({batch, hid});
  c = Tensor<S>::zeros({batch, hid});
  for (std::int64_t s = steps - 1; s >= 0; --s) {
    detail::lstm_step(select_dim1(bw_gates, s),
                      m_col[static_cast<std::size_t>(s)], params.lstm_bw, h,
                      c);
    bw[static_cast<std::size_t>(s)] = h;
  }
  Tensor<S> q_bw = h;  // backward state at the first word

  std::vector<Tensor<S>> per_word(static_cast<std::size_t>(steps));
  for (std::int64_t s = 0; s < steps; ++s)
    per_word[static_cast<std::size_t>(s)] =
        concat_lastdim(fw[static_cast<std::size_t>(s)],
                       bw[static_cast<std::size_t>(s)]);

  EncodedText<S> out;
  out.h = stack_dim1(per_word);
  out.q = concat_lastdim(q_fw, q_bw);
  out.mask = mask;
  return out;
}

// Multi-step textual attention: alpha_t = softmax_s(W1(h_s . (W2_t ReLU(W3 q))))
// and c_t as the attention-weighted sum of {h_s}. Only W2 varies with t.
template <typename S>
CommandSet<S> extract_commands(const EncodedText<S>& enc,
                               const ModelParams<S>& params,
                               std::int64_t iterations) {
  if (iterations < 1) throw ContractError("extract_commands: T must be >= 1");
  if (iterations > static_cast<std::int64_t>(params.w2.size()))
    throw ContractError("extract_commands: T exceeds the W2 table (" +
                        std::to_string(params.w2.size()) + ")");
  const std::int64_t batch = enc.h.dim(0), steps = enc.h.dim(1),
                     d_txt = enc.h.dim(2);

  Tensor<S> u = relu(linear(enc.q, params.w3));  // [B, d_txt]
  std::vector<Tensor<S>> cs, alphas;
  for (std::int64_t t = 0; t < iterations; ++t) {
    Tensor<S> key =
        linear(u, params.w2[static_cast<std::size_t>(t)]).reshape(
            {batch, 1, d_txt});
    Tensor<S> gated = mul(enc.h, key);                    // [B, S, d_txt]
    Tensor<S> logits =
        linear(gated, params.w1).reshape({batch, steps});  // [B, S]
    Tensor<S> alpha = masked_softmax(logits, enc.mask);
    Tensor<S> ct =
        bmm(alpha.reshape({batch, 1, steps}), enc.h).reshape({batch, d_txt});
    alphas.push_back(alpha);
    cs.push_back(ct);
  }
  CommandSet<S> out;
  out.c = stack_dim1(cs);
  out.alpha = stack_dim1(alphas);
  return out;
}

// The "no text" ablation: every command vector is all ones, independent of
// any input text. alpha is left empty.
template <typename S>
CommandSet<S> commands_ablated_to_ones(std::int64_t batch,
                                       std::int64_t iterations,
                                       std::int64_t d_txt) {
  CommandSet<S> out;
  out.c = Tensor<S>::full({batch, iterations, d_txt}, S(1));
  return out;
}

}  // namespace lcgn
