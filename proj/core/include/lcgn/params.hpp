#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lcgn/config.hpp"
#include "lcgn/tensor.hpp"

namespace lcgn {

template <typename S>
struct LstmWeights {
  Tensor<S> wx;  // [4H, d_in], gate order i, f, g, o
  Tensor<S> wh;  // [4H, H]
  Tensor<S> b;   // [4H]
};

// The full named parameter set: word embeddings, BiLSTM weights, W1..W19,
// the learned initial context vector, and the input feature projection.
// Every tensor is shared across message-passing rounds except w2, which has
// one copy per round.
template <typename S>
class ModelParams {
 public:
  Tensor<S> word_emb;  // [V, d_txt]
  LstmWeights<S> lstm_fw, lstm_bw;

  Tensor<S> w1;               // [1, d_txt]
  std::vector<Tensor<S>> w2;  // T x [d_txt, d_txt]
  Tensor<S> w3;               // [d_txt, d_txt]

  Tensor<S> w4, w5, w6, w7, w8, w9, w10, w11, w12;
  Tensor<S> x_ctx_init;  // [d_ctx]

  Tensor<S> w13, w14, w15, w16;  // VQA head
  Tensor<S> w17, w18, w19;       // REF head

  Tensor<S> input_proj;  // [d_loc, d_feat]

  const ModelConfig& config() const { return config_; }

  // Same order as expected_param_shapes(config).
  std::vector<std::pair<std::string, Tensor<S>>>& named() { return named_; }
  const std::vector<std::pair<std::string, Tensor<S>>>& named() const {
    return named_;
  }

  Tensor<S>& find(const std::string& name) {
    for (auto& [n, t] : named_)
      if (n == name) return t;
    throw ContractError("unknown parameter: " + name);
  }

  void zero_grads() {
    for (auto& [n, t] : named_) t.zero_grad();
  }

  ModelParams() = default;

  static ModelParams init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelParams p;
    p.config_ = config;
    std::mt19937_64 rng(seed);

    const auto d_txt = config.lcgn.d_txt;
    const auto d_ctx = config.lcgn.d_ctx;
    const auto d_loc = config.lcgn.d_loc;
    const auto hidden = d_txt / 2;
    const auto joint = d_loc + 2 * d_ctx;

    p.word_emb = uniform_tensor({config.vocab_size, d_txt}, S(0.08), rng);
    p.push("word_emb", p.word_emb);
    for (auto* dir : {&p.lstm_fw, &p.lstm_bw}) {
      dir->wx = xavier({4 * hidden, d_txt}, rng);
      dir->wh = xavier({4 * hidden, hidden}, rng);
      dir->b = Tensor<S>::zeros({4 * hidden}, true);
    }
    p.push("lstm_fw.wx", p.lstm_fw.wx);
    p.push("lstm_fw.wh", p.lstm_fw.wh);
    p.push("lstm_fw.b", p.lstm_fw.b);
    p.push("lstm_bw.wx", p.lstm_bw.wx);
    p.push("lstm_bw.wh", p.lstm_bw.wh);
    p.push("lstm_bw.b", p.lstm_bw.b);

    p.w1 = xavier({1, d_txt}, rng);
    p.push("W1", p.w1);
    for (std::int64_t t = 0; t < config.lcgn.iterations; ++t) {
      p.w2.push_back(xavier({d_txt, d_txt}, rng));
      p.push("W2[" + std::to_string(t) + "]", p.w2.back());
    }
    p.w3 = xavier({d_txt, d_txt}, rng);
    p.push("W3", p.w3);

    p.w4 = xavier({d_ctx, d_loc}, rng);
    p.w5 = xavier({d_ctx, d_ctx}, rng);
    p.w6 = xavier({d_ctx, joint}, rng);
    p.w7 = xavier({d_ctx, joint}, rng);
    p.w8 = xavier({d_ctx, d_txt}, rng);
    p.w9 = xavier({d_ctx, joint}, rng);
    p.w10 = xavier({d_ctx, d_txt}, rng);
    p.w11 = xavier({d_ctx, 2 * d_ctx}, rng);
    p.w12 = xavier({d_loc, d_loc + d_ctx}, rng);
    p.x_ctx_init = Tensor<S>::zeros({d_ctx}, true);
    p.push("W4", p.w4);
    p.push("W5", p.w5);
    p.push("W6", p.w6);
    p.push("W7", p.w7);
    p.push("W8", p.w8);
    p.push("W9", p.w9);
    p.push("W10", p.w10);
    p.push("W11", p.w11);
    p.push("W12", p.w12);
    p.push("x_ctx_init", p.x_ctx_init);

    if (config.with_vqa_head) {
      p.w13 = xavier({1, d_loc}, rng);
      p.w14 = xavier({d_loc, d_txt}, rng);
      p.w15 = xavier({config.d_ans, kVqaHidden}, rng);
      p.w16 = xavier({kVqaHidden, d_loc + d_txt}, rng);
      p.push("W13", p.w13);
      p.push("W14", p.w14);
      p.push("W15", p.w15);
      p.push("W16", p.w16);
    }
    if (config.with_ref_head) {
      p.w17 = xavier({1, d_loc}, rng);
      p.w18 = xavier({d_loc, d_txt}, rng);
      p.w19 = xavier({4, d_loc}, rng);
      p.push("W17", p.w17);
      p.push("W18", p.w18);
      p.push("W19", p.w19);
    }

    p.input_proj = xavier({d_loc, config.d_feat}, rng);
    p.push("input_proj", p.input_proj);
    return p;
  }

 private:
  void push(std::string name, const Tensor<S>& t) {
    named_.emplace_back(std::move(name), t);
  }

  static Tensor<S> uniform_tensor(Shape shape, S limit, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-double(limit), double(limit));
    const auto n = shape_numel(shape);
    std::vector<S> data(static_cast<std::size_t>(n));
    for (auto& v : data) v = static_cast<S>(dist(rng));
    return Tensor<S>(std::move(shape), std::move(data), true);
  }

  static Tensor<S> xavier(Shape shape, std::mt19937_64& rng) {
    // [fan_out, fan_in] layout for every weight in the table.
    const double fan_in = static_cast<double>(shape.back());
    const double fan_out = static_cast<double>(shape.size() > 1
                                                   ? shape[shape.size() - 2]
                                                   : 1);
    const S limit = static_cast<S>(std::sqrt(6.0 / (fan_in + fan_out)));
    return uniform_tensor(std::move(shape), limit, rng);
  }

  ModelConfig config_;
  std::vector<std::pair<std::string, Tensor<S>>> named_;
};

// The reference shape table for a given configuration, in registry order.
// Used by the parameter-census audit.
inline std::vector<std::pair<std::string, Shape>> expected_param_shapes(
    const ModelConfig& config) {
  const auto d_txt = config.lcgn.d_txt;
  const auto d_ctx = config.lcgn.d_ctx;
  const auto d_loc = config.lcgn.d_loc;
  const auto hidden = d_txt / 2;
  const auto joint = d_loc + 2 * d_ctx;
  std::vector<std::pair<std::string, Shape>> out;
  out.emplace_back("word_emb", Shape{config.vocab_size, d_txt});
  for (const char* dir : {"lstm_fw", "lstm_bw"}) {
    out.emplace_back(std::string(dir) + ".wx", Shape{4 * hidden, d_txt});
    out.emplace_back(std::string(dir) + ".wh", Shape{4 * hidden, hidden});
    out.emplace_back(std::string(dir) + ".b", Shape{4 * hidden});
  }
  out.emplace_back("W1", Shape{1, d_txt});
  for (std::int64_t t = 0; t < config.lcgn.iterations; ++t)
    out.emplace_back("W2[" + std::to_string(t) + "]", Shape{d_txt, d_txt});
  out.emplace_back("W3", Shape{d_txt, d_txt});
  out.emplace_back("W4", Shape{d_ctx, d_loc});
  out.emplace_back("W5", Shape{d_ctx, d_ctx});
  out.emplace_back("W6", Shape{d_ctx, joint});
  out.emplace_back("W7", Shape{d_ctx, joint});
  out.emplace_back("W8", Shape{d_ctx, d_txt});
  out.emplace_back("W9", Shape{d_ctx, joint});
  out.emplace_back("W10", Shape{d_ctx, d_txt});
  out.emplace_back("W11", Shape{d_ctx, 2 * d_ctx});
  out.emplace_back("W12", Shape{d_loc, d_loc + d_ctx});
  out.emplace_back("x_ctx_init", Shape{d_ctx});
  if (config.with_vqa_head) {
    out.emplace_back("W13", Shape{1, d_loc});
    out.emplace_back("W14", Shape{d_loc, d_txt});
    out.emplace_back("W15", Shape{config.d_ans, kVqaHidden});
    out.emplace_back("W16", Shape{kVqaHidden, d_loc + d_txt});
  }
  if (config.with_ref_head) {
    out.emplace_back("W17", Shape{1, d_loc});
    out.emplace_back("W18", Shape{d_loc, d_txt});
    out.emplace_back("W19", Shape{4, d_loc});
  }
  out.emplace_back("input_proj", Shape{d_loc, config.d_feat});
  return out;
}

}  // namespace lcgn
