#pragma once

#include <cstdint>
#include <string>

#include "lcgn/errors.hpp"

namespace lcgn {

enum class Ablation { none, no_text, static_weights, no_lcgn };

inline std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::no_text: return "no-text";
    case Ablation::static_weights: return "static-w";
    case Ablation::no_lcgn: return "no-lcgn";
  }
  return "none";
}

inline Ablation ablation_from_string(const std::string& s) {
  if (s == "none") return Ablation::none;
  if (s == "no-text") return Ablation::no_text;
  if (s == "static-w" || s == "static-weights") return Ablation::static_weights;
  if (s == "no-lcgn") return Ablation::no_lcgn;
  throw ContractError("unknown ablation: " + s);
}

// Message-passing configuration. Defaults follow the reference setup
// (T = 4 rounds, 512-wide features).
struct LcgnConfig {
  std::int64_t iterations = 4;  // T
  std::int64_t d_loc = 512;
  std::int64_t d_ctx = 512;
  std::int64_t d_txt = 512;
  std::int64_t n_max = 196;
  Ablation ablation = Ablation::none;

  void validate() const {
    if (iterations < 1) throw ContractError("iterations must be >= 1");
    if (d_loc <= 0 || d_ctx <= 0 || d_txt <= 0)
      throw ContractError("dims must be positive");
    if (d_txt % 2 != 0)
      throw ContractError("d_txt must be even (two LSTM directions)");
  }
};

// Full model surface: message passing plus vocabulary sizes and heads.
struct ModelConfig {
  LcgnConfig lcgn;
  std::int64_t vocab_size = 0;
  std::int64_t d_feat = 0;  // raw per-entity feature width before projection
  std::int64_t d_ans = 0;   // answer vocabulary (VQA head)
  bool with_vqa_head = true;
  bool with_ref_head = true;
  std::int64_t s_max = 64;  // token-length cap

  void validate() const {
    lcgn.validate();
    if (vocab_size < 2) throw ContractError("vocab must include PAD and UNK");
    if (d_feat <= 0) throw ContractError("d_feat must be positive");
    if (with_vqa_head && d_ans <= 0)
      throw ContractError("VQA head requires d_ans > 0");
    if (!with_vqa_head && !with_ref_head)
      throw ContractError("model needs at least one head");
  }
};

// Hidden width of the answer classifier's fused layer.
inline constexpr std::int64_t kVqaHidden = 512;

}  // namespace lcgn
