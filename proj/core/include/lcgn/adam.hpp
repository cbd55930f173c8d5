#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lcgn/params.hpp"

namespace lcgn {

template <typename S>
struct AdamConfig {
  S lr = S(3e-4);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
};

// First/second moment accumulators aligned with the parameter registry.
template <typename S>
class AdamState {
 public:
  static AdamState init(const ModelParams<S>& params) {
    AdamState st;
    for (const auto& [name, t] : params.named()) {
      st.m_.emplace_back(name, std::vector<S>(t.data().size(), S(0)));
      st.v_.emplace_back(name, std::vector<S>(t.data().size(), S(0)));
    }
    return st;
  }

  std::int64_t timestep() const { return step_; }

  // Standard bias-corrected Adam update; gradients are zeroed afterward.
  // A non-finite gradient aborts with the offending tensor's name.
  void step(ModelParams<S>& params, const AdamConfig<S>& cfg) {
    ++step_;
    const S bc1 = S(1) - std::pow(cfg.beta1, static_cast<S>(step_));
    const S bc2 = S(1) - std::pow(cfg.beta2, static_cast<S>(step_));
    auto& named = params.named();
    if (named.size() != m_.size())
      throw ContractError("Adam state does not match the parameter table");
    for (std::size_t i = 0; i < named.size(); ++i) {
      auto& [name, tensor] = named[i];
      if (name != m_[i].first)
        throw ContractError("Adam state misaligned at " + name);
      auto grad = tensor.grad();
      auto data = tensor.mutable_data();
      auto& m = m_[i].second;
      auto& v = v_[i].second;
      for (std::size_t k = 0; k < m.size(); ++k) {
        const S g = grad[k];
        if (!std::isfinite(g))
          throw std::runtime_error("non-finite gradient in tensor " + name);
        m[k] = cfg.beta1 * m[k] + (S(1) - cfg.beta1) * g;
        v[k] = cfg.beta2 * v[k] + (S(1) - cfg.beta2) * g * g;
        const S m_hat = m[k] / bc1;
        const S v_hat = v[k] / bc2;
        data[k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
      }
      tensor.zero_grad();
    }
  }

 private:
  std::int64_t step_ = 0;
  std::vector<std::pair<std::string, std::vector<S>>> m_, v_;
};

// Named value table for the exponential moving average of parameters.
template <typename S>
struct EmaTable {
  std::vector<std::pair<std::string, std::vector<S>>> values;

  static EmaTable from(const ModelParams<S>& params) {
    EmaTable t;
    for (const auto& [name, tensor] : params.named())
      t.values.emplace_back(name, std::vector<S>(tensor.data().begin(),
                                                 tensor.data().end()));
    return t;
  }
};

// ema <- decay * ema + (1 - decay) * params, elementwise; tables must align
// by name.
template <typename S>
void ema_update(EmaTable<S>& ema, const ModelParams<S>& params, S decay) {
  const auto& named = params.named();
  if (ema.values.size() != named.size())
    throw ContractError("EMA table does not match the parameter table");
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (ema.values[i].first != named[i].first)
      throw ContractError("EMA table misaligned at " + named[i].first);
    const auto data = named[i].second.data();
    auto& acc = ema.values[i].second;
    for (std::size_t k = 0; k < acc.size(); ++k)
      acc[k] = decay * acc[k] + (S(1) - decay) * data[k];
  }
}

// A parameter set with the same structure but values taken from the table.
template <typename S>
ModelParams<S> params_with_values(const ModelConfig& config,
                                  const EmaTable<S>& table) {
  ModelParams<S> out = ModelParams<S>::init(config, 0);
  auto& named = out.named();
  if (named.size() != table.values.size())
    throw ContractError("value table does not match the parameter layout");
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (named[i].first != table.values[i].first)
      throw ContractError("value table misaligned at " + named[i].first);
    auto dst = named[i].second.mutable_data();
    const auto& src = table.values[i].second;
    if (dst.size() != src.size())
      throw ContractError("value table size mismatch at " + named[i].first);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return out;
}

}  // namespace lcgn
