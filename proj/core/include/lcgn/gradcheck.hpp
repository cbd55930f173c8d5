#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lcgn/tensor.hpp"

namespace lcgn {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  int checked = 0;
};

// Compares the analytic gradient of loss_fn against central finite
// differences on a random coordinate subset of every parameter tensor.
// loss_fn must be a deterministic function of the parameter values; it runs
// once on a tape for the analytic pass and twice per probed coordinate
// without one. The relative error uses max(|analytic|, |numeric|) as the
// denominator, falling back to the absolute difference when both are tiny.
template <typename S>
std::vector<GradCheckEntry> check_gradients(
    const std::function<Tensor<S>()>& loss_fn,
    std::vector<std::pair<std::string, Tensor<S>>>& params, double step,
    int coords_per_tensor, std::uint64_t seed) {
  std::vector<GradCheckEntry> report;
  if (params.empty()) return report;

  for (auto& [name, t] : params) t.zero_grad();
  std::vector<std::vector<S>> analytic;
  {
    Tape<S> tape;
    TapeScope<S> scope(tape);
    Tensor<S> loss = loss_fn();
    tape.backward(loss);
  }
  for (auto& [name, t] : params)
    analytic.emplace_back(t.grad().begin(), t.grad().end());

  std::mt19937_64 rng(seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& tensor = params[pi].second;
    GradCheckEntry entry;
    entry.name = params[pi].first;

    const auto numel = static_cast<std::size_t>(tensor.numel());
    std::vector<std::size_t> coords(numel);
    for (std::size_t i = 0; i < numel; ++i) coords[i] = i;
    std::shuffle(coords.begin(), coords.end(), rng);
    const auto probes =
        std::min<std::size_t>(coords.size(),
                              static_cast<std::size_t>(coords_per_tensor));

    auto data = tensor.mutable_data();
    for (std::size_t c = 0; c < probes; ++c) {
      const auto k = coords[c];
      const S saved = data[k];
      data[k] = saved + static_cast<S>(step);
      const double plus = static_cast<double>(loss_fn().item());
      data[k] = saved - static_cast<S>(step);
      const double minus = static_cast<double>(loss_fn().item());
      data[k] = saved;

      const double numeric = (plus - minus) / (2.0 * step);
      const double exact = static_cast<double>(analytic[pi][k]);
      const double scale = std::max(std::abs(exact), std::abs(numeric));
      const double err = scale < 1e-6 ? std::abs(exact - numeric)
                                      : std::abs(exact - numeric) / scale;
      entry.max_rel_err = std::max(entry.max_rel_err, err);
      ++entry.checked;
    }
    report.push_back(std::move(entry));
  }
  return report;
}

inline double max_gradcheck_error(const std::vector<GradCheckEntry>& report) {
  double worst = 0.0;
  for (const auto& e : report) worst = std::max(worst, e.max_rel_err);
  return worst;
}

}  // namespace lcgn
