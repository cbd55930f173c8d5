#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lcgn/dataset.hpp"
#include "lcgn/gradcheck.hpp"
#include "lcgn/lcgn.hpp"
#include "lcgn/trainer.hpp"

namespace lcgn {

struct TraceDump {
  std::int64_t sample_id = 0;  // position in the split
  std::int64_t scene_id = 0;
  EdgeTrace trace;
};

// Forward passes over a split recording per-sample edge traces.
std::vector<TraceDump> collect_traces(const ModelParams<float>& params,
                                      const ModelConfig& model_config,
                                      const TrainConfig& cfg,
                                      const Dataset& data,
                                      const std::vector<TaskSample>& split);

// One record per sample: {"sample_id","N","T","w": nested arrays}.
void write_traces(const std::string& path,
                  const std::vector<TraceDump>& dumps);

// Groups traces by scene and averages the per-scene unique-argmax-sender
// count over scenes with at least two questions.
struct EdgeDependence {
  double mean_unique_argmax = 0;
  std::int64_t scenes = 0;
};

EdgeDependence edge_dependence(const std::vector<TraceDump>& dumps);

// Gradient check of the complete VQA pipeline at 64-bit on a synthetic
// sample: d-wide model, n entities, s-token text, the given number of
// message-passing rounds.
std::vector<GradCheckEntry> pipeline_gradcheck(std::uint64_t seed,
                                               std::int64_t d = 8,
                                               std::int64_t n = 4,
                                               std::int64_t s = 5,
                                               std::int64_t iterations = 2,
                                               double step = 1e-4,
                                               int coords_per_tensor = 16);

}  // namespace lcgn
