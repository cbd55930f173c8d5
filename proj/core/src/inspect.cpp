#include "lcgn/inspect.hpp"

#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include <json.hpp>

#include "lcgn/model.hpp"

namespace lcgn {

std::vector<TraceDump> collect_traces(const ModelParams<float>& params,
                                      const ModelConfig& model_config,
                                      const TrainConfig& cfg,
                                      const Dataset& data,
                                      const std::vector<TaskSample>& split) {
  const TrainConfig rc = cfg.resolved();
  FeatureCache features(rc.feature_mode, rc.grid_g);
  ForwardOptions opts;
  opts.task = rc.task;
  opts.loss_kind = rc.loss_kind;
  opts.with_loss = false;

  std::vector<TraceDump> out;
  std::vector<std::size_t> order(split.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(rc.batch_size)) {
    const std::size_t end = std::min(
        order.size(), start + static_cast<std::size_t>(rc.batch_size));
    std::vector<std::size_t> idx(
        order.begin() + static_cast<std::ptrdiff_t>(start),
        order.begin() + static_cast<std::ptrdiff_t>(end));
    auto batch = make_batch<float>(data, split, idx, features, data.vocab);
    auto fwd = model_forward(batch, params, model_config, opts);
    auto traces = extract_traces(fwd.lcgn, batch.n_real);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      TraceDump dump;
      dump.sample_id = static_cast<std::int64_t>(idx[b]);
      dump.scene_id = split[idx[b]].scene_id;
      dump.trace = std::move(traces[b]);
      out.push_back(std::move(dump));
    }
  }
  return out;
}

void write_traces(const std::string& path,
                  const std::vector<TraceDump>& dumps) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file " + path);
  for (const auto& d : dumps) {
    nlohmann::ordered_json j;
    j["sample_id"] = d.sample_id;
    j["N"] = d.trace.n;
    j["T"] = d.trace.iterations;
    nlohmann::ordered_json rounds = nlohmann::ordered_json::array();
    for (std::int64_t t = 0; t < d.trace.iterations; ++t) {
      nlohmann::ordered_json rows = nlohmann::ordered_json::array();
      for (std::int64_t i = 0; i < d.trace.n; ++i) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (std::int64_t k = 0; k < d.trace.n; ++k)
          row.push_back(d.trace.at(t, i, k));
        rows.push_back(std::move(row));
      }
      rounds.push_back(std::move(rows));
    }
    j["w"] = std::move(rounds);
    out << j.dump() << '\n';
  }
}

EdgeDependence edge_dependence(const std::vector<TraceDump>& dumps) {
  std::map<std::int64_t, std::vector<EdgeTrace>> by_scene;
  for (const auto& d : dumps) by_scene[d.scene_id].push_back(d.trace);
  EdgeDependence out;
  double total = 0;
  for (const auto& [scene_id, traces] : by_scene) {
    if (traces.size() < 2) continue;
    total += unique_argmax_mean(traces);
    ++out.scenes;
  }
  if (out.scenes == 0)
    throw ContractError("edge_dependence: no scene has two or more traces");
  out.mean_unique_argmax = total / static_cast<double>(out.scenes);
  return out;
}

std::vector<GradCheckEntry> pipeline_gradcheck(std::uint64_t seed,
                                               std::int64_t d, std::int64_t n,
                                               std::int64_t s,
                                               std::int64_t iterations,
                                               double step,
                                               int coords_per_tensor) {
  ModelConfig mc;
  mc.lcgn.d_txt = d;
  mc.lcgn.d_ctx = d;
  mc.lcgn.d_loc = d;
  mc.lcgn.iterations = iterations;
  mc.lcgn.n_max = n;
  mc.vocab_size = 16;
  mc.d_feat = 6;
  mc.d_ans = 5;
  mc.with_vqa_head = true;
  mc.with_ref_head = false;
  auto params = ModelParams<double>::init(mc, seed);

  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Batch<double> batch;
  batch.tokens.push_back({});
  for (std::int64_t k = 0; k < s; ++k)
    batch.tokens[0].push_back(
        2 + static_cast<std::int64_t>(rng() % (16 - 2)));
  std::vector<double> feat(static_cast<std::size_t>(n * mc.d_feat));
  for (auto& v : feat) v = dist(rng);
  batch.x_feat = Tensor<double>({1, n, mc.d_feat}, std::move(feat));
  batch.ent_mask = Tensor<double>::full({1, n}, 1.0);
  batch.n_real = {n};
  batch.labels = {static_cast<std::int64_t>(rng() % 5)};
  batch.gt_offsets = Tensor<double>::zeros({1, 4});
  batch.relational = {false};

  ForwardOptions opts;
  opts.task = TaskKind::vqa;
  opts.loss_kind = LossKind::softmax;

  auto loss_fn = [&]() { return model_forward(batch, params, mc, opts).loss; };
  return check_gradients<double>(loss_fn, params.named(), step,
                                 coords_per_tensor, seed + 2);
}

}  // namespace lcgn
