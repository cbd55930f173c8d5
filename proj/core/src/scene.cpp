#include "lcgn/scene.hpp"

#include <cmath>
#include <random>

#include "lcgn/errors.hpp"

namespace lcgn {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t stream_key(std::uint64_t seed, std::int64_t id,
                         std::uint64_t substream) {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ static_cast<std::uint64_t>(id));
  return splitmix64(k ^ (substream * 0xd1342543de82ef95ULL));
}

}  // namespace

Scene generate_scene_substream(std::uint64_t dataset_seed, std::int64_t id,
                               std::uint64_t substream, int max_attempts) {
  std::mt19937_64 rng(stream_key(dataset_seed, id, substream));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Scene scene;
  scene.id = id;
  // Mostly compact scenes, with the full 2..10 range still present.
  const int count =
      unit(rng) < 0.85
          ? 2 + static_cast<int>(rng() % 5)   // 2..6
          : 7 + static_cast<int>(rng() % 4);  // 7..10
  int attempts = 0;
  for (int k = 0; k < count; ++k) {
    SceneObject obj;
    obj.shape = static_cast<std::int8_t>(rng() % attr::kShapes.size());
    obj.color = static_cast<std::int8_t>(rng() % attr::kColors.size());
    obj.size = static_cast<std::int8_t>(rng() % attr::kSizes.size());
    obj.material = static_cast<std::int8_t>(rng() % attr::kMaterials.size());
    const float half = obj.box_side() / 2.0f;
    while (true) {
      if (++attempts > max_attempts)
        throw GenerationError("scene " + std::to_string(id) +
                              ": placement failed after " +
                              std::to_string(max_attempts) + " attempts");
      // Keep the whole box inside the unit square.
      obj.x = static_cast<float>(half + unit(rng) * (1.0 - 2.0 * half));
      obj.y = static_cast<float>(half + unit(rng) * (1.0 - 2.0 * half));
      bool ok = true;
      for (const auto& other : scene.objects) {
        const float dx = obj.x - other.x, dy = obj.y - other.y;
        // Euclidean separation, plus a per-axis gap so every spatial
        // relation is decisively ordered.
        if (std::sqrt(dx * dx + dy * dy) < attr::kMinSeparation ||
            std::abs(dx) < attr::kMinAxisGap ||
            std::abs(dy) < attr::kMinAxisGap) {
          ok = false;
          break;
        }
      }
      if (ok) break;
    }
    scene.objects.push_back(obj);
  }
  return scene;
}

Scene generate_scene(std::uint64_t dataset_seed, std::int64_t id) {
  for (std::uint64_t substream = 0;; ++substream) {
    try {
      return generate_scene_substream(dataset_seed, id, substream, 1000);
    } catch (const GenerationError&) {
      // retry with the next substream
    }
  }
}

FeatureMode feature_mode_from_string(const std::string& s) {
  if (s == "symbolic") return FeatureMode::symbolic;
  if (s == "grid") return FeatureMode::grid;
  throw ContractError("unknown feature mode: " + s);
}

void positional_encoding(std::int64_t pos, float* out) {
  for (std::int64_t i = 0; i < kPosEncPerAxis / 2; ++i) {
    const double rate =
        std::pow(10000.0, 2.0 * static_cast<double>(i) /
                              static_cast<double>(kPosEncPerAxis));
    out[2 * i] = static_cast<float>(std::sin(static_cast<double>(pos) / rate));
    out[2 * i + 1] =
        static_cast<float>(std::cos(static_cast<double>(pos) / rate));
  }
}

std::int64_t grid_cell_of(float x, float y, int grid_g) {
  auto clamp_cell = [grid_g](float v) {
    auto c = static_cast<std::int64_t>(v * static_cast<float>(grid_g));
    return std::min<std::int64_t>(std::max<std::int64_t>(c, 0), grid_g - 1);
  };
  return clamp_cell(y) * grid_g + clamp_cell(x);
}

namespace {

void write_onehot(const SceneObject& obj, float* out) {
  out[obj.shape] = 1.0f;
  out[3 + obj.color] = 1.0f;
  out[9 + obj.size] = 1.0f;
  out[11 + obj.material] = 1.0f;
}

}  // namespace

SceneFeatures featurize(const Scene& scene, FeatureMode mode, int grid_g) {
  SceneFeatures feats;
  feats.d_feat = feature_width(mode);
  if (mode == FeatureMode::symbolic) {
    feats.n = static_cast<std::int64_t>(scene.objects.size());
    feats.x.assign(static_cast<std::size_t>(feats.n * feats.d_feat), 0.0f);
    for (std::int64_t i = 0; i < feats.n; ++i) {
      const auto& obj = scene.objects[static_cast<std::size_t>(i)];
      float* row = feats.x.data() + i * feats.d_feat;
      write_onehot(obj, row);
      const auto box = obj.box();
      for (int k = 0; k < 4; ++k) row[attr::kOneHotWidth + k] = box[k];
      feats.boxes.push_back(box);
    }
    return feats;
  }

  if (grid_g < 2) throw ContractError("grid mode requires G >= 2");
  feats.n = static_cast<std::int64_t>(grid_g) * grid_g;
  feats.x.assign(static_cast<std::size_t>(feats.n * feats.d_feat), 0.0f);
  const float cell = 1.0f / static_cast<float>(grid_g);
  for (std::int64_t row_i = 0; row_i < grid_g; ++row_i)
    for (std::int64_t col = 0; col < grid_g; ++col) {
      const std::int64_t c = row_i * grid_g + col;
      float* row = feats.x.data() + c * feats.d_feat;
      positional_encoding(row_i, row + attr::kOneHotWidth);
      positional_encoding(col, row + attr::kOneHotWidth + kPosEncPerAxis);
      feats.boxes.push_back({(static_cast<float>(col) + 0.5f) * cell,
                             (static_cast<float>(row_i) + 0.5f) * cell, cell,
                             cell});
    }
  for (const auto& obj : scene.objects) {
    const std::int64_t c = grid_cell_of(obj.x, obj.y, grid_g);
    float* row = feats.x.data() + c * feats.d_feat;
    float onehot[attr::kOneHotWidth] = {0};
    write_onehot(obj, onehot);
    for (std::int64_t k = 0; k < attr::kOneHotWidth; ++k) row[k] += onehot[k];
  }
  return feats;
}

}  // namespace lcgn
