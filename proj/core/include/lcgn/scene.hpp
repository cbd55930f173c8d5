#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace lcgn {

namespace attr {

inline const std::vector<std::string> kShapes = {"cube", "sphere", "cylinder"};
inline const std::vector<std::string> kColors = {"red",    "green", "blue",
                                                 "yellow", "gray",  "purple"};
inline const std::vector<std::string> kSizes = {"small", "large"};
inline const std::vector<std::string> kMaterials = {"rubber", "metal"};

// One-hot block width: shapes + colors + sizes + materials.
inline constexpr std::int64_t kOneHotWidth = 3 + 6 + 2 + 2;

constexpr float kSmallBox = 0.08f;
constexpr float kLargeBox = 0.14f;
constexpr float kMinSeparation = 0.1f;
constexpr float kMinAxisGap = 0.07f;

}  // namespace attr

struct SceneObject {
  std::int8_t shape = 0;     // index into attr::kShapes
  std::int8_t color = 0;     // index into attr::kColors
  std::int8_t size = 0;      // index into attr::kSizes
  std::int8_t material = 0;  // index into attr::kMaterials
  float x = 0, y = 0;        // center in the unit square

  float box_side() const {
    return size == 0 ? attr::kSmallBox : attr::kLargeBox;
  }
  // (cx, cy, w, h)
  std::array<float, 4> box() const { return {x, y, box_side(), box_side()}; }
};

struct Scene {
  std::int64_t id = 0;
  std::vector<SceneObject> objects;  // 2..10
};

inline constexpr int kMinObjects = 2;
inline constexpr int kMaxObjects = 10;

// Deterministic function of (dataset_seed, id). Rejection-samples placements
// until all pairwise centers are >= 0.1 apart (at most 1000 draws), then
// retries on the next substream if placement fails.
Scene generate_scene(std::uint64_t dataset_seed, std::int64_t id);

// Single-substream variant that raises GenerationError after max_attempts
// rejected placements.
Scene generate_scene_substream(std::uint64_t dataset_seed, std::int64_t id,
                               std::uint64_t substream, int max_attempts);

enum class FeatureMode { symbolic, grid };

inline std::string to_string(FeatureMode m) {
  return m == FeatureMode::symbolic ? "symbolic" : "grid";
}

FeatureMode feature_mode_from_string(const std::string& s);

// Per-axis width of the sinusoidal positional encoding used in grid mode.
inline constexpr std::int64_t kPosEncPerAxis = 8;

inline std::int64_t feature_width(FeatureMode mode) {
  return mode == FeatureMode::symbolic ? attr::kOneHotWidth + 4
                                       : attr::kOneHotWidth + 2 * kPosEncPerAxis;
}

struct SceneFeatures {
  std::int64_t n = 0;            // entity count (objects or grid cells)
  std::int64_t d_feat = 0;
  std::vector<float> x;          // n * d_feat, row-major
  std::vector<std::array<float, 4>> boxes;  // per entity (cx, cy, w, h)
};

// Symbolic mode: one entity per object, one-hot attribute block plus box
// coordinates. Grid mode: one entity per cell, summed attribute one-hots of
// objects whose centers fall in the cell, plus the sinusoidal positional
// encoding of (row, col); boxes are the cell geometry.
SceneFeatures featurize(const Scene& scene, FeatureMode mode, int grid_g = 8);

// sin/cos pairs over kPosEncPerAxis dims for one coordinate.
void positional_encoding(std::int64_t pos, float* out);

// Index of the grid cell containing (x, y).
std::int64_t grid_cell_of(float x, float y, int grid_g);

}  // namespace lcgn
