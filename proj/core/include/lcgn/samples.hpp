#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "lcgn/program.hpp"
#include "lcgn/scene.hpp"

namespace lcgn {

enum class TaskKind { vqa, ref };

std::string to_string(TaskKind t);
TaskKind task_from_string(const std::string& s);

enum class TemplateSet { all, twohop };

std::string to_string(TemplateSet t);
TemplateSet template_set_from_string(const std::string& s);

struct TaskSample {
  std::int64_t scene_id = 0;
  TaskKind task = TaskKind::vqa;
  std::string text;
  ProgramPtr program;
  std::string answer;                   // VQA
  std::int64_t target_index = -1;       // REF
  std::array<float, 4> box{0, 0, 0, 0}; // REF ground-truth box
  bool requires_relation = false;
  std::string family;  // template family id; not serialized
};

// Instantiates question / expression templates against scenes. Keeps
// dataset-wide answer counts per template family so no answer string can
// exceed half of its family, and steers the family mix so at least 40% of
// emitted VQA samples need a relation.
class SampleGenerator {
 public:
  SampleGenerator(TaskKind task, TemplateSet set, std::uint64_t seed);

  // Up to `count` samples; scenes with no valid instantiation for a draw
  // are skipped with a warning on stderr.
  std::vector<TaskSample> generate_for_scene(const Scene& scene, int count);

 private:
  friend struct TemplateContext;
  bool balanced_accept(const std::string& family, const std::string& answer);

  TaskKind task_;
  TemplateSet set_;
  std::uint64_t seed_;
  std::int64_t emitted_ = 0;
  std::int64_t emitted_relational_ = 0;
  std::map<std::string, std::int64_t> family_totals_;
  std::map<std::pair<std::string, std::string>, std::int64_t> answer_counts_;
};

// One-shot form of the generator for a single scene.
std::vector<TaskSample> generate_samples(const Scene& scene, TaskKind task,
                                         TemplateSet set, int count,
                                         std::uint64_t seed);

}  // namespace lcgn
