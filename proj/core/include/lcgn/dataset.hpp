#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lcgn/samples.hpp"
#include "lcgn/scene.hpp"
#include "lcgn/vocab.hpp"

namespace lcgn {

// scenes.jsonl:  {"id", "objects":[{"shape","color","size","material",
//                 "x","y","w","h"}]}
// samples.jsonl: {"scene_id","task","text","program",
//                 "answer"|"target_index"+"box","requires_relation"}
// Both line-delimited UTF-8 with stable key order.

void write_scenes(const std::string& path, const std::vector<Scene>& scenes);
std::vector<Scene> load_scenes(const std::string& path);

void write_samples(const std::string& path,
                   const std::vector<TaskSample>& samples);
std::vector<TaskSample> load_samples(const std::string& path);

std::string program_to_json(const ProgramNode& program);
ProgramPtr program_from_json(const std::string& json_text);

// Answer vocabulary: the distinct training-set answers, sorted
// lexicographically, one per line on disk.
std::vector<std::string> build_answer_vocab(
    const std::vector<TaskSample>& train_samples);
void save_answer_vocab(const std::string& path,
                       const std::vector<std::string>& answers);
std::vector<std::string> load_answer_vocab(const std::string& path);

// Question vocabulary from the training texts (PAD/UNK first, the rest
// sorted).
Vocabulary build_vocab(const std::vector<TaskSample>& train_samples);

// An on-disk dataset directory: scenes.jsonl, samples.train.jsonl,
// samples.val.jsonl, vocab.txt, answers.txt.
struct Dataset {
  std::vector<Scene> scenes;  // indexed by scene id
  std::vector<TaskSample> train;
  std::vector<TaskSample> val;
  Vocabulary vocab;
  std::vector<std::string> answers;
  std::map<std::string, std::int64_t> answer_index;
  TaskKind task = TaskKind::vqa;

  const Scene& scene_by_id(std::int64_t id) const;
  std::int64_t label_of(const std::string& answer) const;
};

Dataset load_dataset(const std::string& dir);

struct GenConfig {
  TaskKind task = TaskKind::vqa;
  TemplateSet templates = TemplateSet::all;
  std::int64_t train_scenes = 10000;
  std::int64_t val_scenes = 400;
  int questions_per_scene = 2;      // per training scene; many scenes with
                                    // few questions each resist scene
                                    // memorization
  int val_questions_per_scene = 10; // the edge-dependence analysis wants
                                    // many questions on one scene
  std::uint64_t seed = 0;
};

// Builds a full dataset directory: scenes for both splits, samples generated
// per scene (train scenes never appear in the validation split), the token
// vocabulary and the answer vocabulary from the training split. Validation
// samples whose answer never occurs in training are dropped with a warning.
void generate_dataset(const GenConfig& cfg, const std::string& out_dir);

}  // namespace lcgn
