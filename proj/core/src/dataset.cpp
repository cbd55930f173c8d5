#include "lcgn/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <json.hpp>

#include "lcgn/errors.hpp"

namespace lcgn {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json scene_to_json(const Scene& scene) {
  ordered_json objs = ordered_json::array();
  for (const auto& o : scene.objects) {
    ordered_json j;
    j["shape"] = attribute_of(o, "shape");
    j["color"] = attribute_of(o, "color");
    j["size"] = attribute_of(o, "size");
    j["material"] = attribute_of(o, "material");
    j["x"] = o.x;
    j["y"] = o.y;
    j["w"] = o.box_side();
    j["h"] = o.box_side();
    objs.push_back(std::move(j));
  }
  ordered_json j;
  j["id"] = scene.id;
  j["objects"] = std::move(objs);
  return j;
}

std::int8_t index_in(const std::vector<std::string>& table,
                     const std::string& value, const char* what) {
  for (std::size_t i = 0; i < table.size(); ++i)
    if (table[i] == value) return static_cast<std::int8_t>(i);
  throw std::runtime_error(std::string("unknown ") + what + ": " + value);
}

Scene scene_from_json(const ordered_json& j) {
  Scene scene;
  scene.id = j.at("id").get<std::int64_t>();
  for (const auto& oj : j.at("objects")) {
    SceneObject o;
    o.shape = index_in(attr::kShapes, oj.at("shape"), "shape");
    o.color = index_in(attr::kColors, oj.at("color"), "color");
    o.size = index_in(attr::kSizes, oj.at("size"), "size");
    o.material = index_in(attr::kMaterials, oj.at("material"), "material");
    o.x = oj.at("x").get<float>();
    o.y = oj.at("y").get<float>();
    scene.objects.push_back(o);
  }
  return scene;
}

ordered_json program_node_to_json(const ProgramNode& p) {
  ordered_json j;
  switch (p.op) {
    case ProgramNode::Op::all: j["op"] = "all"; break;
    case ProgramNode::Op::filter:
      j["op"] = "filter";
      j["attr"] = p.attr;
      j["value"] = p.value;
      break;
    case ProgramNode::Op::relate:
      j["op"] = "relate";
      j["dir"] = to_string(p.dir);
      break;
    case ProgramNode::Op::same:
      j["op"] = "same";
      j["attr"] = p.attr;
      break;
    case ProgramNode::Op::unique: j["op"] = "unique"; break;
    case ProgramNode::Op::count: j["op"] = "count"; break;
    case ProgramNode::Op::exist: j["op"] = "exist"; break;
    case ProgramNode::Op::query:
      j["op"] = "query";
      j["attr"] = p.attr;
      break;
    case ProgramNode::Op::ordinal:
      j["op"] = "ordinal";
      j["k"] = p.k;
      j["dir"] = to_string(p.dir);
      break;
  }
  if (p.in) j["in"] = program_node_to_json(*p.in);
  return j;
}

ProgramPtr program_node_from_json(const ordered_json& j) {
  const std::string op = j.at("op");
  ProgramPtr in;
  if (j.contains("in")) in = program_node_from_json(j.at("in"));
  if (op == "all") return prog_all();
  if (op == "filter") return prog_filter(j.at("attr"), j.at("value"), in);
  if (op == "relate")
    return prog_relate(direction_from_string(j.at("dir")), in);
  if (op == "same") return prog_same(j.at("attr"), in);
  if (op == "unique") return prog_unique(in);
  if (op == "count") return prog_count(in);
  if (op == "exist") return prog_exist(in);
  if (op == "query") return prog_query(j.at("attr"), in);
  if (op == "ordinal")
    return prog_ordinal(j.at("k").get<int>(),
                        direction_from_string(j.at("dir")), in);
  throw std::runtime_error("unknown program op: " + op);
}

}  // namespace

void write_scenes(const std::string& path, const std::vector<Scene>& scenes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& s : scenes) out << scene_to_json(s).dump() << '\n';
}

std::vector<Scene> load_scenes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<Scene> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(scene_from_json(ordered_json::parse(line)));
  }
  return out;
}

void write_samples(const std::string& path,
                   const std::vector<TaskSample>& samples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& s : samples) {
    ordered_json j;
    j["scene_id"] = s.scene_id;
    j["task"] = to_string(s.task);
    j["text"] = s.text;
    j["program"] = program_node_to_json(*s.program);
    if (s.task == TaskKind::vqa) {
      j["answer"] = s.answer;
    } else {
      j["target_index"] = s.target_index;
      j["box"] = std::vector<float>(s.box.begin(), s.box.end());
    }
    j["requires_relation"] = s.requires_relation;
    out << j.dump() << '\n';
  }
}

std::vector<TaskSample> load_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<TaskSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = ordered_json::parse(line);
    TaskSample s;
    s.scene_id = j.at("scene_id").get<std::int64_t>();
    s.task = task_from_string(j.at("task"));
    s.text = j.at("text");
    s.program = program_node_from_json(j.at("program"));
    if (s.task == TaskKind::vqa) {
      s.answer = j.at("answer");
    } else {
      s.target_index = j.at("target_index").get<std::int64_t>();
      const auto box = j.at("box").get<std::vector<float>>();
      if (box.size() != 4) throw std::runtime_error("bad box in " + path);
      std::copy(box.begin(), box.end(), s.box.begin());
    }
    s.requires_relation = j.at("requires_relation").get<bool>();
    out.push_back(std::move(s));
  }
  return out;
}

std::string program_to_json(const ProgramNode& program) {
  return program_node_to_json(program).dump();
}

ProgramPtr program_from_json(const std::string& json_text) {
  return program_node_from_json(ordered_json::parse(json_text));
}

std::vector<std::string> build_answer_vocab(
    const std::vector<TaskSample>& train_samples) {
  std::set<std::string> seen;
  for (const auto& s : train_samples)
    if (s.task == TaskKind::vqa) seen.insert(s.answer);
  return {seen.begin(), seen.end()};
}

void save_answer_vocab(const std::string& path,
                       const std::vector<std::string>& answers) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& a : answers) out << a << '\n';
}

std::vector<std::string> load_answer_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

Vocabulary build_vocab(const std::vector<TaskSample>& train_samples) {
  std::set<std::string> words;
  for (const auto& s : train_samples)
    for (const auto& w : tokenize_words(s.text)) words.insert(w);
  Vocabulary v;
  for (const auto& w : words) v.add(w);
  return v;
}

const Scene& Dataset::scene_by_id(std::int64_t id) const {
  if (id < 0 || id >= static_cast<std::int64_t>(scenes.size()) ||
      scenes[static_cast<std::size_t>(id)].id != id)
    throw ContractError("scene id " + std::to_string(id) +
                        " not present in the dataset");
  return scenes[static_cast<std::size_t>(id)];
}

std::int64_t Dataset::label_of(const std::string& answer) const {
  auto it = answer_index.find(answer);
  if (it == answer_index.end())
    throw ContractError("answer not in the training vocabulary: " + answer);
  return it->second;
}

void generate_dataset(const GenConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto total_scenes = cfg.train_scenes + cfg.val_scenes;
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(total_scenes));
  for (std::int64_t id = 0; id < total_scenes; ++id)
    scenes.push_back(generate_scene(cfg.seed, id));

  SampleGenerator gen(cfg.task, cfg.templates, cfg.seed);
  std::vector<TaskSample> train, val;
  for (std::int64_t id = 0; id < cfg.train_scenes; ++id)
    for (auto& s : gen.generate_for_scene(
             scenes[static_cast<std::size_t>(id)], cfg.questions_per_scene))
      train.push_back(std::move(s));
  for (std::int64_t id = cfg.train_scenes; id < total_scenes; ++id)
    for (auto& s : gen.generate_for_scene(
             scenes[static_cast<std::size_t>(id)],
             cfg.val_questions_per_scene))
      val.push_back(std::move(s));

  const auto answers = build_answer_vocab(train);
  if (cfg.task == TaskKind::vqa) {
    const std::set<std::string> known(answers.begin(), answers.end());
    std::vector<TaskSample> kept;
    for (auto& s : val) {
      if (known.count(s.answer)) {
        kept.push_back(std::move(s));
      } else {
        std::cerr << "warning: dropping validation sample with unseen answer "
                  << s.answer << '\n';
      }
    }
    val = std::move(kept);
  }

  write_scenes(out_dir + "/scenes.jsonl", scenes);
  write_samples(out_dir + "/samples.train.jsonl", train);
  write_samples(out_dir + "/samples.val.jsonl", val);
  build_vocab(train).save(out_dir + "/vocab.txt");
  save_answer_vocab(out_dir + "/answers.txt", answers);
}

Dataset load_dataset(const std::string& dir) {
  Dataset d;
  d.scenes = load_scenes(dir + "/scenes.jsonl");
  d.train = load_samples(dir + "/samples.train.jsonl");
  d.val = load_samples(dir + "/samples.val.jsonl");
  d.vocab = Vocabulary::load(dir + "/vocab.txt");
  d.answers = load_answer_vocab(dir + "/answers.txt");
  for (std::size_t i = 0; i < d.answers.size(); ++i)
    d.answer_index[d.answers[i]] = static_cast<std::int64_t>(i);
  if (!d.train.empty()) d.task = d.train[0].task;
  // Scenes must be addressable by id.
  std::sort(d.scenes.begin(), d.scenes.end(),
            [](const Scene& a, const Scene& b) { return a.id < b.id; });
  return d;
}

}  // namespace lcgn
