#include "lcgn/samples.hpp"

#include <algorithm>
#include <iostream>

#include "lcgn/errors.hpp"

namespace lcgn {

std::string to_string(TaskKind t) { return t == TaskKind::vqa ? "vqa" : "ref"; }

TaskKind task_from_string(const std::string& s) {
  if (s == "vqa") return TaskKind::vqa;
  if (s == "ref") return TaskKind::ref;
  throw ContractError("unknown task: " + s);
}

std::string to_string(TemplateSet t) {
  return t == TemplateSet::all ? "all" : "twohop";
}

TemplateSet template_set_from_string(const std::string& s) {
  if (s == "all") return TemplateSet::all;
  if (s == "twohop") return TemplateSet::twohop;
  throw ContractError("unknown template set: " + s);
}

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

const std::vector<std::string> kAttrNames = {"shape", "color", "size",
                                             "material"};

std::string plural(const std::string& noun) { return noun + "s"; }

std::string ordinal_word(int k) {
  static const char* words[] = {"first", "second", "third", "fourth",
                                "fifth", "sixth"};
  if (k < 1 || k > 6) throw ContractError("ordinal word out of range");
  return words[k - 1];
}

std::string relation_phrase(Direction d) {
  switch (d) {
    case Direction::left: return "left of";
    case Direction::right: return "right of";
    case Direction::front: return "in front of";
    case Direction::behind: return "behind";
  }
  return "";
}

std::string from_phrase(Direction d) {
  switch (d) {
    case Direction::left: return "from the left";
    case Direction::right: return "from the right";
    case Direction::front: return "from the front";
    case Direction::behind: return "from the back";
  }
  return "";
}

// A filter chain plus how to say it ("small red cube" / "metal thing").
struct Descriptor {
  ProgramPtr program;                // filter chain over `all`
  std::string text;                  // noun phrase without article
  std::vector<std::string> attrs;    // attribute names used
  std::string noun_plural;
};

// Canonical attribute order for noun phrases.
Descriptor describe(const SceneObject& obj, bool with_size, bool with_color,
                    bool with_material, bool with_shape) {
  Descriptor d;
  d.program = prog_all();
  std::string text;
  auto emit = [&](const std::string& attr, const std::string& value) {
    d.program = prog_filter(attr, value, d.program);
    d.attrs.push_back(attr);
  };
  if (with_size) {
    emit("size", attribute_of(obj, "size"));
    text += attribute_of(obj, "size") + " ";
  }
  if (with_color) {
    emit("color", attribute_of(obj, "color"));
    text += attribute_of(obj, "color") + " ";
  }
  if (with_material) {
    emit("material", attribute_of(obj, "material"));
    text += attribute_of(obj, "material") + " ";
  }
  std::string noun = "thing";
  if (with_shape) {
    emit("shape", attribute_of(obj, "shape"));
    noun = attribute_of(obj, "shape");
  }
  d.text = text + noun;
  d.noun_plural = text + plural(noun);
  return d;
}

struct UniqueRef {
  Descriptor desc;
  std::int64_t index = -1;
};

// Template machinery shared by all families.
struct Ctx {
  const Scene& scene;
  std::mt19937_64& rng;

  std::int64_t n() const {
    return static_cast<std::int64_t>(scene.objects.size());
  }

  int uniform(int lo, int hi) {  // inclusive
    return static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1)) +
           lo;
  }

  const SceneObject& random_object() {
    return scene.objects[static_cast<std::size_t>(uniform(
        0, static_cast<int>(scene.objects.size()) - 1))];
  }

  Direction random_dir() { return static_cast<Direction>(uniform(0, 3)); }

  std::string random_attr() {
    return kAttrNames[static_cast<std::size_t>(uniform(0, 3))];
  }

  std::string random_attr_not(const std::vector<std::string>& used) {
    for (int tries = 0; tries < 16; ++tries) {
      auto a = random_attr();
      if (std::find(used.begin(), used.end(), a) == used.end()) return a;
    }
    return "shape";
  }

  Descriptor random_descriptor(const SceneObject& obj) {
    const int pattern = uniform(0, 5);
    switch (pattern) {
      case 0: return describe(obj, false, true, false, true);   // color shape
      case 1: return describe(obj, true, false, false, true);   // size shape
      case 2: return describe(obj, false, false, true, true);   // material shape
      case 3: return describe(obj, false, true, false, false);  // color thing
      case 4: return describe(obj, true, true, false, true);    // size color shape
      default: return describe(obj, false, false, false, true); // shape
    }
  }

  // A descriptor matching exactly one object in the scene.
  bool unique_ref(UniqueRef& out, int tries = 24) {
    for (int i = 0; i < tries; ++i) {
      const auto& obj = random_object();
      Descriptor d = random_descriptor(obj);
      const auto r = oracle_eval(*d.program, scene);
      if (r.set.size() == 1) {
        out.desc = std::move(d);
        out.index = r.set[0];
        return true;
      }
    }
    return false;
  }

  std::vector<std::int64_t> eval_set(const ProgramPtr& p) {
    const auto r = oracle_eval(*p, scene);
    if (r.kind != EvalResult::Kind::set)
      throw EvalError("expected a set");
    return r.set;
  }
};

struct Draft {
  std::string text;
  ProgramPtr program;
  std::string family;
  bool ok = false;
};

// --- VQA families ----------------------------------------------------------

Draft vqa_exist_attr(Ctx& c) {
  Draft d;
  // Aim for an even yes/no flow: half the drafts describe a real object,
  // half re-roll attributes until nothing in the scene matches.
  SceneObject probe = c.random_object();
  Descriptor desc = c.random_descriptor(probe);
  if (c.uniform(0, 1)) {
    for (int tries = 0; tries < 8; ++tries) {
      probe.color = static_cast<std::int8_t>(c.uniform(0, 5));
      probe.shape = static_cast<std::int8_t>(c.uniform(0, 2));
      probe.size = static_cast<std::int8_t>(c.uniform(0, 1));
      Descriptor redrawn = c.random_descriptor(probe);
      if (oracle_eval(*redrawn.program, c.scene).set.empty()) {
        desc = std::move(redrawn);
        break;
      }
    }
  }
  d.text = "is there a " + desc.text + " ?";
  d.program = prog_exist(desc.program);
  d.family = "vqa.exist_attr";
  d.ok = true;
  return d;
}

Draft vqa_count_attr(Ctx& c) {
  Draft d;
  const auto attr = c.random_attr();
  const auto& obj = c.random_object();
  const auto value = attribute_of(obj, attr);
  const std::string noun =
      attr == "shape" ? plural(value) : value + " things";
  d.text = "how many " + noun + " are there ?";
  d.program = prog_count(prog_filter(attr, value, prog_all()));
  d.family = "vqa.count_attr";
  d.ok = true;
  return d;
}

Draft vqa_query_attr(Ctx& c) {
  Draft d;
  UniqueRef ref;
  if (!c.unique_ref(ref)) return d;
  const auto qattr = c.random_attr_not(ref.desc.attrs);
  d.text = "what " + qattr + " is the " + ref.desc.text + " ?";
  d.program = prog_query(qattr, prog_unique(ref.desc.program));
  d.family = "vqa.query_attr";
  d.ok = true;
  return d;
}

Draft vqa_query_rel(Ctx& c) {
  Draft d;
  for (int i = 0; i < 24; ++i) {
    UniqueRef ref;
    if (!c.unique_ref(ref)) return d;
    const auto dir = c.random_dir();
    auto related = prog_relate(dir, prog_unique(ref.desc.program));
    if (c.eval_set(related).size() != 1) continue;
    const auto qattr = c.random_attr();
    d.text = "what " + qattr + " is the thing " + relation_phrase(dir) +
             " the " + ref.desc.text + " ?";
    d.program = prog_query(qattr, prog_unique(std::move(related)));
    d.family = "vqa.query_rel";
    d.ok = true;
    return d;
  }
  return d;
}

Draft vqa_query_tworel(Ctx& c) {
  Draft d;
  for (int i = 0; i < 24; ++i) {
    UniqueRef ref;
    if (!c.unique_ref(ref)) return d;
    const auto dir = c.random_dir();
    auto related = prog_relate(dir, prog_unique(ref.desc.program));
    const auto set = c.eval_set(related);
    if (set.empty()) continue;
    const int k = c.uniform(1, std::min<int>(3, static_cast<int>(set.size())));
    const auto dir2 = c.random_dir();
    const auto qattr = c.random_attr();
    d.text = "what " + qattr + " is the " + ordinal_word(k) + " thing " +
             from_phrase(dir2) + " that is " + relation_phrase(dir) + " the " +
             ref.desc.text + " ?";
    d.program = prog_query(qattr, prog_ordinal(k, dir2, std::move(related)));
    d.family = "vqa.query_tworel";
    d.ok = true;
    return d;
  }
  return d;
}

Draft vqa_query_relchain(Ctx& c) {
  Draft d;
  for (int i = 0; i < 24; ++i) {
    UniqueRef ref;
    if (!c.unique_ref(ref)) return d;
    const auto dir1 = c.random_dir();
    auto hop1 = prog_relate(dir1, prog_unique(ref.desc.program));
    if (c.eval_set(hop1).size() != 1) continue;
    const auto dir2 = c.random_dir();
    auto hop2 = prog_relate(dir2, prog_unique(std::move(hop1)));
    if (c.eval_set(hop2).size() != 1) continue;
    const auto qattr = c.random_attr();
    d.text = "what " + qattr + " is the thing " + relation_phrase(dir2) +
             " the thing " + relation_phrase(dir1) + " the " + ref.desc.text +
             " ?";
    d.program = prog_query(qattr, prog_unique(std::move(hop2)));
    d.family = "vqa.query_relchain";
    d.ok = true;
    return d;
  }
  return d;
}

Draft vqa_query_same(Ctx& c) {
  Draft d;
  for (int i = 0; i < 24; ++i) {
    UniqueRef ref;
    if (!c.unique_ref(ref)) return d;
    const auto attr = c.random_attr();
    auto same = prog_same(attr, prog_unique(ref.desc.program));
    if (c.eval_set(same).size() != 1) continue;
    const auto qattr = c.random_attr_not({attr});
    d.text = "what " + qattr + " is the other thing that has the same " +
             attr + " as the " + ref.desc.text + " ?";
    d.program = prog_query(qattr, prog_unique(std::move(same)));
    d.family = "vqa.query_same";
    d.ok = true;
    return d;
  }
  return d;
}

Draft vqa_same_count(Ctx& c) {
  Draft d;
  UniqueRef ref;
  if (!c.unique_ref(ref)) return d;
  const auto attr = c.random_attr();
  d.text = "how many other things have the same " + attr + " as the " +
           ref.desc.text + " ?";
  d.program = prog_count(prog_same(attr, prog_unique(ref.desc.program)));
  d.family = "vqa.same_count";
  d.ok = true;
  return d;
}

Draft vqa_exist_rel(Ctx& c) {
  Draft d;
  UniqueRef ref;
  if (!c.unique_ref(ref)) return d;
  const auto dir = c.random_dir();
  const auto& probe = c.random_object();
  Descriptor what = c.random_descriptor(probe);
  d.text = "is there a " + what.text + " " + relation_phrase(dir) + " the " +
           ref.desc.text + " ?";
  // Filters applied to the relate set.
  ProgramPtr chain = prog_relate(dir, prog_unique(ref.desc.program));
  for (const auto& a : what.attrs)
    chain = prog_filter(a, attribute_of(probe, a), chain);
  d.program = prog_exist(std::move(chain));
  d.family = "vqa.exist_rel";
  d.ok = true;
  return d;
}

Draft vqa_count_rel(Ctx& c) {
  Draft d;
  UniqueRef ref;
  if (!c.unique_ref(ref)) return d;
  const auto dir = c.random_dir();
  d.text = "how many things are " + relation_phrase(dir) + " the " +
           ref.desc.text + " ?";
  d.program = prog_count(prog_relate(dir, prog_unique(ref.desc.program)));
  d.family = "vqa.count_rel";
  d.ok = true;
  return d;
}

Draft vqa_query_ordinal(Ctx& c) {
  Draft d;
  const auto dir = c.random_dir();
  const int k = c.uniform(1, std::min<int>(4, static_cast<int>(c.n())));
  const auto qattr = c.random_attr();
  d.text = "what " + qattr + " is the " + ordinal_word(k) + " thing " +
           from_phrase(dir) + " ?";
  d.program = prog_query(qattr, prog_ordinal(k, dir, prog_all()));
  d.family = "vqa.query_ordinal";
  d.ok = true;
  return d;
}

Draft vqa_same_exist(Ctx& c) {
  Draft d;
  UniqueRef ref;
  if (!c.unique_ref(ref)) return d;
  const auto attr = c.random_attr();
  d.text = "is there anything else that has the same " + attr + " as the " +
           ref.desc.text + " ?";
  d.program = prog_exist(prog_same(attr, prog_unique(ref.desc.program)));
  d.family = "vqa.same_exist";
  d.ok = true;
  return d;
}

// --- REF families -----------------------------------------------------------

Draft ref_unique_attr(Ctx& c) {
  Draft d;
  UniqueRef ref;
  if (!c.unique_ref(ref)) return d;
  d.text = "the " + ref.desc.text;
  d.program = prog_unique(ref.desc.program);
  d.family = "ref.unique_attr";
  d.ok = true;
  return d;
}

Draft ref_ordinal(Ctx& c) {
  Draft d;
  for (int i = 0; i < 24; ++i) {
    const auto dir = c.random_dir();
    ProgramPtr base = prog_all();
    std::string noun = "thing";
    if (c.uniform(0, 1)) {
      const auto& obj = c.random_object();
      const auto attr = c.uniform(0, 1) ? "shape" : "color";
      const auto value = attribute_of(obj, attr);
      base = prog_filter(attr, value, base);
      noun = attr == std::string("shape") ? value : value + " thing";
    }
    const auto set = c.eval_set(base);
    if (set.empty()) continue;
    const int k = c.uniform(1, std::min<int>(4, static_cast<int>(set.size())));
    d.text = "the " + ordinal_word(k) + " " + noun + " " + from_phrase(dir);
    d.program = prog_ordinal(k, dir, std::move(base));
    d.family = "ref.ordinal";
    d.ok = true;
    return d;
  }
  return d;
}

Draft ref_rel_unique(Ctx& c) {
  Draft d;
  for (int i = 0; i < 24; ++i) {
    UniqueRef ref;
    if (!c.unique_ref(ref)) return d;
    const auto dir = c.random_dir();
    auto related = prog_relate(dir, prog_unique(ref.desc.program));
    if (c.eval_set(related).size() != 1) continue;
    d.text = "the thing " + relation_phrase(dir) + " the " + ref.desc.text;
    d.program = prog_unique(std::move(related));
    d.family = "ref.rel_unique";
    d.ok = true;
    return d;
  }
  return d;
}

Draft ref_same_unique(Ctx& c) {
  Draft d;
  for (int i = 0; i < 24; ++i) {
    UniqueRef ref;
    if (!c.unique_ref(ref)) return d;
    const auto attr = c.random_attr();
    auto same = prog_same(attr, prog_unique(ref.desc.program));
    if (c.eval_set(same).size() != 1) continue;
    d.text = "the other thing with the same " + attr + " as the " +
             ref.desc.text;
    d.program = prog_unique(std::move(same));
    d.family = "ref.same_unique";
    d.ok = true;
    return d;
  }
  return d;
}

Draft ref_tworel(Ctx& c) {
  Draft d;
  for (int i = 0; i < 24; ++i) {
    UniqueRef ref;
    if (!c.unique_ref(ref)) return d;
    const auto dir = c.random_dir();
    auto related = prog_relate(dir, prog_unique(ref.desc.program));
    const auto set = c.eval_set(related);
    if (set.empty()) continue;
    const int k = c.uniform(1, std::min<int>(3, static_cast<int>(set.size())));
    const auto dir2 = c.random_dir();
    d.text = "the " + ordinal_word(k) + " thing " + from_phrase(dir2) +
             " that is " + relation_phrase(dir) + " the " + ref.desc.text;
    d.program = prog_ordinal(k, dir2, std::move(related));
    d.family = "ref.tworel";
    d.ok = true;
    return d;
  }
  return d;
}

using TemplateFn = Draft (*)(Ctx&);

struct WeightedTemplate {
  TemplateFn fn;
  double weight;
  bool relational;
};

const std::vector<WeightedTemplate>& vqa_templates(TemplateSet set) {
  static const std::vector<WeightedTemplate> all = {
      {vqa_exist_attr, 0.10, false},   {vqa_count_attr, 0.07, false},
      {vqa_query_attr, 0.22, false},   {vqa_query_rel, 0.08, true},
      {vqa_query_tworel, 0.07, true},  {vqa_query_relchain, 0.01, true},
      {vqa_query_same, 0.16, true},    {vqa_same_exist, 0.09, true},
      {vqa_same_count, 0.06, true},    {vqa_exist_rel, 0.05, true},
      {vqa_count_rel, 0.02, true},     {vqa_query_ordinal, 0.07, true},
  };
  static const std::vector<WeightedTemplate> twohop = {
      {vqa_query_tworel, 0.85, true},
      {vqa_query_relchain, 0.15, true},
  };
  return set == TemplateSet::all ? all : twohop;
}

const std::vector<WeightedTemplate>& ref_templates(TemplateSet set) {
  static const std::vector<WeightedTemplate> all = {
      {ref_unique_attr, 0.30, false}, {ref_ordinal, 0.20, true},
      {ref_rel_unique, 0.15, true},   {ref_same_unique, 0.10, true},
      {ref_tworel, 0.25, true},
  };
  static const std::vector<WeightedTemplate> twohop = {
      {ref_tworel, 1.0, true},
  };
  return set == TemplateSet::all ? all : twohop;
}

}  // namespace

SampleGenerator::SampleGenerator(TaskKind task, TemplateSet set,
                                 std::uint64_t seed)
    : task_(task), set_(set), seed_(seed) {}

bool SampleGenerator::balanced_accept(const std::string& family,
                                      const std::string& answer) {
  const auto total = family_totals_[family];
  const auto hits = answer_counts_[{family, answer}];
  // Cap every answer at half of its family, rounding up so that a family
  // with two answers never deadlocks at the cap.
  if (hits + 1 > (total + 2) / 2) return false;
  family_totals_[family] = total + 1;
  answer_counts_[{family, answer}] = hits + 1;
  return true;
}

std::vector<TaskSample> SampleGenerator::generate_for_scene(const Scene& scene,
                                                            int count) {
  std::mt19937_64 rng(splitmix64(seed_ ^ splitmix64(
                          static_cast<std::uint64_t>(scene.id) + 0x5eed)));
  Ctx ctx{scene, rng};
  const auto& templates =
      task_ == TaskKind::vqa ? vqa_templates(set_) : ref_templates(set_);

  std::vector<TaskSample> out;
  for (int i = 0; i < count; ++i) {
    bool emitted = false;
    for (int attempt = 0; attempt < 64 && !emitted; ++attempt) {
      // Steer toward relational templates whenever the running VQA share
      // drops near the 40% floor.
      const bool force_relational =
          task_ == TaskKind::vqa && emitted_ > 20 &&
          static_cast<double>(emitted_relational_) <
              0.45 * static_cast<double>(emitted_);
      double total_w = 0;
      for (const auto& t : templates)
        if (!force_relational || t.relational) total_w += t.weight;
      double pick = std::uniform_real_distribution<double>(0, total_w)(rng);
      const WeightedTemplate* chosen = &templates.back();
      for (const auto& t : templates) {
        if (force_relational && !t.relational) continue;
        pick -= t.weight;
        if (pick <= 0) {
          chosen = &t;
          break;
        }
      }

      Draft draft = chosen->fn(ctx);
      if (!draft.ok) continue;

      TaskSample sample;
      sample.scene_id = scene.id;
      sample.task = task_;
      sample.text = draft.text;
      sample.program = draft.program;
      sample.family = draft.family;
      sample.requires_relation = draft.program->contains_relation();
      try {
        const auto result = oracle_eval(*draft.program, scene);
        if (task_ == TaskKind::vqa) {
          sample.answer = result.answer();
        } else {
          sample.target_index = result.target();
          sample.box =
              scene.objects[static_cast<std::size_t>(sample.target_index)]
                  .box();
        }
      } catch (const EvalError&) {
        continue;
      }
      const std::string key =
          task_ == TaskKind::vqa ? sample.answer
                                 : std::to_string(sample.target_index % 4);
      if (!balanced_accept(sample.family, key)) continue;

      ++emitted_;
      if (sample.requires_relation) ++emitted_relational_;
      out.push_back(std::move(sample));
      emitted = true;
    }
    if (!emitted)
      std::cerr << "warning: no valid instantiation for scene " << scene.id
                << ", skipping a sample\n";
  }
  return out;
}

std::vector<TaskSample> generate_samples(const Scene& scene, TaskKind task,
                                         TemplateSet set, int count,
                                         std::uint64_t seed) {
  SampleGenerator gen(task, set, seed);
  return gen.generate_for_scene(scene, count);
}

}  // namespace lcgn
