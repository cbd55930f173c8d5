#include "lcgn/program.hpp"

#include <algorithm>

#include "lcgn/errors.hpp"

namespace lcgn {

std::string to_string(Direction d) {
  switch (d) {
    case Direction::left: return "left";
    case Direction::right: return "right";
    case Direction::front: return "front";
    case Direction::behind: return "behind";
  }
  return "left";
}

Direction direction_from_string(const std::string& s) {
  if (s == "left") return Direction::left;
  if (s == "right") return Direction::right;
  if (s == "front") return Direction::front;
  if (s == "behind") return Direction::behind;
  throw ContractError("unknown direction: " + s);
}

bool ProgramNode::contains_relation() const {
  if (op == Op::relate || op == Op::same || op == Op::ordinal) return true;
  return in && in->contains_relation();
}

int ProgramNode::relation_count() const {
  int n = (op == Op::relate || op == Op::same || op == Op::ordinal) ? 1 : 0;
  return n + (in ? in->relation_count() : 0);
}

namespace {

ProgramPtr make(ProgramNode node) {
  return std::make_shared<const ProgramNode>(std::move(node));
}

}  // namespace

ProgramPtr prog_all() { return make({}); }

ProgramPtr prog_filter(std::string attr, std::string value, ProgramPtr in) {
  ProgramNode n;
  n.op = ProgramNode::Op::filter;
  n.attr = std::move(attr);
  n.value = std::move(value);
  n.in = std::move(in);
  return make(std::move(n));
}

ProgramPtr prog_relate(Direction dir, ProgramPtr in) {
  ProgramNode n;
  n.op = ProgramNode::Op::relate;
  n.dir = dir;
  n.in = std::move(in);
  return make(std::move(n));
}

ProgramPtr prog_same(std::string attr, ProgramPtr in) {
  ProgramNode n;
  n.op = ProgramNode::Op::same;
  n.attr = std::move(attr);
  n.in = std::move(in);
  return make(std::move(n));
}

ProgramPtr prog_unique(ProgramPtr in) {
  ProgramNode n;
  n.op = ProgramNode::Op::unique;
  n.in = std::move(in);
  return make(std::move(n));
}

ProgramPtr prog_count(ProgramPtr in) {
  ProgramNode n;
  n.op = ProgramNode::Op::count;
  n.in = std::move(in);
  return make(std::move(n));
}

ProgramPtr prog_exist(ProgramPtr in) {
  ProgramNode n;
  n.op = ProgramNode::Op::exist;
  n.in = std::move(in);
  return make(std::move(n));
}

ProgramPtr prog_query(std::string attr, ProgramPtr in) {
  ProgramNode n;
  n.op = ProgramNode::Op::query;
  n.attr = std::move(attr);
  n.in = std::move(in);
  return make(std::move(n));
}

ProgramPtr prog_ordinal(int k, Direction dir, ProgramPtr in) {
  ProgramNode n;
  n.op = ProgramNode::Op::ordinal;
  n.k = k;
  n.dir = dir;
  n.in = std::move(in);
  return make(std::move(n));
}

std::string attribute_of(const SceneObject& obj, const std::string& attr) {
  if (attr == "shape") return attr::kShapes[static_cast<std::size_t>(obj.shape)];
  if (attr == "color") return attr::kColors[static_cast<std::size_t>(obj.color)];
  if (attr == "size") return attr::kSizes[static_cast<std::size_t>(obj.size)];
  if (attr == "material")
    return attr::kMaterials[static_cast<std::size_t>(obj.material)];
  throw ContractError("unknown attribute: " + attr);
}

std::string EvalResult::answer() const {
  switch (kind) {
    case Kind::count: return std::to_string(count);
    case Kind::boolean: return truth ? "yes" : "no";
    case Kind::value: return value;
    default:
      throw EvalError("program does not produce an answer");
  }
}

std::int64_t EvalResult::target() const {
  if (kind == Kind::object) return object;
  if (kind == Kind::set && set.size() == 1) return set[0];
  throw EvalError("program does not produce a unique target");
}

namespace {

// True when `a` stands in relation `dir` to reference `ref`.
bool related(const SceneObject& a, const SceneObject& ref, Direction dir) {
  switch (dir) {
    case Direction::left: return a.x < ref.x;
    case Direction::right: return a.x > ref.x;
    case Direction::front: return a.y > ref.y;
    case Direction::behind: return a.y < ref.y;
  }
  return false;
}

// Key that is ascending in "how far from `dir`" an object is, so sorting by
// it puts the most-`dir` object first.
double ordinal_key(const SceneObject& obj, Direction dir) {
  switch (dir) {
    case Direction::left: return obj.x;
    case Direction::right: return -obj.x;
    case Direction::front: return -obj.y;
    case Direction::behind: return obj.y;
  }
  return 0;
}

std::int64_t unique_of(const EvalResult& r) {
  if (r.kind == EvalResult::Kind::object) return r.object;
  if (r.kind != EvalResult::Kind::set)
    throw EvalError("expected an object set");
  if (r.set.size() != 1)
    throw EvalError("unique applied to a set of size " +
                    std::to_string(r.set.size()));
  return r.set[0];
}

}  // namespace

EvalResult oracle_eval(const ProgramNode& program, const Scene& scene) {
  EvalResult out;
  if (program.op == ProgramNode::Op::all) {
    out.kind = EvalResult::Kind::set;
    for (std::size_t i = 0; i < scene.objects.size(); ++i)
      out.set.push_back(static_cast<std::int64_t>(i));
    return out;
  }
  if (!program.in) throw EvalError("non-root program node without input");
  const EvalResult in = oracle_eval(*program.in, scene);

  switch (program.op) {
    case ProgramNode::Op::filter: {
      if (in.kind != EvalResult::Kind::set)
        throw EvalError("filter expects a set");
      out.kind = EvalResult::Kind::set;
      for (auto i : in.set)
        if (attribute_of(scene.objects[static_cast<std::size_t>(i)],
                         program.attr) == program.value)
          out.set.push_back(i);
      return out;
    }
    case ProgramNode::Op::relate: {
      const auto ref = unique_of(in);
      out.kind = EvalResult::Kind::set;
      for (std::size_t i = 0; i < scene.objects.size(); ++i)
        if (static_cast<std::int64_t>(i) != ref &&
            related(scene.objects[i],
                    scene.objects[static_cast<std::size_t>(ref)], program.dir))
          out.set.push_back(static_cast<std::int64_t>(i));
      return out;
    }
    case ProgramNode::Op::same: {
      const auto ref = unique_of(in);
      const auto want = attribute_of(
          scene.objects[static_cast<std::size_t>(ref)], program.attr);
      out.kind = EvalResult::Kind::set;
      for (std::size_t i = 0; i < scene.objects.size(); ++i)
        if (static_cast<std::int64_t>(i) != ref &&
            attribute_of(scene.objects[i], program.attr) == want)
          out.set.push_back(static_cast<std::int64_t>(i));
      return out;
    }
    case ProgramNode::Op::unique: {
      out.kind = EvalResult::Kind::object;
      out.object = unique_of(in);
      return out;
    }
    case ProgramNode::Op::count: {
      if (in.kind != EvalResult::Kind::set)
        throw EvalError("count expects a set");
      out.kind = EvalResult::Kind::count;
      out.count = static_cast<std::int64_t>(in.set.size());
      return out;
    }
    case ProgramNode::Op::exist: {
      if (in.kind != EvalResult::Kind::set)
        throw EvalError("exist expects a set");
      out.kind = EvalResult::Kind::boolean;
      out.truth = !in.set.empty();
      return out;
    }
    case ProgramNode::Op::query: {
      const auto ref = unique_of(in);
      out.kind = EvalResult::Kind::value;
      out.value = attribute_of(scene.objects[static_cast<std::size_t>(ref)],
                               program.attr);
      return out;
    }
    case ProgramNode::Op::ordinal: {
      if (in.kind != EvalResult::Kind::set)
        throw EvalError("ordinal expects a set");
      if (program.k < 1 ||
          program.k > static_cast<int>(in.set.size()))
        throw EvalError("ordinal index " + std::to_string(program.k) +
                        " out of range for a set of size " +
                        std::to_string(in.set.size()));
      std::vector<std::int64_t> sorted = in.set;
      std::stable_sort(sorted.begin(), sorted.end(),
                       [&](std::int64_t a, std::int64_t b) {
                         return ordinal_key(
                                    scene.objects[static_cast<std::size_t>(a)],
                                    program.dir) <
                                ordinal_key(
                                    scene.objects[static_cast<std::size_t>(b)],
                                    program.dir);
                       });
      out.kind = EvalResult::Kind::object;
      out.object = sorted[static_cast<std::size_t>(program.k - 1)];
      return out;
    }
    case ProgramNode::Op::all:
      break;
  }
  throw EvalError("unhandled program op");
}

}  // namespace lcgn
