#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lcgn/errors.hpp"
#include "lcgn/scene.hpp"

namespace lcgn {

enum class Direction { left, right, front, behind };

std::string to_string(Direction d);
Direction direction_from_string(const std::string& s);

// A chain of primitive set operations evaluated bottom-up from `all`.
// Relations are strict coordinate comparisons: "A left of B" iff A.x < B.x,
// "A in front of B" iff A.y > B.y.
struct ProgramNode {
  enum class Op {
    all,      // every object in the scene
    filter,   // keep objects with attr == value
    relate,   // objects in `dir` relation to the unique input object
    same,     // other objects sharing `attr` with the unique input object
    unique,   // the single element of a singleton set
    count,    // set size
    exist,    // yes/no set non-emptiness
    query,    // attribute value of the unique input object
    ordinal,  // k-th object (1-based) ordered from `dir`
  };

  Op op = Op::all;
  std::string attr;   // filter / same / query
  std::string value;  // filter
  Direction dir = Direction::left;  // relate / ordinal
  int k = 0;          // ordinal, 1-based
  std::shared_ptr<const ProgramNode> in;  // absent only for `all`

  bool contains_relation() const;  // relate / same / ordinal anywhere
  int relation_count() const;
};

using ProgramPtr = std::shared_ptr<const ProgramNode>;

ProgramPtr prog_all();
ProgramPtr prog_filter(std::string attr, std::string value, ProgramPtr in);
ProgramPtr prog_relate(Direction dir, ProgramPtr in);
ProgramPtr prog_same(std::string attr, ProgramPtr in);
ProgramPtr prog_unique(ProgramPtr in);
ProgramPtr prog_count(ProgramPtr in);
ProgramPtr prog_exist(ProgramPtr in);
ProgramPtr prog_query(std::string attr, ProgramPtr in);
ProgramPtr prog_ordinal(int k, Direction dir, ProgramPtr in);

// Evaluation result: either an object set, a single object, or a final
// answer (count / yes-no / attribute value).
struct EvalResult {
  enum class Kind { set, object, count, boolean, value };
  Kind kind = Kind::set;
  std::vector<std::int64_t> set;  // object indices, ascending
  std::int64_t object = -1;
  std::int64_t count = 0;
  bool truth = false;
  std::string value;

  // Final answers as the stored answer string ("yes"/"no", a number, or an
  // attribute value); object results yield their index via target().
  std::string answer() const;
  std::int64_t target() const;
};

// Exhaustive set-semantics evaluation. Throws EvalError when `unique` (or a
// relate/same/query reference) receives a non-singleton set or an ordinal
// index is out of range; generation must prevent these.
EvalResult oracle_eval(const ProgramNode& program, const Scene& scene);

std::string attribute_of(const SceneObject& obj, const std::string& attr);

}  // namespace lcgn
