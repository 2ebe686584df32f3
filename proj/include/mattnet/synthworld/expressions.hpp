#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mattnet/rng.hpp"
#include "mattnet/synthworld/world.hpp"

namespace mattnet::synth {

// Expression grammar:
//   subject  := color [size] category [with part]
//   location := on the (left|right|top|bottom) | (first|second) from the (left|right) | in the middle
//   relation := (next to|above|below|left of|right of) the [color] category
//   expr     := subject [location] [relation]

struct SubjectPhrase {
  int category = 0;
  int color = -1;  // -1: not mentioned (anchor phrases only)
  int size = -1;
  int part = -1;
};

enum class LocationClause { left, right, top, bottom, first_left, second_left, first_right, second_right, middle };
enum class Relation { next_to, above, below, left_of, right_of };

struct Semantics {
  SubjectPhrase subject;
  std::optional<LocationClause> location;
  std::optional<Relation> relation;
  SubjectPhrase anchor;  // meaningful only with a relation
};

/// Three-valued truth. Values near a template's decision boundary are
/// `unclear`, and generated expressions must avoid them.
enum class Truth { holds, fails, unclear };

/// Dead zone half-width around the canvas midlines and the minimum centre
/// gap that makes an ordinal ranking unambiguous.
inline constexpr double kDeadZone = 10.0;

bool subject_matches(const SynthObject& obj, const SubjectPhrase& phrase);
Truth location_truth(const SyntheticScene& scene, std::size_t obj, LocationClause clause);
/// Truth of "subject <relation> anchor" for two boxes.
Truth relation_truth(const Box& subject, const Box& anchor, Relation rel);
Truth expression_truth(const SyntheticScene& scene, std::size_t obj, const Semantics& sem);

struct Rendered {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
};
Rendered render(const World& world, const Semantics& sem);
/// Inverse of render. Returns nullopt for token lists outside the grammar.
std::optional<Semantics> parse_semantics(const World& world, const std::vector<std::string>& tokens);

/// Indices of objects for which the expression holds, plus those for which
/// it is unclear.
struct Referents {
  std::vector<std::size_t> holds;
  std::vector<std::size_t> unclear;
};
Referents referents(const World& world, const SyntheticScene& scene, const std::vector<std::string>& tokens);
/// True when exactly `target` holds and every other object clearly fails.
bool identifies_uniquely(const World& world, const SyntheticScene& scene, const std::vector<std::string>& tokens,
                         std::size_t target);

inline constexpr std::size_t kMaxExpressionLength = 12;

/// Samples an expression of `kind` for `target`, or nullopt when no
/// discriminative template exists.
std::optional<GeneratedExpression> try_generate_expression(const World& world, const SyntheticScene& scene,
                                                           std::size_t target, ExpressionKind kind, Rng& rng);
/// Same, but throws InputError when the kind is infeasible for the target.
GeneratedExpression generate_expression(const World& world, const SyntheticScene& scene, std::size_t target,
                                        ExpressionKind kind, Rng& rng);

/// Fills scene.expressions with up to spec.expressions_per_scene expressions,
/// kinds drawn from spec.kind_mix, spreading targets over objects.
void populate_expressions(const World& world, SyntheticScene& scene, Rng& rng);

}  // namespace mattnet::synth
