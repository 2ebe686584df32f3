#include "mattnet/synthworld/expressions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mattnet/errors.hpp"

namespace mattnet::synth {

namespace {

constexpr LocationClause kAbsolute[] = {LocationClause::left, LocationClause::right, LocationClause::top,
                                        LocationClause::bottom};
constexpr LocationClause kOrdinal[] = {LocationClause::first_left, LocationClause::second_left,
                                       LocationClause::first_right, LocationClause::second_right,
                                       LocationClause::middle};
constexpr Relation kRelations[] = {Relation::next_to, Relation::above, Relation::below, Relation::left_of,
                                   Relation::right_of};

// Holds when `margin` clears the threshold by the dead zone on the positive side.
Truth signed_side(double margin) {
  if (margin >= kDeadZone) return Truth::holds;
  if (margin <= -kDeadZone) return Truth::fails;
  return Truth::unclear;
}

Truth combine(std::initializer_list<Truth> parts) {
  bool unclear = false;
  for (Truth t : parts) {
    if (t == Truth::fails) return Truth::fails;
    unclear |= t == Truth::unclear;
  }
  return unclear ? Truth::unclear : Truth::holds;
}

// Directional test along one axis: `along` is how far the anchor centre lies
// in the named direction, `across` the perpendicular centre offset, and
// `extent`/`width` the half-sums of the box sizes on those axes.
Truth directional(double along, double across, double extent, double width) {
  if (along >= 0.75 * extent && std::abs(across) <= 0.5 * width && along <= extent + 40.0) return Truth::holds;
  if (along <= 0.25 * extent || std::abs(across) >= width || along >= extent + 70.0) return Truth::fails;
  return Truth::unclear;
}

int find_word(const std::vector<std::string>& list, const std::string& word) {
  auto it = std::find(list.begin(), list.end(), word);
  return it == list.end() ? -1 : static_cast<int>(it - list.begin());
}

void append(Rendered& out, std::initializer_list<std::string> words, const char* tag) {
  for (const auto& w : words) {
    out.tokens.push_back(w);
    out.tags.push_back(tag);
  }
}

void append_phrase(Rendered& out, const World& world, const SubjectPhrase& p, const char* tag) {
  if (p.color >= 0) append(out, {world.spec.colors[p.color]}, tag);
  if (p.size >= 0) append(out, {kSizeNames[p.size]}, tag);
  append(out, {world.spec.categories[p.category]}, tag);
  if (p.part >= 0) append(out, {"with", world.spec.parts[p.part]}, tag);
}

std::vector<SubjectPhrase> subject_options(const SynthObject& t) {
  std::vector<SubjectPhrase> out;
  std::vector<int> parts{-1};
  parts.insert(parts.end(), t.parts.begin(), t.parts.end());
  for (int size : {-1, t.size}) {
    for (int part : parts) out.push_back({t.category, t.color, size, part});
  }
  return out;
}

std::size_t holders(const SyntheticScene& scene, const SubjectPhrase& p) {
  return std::count_if(scene.objects.begin(), scene.objects.end(),
                       [&](const SynthObject& o) { return subject_matches(o, p); });
}

bool unique_for(const World& world, const SyntheticScene& scene, const Semantics& sem, std::size_t target) {
  if (render(world, sem).tokens.size() > kMaxExpressionLength) return false;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const Truth t = expression_truth(scene, i, sem);
    if (i == target ? t != Truth::holds : t != Truth::fails) return false;
  }
  return true;
}

std::vector<std::size_t> neighbours_of(const SyntheticScene& scene, std::size_t target) {
  visual::SceneContext ctx{scene.canvas_w, scene.canvas_h, {}};
  for (const auto& o : scene.objects) {
    visual::CandidateObject c;
    c.box = o.box;
    c.category = o.category;
    ctx.objects.push_back(std::move(c));
  }
  return visual::nearest_neighbors(ctx, target, false);
}

// Anchors in the target's neighbourhood, of another category, for which the
// relation clearly holds.
std::vector<std::pair<Relation, SubjectPhrase>> anchor_options(const SyntheticScene& scene, std::size_t target) {
  std::vector<std::pair<Relation, SubjectPhrase>> out;
  const SynthObject& t = scene.objects[target];
  for (std::size_t b : neighbours_of(scene, target)) {
    const SynthObject& a = scene.objects[b];
    if (a.category == t.category) continue;
    for (Relation rel : kRelations) {
      if (relation_truth(t.box, a.box, rel) != Truth::holds) continue;
      out.push_back({rel, {a.category, -1, -1, -1}});
    }
  }
  return out;
}

}  // namespace

bool subject_matches(const SynthObject& obj, const SubjectPhrase& p) {
  return obj.category == p.category && (p.color < 0 || obj.color == p.color) && (p.size < 0 || obj.size == p.size) &&
         (p.part < 0 || obj.has_part(p.part));
}

Truth location_truth(const SyntheticScene& scene, std::size_t obj, LocationClause clause) {
  const SynthObject& o = scene.objects.at(obj);
  const double cx = o.box.center_x(), cy = o.box.center_y();
  const double mx = 0.5 * scene.canvas_w, my = 0.5 * scene.canvas_h;
  switch (clause) {
    case LocationClause::left: return signed_side(mx - cx);
    case LocationClause::right: return signed_side(cx - mx);
    case LocationClause::top: return signed_side(my - cy);
    case LocationClause::bottom: return signed_side(cy - my);
    default: break;
  }
  std::vector<std::size_t> group;
  for (std::size_t j = 0; j < scene.objects.size(); ++j) {
    if (scene.objects[j].category == o.category) group.push_back(j);
  }
  std::sort(group.begin(), group.end(), [&](std::size_t a, std::size_t b) {
    const double ca = scene.objects[a].box.center_x(), cb = scene.objects[b].box.center_x();
    return ca != cb ? ca < cb : a < b;
  });
  for (std::size_t k = 1; k < group.size(); ++k) {
    if (scene.objects[group[k]].box.center_x() - scene.objects[group[k - 1]].box.center_x() < kDeadZone) {
      return Truth::unclear;
    }
  }
  const long n = static_cast<long>(group.size());
  const long rank = std::find(group.begin(), group.end(), obj) - group.begin();
  long wanted = -1;
  switch (clause) {
    case LocationClause::first_left: wanted = 0; break;
    case LocationClause::second_left: wanted = 1; break;
    case LocationClause::first_right: wanted = n - 1; break;
    case LocationClause::second_right: wanted = n - 2; break;
    case LocationClause::middle: wanted = (n >= 3 && n % 2 == 1) ? n / 2 : -1; break;
    default: break;
  }
  return rank == wanted ? Truth::holds : Truth::fails;
}

Truth relation_truth(const Box& s, const Box& a, Relation rel) {
  const double dx = a.center_x() - s.center_x(), dy = a.center_y() - s.center_y();
  const double half_w = 0.5 * (s.width() + a.width()), half_h = 0.5 * (s.height() + a.height());
  switch (rel) {
    case Relation::next_to: {
      const double gx = std::max(0.0, std::max(a.x_tl - s.x_br, s.x_tl - a.x_br));
      const double gy = std::max(0.0, std::max(a.y_tl - s.y_br, s.y_tl - a.y_br));
      const double gap = std::hypot(gx, gy);
      if (gap <= 20.0) return Truth::holds;
      if (gap > 40.0) return Truth::fails;
      return Truth::unclear;
    }
    case Relation::above: return directional(dy, dx, half_h, half_w);
    case Relation::below: return directional(-dy, dx, half_h, half_w);
    case Relation::left_of: return directional(dx, dy, half_w, half_h);
    case Relation::right_of: return directional(-dx, dy, half_w, half_h);
  }
  return Truth::fails;
}

Truth expression_truth(const SyntheticScene& scene, std::size_t obj, const Semantics& sem) {
  const Truth subj = subject_matches(scene.objects.at(obj), sem.subject) ? Truth::holds : Truth::fails;
  const Truth loc = sem.location ? location_truth(scene, obj, *sem.location) : Truth::holds;
  Truth rel = Truth::holds;
  if (sem.relation) {
    rel = Truth::fails;
    for (std::size_t b = 0; b < scene.objects.size(); ++b) {
      if (b == obj || !subject_matches(scene.objects[b], sem.anchor)) continue;
      const Truth t = relation_truth(scene.objects[obj].box, scene.objects[b].box, *sem.relation);
      if (t == Truth::holds) {
        rel = Truth::holds;
        break;
      }
      if (t == Truth::unclear) rel = Truth::unclear;
    }
  }
  return combine({subj, loc, rel});
}

Rendered render(const World& world, const Semantics& sem) {
  Rendered out;
  append_phrase(out, world, sem.subject, "subj");
  if (sem.location) {
    switch (*sem.location) {
      case LocationClause::left: append(out, {"on", "the", "left"}, "loc"); break;
      case LocationClause::right: append(out, {"on", "the", "right"}, "loc"); break;
      case LocationClause::top: append(out, {"on", "the", "top"}, "loc"); break;
      case LocationClause::bottom: append(out, {"on", "the", "bottom"}, "loc"); break;
      case LocationClause::first_left: append(out, {"first", "from", "the", "left"}, "loc"); break;
      case LocationClause::second_left: append(out, {"second", "from", "the", "left"}, "loc"); break;
      case LocationClause::first_right: append(out, {"first", "from", "the", "right"}, "loc"); break;
      case LocationClause::second_right: append(out, {"second", "from", "the", "right"}, "loc"); break;
      case LocationClause::middle: append(out, {"in", "the", "middle"}, "loc"); break;
    }
  }
  if (sem.relation) {
    switch (*sem.relation) {
      case Relation::next_to: append(out, {"next", "to"}, "rel"); break;
      case Relation::above: append(out, {"above"}, "rel"); break;
      case Relation::below: append(out, {"below"}, "rel"); break;
      case Relation::left_of: append(out, {"left", "of"}, "rel"); break;
      case Relation::right_of: append(out, {"right", "of"}, "rel"); break;
    }
    append(out, {"the"}, "rel");
    append_phrase(out, world, sem.anchor, "rel");
  }
  return out;
}

std::optional<Semantics> parse_semantics(const World& world, const std::vector<std::string>& tokens) {
  std::size_t i = 0;
  auto peek = [&](std::size_t k = 0) -> std::string { return i + k < tokens.size() ? tokens[i + k] : ""; };
  auto accept = [&](std::initializer_list<const char*> words) {
    std::size_t k = 0;
    for (const char* w : words) {
      if (peek(k) != w) return false;
      ++k;
    }
    i += k;
    return true;
  };
  Semantics sem;
  sem.subject.color = find_word(world.spec.colors, peek());
  if (sem.subject.color < 0) return std::nullopt;
  ++i;
  sem.subject.size = find_word(kSizeNames, peek());
  if (sem.subject.size >= 0) ++i;
  sem.subject.category = find_word(world.spec.categories, peek());
  if (sem.subject.category < 0) return std::nullopt;
  ++i;
  if (accept({"with"})) {
    sem.subject.part = find_word(world.spec.parts, peek());
    if (sem.subject.part < 0) return std::nullopt;
    ++i;
  }

  if (accept({"on", "the", "left"})) sem.location = LocationClause::left;
  else if (accept({"on", "the", "right"})) sem.location = LocationClause::right;
  else if (accept({"on", "the", "top"})) sem.location = LocationClause::top;
  else if (accept({"on", "the", "bottom"})) sem.location = LocationClause::bottom;
  else if (accept({"first", "from", "the", "left"})) sem.location = LocationClause::first_left;
  else if (accept({"second", "from", "the", "left"})) sem.location = LocationClause::second_left;
  else if (accept({"first", "from", "the", "right"})) sem.location = LocationClause::first_right;
  else if (accept({"second", "from", "the", "right"})) sem.location = LocationClause::second_right;
  else if (accept({"in", "the", "middle"})) sem.location = LocationClause::middle;

  if (accept({"next", "to"})) sem.relation = Relation::next_to;
  else if (accept({"above"})) sem.relation = Relation::above;
  else if (accept({"below"})) sem.relation = Relation::below;
  else if (accept({"left", "of"})) sem.relation = Relation::left_of;
  else if (accept({"right", "of"})) sem.relation = Relation::right_of;
  if (sem.relation) {
    if (!accept({"the"})) return std::nullopt;
    sem.anchor.color = find_word(world.spec.colors, peek());
    if (sem.anchor.color >= 0) ++i;
    sem.anchor.category = find_word(world.spec.categories, peek());
    if (sem.anchor.category < 0) return std::nullopt;
    ++i;
  }
  if (i != tokens.size()) return std::nullopt;
  return sem;
}

Referents referents(const World& world, const SyntheticScene& scene, const std::vector<std::string>& tokens) {
  const auto sem = parse_semantics(world, tokens);
  if (!sem) throw InputError("expression is outside the template grammar");
  Referents r;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const Truth t = expression_truth(scene, i, *sem);
    if (t == Truth::holds) r.holds.push_back(i);
    if (t == Truth::unclear) r.unclear.push_back(i);
  }
  return r;
}

bool identifies_uniquely(const World& world, const SyntheticScene& scene, const std::vector<std::string>& tokens,
                         std::size_t target) {
  const auto r = referents(world, scene, tokens);
  return r.holds == std::vector<std::size_t>{target} && r.unclear.empty();
}

std::optional<GeneratedExpression> try_generate_expression(const World& world, const SyntheticScene& scene,
                                                           std::size_t target, ExpressionKind kind, Rng& rng) {
  const SynthObject& t = scene.objects.at(target);
  const auto subjects = subject_options(t);
  std::vector<SubjectPhrase> ambiguous;
  for (const auto& s : subjects) {
    if (holders(scene, s) >= 2) ambiguous.push_back(s);
  }

  std::vector<Semantics> options;
  std::vector<Semantics> ordinal;  // kept apart so both location families get sampled
  switch (kind) {
    case ExpressionKind::subject:
      for (const auto& s : subjects) {
        if (unique_for(world, scene, {s, {}, {}, {}}, target)) options.push_back({s, {}, {}, {}});
      }
      break;
    case ExpressionKind::subject_location:
      for (const auto& s : ambiguous) {
        for (auto c : kAbsolute) {
          if (unique_for(world, scene, {s, c, {}, {}}, target)) options.push_back({s, c, {}, {}});
        }
        for (auto c : kOrdinal) {
          if (unique_for(world, scene, {s, c, {}, {}}, target)) ordinal.push_back({s, c, {}, {}});
        }
      }
      if (!ordinal.empty() && (options.empty() || rng.bernoulli(0.5))) options = std::move(ordinal);
      break;
    case ExpressionKind::subject_relationship:
      if (ambiguous.empty()) break;
      for (const auto& [rel, anchor] : anchor_options(scene, target)) {
        for (const auto& s : ambiguous) {
          Semantics sem{s, {}, rel, anchor};
          if (unique_for(world, scene, sem, target)) options.push_back(sem);
        }
      }
      break;
    case ExpressionKind::composite:
      if (ambiguous.empty()) break;
      for (const auto& [rel, anchor] : anchor_options(scene, target)) {
        for (auto c : kAbsolute) {
          if (location_truth(scene, target, c) != Truth::holds) continue;
          for (const auto& s : ambiguous) {
            Semantics sem{s, c, rel, anchor};
            if (unique_for(world, scene, sem, target)) options.push_back(sem);
          }
        }
      }
      break;
  }
  if (options.empty()) return std::nullopt;

  const Semantics& pick = options[rng.index(options.size())];
  auto r = render(world, pick);
  GeneratedExpression e;
  e.tokens = std::move(r.tokens);
  e.gold_tags = std::move(r.tags);
  e.target_id = t.id;
  e.kind = kind;
  e.attr_labels = world.attribute_labels(t);
  return e;
}

GeneratedExpression generate_expression(const World& world, const SyntheticScene& scene, std::size_t target,
                                        ExpressionKind kind, Rng& rng) {
  auto e = try_generate_expression(world, scene, target, kind, rng);
  if (!e) {
    throw InputError("no discriminative " + kind_name(kind) + " expression exists for object " +
                     std::to_string(target));
  }
  return *e;
}

void populate_expressions(const World& world, SyntheticScene& scene, Rng& rng) {
  const std::size_t n = scene.objects.size();
  std::vector<int> used(n, 0);
  for (int slot = 0; slot < world.spec.expressions_per_scene; ++slot) {
    std::vector<double> mix = world.spec.kind_mix;
    bool accepted = false;
    while (!accepted) {
      const double total = std::accumulate(mix.begin(), mix.end(), 0.0);
      if (!(total > 0.0)) break;
      double u = rng.uniform() * total;
      std::size_t k = 0;
      while (k + 1 < mix.size() && (mix[k] == 0.0 || u >= mix[k])) {
        u -= mix[k];
        ++k;
      }
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      rng.shuffle(order);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return used[a] < used[b]; });
      for (std::size_t target : order) {
        auto e = try_generate_expression(world, scene, target, static_cast<ExpressionKind>(k), rng);
        if (!e) continue;
        const bool duplicate = std::any_of(scene.expressions.begin(), scene.expressions.end(),
                                           [&](const GeneratedExpression& x) { return x.tokens == e->tokens; });
        if (duplicate) continue;
        scene.expressions.push_back(std::move(*e));
        ++used[target];
        accepted = true;
        break;
      }
      mix[k] = 0.0;
    }
  }
}

}  // namespace mattnet::synth
