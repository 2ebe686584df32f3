#include "mattnet/synthworld/world.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mattnet/errors.hpp"

namespace mattnet::synth {

namespace {

constexpr int kMaxPlacementDraws = 1000;
constexpr double kSmallSide[2] = {20.0, 36.0};
constexpr double kLargeSide[2] = {44.0, 64.0};

const std::vector<std::string> kGrammarWords{"with", "on",   "the",  "left", "right", "top",   "bottom", "first", "second",
                                             "from", "in",   "middle", "next", "to",   "above", "below",  "of"};

// Gram-Schmidt over gaussian draws; redraws a vector that is nearly dependent.
std::vector<std::vector<double>> orthonormal_set(std::size_t count, std::size_t dim, Rng& rng) {
  std::vector<std::vector<double>> out;
  while (out.size() < count) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    for (const auto& b : out) {
      double proj = 0.0;
      for (std::size_t k = 0; k < dim; ++k) proj += v[k] * b[k];
      for (std::size_t k = 0; k < dim; ++k) v[k] -= proj * b[k];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-3) continue;
    for (double& x : v) x /= norm;
    out.push_back(std::move(v));
  }
  return out;
}

void add_cue(std::vector<double>& cell, const std::vector<double>& cue) {
  for (std::size_t k = 0; k < cue.size(); ++k) cell[k] += cue[k];
}

template <typename T>
void read_key(const nlohmann::json& doc, const char* key, T& out) {
  if (doc.contains(key)) out = doc.at(key).get<T>();
}

}  // namespace

void WorldSpec::validate() const {
  auto fail = [](const std::string& msg) { throw InputError("world spec: " + msg); };
  if (!(canvas_w > 0 && canvas_h > 0)) fail("canvas must have positive size");
  if (canvas_w < 2 * kLargeSide[1] || canvas_h < 2 * kLargeSide[1]) fail("canvas too small for the object sizes");
  if (categories.size() < 2) fail("need at least two categories");
  if (colors.empty()) fail("need at least one color");
  if (min_objects < 1 || max_objects < min_objects) fail("objects_per_scene range is empty");
  if (max_objects > 12) fail("at most 12 objects per scene");
  if (!(jitter >= 0.0 && jitter <= 0.3)) fail("jitter must lie in [0, 0.3]");
  if (!(max_pair_iou >= 0.0 && max_pair_iou < 1.0)) fail("max_pair_iou must lie in [0, 1)");
  if (!(group_prob >= 0.0 && group_prob <= 1.0) || !(part_prob >= 0.0 && part_prob <= 1.0)) {
    fail("probabilities must lie in [0, 1]");
  }
  if (grid_side < 1) fail("grid_side must be positive");
  if (!(noise >= 0.0)) fail("noise must be non-negative");
  if (expressions_per_scene < 1) fail("expressions_per_scene must be positive");
  if (kind_mix.size() != kKindCount) fail("kind_mix needs four weights");
  double total = 0.0;
  for (double w : kind_mix) {
    if (!(w >= 0.0)) fail("kind_mix weights must be non-negative");
    total += w;
  }
  if (!(total > 0.0)) fail("kind_mix must have a positive weight");
  std::set<std::string> words;
  auto unique_words = [&](const std::vector<std::string>& list) {
    for (const auto& w : list) {
      if (w.empty() || w.find_first_of(" \t\n") != std::string::npos) fail("bad word '" + w + "'");
      if (std::find(kGrammarWords.begin(), kGrammarWords.end(), w) != kGrammarWords.end()) {
        fail("'" + w + "' is reserved by the expression grammar");
      }
      if (!words.insert(w).second) fail("duplicate word '" + w + "'");
    }
  };
  unique_words(categories);
  unique_words(colors);
  unique_words(parts);
  unique_words(kSizeNames);
  for (const auto& p : parts) {
    if (std::find(kPartNames.begin(), kPartNames.end(), p) == kPartNames.end()) fail("unknown part '" + p + "'");
  }
  if (colors.size() + parts.size() + kSizeNames.size() > feature_dim) fail("feature_dim too small for low-level cues");
  if (categories.size() > feature_dim) fail("feature_dim too small for category cues");
}

nlohmann::json WorldSpec::to_json() const {
  return {{"canvas", {canvas_w, canvas_h}},
          {"categories", categories},
          {"colors", colors},
          {"parts", parts},
          {"objects_per_scene", {min_objects, max_objects}},
          {"max_pair_iou", max_pair_iou},
          {"group_prob", group_prob},
          {"part_prob", part_prob},
          {"jitter", jitter},
          {"grid_side", grid_side},
          {"feature_dim", feature_dim},
          {"noise", noise},
          {"expressions_per_scene", expressions_per_scene},
          {"kind_mix", kind_mix},
          {"seed", seed}};
}

WorldSpec WorldSpec::from_json(const nlohmann::json& doc) {
  static const std::set<std::string> known{"canvas",      "categories", "colors",    "parts",
                                           "objects_per_scene", "max_pair_iou", "group_prob", "part_prob",
                                           "jitter",      "grid_side",  "feature_dim", "noise",
                                           "expressions_per_scene", "kind_mix", "seed"};
  if (!doc.is_object()) throw InputError("world spec must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) throw InputError("world spec: unknown key '" + key + "'");
  }
  WorldSpec s;
  try {
    if (doc.contains("canvas")) {
      const auto c = doc.at("canvas").get<std::vector<double>>();
      if (c.size() != 2) throw InputError("world spec: canvas must be [w, h]");
      s.canvas_w = c[0];
      s.canvas_h = c[1];
    }
    if (doc.contains("objects_per_scene")) {
      const auto r = doc.at("objects_per_scene").get<std::vector<int>>();
      if (r.size() != 2) throw InputError("world spec: objects_per_scene must be [min, max]");
      s.min_objects = r[0];
      s.max_objects = r[1];
    }
    read_key(doc, "categories", s.categories);
    read_key(doc, "colors", s.colors);
    read_key(doc, "parts", s.parts);
    read_key(doc, "max_pair_iou", s.max_pair_iou);
    read_key(doc, "group_prob", s.group_prob);
    read_key(doc, "part_prob", s.part_prob);
    read_key(doc, "jitter", s.jitter);
    read_key(doc, "grid_side", s.grid_side);
    read_key(doc, "feature_dim", s.feature_dim);
    read_key(doc, "noise", s.noise);
    read_key(doc, "expressions_per_scene", s.expressions_per_scene);
    read_key(doc, "kind_mix", s.kind_mix);
    read_key(doc, "seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("world spec: ") + e.what());
  }
  s.validate();
  return s;
}

bool part_region_contains(const std::string& part, double u, double v) {
  if (part == "hat") return v < 0.3;
  if (part == "band") return v >= 0.4 && v < 0.6;
  if (part == "stripe") return u >= 0.4 && u < 0.6;
  if (part == "spot") return u >= 0.6 && v >= 0.6;
  throw InputError("unknown part '" + part + "'");
}

bool SynthObject::has_part(int p) const { return std::find(parts.begin(), parts.end(), p) != parts.end(); }

std::string kind_name(ExpressionKind k) {
  switch (k) {
    case ExpressionKind::subject: return "subject";
    case ExpressionKind::subject_location: return "subject+location";
    case ExpressionKind::subject_relationship: return "subject+relationship";
    case ExpressionKind::composite: return "composite";
  }
  return "?";
}

ExpressionKind kind_from_name(const std::string& name) {
  for (std::size_t k = 0; k < kKindCount; ++k) {
    if (kind_name(static_cast<ExpressionKind>(k)) == name) return static_cast<ExpressionKind>(k);
  }
  throw InputError("unknown expression kind '" + name + "'");
}

int World::attribute_index(const std::string& word) const {
  auto it = std::find(attributes.begin(), attributes.end(), word);
  return it == attributes.end() ? -1 : static_cast<int>(it - attributes.begin());
}

std::vector<double> World::attribute_labels(const SynthObject& obj) const {
  std::vector<double> y(attributes.size(), 0.0);
  y[attribute_index(spec.colors[obj.color])] = 1.0;
  y[attribute_index(kSizeNames[obj.size])] = 1.0;
  for (int p : obj.parts) y[attribute_index(spec.parts[p])] = 1.0;
  return y;
}

World make_world(const WorldSpec& spec) {
  spec.validate();
  World w;
  w.spec = spec;
  Rng low_rng(derive_seed({spec.seed, 0x10c0e5ULL}));
  auto low = orthonormal_set(spec.colors.size() + spec.parts.size() + kSizeNames.size(), spec.feature_dim, low_rng);
  auto it = low.begin();
  w.color_cues.assign(it, it + spec.colors.size());
  it += spec.colors.size();
  w.part_cues.assign(it, it + spec.parts.size());
  it += spec.parts.size();
  w.size_cues.assign(it, low.end());
  Rng high_rng(derive_seed({spec.seed, 0xca7e6ULL}));
  w.category_cues = orthonormal_set(spec.categories.size(), spec.feature_dim, high_rng);

  for (const auto& list : {spec.colors, kSizeNames, spec.categories, spec.parts, kGrammarWords}) {
    for (const auto& word : list) w.vocab.add(word);
  }
  for (const auto& list : {spec.colors, kSizeNames, spec.parts}) {
    w.attributes.insert(w.attributes.end(), list.begin(), list.end());
  }
  return w;
}

SyntheticScene generate_scene(const World& world, std::uint64_t scene_id, Rng& rng) {
  const WorldSpec& spec = world.spec;
  const int n_cat = static_cast<int>(spec.categories.size());
  const int n_col = static_cast<int>(spec.colors.size());
  auto random_parts = [&] {
    std::vector<int> parts;
    for (int p = 0; p < static_cast<int>(spec.parts.size()); ++p) {
      if (rng.bernoulli(spec.part_prob)) parts.push_back(p);
    }
    return parts;
  };

  while (true) {
    const int n = spec.min_objects + static_cast<int>(rng.index(spec.max_objects - spec.min_objects + 1));
    std::vector<SynthObject> objs(n);
    for (auto& o : objs) {
      o.category = static_cast<int>(rng.index(n_cat));
      o.color = static_cast<int>(rng.index(n_col));
      o.size = static_cast<int>(rng.index(kSizeNames.size()));
      o.parts = random_parts();
    }
    // A planted group of look-alikes of one category.
    if (n >= 2 && rng.bernoulli(spec.group_prob)) {
      const int group = std::min(n, 2 + static_cast<int>(rng.index(3)));
      const SynthObject& first = objs[0];
      for (int i = 1; i < group; ++i) {
        objs[i].category = first.category;
        if (rng.bernoulli(0.8)) objs[i].color = first.color;
        if (rng.bernoulli(0.5)) objs[i].size = first.size;
        if (rng.bernoulli(0.5)) objs[i].parts = first.parts;
      }
    }
    rng.shuffle(objs);

    bool placed_all = true;
    int draws = 0;
    for (int i = 0; i < n && placed_all; ++i) {
      const double* range = objs[i].size == 0 ? kSmallSide : kLargeSide;
      while (true) {
        if (++draws > kMaxPlacementDraws) {
          placed_all = false;
          break;
        }
        const double w = rng.uniform(range[0], range[1]);
        const double h = rng.uniform(range[0], range[1]);
        const double x = rng.uniform(0.0, spec.canvas_w - w);
        const double y = rng.uniform(0.0, spec.canvas_h - h);
        const Box b{x, y, x + w, y + h};
        bool ok = true;
        for (int j = 0; j < i && ok; ++j) ok = visual::iou(b, objs[j].box) <= spec.max_pair_iou;
        if (ok) {
          objs[i].box = b;
          break;
        }
      }
    }
    if (!placed_all) continue;

    SyntheticScene scene;
    scene.scene_id = scene_id;
    scene.canvas_w = spec.canvas_w;
    scene.canvas_h = spec.canvas_h;
    for (int i = 0; i < n; ++i) objs[i].id = i;
    scene.objects = std::move(objs);
    return scene;
  }
}

ObjectGrids candidate_grids(const World& world, const SyntheticScene& scene, std::size_t source, const Box& region,
                            std::uint64_t noise_seed) {
  const std::size_t g = world.spec.grid_side, d = world.spec.feature_dim;
  ObjectGrids grids{std::vector<double>(g * g * d, 0.0), std::vector<double>(g * g * d, 0.0)};
  Rng noise(noise_seed);
  for (std::size_t r = 0; r < g; ++r) {
    for (std::size_t c = 0; c < g; ++c) {
      const double x = region.x_tl + (c + 0.5) / g * region.width();
      const double y = region.y_tl + (r + 0.5) / g * region.height();
      int owner = -1;
      if (scene.objects.at(source).box.contains(x, y)) {
        owner = static_cast<int>(source);
      } else {
        for (std::size_t j = 0; j < scene.objects.size(); ++j) {
          if (scene.objects[j].box.contains(x, y)) {
            owner = static_cast<int>(j);
            break;
          }
        }
      }
      const std::size_t cell = r * g + c;
      std::vector<double> low(d, 0.0), high(d, 0.0);
      if (owner >= 0) {
        const SynthObject& o = scene.objects[owner];
        add_cue(low, world.color_cues[o.color]);
        add_cue(low, world.size_cues[o.size]);
        const double u = (x - o.box.x_tl) / o.box.width();
        const double v = (y - o.box.y_tl) / o.box.height();
        for (int p : o.parts) {
          if (part_region_contains(world.spec.parts[p], u, v)) add_cue(low, world.part_cues[p]);
        }
        add_cue(high, world.category_cues[o.category]);
      }
      for (std::size_t k = 0; k < d; ++k) grids.low[cell * d + k] = low[k] + world.spec.noise * noise.normal();
      for (std::size_t k = 0; k < d; ++k) grids.high[cell * d + k] = high[k] + world.spec.noise * noise.normal();
    }
  }
  return grids;
}

std::string candidate_mode_name(CandidateMode m) { return m == CandidateMode::groundtruth ? "groundtruth" : "jittered"; }

CandidateMode candidate_mode_from_name(const std::string& name) {
  if (name == "groundtruth") return CandidateMode::groundtruth;
  if (name == "jittered") return CandidateMode::jittered;
  throw InputError("candidate mode must be groundtruth or jittered, got '" + name + "'");
}

Box jitter_box(const Box& box, double jitter, double canvas_w, double canvas_h, Rng& rng) {
  const double w = box.width(), h = box.height();
  for (int attempt = 0; attempt < 100; ++attempt) {
    Box b{box.x_tl + rng.uniform(-jitter, jitter) * w, box.y_tl + rng.uniform(-jitter, jitter) * h,
          box.x_br + rng.uniform(-jitter, jitter) * w, box.y_br + rng.uniform(-jitter, jitter) * h};
    b = visual::clamp_to_canvas(b, canvas_w, canvas_h);
    if (b.valid()) return b;
  }
  return box;
}

std::uint64_t jitter_seed(const World& world, std::uint64_t scene_id) {
  return derive_seed({world.spec.seed, scene_id, 0x717e6ULL});
}

visual::SceneContext make_candidates(const World& world, const SyntheticScene& scene, CandidateMode mode,
                                     double jitter, Rng& rng) {
  visual::SceneContext ctx;
  ctx.canvas_w = scene.canvas_w;
  ctx.canvas_h = scene.canvas_h;
  const std::size_t cells = world.cells(), d = world.spec.feature_dim;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const SynthObject& o = scene.objects[i];
    Box box = o.box;
    if (mode == CandidateMode::jittered) box = jitter_box(o.box, jitter, scene.canvas_w, scene.canvas_h, rng);
    ObjectGrids grids;
    if (mode == CandidateMode::groundtruth && !scene.materialized.empty()) {
      grids = scene.materialized.at(i);
    } else {
      grids = candidate_grids(world, scene, i, box, derive_seed({world.spec.seed, scene.scene_id, i}));
    }
    ctx.objects.push_back(
        visual::make_candidate(box, o.category, std::move(grids.low), std::move(grids.high), cells, d));
  }
  return ctx;
}

}  // namespace mattnet::synth
