#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mattnet/language/vocabulary.hpp"
#include "mattnet/rng.hpp"
#include "mattnet/visual/scene.hpp"

namespace mattnet::synth {

using visual::Box;

/// Generator configuration. Serialized as world.json beside a dataset.
struct WorldSpec {
  double canvas_w = 256.0;
  double canvas_h = 256.0;
  std::vector<std::string> categories{"ball", "cat", "chair", "box", "tree", "man"};
  std::vector<std::string> colors{"red", "blue", "green", "yellow", "black"};
  // Part names must come from kPartNames; each has a fixed sub-region.
  std::vector<std::string> parts{"hat", "stripe", "spot", "band"};
  int min_objects = 3;
  int max_objects = 8;
  double max_pair_iou = 0.1;
  double group_prob = 0.85;  // chance of a planted same-category group
  double part_prob = 0.3;
  double jitter = 0.1;
  std::size_t grid_side = 7;
  std::size_t feature_dim = 16;
  double noise = 0.1;
  int expressions_per_scene = 4;
  // subject, subject+location, subject+relationship, composite
  std::vector<double> kind_mix{0.2, 0.3, 0.3, 0.2};
  std::uint64_t seed = 0;

  /// Throws InputError on an inconsistent spec.
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are an InputError.
  static WorldSpec from_json(const nlohmann::json& doc);
};

inline const std::vector<std::string> kSizeNames{"small", "large"};
inline const std::vector<std::string> kPartNames{"hat", "stripe", "spot", "band"};

/// Whether object-normalized point (u, v) in [0,1)^2 lies in the part's region.
bool part_region_contains(const std::string& part, double u, double v);

struct SynthObject {
  int id = 0;
  Box box;
  int category = 0;
  int color = 0;
  int size = 0;            // index into kSizeNames
  std::vector<int> parts;  // ascending indices into WorldSpec::parts

  bool has_part(int p) const;
};

enum class ExpressionKind { subject, subject_location, subject_relationship, composite };
inline constexpr std::size_t kKindCount = 4;
std::string kind_name(ExpressionKind k);
ExpressionKind kind_from_name(const std::string& name);

struct GeneratedExpression {
  std::vector<std::string> tokens;
  int target_id = 0;
  ExpressionKind kind = ExpressionKind::subject;
  std::vector<std::string> gold_tags;  // "subj" | "loc" | "rel" per token
  std::vector<double> attr_labels;     // over World::attributes
};

struct ObjectGrids {
  std::vector<double> low;   // [G x d] row-major
  std::vector<double> high;  // [G x d]
};

struct SyntheticScene {
  std::uint64_t scene_id = 0;
  double canvas_w = 0.0;
  double canvas_h = 0.0;
  std::vector<SynthObject> objects;
  std::vector<GeneratedExpression> expressions;
  // Present only for datasets written with materialized features.
  std::vector<ObjectGrids> materialized;
};

/// Everything derived once from a spec: cue embeddings, vocabulary and
/// the attribute word list.
struct World {
  WorldSpec spec;
  std::vector<std::vector<double>> color_cues;
  std::vector<std::vector<double>> part_cues;
  std::vector<std::vector<double>> size_cues;
  std::vector<std::vector<double>> category_cues;
  lang::Vocabulary vocab;
  std::vector<std::string> attributes;  // colors, sizes, parts

  std::size_t cells() const { return spec.grid_side * spec.grid_side; }
  int attribute_index(const std::string& word) const;  // -1 when not an attribute
  /// Full attribute vector of an object (color, size and every part).
  std::vector<double> attribute_labels(const SynthObject& obj) const;
};

World make_world(const WorldSpec& spec);

/// Places objects (rejection sampling, restarting after 1000 failed draws)
/// and samples their attributes. Expressions are left empty.
SyntheticScene generate_scene(const World& world, std::uint64_t scene_id, Rng& rng);

/// Feature grids for a candidate region `region` proposed for object
/// `source`. Cell centres sample the scene: the source object if it covers
/// the point, else the lowest-index object covering it, else background.
ObjectGrids candidate_grids(const World& world, const SyntheticScene& scene, std::size_t source, const Box& region,
                            std::uint64_t noise_seed);

enum class CandidateMode { groundtruth, jittered };
std::string candidate_mode_name(CandidateMode m);
CandidateMode candidate_mode_from_name(const std::string& name);

/// Corner-wise uniform perturbation by up to `jitter` times the box size,
/// clamped to the canvas; redrawn if the result is degenerate.
Box jitter_box(const Box& box, double jitter, double canvas_w, double canvas_h, Rng& rng);

/// One candidate per object, in object order. Ground truth uses the true
/// boxes (and materialized grids when the scene carries them).
visual::SceneContext make_candidates(const World& world, const SyntheticScene& scene, CandidateMode mode,
                                     double jitter, Rng& rng);

/// Seed of the per-scene jitter stream used by evaluation.
std::uint64_t jitter_seed(const World& world, std::uint64_t scene_id);

}  // namespace mattnet::synth
