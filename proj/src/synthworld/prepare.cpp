#include "mattnet/synthworld/prepare.hpp"

#include "mattnet/synthworld/expressions.hpp"
#include "mattnet/synthworld/parser.hpp"

namespace mattnet::synth {

training::DataShape data_shape(const World& world) {
  return {world.vocab.size(), kMaxExpressionLength, world.spec.feature_dim, world.spec.grid_side,
          world.attributes.size()};
}

training::PreparedScene prepare_scene(const World& world, const SyntheticScene& scene, CandidateMode mode,
                                      double jitter) {
  training::PreparedScene out;
  out.scene_id = scene.scene_id;
  Rng rng(jitter_seed(world, scene.scene_id));
  out.candidates = make_candidates(world, scene, mode, jitter, rng);
  for (const auto& o : scene.objects) out.gold_boxes.push_back(o.box);
  for (const auto& e : scene.expressions) {
    training::ExampleExpression ex;
    ex.expression = lang::make_expression(world.vocab, e.tokens, kMaxExpressionLength);
    ex.tokens = e.tokens;
    ex.target = static_cast<std::size_t>(e.target_id);
    ex.kind = kind_name(e.kind);
    ex.attr_labels = e.attr_labels;
    for (const auto& t : e.tokens) ex.has_attribute |= world.attribute_index(t) >= 0;
    ex.parser_masks = template_parse(e.tokens, world.vocab).masks();
    out.expressions.push_back(std::move(ex));
  }
  return out;
}

std::vector<training::PreparedScene> prepare_split(const World& world, const std::vector<SyntheticScene>& scenes,
                                                   CandidateMode mode, double jitter) {
  std::vector<training::PreparedScene> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(prepare_scene(world, s, mode, jitter));
  return out;
}

}  // namespace mattnet::synth
