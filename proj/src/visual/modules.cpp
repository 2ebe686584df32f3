#include "mattnet/visual/modules.hpp"

#include <algorithm>

#include "mattnet/autodiff/ops.hpp"
#include "mattnet/errors.hpp"

namespace mattnet::visual {

namespace {

constexpr double kInitBound = 0.08;

void add_linear(ad::ParamStore& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  params.add_uniform(name + ".W", {in, out}, kInitBound, rng);
  params.add_zeros(name + ".b", {out});
}

Tensor linear(const std::string& name, const Tensor& x, const ad::ParamStore& params) {
  return ad::affine(x, params.get(name + ".W"), params.get(name + ".b"));
}

Tensor mlp_embedding(const std::string& prefix, const std::string& side, const Tensor& x,
                     const ad::ParamStore& params, const ForwardMode& mode, double dropout_ratio) {
  Tensor h = x;
  if (mode.train) h = ad::dropout(h, 1.0 - dropout_ratio, true, *mode.rng);
  h = ad::relu(linear(prefix + "." + side + "_fc1", h, params));
  h = linear(prefix + "." + side + "_fc2", h, params);
  return ad::l2_normalize(h, h.rank() == 2 ? 1 : 0);
}

}  // namespace

void init_matching_params(ad::ParamStore& params, const std::string& prefix, std::size_t visual_in,
                          std::size_t phrase_in, const VisualConfig& cfg, Rng& rng) {
  add_linear(params, prefix + ".vis_fc1", visual_in, cfg.match_hidden, rng);
  add_linear(params, prefix + ".vis_fc2", cfg.match_hidden, cfg.match_dim, rng);
  add_linear(params, prefix + ".lang_fc1", phrase_in, cfg.match_hidden, rng);
  add_linear(params, prefix + ".lang_fc2", cfg.match_hidden, cfg.match_dim, rng);
}

void init_subject_params(ad::ParamStore& params, const VisualConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.feature_dim;
  add_linear(params, "subj.attr_fuse", 2 * d, d, rng);
  add_linear(params, "subj.attr_head", d, cfg.attribute_count, rng);
  add_linear(params, "subj.blob_fuse", 2 * d, d, rng);
  params.add_uniform("subj.W_v", {d, cfg.attention_dim}, kInitBound, rng);
  params.add_uniform("subj.W_q", {cfg.phrase_dim, cfg.attention_dim}, kInitBound, rng);
  params.add_uniform("subj.w_ha", {cfg.attention_dim}, kInitBound, rng);
  init_matching_params(params, "subj.match", d, cfg.phrase_dim, cfg, rng);
}

void init_location_params(ad::ParamStore& params, const VisualConfig& cfg, Rng& rng) {
  params.add_uniform("loc.W_l", {kLocationInputDim, cfg.location_dim}, kInitBound, rng);
  params.add_zeros("loc.b_l", {cfg.location_dim});
  init_matching_params(params, "loc.match", cfg.location_dim, cfg.phrase_dim, cfg, rng);
}

void init_relation_params(ad::ParamStore& params, const VisualConfig& cfg, Rng& rng) {
  params.add_uniform("rel.W_r", {cfg.feature_dim + 5, cfg.relation_dim}, kInitBound, rng);
  params.add_zeros("rel.b_r", {cfg.relation_dim});
  init_matching_params(params, "rel.match", cfg.relation_dim, cfg.phrase_dim, cfg, rng);
}

Tensor attribute_blob(const CandidateObject& obj, const ad::ParamStore& params) {
  return linear("subj.attr_fuse", ad::concat({obj.grid_low, obj.grid_high}, 1), params);
}

Tensor attribute_probs(const Tensor& blob, const ad::ParamStore& params) {
  return ad::sigmoid(linear("subj.attr_head", ad::mean_pool(blob, 0), params));
}

Tensor predict_attributes(const CandidateObject& obj, const ad::ParamStore& params) {
  return attribute_probs(attribute_blob(obj, params), params);
}

Tensor subject_blob(const CandidateObject& obj, const Tensor& attr_blob, const ad::ParamStore& params) {
  return linear("subj.blob_fuse", ad::concat({attr_blob, obj.grid_high}, 1), params);
}

MeanBlobs mean_blobs(const CandidateObject& obj, const ad::ParamStore& params) {
  auto row = [](const Tensor& grid) { return ad::reshape(ad::mean_pool(grid, 0), {1, grid.cols()}); };
  const Tensor high = row(obj.grid_high);
  MeanBlobs out;
  out.attr_blob = linear("subj.attr_fuse", ad::concat({row(obj.grid_low), high}, 1), params);
  out.subject_blob = linear("subj.blob_fuse", ad::concat({out.attr_blob, high}, 1), params);
  return out;
}

Tensor project_subject_blob(const Tensor& blob, const ad::ParamStore& params) {
  return ad::matmul(blob, params.get("subj.W_v"));
}

SubjectRepresentation subject_representation(const Tensor& blob, const Tensor& q_subj, const ad::ParamStore& params,
                                             Pooling pooling, const Tensor* projected_blob) {
  const std::size_t cells = blob.rows();
  Tensor attention;
  if (pooling == Pooling::average) {
    attention = Tensor::filled({cells}, 1.0 / static_cast<double>(cells));
  } else {
    Tensor projected = projected_blob ? *projected_blob : project_subject_blob(blob, params);
    Tensor hidden = ad::tanh(ad::add(projected, ad::vecmat(q_subj, params.get("subj.W_q"))));
    attention = ad::softmax(ad::matvec(hidden, params.get("subj.w_ha")));
  }
  return {ad::vecmat(attention, blob), attention};
}

std::vector<double> location_input(const SceneContext& scene, std::size_t index, bool use_dif) {
  const auto& self = scene.objects.at(index);
  std::vector<double> out(kLocationInputDim, 0.0);
  const auto l = absolute_location(self.box, scene.canvas_w, scene.canvas_h);
  std::copy(l.begin(), l.end(), out.begin());
  if (use_dif) {
    const auto neighbors = nearest_neighbors(scene, index, /*same_category=*/true);
    for (std::size_t k = 0; k < neighbors.size(); ++k) {
      const auto dl = relative_offset(self.box, scene.objects[neighbors[k]].box);
      std::copy(dl.begin(), dl.end(), out.begin() + 5 + 5 * k);
    }
  }
  return out;
}

Tensor location_representation(const SceneContext& scene, std::size_t index, const ad::ParamStore& params,
                               bool use_dif) {
  return ad::affine(Tensor::vector(location_input(scene, index, use_dif)), params.get("loc.W_l"),
                    params.get("loc.b_l"));
}

Tensor relation_inputs(const SceneContext& scene, std::size_t index) {
  const auto neighbors = nearest_neighbors(scene, index, /*same_category=*/false);
  if (neighbors.empty()) return {};
  const auto& self = scene.objects[index];
  const std::size_t d = self.feature_dim();
  std::vector<double> rows;
  rows.reserve(neighbors.size() * (d + 5));
  for (std::size_t j : neighbors) {
    const auto& other = scene.objects[j];
    rows.insert(rows.end(), other.pooled_feature.values().begin(), other.pooled_feature.values().end());
    const auto dm = relative_offset(self.box, other.box);
    rows.insert(rows.end(), dm.begin(), dm.end());
  }
  return Tensor::matrix(neighbors.size(), d + 5, std::move(rows));
}

Tensor relation_representation(const Tensor& inputs, const ad::ParamStore& params) {
  return ad::affine(inputs, params.get("rel.W_r"), params.get("rel.b_r"));
}

Tensor relationship_score(const SceneContext& scene, std::size_t index, const Tensor& q_rel,
                          const ad::ParamStore& params, const ForwardMode& mode, double dropout_ratio) {
  Tensor inputs = relation_inputs(scene, index);
  if (!inputs.defined()) return Tensor::scalar(kRelationFloor);
  Tensor visual = match_visual_embedding("rel.match", relation_representation(inputs, params), params, mode,
                                         dropout_ratio);
  Tensor phrase = match_phrase_embedding("rel.match", q_rel, params, mode, dropout_ratio);
  return ad::max_pool(ad::matvec(visual, phrase));
}

Tensor match_visual_embedding(const std::string& prefix, const Tensor& visual, const ad::ParamStore& params,
                              const ForwardMode& mode, double dropout_ratio) {
  return mlp_embedding(prefix, "vis", visual, params, mode, dropout_ratio);
}

Tensor match_phrase_embedding(const std::string& prefix, const Tensor& phrase, const ad::ParamStore& params,
                              const ForwardMode& mode, double dropout_ratio) {
  return mlp_embedding(prefix, "lang", phrase, params, mode, dropout_ratio);
}

Tensor matching_score(const std::string& prefix, const Tensor& visual, const Tensor& phrase,
                      const ad::ParamStore& params, const ForwardMode& mode, double dropout_ratio) {
  return ad::dot(match_visual_embedding(prefix, visual, params, mode, dropout_ratio),
                 match_phrase_embedding(prefix, phrase, params, mode, dropout_ratio));
}

}  // namespace mattnet::visual
