#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mattnet/autodiff/param_store.hpp"
#include "mattnet/forward_mode.hpp"
#include "mattnet/visual/scene.hpp"

namespace mattnet::visual {

using ad::Tensor;

struct VisualConfig {
  std::size_t feature_dim = 16;      // d, width of both grids and of the attribute blob
  std::size_t grid_side = 7;         // g, G = g*g cells
  std::size_t attribute_count = 11;  // A
  std::size_t phrase_dim = 32;       // d_e of the phrase embeddings
  std::size_t attention_dim = 32;    // rows of W_v / W_q
  std::size_t location_dim = 32;     // output of W_l
  std::size_t relation_dim = 32;     // output of W_r
  std::size_t match_hidden = 32;     // first matching layer
  std::size_t match_dim = 32;        // joint embedding width
  double match_dropout = 0.2;        // on both matching inputs, train time

  std::size_t cells() const { return grid_side * grid_side; }
};

inline constexpr std::size_t kLocationInputDim = 5 + 5 * kMaxNeighbors;
inline constexpr double kRelationFloor = -1.0;

// Parameter registration. Each scoring branch owns a separate matching
// function under "<branch>.match".
void init_subject_params(ad::ParamStore& params, const VisualConfig& cfg, Rng& rng);
void init_location_params(ad::ParamStore& params, const VisualConfig& cfg, Rng& rng);
void init_relation_params(ad::ParamStore& params, const VisualConfig& cfg, Rng& rng);
/// fc1 [visual_in x hidden], fc2 [hidden x dim] on both the visual and phrase side.
void init_matching_params(ad::ParamStore& params, const std::string& prefix, std::size_t visual_in,
                          std::size_t phrase_in, const VisualConfig& cfg, Rng& rng);

// ---- subject module -------------------------------------------------------

/// Per-cell linear fuse of [grid_low, grid_high] -> attribute blob [G x d].
Tensor attribute_blob(const CandidateObject& obj, const ad::ParamStore& params);
/// sigmoid(head(mean over cells of blob)), length A.
Tensor attribute_probs(const Tensor& blob, const ad::ParamStore& params);
Tensor predict_attributes(const CandidateObject& obj, const ad::ParamStore& params);

/// Per-cell linear fuse of [attribute blob, grid_high] -> subject blob V [G x d].
Tensor subject_blob(const CandidateObject& obj, const Tensor& attr_blob, const ad::ParamStore& params);

/// Both blobs fused from cell-averaged grids, one row each. The fuses are
/// affine, so these equal the cell means of the full blobs.
struct MeanBlobs {
  Tensor attr_blob;     // [1 x d]
  Tensor subject_blob;  // [1 x d]
};
MeanBlobs mean_blobs(const CandidateObject& obj, const ad::ParamStore& params);

enum class Pooling { attentional, average };

struct SubjectRepresentation {
  Tensor feature;    // [d]
  Tensor attention;  // [G], uniform in average mode
};

/// Attentional mode: a = softmax(w_ha . tanh(V W_v + q W_q)) over cells,
/// feature = sum_i a_i v_i. Average mode uses a_i = 1/G.
/// `projected_blob` (V W_v) may be passed to reuse it across phrases.
SubjectRepresentation subject_representation(const Tensor& blob, const Tensor& q_subj, const ad::ParamStore& params,
                                             Pooling pooling, const Tensor* projected_blob = nullptr);
Tensor project_subject_blob(const Tensor& blob, const ad::ParamStore& params);

// ---- location module ------------------------------------------------------

/// Raw 30-d input [l_i; dl_i]. dl_i holds up to five same-category
/// neighbour offsets, zero padded; all zero when `use_dif` is false.
std::vector<double> location_input(const SceneContext& scene, std::size_t index, bool use_dif);
/// W_l [l; dl] + b_l
Tensor location_representation(const SceneContext& scene, std::size_t index, const ad::ParamStore& params,
                               bool use_dif);

// ---- relationship module --------------------------------------------------

/// Rows [pooled_feature_j; dm_ij] for up to five nearest neighbours of any
/// category. Undefined tensor when the object has no neighbour.
Tensor relation_inputs(const SceneContext& scene, std::size_t index);
/// W_r [v_j; dm_ij] + b_r per neighbour row.
Tensor relation_representation(const Tensor& inputs, const ad::ParamStore& params);
/// max_j F(v~_ij, q_rel), or kRelationFloor without neighbours.
Tensor relationship_score(const SceneContext& scene, std::size_t index, const Tensor& q_rel,
                          const ad::ParamStore& params, const ForwardMode& mode, double dropout_ratio = 0.2);

// ---- matching function ----------------------------------------------------

/// l2norm(fc2(relu(fc1(dropout(x))))) for a vector or row-wise for a matrix.
Tensor match_visual_embedding(const std::string& prefix, const Tensor& visual, const ad::ParamStore& params,
                              const ForwardMode& mode, double dropout_ratio);
Tensor match_phrase_embedding(const std::string& prefix, const Tensor& phrase, const ad::ParamStore& params,
                              const ForwardMode& mode, double dropout_ratio);
/// Inner product of the two normalized embeddings, in [-1, 1].
Tensor matching_score(const std::string& prefix, const Tensor& visual, const Tensor& phrase,
                      const ad::ParamStore& params, const ForwardMode& mode, double dropout_ratio = 0.2);

}  // namespace mattnet::visual
