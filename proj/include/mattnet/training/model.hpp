#pragma once

#include <array>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mattnet/autodiff/param_store.hpp"
#include "mattnet/forward_mode.hpp"
#include "mattnet/language/language_net.hpp"
#include "mattnet/training/example.hpp"
#include "mattnet/visual/modules.hpp"

namespace mattnet::training {

using ad::Tensor;

/// Which parts of the model are active. The matching baseline scores a
/// pooled visual + location vector against the encoder's last hidden row and
/// excludes every other switch.
struct AblationConfig {
  bool baseline_matching = false;
  bool use_dif = true;
  bool use_rel = true;
  bool use_attr = true;
  bool use_attn_pool = true;
  bool parser_mode = false;

  /// Throws InputError when the baseline is combined with other switches.
  void validate() const;
  /// Weight mask over (subj, loc, rel).
  std::array<double, lang::kModuleCount> module_mask() const;
  nlohmann::json to_json() const;
  static AblationConfig from_json(const nlohmann::json& doc);
  bool operator==(const AblationConfig&) const = default;
};

inline constexpr int kAblationRows = 7;
/// Rows 1..7: baseline, subj+loc, +dif, +rel, +attr, +attn pool, parser.
AblationConfig ablation_row(int row);
std::string ablation_row_label(int row);

struct ModelConfig {
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 32;
  std::size_t attention_dim = 32;
  std::size_t location_dim = 32;
  std::size_t relation_dim = 32;
  std::size_t match_hidden = 32;
  std::size_t match_dim = 32;
  double match_dropout = 0.2;

  lang::LanguageConfig language(const DataShape& shape) const;
  visual::VisualConfig visual(const DataShape& shape) const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& doc);
};

/// Fresh parameters: uniform(-0.08, 0.08) matrices, zero biases. Only the
/// groups the ablation uses are registered.
ad::ParamStore init_model(const ModelConfig& cfg, const DataShape& shape, const AblationConfig& ablation,
                          std::uint64_t seed);

/// Per-object work shared by every expression scored against the object.
struct ObjectEncoding {
  const visual::SceneContext* scene = nullptr;
  std::size_t index = 0;
  Tensor attr_blob;
  Tensor subject_blob;         // one averaged row under average pooling
  Tensor projected_blob;       // attentional pooling only
  Tensor subject_embedding;    // average pooling only: matched subject feature
  std::size_t cells = 0;
  Tensor location_embedding;   // matched visual side of the location branch
  Tensor relation_embeddings;  // one row per neighbour; undefined without neighbours
  Tensor baseline_embedding;
};

/// Per-expression work shared by every object.
struct ExpressionEncoding {
  lang::LanguageOutput language;
  Tensor weights;  // renormalized over enabled modules
  Tensor subject_query;
  Tensor location_query;
  Tensor relation_query;
  Tensor baseline_query;
};

struct ScoreBreakdown {
  Tensor s_subj, s_loc, s_rel;
  Tensor weights;  // (w_subj, w_loc, w_rel)
  Tensor total;

  double subj() const { return s_subj.item(); }
  double loc() const { return s_loc.item(); }
  double rel() const { return s_rel.item(); }
  double w(lang::Module m) const { return weights[static_cast<std::size_t>(m)]; }
  double value() const { return total.item(); }
};

class Scorer {
 public:
  Scorer(const ad::ParamStore& params, const AblationConfig& ablation, const ForwardMode& mode,
         double match_dropout);

  ObjectEncoding encode_object(const visual::SceneContext& scene, std::size_t index) const;
  ExpressionEncoding encode_expression(const ExampleExpression& expr) const;
  ScoreBreakdown score(const ObjectEncoding& obj, const ExpressionEncoding& expr) const;
  /// Pooled subject feature and its cell attention (uniform in average mode).
  visual::SubjectRepresentation subject(const ObjectEncoding& obj, const ExpressionEncoding& expr) const;
  Tensor attribute_probs(const ObjectEncoding& obj) const;

  const AblationConfig& ablation() const { return ablation_; }

 private:
  const ad::ParamStore& params_;
  AblationConfig ablation_;
  ForwardMode mode_;
  double dropout_;
};

/// Uncached, evaluation-mode score of one object for one expression.
ScoreBreakdown overall_score(const visual::SceneContext& scene, std::size_t index, const ExampleExpression& expr,
                             const ad::ParamStore& params, const AblationConfig& ablation);

}  // namespace mattnet::training
