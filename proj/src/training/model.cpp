#include "mattnet/training/model.hpp"

#include "mattnet/autodiff/ops.hpp"
#include "mattnet/errors.hpp"

namespace mattnet::training {

namespace {

const char* const kAblationKeys[] = {"baseline_matching", "use_dif", "use_rel", "use_attr", "use_attn_pool",
                                     "parser_mode"};

bool* ablation_field(AblationConfig& a, std::string_view key) {
  if (key == "baseline_matching") return &a.baseline_matching;
  if (key == "use_dif") return &a.use_dif;
  if (key == "use_rel") return &a.use_rel;
  if (key == "use_attr") return &a.use_attr;
  if (key == "use_attn_pool") return &a.use_attn_pool;
  if (key == "parser_mode") return &a.parser_mode;
  return nullptr;
}

Tensor vector_of(const std::vector<double>& v) { return Tensor::vector(v); }

}  // namespace

void AblationConfig::validate() const {
  if (baseline_matching && (use_dif || use_rel || use_attr || use_attn_pool || parser_mode)) {
    throw InputError("baseline_matching excludes use_dif, use_rel, use_attr, use_attn_pool and parser_mode");
  }
}

std::array<double, lang::kModuleCount> AblationConfig::module_mask() const {
  if (baseline_matching) return {1.0, 0.0, 0.0};
  return {1.0, 1.0, use_rel ? 1.0 : 0.0};
}

nlohmann::json AblationConfig::to_json() const {
  nlohmann::json doc;
  AblationConfig copy = *this;
  for (const char* key : kAblationKeys) doc[key] = *ablation_field(copy, key);
  return doc;
}

AblationConfig AblationConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw InputError("ablation config must be a JSON object");
  AblationConfig a;
  for (const auto& [key, value] : doc.items()) {
    bool* field = ablation_field(a, key);
    if (!field) throw InputError("unknown ablation key '" + key + "'");
    if (!value.is_boolean()) throw InputError("ablation key '" + key + "' must be true or false");
    *field = value.get<bool>();
  }
  a.validate();
  return a;
}

AblationConfig ablation_row(int row) {
  if (row < 1 || row > kAblationRows) throw InputError("ablation rows are 1.." + std::to_string(kAblationRows));
  AblationConfig a;
  if (row == 1) return {true, false, false, false, false, false};
  a.use_dif = row >= 3;
  a.use_rel = row >= 4;
  a.use_attr = row >= 5;
  a.use_attn_pool = row >= 6;
  a.parser_mode = row == 7;
  return a;
}

std::string ablation_row_label(int row) {
  static const char* labels[] = {"baseline", "subj+loc", "+dif", "+rel", "+attr", "+attn_pool", "parser"};
  if (row < 1 || row > kAblationRows) throw InputError("ablation rows are 1.." + std::to_string(kAblationRows));
  return labels[row - 1];
}

lang::LanguageConfig ModelConfig::language(const DataShape& shape) const {
  return {shape.vocab_size, embed_dim, hidden_dim, shape.max_length};
}

visual::VisualConfig ModelConfig::visual(const DataShape& shape) const {
  visual::VisualConfig v;
  v.feature_dim = shape.feature_dim;
  v.grid_side = shape.grid_side;
  v.attribute_count = shape.attribute_count;
  v.phrase_dim = embed_dim;
  v.attention_dim = attention_dim;
  v.location_dim = location_dim;
  v.relation_dim = relation_dim;
  v.match_hidden = match_hidden;
  v.match_dim = match_dim;
  v.match_dropout = match_dropout;
  return v;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"embed_dim", embed_dim},         {"hidden_dim", hidden_dim},     {"attention_dim", attention_dim},
          {"location_dim", location_dim},   {"relation_dim", relation_dim}, {"match_hidden", match_hidden},
          {"match_dim", match_dim},         {"match_dropout", match_dropout}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw InputError("model config must be a JSON object");
  ModelConfig m;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "match_dropout") {
        m.match_dropout = value.get<double>();
        continue;
      }
      std::size_t* field = key == "embed_dim"       ? &m.embed_dim
                           : key == "hidden_dim"    ? &m.hidden_dim
                           : key == "attention_dim" ? &m.attention_dim
                           : key == "location_dim"  ? &m.location_dim
                           : key == "relation_dim"  ? &m.relation_dim
                           : key == "match_hidden"  ? &m.match_hidden
                           : key == "match_dim"     ? &m.match_dim
                                                    : nullptr;
      if (!field) throw InputError("unknown model key '" + key + "'");
      if (!value.is_number_unsigned() || value.get<std::size_t>() == 0) {
        throw InputError("model key '" + key + "' must be a positive integer");
      }
      *field = value.get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model config: ") + e.what());
  }
  if (!(m.match_dropout >= 0.0 && m.match_dropout < 1.0)) throw InputError("match_dropout must be in [0, 1)");
  return m;
}

ad::ParamStore init_model(const ModelConfig& cfg, const DataShape& shape, const AblationConfig& ablation,
                          std::uint64_t seed) {
  ablation.validate();
  Rng rng(seed);
  ad::ParamStore params;
  lang::init_language_params(params, cfg.language(shape), rng);
  const auto vis = cfg.visual(shape);
  if (ablation.baseline_matching) {
    // The baseline reads the encoder's last state directly: no word attention, no module weights.
    for (lang::Module m : lang::kModules) params.remove(lang::attention_param_name(m));
    params.remove("lang.W_m");
    params.remove("lang.b_m");
    visual::init_matching_params(params, "base.match", 2 * shape.feature_dim + 5, 2 * cfg.hidden_dim, vis, rng);
    return params;
  }
  visual::init_subject_params(params, vis, rng);
  visual::init_location_params(params, vis, rng);
  if (ablation.use_rel) visual::init_relation_params(params, vis, rng);
  return params;
}

Scorer::Scorer(const ad::ParamStore& params, const AblationConfig& ablation, const ForwardMode& mode,
               double match_dropout)
    : params_(params), ablation_(ablation), mode_(mode), dropout_(match_dropout) {
  ablation_.validate();
}

ObjectEncoding Scorer::encode_object(const visual::SceneContext& scene, std::size_t index) const {
  ObjectEncoding enc;
  enc.scene = &scene;
  enc.index = index;
  const auto& obj = scene.objects.at(index);
  if (ablation_.baseline_matching) {
    auto loc = visual::location_input(scene, index, false);
    loc.resize(5);
    Tensor input = ad::concat({ad::mean_pool(obj.grid_low, 0), obj.pooled_feature, vector_of(loc)});
    enc.baseline_embedding = visual::match_visual_embedding("base.match", input, params_, mode_, dropout_);
    return enc;
  }
  enc.cells = obj.grid_high.rows();
  if (ablation_.use_attn_pool) {
    enc.attr_blob = visual::attribute_blob(obj, params_);
    enc.subject_blob = visual::subject_blob(obj, enc.attr_blob, params_);
    enc.projected_blob = visual::project_subject_blob(enc.subject_blob, params_);
  } else {
    // Averaging commutes with the affine fuses, so pool before them and
    // match the result once per object instead of once per expression.
    auto blobs = visual::mean_blobs(obj, params_);
    enc.attr_blob = std::move(blobs.attr_blob);
    enc.subject_blob = std::move(blobs.subject_blob);
    enc.subject_embedding = visual::match_visual_embedding(
        "subj.match", ad::reshape(enc.subject_blob, {enc.subject_blob.cols()}), params_, mode_, dropout_);
  }
  enc.location_embedding =
      visual::match_visual_embedding("loc.match", visual::location_representation(scene, index, params_, ablation_.use_dif),
                                     params_, mode_, dropout_);
  if (ablation_.use_rel) {
    Tensor inputs = visual::relation_inputs(scene, index);
    if (inputs.defined()) {
      enc.relation_embeddings = visual::match_visual_embedding(
          "rel.match", visual::relation_representation(inputs, params_), params_, mode_, dropout_);
    }
  }
  return enc;
}

ExpressionEncoding Scorer::encode_expression(const ExampleExpression& expr) const {
  ExpressionEncoding enc;
  if (ablation_.baseline_matching) {
    auto encoded = lang::encode_expression(expr.expression, params_, mode_);
    enc.language.embeddings = encoded.embeddings;
    enc.language.hidden = encoded.hidden;
    const Tensor& h = enc.language.hidden;
    const int last = static_cast<int>(h.rows()) - 1;
    Tensor last_row = ad::reshape(ad::row_select(h, std::span<const int>(&last, 1)), {h.cols()});
    enc.baseline_query = visual::match_phrase_embedding("base.match", last_row, params_, mode_, dropout_);
    enc.weights = Tensor::vector({1.0, 0.0, 0.0});
    return enc;
  }
  const bool fixed = ablation_.parser_mode;
  enc.language = lang::run_language_network(expr.expression, params_, mode_, fixed ? &expr.parser_masks : nullptr);
  const auto mask = ablation_.module_mask();
  enc.weights = ablation_.use_rel ? enc.language.weights : ad::renormalize(enc.language.weights, mask);
  using lang::Module;
  enc.subject_query = visual::match_phrase_embedding("subj.match", enc.language.phrase_for(Module::subj), params_,
                                                     mode_, dropout_);
  enc.location_query =
      visual::match_phrase_embedding("loc.match", enc.language.phrase_for(Module::loc), params_, mode_, dropout_);
  if (ablation_.use_rel) {
    enc.relation_query =
        visual::match_phrase_embedding("rel.match", enc.language.phrase_for(Module::rel), params_, mode_, dropout_);
  }
  return enc;
}

visual::SubjectRepresentation Scorer::subject(const ObjectEncoding& obj, const ExpressionEncoding& expr) const {
  if (!ablation_.use_attn_pool) {
    return {ad::reshape(obj.subject_blob, {obj.subject_blob.cols()}),
            Tensor::filled({obj.cells}, 1.0 / static_cast<double>(obj.cells))};
  }
  return visual::subject_representation(obj.subject_blob, expr.language.phrase_for(lang::Module::subj), params_,
                                        visual::Pooling::attentional, &obj.projected_blob);
}

ScoreBreakdown Scorer::score(const ObjectEncoding& obj, const ExpressionEncoding& expr) const {
  ScoreBreakdown out;
  out.weights = expr.weights;
  if (ablation_.baseline_matching) {
    out.s_subj = ad::dot(obj.baseline_embedding, expr.baseline_query);
    out.s_loc = Tensor::scalar(0.0);
    out.s_rel = Tensor::scalar(0.0);
    out.total = out.s_subj;
    return out;
  }
  const Tensor subject_embedding =
      obj.subject_embedding.defined()
          ? obj.subject_embedding
          : visual::match_visual_embedding("subj.match", subject(obj, expr).feature, params_, mode_, dropout_);
  out.s_subj = ad::dot(subject_embedding, expr.subject_query);
  out.s_loc = ad::dot(obj.location_embedding, expr.location_query);
  if (!ablation_.use_rel) {
    out.s_rel = Tensor::scalar(0.0);
  } else if (!obj.relation_embeddings.defined()) {
    out.s_rel = Tensor::scalar(visual::kRelationFloor);
  } else {
    out.s_rel = ad::max_pool(ad::matvec(obj.relation_embeddings, expr.relation_query));
  }
  out.total = ad::dot(out.weights, ad::concat({out.s_subj, out.s_loc, out.s_rel}));
  return out;
}

Tensor Scorer::attribute_probs(const ObjectEncoding& obj) const {
  if (!obj.attr_blob.defined()) throw UsageError("the matching baseline has no attribute branch");
  return visual::attribute_probs(obj.attr_blob, params_);
}

ScoreBreakdown overall_score(const visual::SceneContext& scene, std::size_t index, const ExampleExpression& expr,
                             const ad::ParamStore& params, const AblationConfig& ablation) {
  Scorer scorer(params, ablation, ForwardMode::eval(), 0.0);
  return scorer.score(scorer.encode_object(scene, index), scorer.encode_expression(expr));
}

}  // namespace mattnet::training
