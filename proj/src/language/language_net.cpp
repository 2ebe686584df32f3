#include "mattnet/language/language_net.hpp"

#include "mattnet/autodiff/ops.hpp"
#include "mattnet/errors.hpp"

namespace mattnet::lang {

namespace {

constexpr double kInitBound = 0.08;

Tensor row_vector(const Tensor& m, std::size_t r) {
  const int id = static_cast<int>(r);
  return ad::reshape(ad::row_select(m, std::span<const int>(&id, 1)), {m.cols()});
}

}  // namespace

std::string_view module_name(Module m) {
  switch (m) {
    case Module::subj: return "subj";
    case Module::loc: return "loc";
    case Module::rel: return "rel";
  }
  return "?";
}

Module module_from_name(std::string_view name) {
  if (name == "subj") return Module::subj;
  if (name == "loc") return Module::loc;
  if (name == "rel") return Module::rel;
  throw InputError("unknown module name '" + std::string(name) + "'");
}

Expression make_expression(const Vocabulary& vocab, const std::vector<std::string>& tokens, std::size_t max_length) {
  if (tokens.empty()) throw InputError("empty expression");
  if (tokens.size() > max_length) {
    throw InputError("expression has " + std::to_string(tokens.size()) + " tokens, limit is " +
                     std::to_string(max_length));
  }
  Expression e;
  e.token_ids = vocab.encode(tokens);
  for (std::size_t i = 0; i < tokens.size(); ++i) e.raw_text += (i ? " " : "") + tokens[i];
  return e;
}

Expression make_expression(const Vocabulary& vocab, std::string_view text, std::size_t max_length) {
  return make_expression(vocab, tokenize(text), max_length);
}

std::string attention_param_name(Module m) { return "lang.f_" + std::string(module_name(m)); }

void init_language_params(ad::ParamStore& params, const LanguageConfig& cfg, Rng& rng) {
  if (cfg.vocab_size < 2 || cfg.embed_dim == 0 || cfg.hidden_dim == 0) {
    throw UsageError("language config needs a vocabulary and positive dimensions");
  }
  const std::size_t de = cfg.embed_dim, dh = cfg.hidden_dim;
  params.add_uniform("lang.embedding", {cfg.vocab_size, de}, kInitBound, rng);
  for (const char* dir : {"fwd", "bwd"}) {
    params.add_uniform(std::string("lang.lstm_") + dir + ".W", {de + dh, 4 * dh}, kInitBound, rng);
    params.add_zeros(std::string("lang.lstm_") + dir + ".b", {4 * dh});
  }
  for (Module m : kModules) params.add_uniform(attention_param_name(m), {2 * dh}, kInitBound, rng);
  params.add_uniform("lang.W_m", {4 * dh, kModuleCount}, kInitBound, rng);
  params.add_zeros("lang.b_m", {kModuleCount});
}

EncodedExpression encode_expression(const Expression& expr, const ad::ParamStore& params, const ForwardMode& mode) {
  if (expr.token_ids.empty()) throw InputError("cannot encode an empty expression");
  const Tensor& table = params.get("lang.embedding");
  const double keep = 1.0 - kLanguageDropout;
  Tensor e = ad::row_select(table, expr.token_ids);
  if (mode.train) e = ad::dropout(e, keep, true, *mode.rng);
  Tensor fwd = ad::lstm(e, params.get("lang.lstm_fwd.W"), params.get("lang.lstm_fwd.b"), false);
  Tensor bwd = ad::lstm(e, params.get("lang.lstm_bwd.W"), params.get("lang.lstm_bwd.b"), true);
  Tensor h = ad::concat({fwd, bwd}, 1);
  if (mode.train) h = ad::dropout(h, keep, true, *mode.rng);
  return {e, h};
}

Tensor word_attention(const Tensor& hidden, const Tensor& f) { return ad::softmax(ad::matvec(hidden, f)); }

Tensor phrase_embedding(const Tensor& attention, const Tensor& embeddings) {
  if (attention.size() != embeddings.rows()) {
    throw DimensionError("phrase_embedding: attention length " + std::to_string(attention.size()) + " vs " +
                         std::to_string(embeddings.rows()) + " words");
  }
  return ad::vecmat(attention, embeddings);
}

Tensor module_weights(const Tensor& hidden, const ad::ParamStore& params) {
  Tensor ends = ad::concat({row_vector(hidden, 0), row_vector(hidden, hidden.rows() - 1)});
  return ad::softmax(ad::affine(ends, params.get("lang.W_m"), params.get("lang.b_m")));
}

LanguageOutput run_language_network(const Expression& expr, const ad::ParamStore& params, const ForwardMode& mode,
                                    const std::array<std::vector<double>, kModuleCount>* fixed_attention) {
  auto enc = encode_expression(expr, params, mode);
  LanguageOutput out;
  out.embeddings = enc.embeddings;
  out.hidden = enc.hidden;
  for (Module m : kModules) {
    const auto k = static_cast<std::size_t>(m);
    if (fixed_attention) {
      const auto& mask = (*fixed_attention)[k];
      if (mask.size() != expr.token_ids.size()) throw DimensionError("fixed attention mask length mismatch");
      out.attention[k] = Tensor::vector(mask);
    } else {
      out.attention[k] = word_attention(enc.hidden, params.get(attention_param_name(m)));
    }
    out.phrase[k] = phrase_embedding(out.attention[k], enc.embeddings);
  }
  out.weights = module_weights(enc.hidden, params);
  return out;
}

}  // namespace mattnet::lang
