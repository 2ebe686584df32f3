#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "mattnet/autodiff/param_store.hpp"
#include "mattnet/forward_mode.hpp"
#include "mattnet/language/vocabulary.hpp"

namespace mattnet::lang {

using ad::Tensor;

enum class Module { subj = 0, loc = 1, rel = 2 };
inline constexpr std::array<Module, 3> kModules{Module::subj, Module::loc, Module::rel};
inline constexpr std::size_t kModuleCount = 3;

std::string_view module_name(Module m);
Module module_from_name(std::string_view name);

struct Expression {
  std::vector<int> token_ids;
  std::string raw_text;
};

/// Tokenizes `text` against `vocab`. Throws InputError when the result is
/// empty or longer than `max_length`.
Expression make_expression(const Vocabulary& vocab, std::string_view text, std::size_t max_length);
Expression make_expression(const Vocabulary& vocab, const std::vector<std::string>& tokens, std::size_t max_length);

/// Train-time dropout ratio on word embeddings and on encoder outputs.
inline constexpr double kLanguageDropout = 0.5;

struct LanguageConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 32;
  std::size_t max_length = 12;
};

/// Registers lang.embedding, lang.lstm_{fwd,bwd}.{W,b}, lang.f_{subj,loc,rel},
/// lang.W_m and lang.b_m.
void init_language_params(ad::ParamStore& params, const LanguageConfig& cfg, Rng& rng);

std::string attention_param_name(Module m);

struct EncodedExpression {
  Tensor embeddings;  // [T x d_e], after train-time dropout
  Tensor hidden;      // [T x 2 d_h], row t = [forward_t, backward_t]
};

/// Bidirectional LSTM encoder with zero initial states.
EncodedExpression encode_expression(const Expression& expr, const ad::ParamStore& params, const ForwardMode& mode);

/// softmax over t of f . h_t
Tensor word_attention(const Tensor& hidden, const Tensor& f);

/// sum_t a_t e_t over word embeddings.
Tensor phrase_embedding(const Tensor& attention, const Tensor& embeddings);

/// softmax(W_m^T [h_first; h_last] + b_m), ordered (subj, loc, rel).
Tensor module_weights(const Tensor& hidden, const ad::ParamStore& params);

struct LanguageOutput {
  Tensor embeddings;
  Tensor hidden;
  std::array<Tensor, kModuleCount> attention;
  std::array<Tensor, kModuleCount> phrase;
  Tensor weights;

  const Tensor& attention_for(Module m) const { return attention[static_cast<std::size_t>(m)]; }
  const Tensor& phrase_for(Module m) const { return phrase[static_cast<std::size_t>(m)]; }
  double weight(Module m) const { return weights[static_cast<std::size_t>(m)]; }
};

/// Full language attention network. When `fixed_attention` is given, those
/// masks replace the learned word attention (template-parser mode).
LanguageOutput run_language_network(const Expression& expr, const ad::ParamStore& params, const ForwardMode& mode,
                                    const std::array<std::vector<double>, kModuleCount>* fixed_attention = nullptr);

}  // namespace mattnet::lang
