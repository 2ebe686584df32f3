#pragma once

#include <array>
#include <string>
#include <vector>

#include "mattnet/language/language_net.hpp"
#include "mattnet/language/vocabulary.hpp"

namespace mattnet::synth {

/// Hard keyword decomposition of an expression into the three module phrases.
struct ParseResult {
  std::vector<lang::Module> assignment;  // per token
  std::vector<std::string> flagged;      // out-of-grammar tokens (assigned to subj)

  std::vector<std::string> phrase(const std::vector<std::string>& tokens, lang::Module m) const;
  /// Uniform weights over the tokens assigned to each module; all zero when
  /// a module receives no token.
  std::array<std::vector<double>, lang::kModuleCount> masks() const;
};

/// Location words (left/right/top/bottom/first/second/middle) and the
/// connectives directly before them (on/in/the/from) go to loc. A relational
/// preposition (next/to/above/below/of) starts the rel phrase, which runs to
/// the end of the expression. Everything else is subj. Tokens missing from
/// `vocab` are flagged.
ParseResult template_parse(const std::vector<std::string>& tokens, const lang::Vocabulary& vocab);

}  // namespace mattnet::synth
