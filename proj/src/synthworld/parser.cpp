#include "mattnet/synthworld/parser.hpp"

#include <algorithm>
#include <set>

namespace mattnet::synth {

namespace {

const std::set<std::string> kLocationWords{"left", "right", "top", "bottom", "first", "second", "middle"};
const std::set<std::string> kLocationLinks{"on", "in", "the", "from"};
const std::set<std::string> kRelationWords{"next", "to", "above", "below", "of"};

}  // namespace

std::vector<std::string> ParseResult::phrase(const std::vector<std::string>& tokens, lang::Module m) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tokens.size() && i < assignment.size(); ++i) {
    if (assignment[i] == m) out.push_back(tokens[i]);
  }
  return out;
}

std::array<std::vector<double>, lang::kModuleCount> ParseResult::masks() const {
  std::array<std::vector<double>, lang::kModuleCount> out;
  for (lang::Module m : lang::kModules) {
    auto& mask = out[static_cast<std::size_t>(m)];
    mask.assign(assignment.size(), 0.0);
    const auto count = std::count(assignment.begin(), assignment.end(), m);
    if (count == 0) continue;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      if (assignment[i] == m) mask[i] = 1.0 / static_cast<double>(count);
    }
  }
  return out;
}

ParseResult template_parse(const std::vector<std::string>& tokens, const lang::Vocabulary& vocab) {
  ParseResult r;
  r.assignment.assign(tokens.size(), lang::Module::subj);
  std::size_t rel_start = tokens.size();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (kRelationWords.count(tokens[i])) {
      rel_start = i;
      break;
    }
  }
  for (std::size_t i = 0; i < rel_start; ++i) {
    if (!kLocationWords.count(tokens[i])) continue;
    r.assignment[i] = lang::Module::loc;
    for (std::size_t j = i; j-- > 0;) {
      if (r.assignment[j] == lang::Module::loc) continue;
      if (!kLocationLinks.count(tokens[j])) break;
      r.assignment[j] = lang::Module::loc;
    }
  }
  for (std::size_t i = rel_start; i < tokens.size(); ++i) r.assignment[i] = lang::Module::rel;
  for (const auto& t : tokens) {
    if (!vocab.contains(t)) r.flagged.push_back(t);
  }
  return r;
}

}  // namespace mattnet::synth
