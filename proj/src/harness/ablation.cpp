#include "mattnet/harness/ablation.hpp"

#include <fstream>

#include <fmt/format.h>

#include "mattnet/errors.hpp"

namespace mattnet::harness {

namespace {

const std::vector<std::string>& kinds() {
  static const std::vector<std::string> names{"subject", "subject+location", "subject+relationship", "composite"};
  return names;
}

}  // namespace

std::vector<AblationResult> run_ablation_suite(const std::vector<PreparedScene>& train_scenes,
                                               const std::vector<PreparedScene>& eval_scenes,
                                               const training::DataShape& shape, const training::TrainConfig& base,
                                               std::vector<int> rows, const Progress& progress) {
  std::vector<AblationResult> out;
  for (int row : rows) {
    training::TrainConfig cfg = base;
    cfg.ablation = training::ablation_row(row);
    if (progress) progress(fmt::format("row {} ({}): training", row, training::ablation_row_label(row)));
    auto trained = training::train(train_scenes, shape, cfg);
    AblationResult r{row, training::ablation_row_label(row), cfg.ablation,
                     evaluate(eval_scenes, trained.params, cfg.ablation, "eval", "groundtruth")};
    if (progress) progress(fmt::format("row {} ({}): accuracy {:.4f}", row, r.label, r.report.accuracy));
    out.push_back(std::move(r));
  }
  return out;
}

void write_ablation_csv(const std::vector<AblationResult>& results, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "row,label,baseline_matching,use_dif,use_rel,use_attr,use_attn_pool,parser_mode,n_expressions,accuracy";
  for (const auto& k : kinds()) out << ",acc_" << k;
  out << '\n';
  for (const auto& r : results) {
    const auto& a = r.config;
    out << fmt::format("{},{},{:d},{:d},{:d},{:d},{:d},{:d},{},{}", r.row, r.label, a.baseline_matching, a.use_dif,
                       a.use_rel, a.use_attr, a.use_attn_pool, a.parser_mode, r.report.n_expressions,
                       r.report.accuracy);
    for (const auto& k : kinds()) out << ',' << fmt::format("{}", r.report.kind_accuracy(k));
    out << '\n';
  }
  if (!out) throw InputError("write failed for " + path.string());
}

nlohmann::json ablation_json(const std::vector<AblationResult>& results) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json per_kind = nlohmann::json::object();
    for (const auto& [kind, k] : r.report.per_kind) per_kind[kind] = {{"n", k.n}, {"accuracy", k.accuracy}};
    rows.push_back({{"row", r.row},
                    {"label", r.label},
                    {"ablation", r.config.to_json()},
                    {"n_expressions", r.report.n_expressions},
                    {"accuracy", r.report.accuracy},
                    {"per_kind", per_kind}});
  }
  return {{"rows", rows}};
}

}  // namespace mattnet::harness
