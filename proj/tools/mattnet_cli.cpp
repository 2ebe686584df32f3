#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mattnet/autodiff/checkpoint.hpp"
#include "mattnet/errors.hpp"
#include "mattnet/harness/ablation.hpp"
#include "mattnet/harness/evaluation.hpp"
#include "mattnet/harness/inspect.hpp"
#include "mattnet/harness/manifest.hpp"
#include "mattnet/synthworld/dataset.hpp"
#include "mattnet/synthworld/expressions.hpp"
#include "mattnet/synthworld/parser.hpp"
#include "mattnet/synthworld/prepare.hpp"

namespace fs = std::filesystem;
using namespace mattnet;
using nlohmann::json;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& doc, int indent = -1) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << doc.dump(indent) << '\n';
  if (!out) throw InputError("write failed for " + path.string());
}

struct LoadedData {
  synth::Dataset data;
  synth::World world;
};

LoadedData load_data(const fs::path& dir) {
  auto data = synth::read_dataset(dir);
  auto world = synth::make_world(data.spec);
  return {std::move(data), std::move(world)};
}

// Train config from a file, then flag overrides.
struct TrainOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_iters;
  std::optional<double> lr;
  std::optional<int> row;
};

training::TrainConfig train_config(const std::string& file, const TrainOverrides& o) {
  json doc = file.empty() ? json::object() : read_json_file(file);
  if (o.seed) doc["seed"] = *o.seed;
  if (o.max_iters) doc["max_iters"] = *o.max_iters;
  if (o.lr) doc["lr"] = *o.lr;
  if (o.row) doc["ablation"] = training::ablation_row(*o.row).to_json();
  return training::TrainConfig::from_json(doc);
}

// Ablation switches a checkpoint was trained with: an explicit config file
// wins, then the manifest written beside the checkpoint.
training::AblationConfig checkpoint_ablation(const fs::path& ckpt, const std::string& config_file) {
  if (!config_file.empty()) return training::TrainConfig::from_json(read_json_file(config_file)).ablation;
  const auto manifest = harness::manifest_path(ckpt);
  if (fs::exists(manifest)) {
    const json doc = read_json_file(manifest);
    if (doc.contains("config") && doc["config"].contains("ablation")) {
      return training::AblationConfig::from_json(doc["config"]["ablation"]);
    }
  }
  const auto params = ad::load_checkpoint(ckpt);
  if (params.contains("base.match.vis_fc1.W")) return training::ablation_row(1);
  return {};
}

synth::CandidateMode parse_mode(const std::string& name) { return synth::candidate_mode_from_name(name); }

int cmd_gen(const std::string& spec_file, const fs::path& out, std::optional<std::uint64_t> seed,
            std::optional<std::size_t> n_train, std::optional<std::size_t> n_val, std::optional<std::size_t> n_test,
            bool materialize) {
  json doc = spec_file.empty() ? json::object() : read_json_file(spec_file);
  if (!doc.is_object()) throw InputError("spec must be a JSON object");
  std::size_t counts[3] = {2000, 300, 300};
  const char* keys[3] = {"n_train", "n_val", "n_test"};
  for (int i = 0; i < 3; ++i) {
    if (!doc.contains(keys[i])) continue;
    if (!doc[keys[i]].is_number_unsigned()) throw InputError(std::string(keys[i]) + " must be a non-negative integer");
    counts[i] = doc[keys[i]].get<std::size_t>();
    doc.erase(keys[i]);
  }
  if (n_train) counts[0] = *n_train;
  if (n_val) counts[1] = *n_val;
  if (n_test) counts[2] = *n_test;
  if (counts[0] == 0 || counts[1] == 0 || counts[2] == 0) throw InputError("split sizes must be positive");
  if (seed) doc["seed"] = *seed;
  const auto spec = synth::WorldSpec::from_json(doc);
  const auto world = synth::make_world(spec);
  const auto data = synth::build_dataset(world, counts[0], counts[1], counts[2]);
  synth::write_dataset(world, data, out, materialize);
  json config{{"world", spec.to_json()},
              {"n_train", counts[0]},
              {"n_val", counts[1]},
              {"n_test", counts[2]},
              {"materialize_features", materialize}};
  harness::write_manifest(out, "gen", config, spec.seed);
  std::size_t exprs = 0;
  for (const auto& s : data.train) exprs += s.expressions.size();
  std::cerr << fmt::format("wrote {} / {} / {} scenes to {} ({} training expressions)\n", counts[0], counts[1],
                           counts[2], out.string(), exprs);
  return 0;
}

int cmd_train(const fs::path& data_dir, const std::string& config_file, const TrainOverrides& overrides,
              const fs::path& out, const std::string& curves, bool quiet) {
  const auto cfg = train_config(config_file, overrides);
  const auto loaded = load_data(data_dir);
  const auto train_scenes = synth::prepare_split(loaded.world, loaded.data.train, synth::CandidateMode::groundtruth, 0);
  const auto val_scenes = synth::prepare_split(loaded.world, loaded.data.val, synth::CandidateMode::groundtruth, 0);
  std::size_t step = 0;
  auto validate = [&](const ad::ParamStore& params) {
    step += cfg.val_every;
    const double acc = harness::evaluate(val_scenes, params, cfg.ablation, "val", "groundtruth").accuracy;
    if (!quiet) std::cerr << fmt::format("iter {:>6}  val_acc {:.4f}\n", std::min(step, cfg.max_iters), acc);
    return acc;
  };
  const auto result = training::train(train_scenes, synth::data_shape(loaded.world), cfg, validate);
  ad::save_checkpoint(result.params, out);
  json config = cfg.to_json();
  config["data"] = data_dir.string();
  harness::write_manifest(out, "train", config, cfg.seed);
  if (!curves.empty()) {
    training::write_curves(result.curve, curves);
    harness::write_manifest(curves, "train", config, cfg.seed);
  }
  return 0;
}

int cmd_eval(const fs::path& data_dir, const fs::path& ckpt, const std::string& mode_name,
             std::optional<double> jitter, const std::string& split, const fs::path& report_path,
             const std::string& config_file) {
  const auto loaded = load_data(data_dir);
  const auto mode = parse_mode(mode_name);
  const double j = jitter.value_or(loaded.data.spec.jitter);
  if (!(j >= 0.0 && j <= 0.3)) throw InputError("jitter must be in [0, 0.3]");
  const auto ablation = checkpoint_ablation(ckpt, config_file);
  const auto params = ad::load_checkpoint(ckpt);
  const auto scenes = synth::prepare_split(loaded.world, loaded.data.split(split), mode, j);
  const auto report = harness::evaluate(scenes, params, ablation, split, mode_name);
  json doc = report.to_json();
  doc["jitter"] = mode == synth::CandidateMode::jittered ? j : 0.0;
  write_json_file(report_path, doc, 2);
  harness::write_manifest(report_path, "eval",
                          {{"data", data_dir.string()},
                           {"ckpt", ckpt.string()},
                           {"candidates", mode_name},
                           {"jitter", j},
                           {"split", split},
                           {"ablation", ablation.to_json()}},
                          loaded.data.spec.seed);
  std::cout << fmt::format("{} {} accuracy {:.4f} over {} expressions\n", split, mode_name, report.accuracy,
                           report.n_expressions);
  for (const auto& [kind, k] : report.per_kind) {
    std::cout << fmt::format("  {:<22} {:.4f} (n={})\n", kind, k.accuracy, k.n);
  }
  return 0;
}

int cmd_ablate(const fs::path& data_dir, const fs::path& out, const std::string& config_file,
               const TrainOverrides& overrides, const std::vector<int>& rows, const std::string& split) {
  const auto cfg = train_config(config_file, overrides);
  const auto loaded = load_data(data_dir);
  const auto train_scenes = synth::prepare_split(loaded.world, loaded.data.train, synth::CandidateMode::groundtruth, 0);
  const auto eval_scenes =
      synth::prepare_split(loaded.world, loaded.data.split(split), synth::CandidateMode::groundtruth, 0);
  const auto results = harness::run_ablation_suite(train_scenes, eval_scenes, synth::data_shape(loaded.world), cfg,
                                                   rows, [](const std::string& msg) { std::cerr << msg << '\n'; });
  harness::write_ablation_csv(results, out);
  fs::path json_path = out;
  json_path.replace_extension(".json");
  write_json_file(json_path, harness::ablation_json(results), 2);
  json config = cfg.to_json();
  config["data"] = data_dir.string();
  config["split"] = split;
  config["rows"] = rows;
  harness::write_manifest(out, "ablate", config, cfg.seed);
  return 0;
}

const synth::SyntheticScene& find_scene(const synth::Dataset& data, std::uint64_t id) {
  for (const auto* split : {&data.train, &data.val, &data.test}) {
    for (const auto& s : *split) {
      if (s.scene_id == id) return s;
    }
  }
  throw InputError("unknown scene id " + std::to_string(id));
}

int cmd_inspect(const fs::path& data_dir, const fs::path& ckpt, std::uint64_t scene_id, const std::string& text,
                const fs::path& out, const std::string& config_file, const std::string& mode_name) {
  const auto loaded = load_data(data_dir);
  const auto ablation = checkpoint_ablation(ckpt, config_file);
  const auto params = ad::load_checkpoint(ckpt);
  synth::SyntheticScene scene = find_scene(loaded.data, scene_id);
  const auto tokens = lang::tokenize(text);
  scene.expressions.clear();
  auto prepared = synth::prepare_scene(loaded.world, scene, parse_mode(mode_name), loaded.data.spec.jitter);
  training::ExampleExpression expr;
  expr.expression = lang::make_expression(loaded.world.vocab, tokens, synth::kMaxExpressionLength);
  expr.tokens = tokens;
  const auto parse = synth::template_parse(tokens, loaded.world.vocab);
  expr.parser_masks = parse.masks();
  json bundle = harness::inspect_bundle(prepared, expr, params, ablation, loaded.world.attributes);
  bundle["unknown_tokens"] = parse.flagged;
  bundle["candidates_mode"] = mode_name;
  write_json_file(out, bundle, 2);
  harness::write_manifest(out, "inspect",
                          {{"data", data_dir.string()},
                           {"ckpt", ckpt.string()},
                           {"scene", scene_id},
                           {"expr", text},
                           {"candidates", mode_name},
                           {"ablation", ablation.to_json()}},
                          loaded.data.spec.seed);
  std::cout << fmt::format("predicted object {} for \"{}\"\n", bundle["predicted"].get<std::size_t>(), text);
  return 0;
}

int cmd_parse_baseline(const fs::path& data_dir, const std::string& split, const fs::path& out,
                       const std::string& ckpt, const std::string& report_path, const std::string& config_file) {
  const auto loaded = load_data(data_dir);
  const auto& scenes = loaded.data.split(split);
  std::ofstream lines(out);
  if (!lines) throw InputError("cannot write " + out.string());
  std::size_t tokens = 0, agree = 0, flagged = 0;
  for (const auto& s : scenes) {
    for (std::size_t e = 0; e < s.expressions.size(); ++e) {
      const auto& ex = s.expressions[e];
      const auto parse = synth::template_parse(ex.tokens, loaded.world.vocab);
      json row{{"scene_id", s.scene_id}, {"expression", e}, {"tokens", ex.tokens}};
      for (lang::Module m : lang::kModules) row[std::string(lang::module_name(m))] = parse.phrase(ex.tokens, m);
      row["flagged"] = parse.flagged;
      lines << row.dump() << '\n';
      for (std::size_t t = 0; t < ex.tokens.size(); ++t) {
        ++tokens;
        agree += lang::module_name(parse.assignment[t]) == ex.gold_tags[t];
      }
      flagged += parse.flagged.size();
    }
  }
  const double agreement = tokens ? static_cast<double>(agree) / static_cast<double>(tokens) : 0.0;
  std::cout << fmt::format("parser/gold tag agreement {:.4f} over {} tokens, {} flagged\n", agreement, tokens, flagged);
  json config{{"data", data_dir.string()}, {"split", split}};
  if (!ckpt.empty()) {
    auto ablation = checkpoint_ablation(ckpt, config_file);
    if (ablation.baseline_matching) throw InputError("the matching baseline has no word attention to replace");
    ablation.parser_mode = true;
    const auto params = ad::load_checkpoint(ckpt);
    const auto prepared = synth::prepare_split(loaded.world, scenes, synth::CandidateMode::groundtruth, 0);
    const auto report = harness::evaluate(prepared, params, ablation, split, "groundtruth");
    std::cout << fmt::format("parser-mode accuracy {:.4f}\n", report.accuracy);
    if (!report_path.empty()) {
      json doc = report.to_json();
      doc["tag_agreement"] = agreement;
      write_json_file(report_path, doc, 2);
    }
    config["ckpt"] = ckpt;
    config["ablation"] = ablation.to_json();
  }
  harness::write_manifest(out, "parse-baseline", config, loaded.data.spec.seed);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modular attention network for referring expressions on a synthetic world"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  std::string gen_spec;
  fs::path gen_out;
  std::optional<std::uint64_t> gen_seed;
  std::optional<std::size_t> n_train, n_val, n_test;
  bool materialize = false;
  gen->add_option("--spec", gen_spec, "world spec JSON (may also hold n_train/n_val/n_test)");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "world seed");
  gen->add_option("--train", n_train, "training scenes (default 2000)");
  gen->add_option("--val", n_val, "validation scenes (default 300)");
  gen->add_option("--test", n_test, "test scenes (default 300)");
  gen->add_flag("--materialize-features", materialize, "store feature grids inline");

  // train and ablate share the config overrides
  TrainOverrides overrides;
  auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("--seed", overrides.seed, "training seed");
    sub->add_option("--max-iters", overrides.max_iters, "iterations");
    sub->add_option("--lr", overrides.lr, "initial learning rate");
  };
  auto* train = app.add_subcommand("train", "train a model");
  fs::path data_dir, ckpt_out;
  std::string config_file, curves;
  bool quiet = false;
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--config", config_file, "train config JSON");
  train->add_option("--out", ckpt_out, "checkpoint path")->required();
  train->add_option("--curves", curves, "loss curve CSV");
  train->add_option("--row", overrides.row, "ablation row 1..7 (overrides the config's switches)");
  train->add_flag("--quiet", quiet, "no progress output");
  add_overrides(train);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  fs::path ckpt, report;
  std::string mode = "groundtruth", split = "test";
  std::optional<double> jitter;
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--ckpt", ckpt, "checkpoint")->required();
  eval->add_option("--candidates", mode, "groundtruth or jittered")->check(CLI::IsMember({"groundtruth", "jittered"}));
  eval->add_option("--jitter", jitter, "jitter fraction (default: the world's)");
  eval->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--report", report, "report JSON")->required();
  eval->add_option("--config", config_file, "train config giving the ablation switches");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate the seven ablation rows");
  fs::path ablate_out;
  std::vector<int> rows{1, 2, 3, 4, 5, 6, 7};
  ablate->add_option("--data", data_dir, "dataset directory")->required();
  ablate->add_option("--out", ablate_out, "CSV path (a JSON twin is written beside it)")->required();
  ablate->add_option("--config", config_file, "base train config JSON");
  ablate->add_option("--rows", rows, "subset of rows")->delimiter(',')->check(CLI::Range(1, 7));
  ablate->add_option("--split", split, "evaluation split")->check(CLI::IsMember({"train", "val", "test"}));
  add_overrides(ablate);

  auto* inspect = app.add_subcommand("inspect", "dump attention and scores for one expression");
  std::uint64_t scene_id = 0;
  std::string text;
  fs::path bundle_out;
  inspect->add_option("--data", data_dir, "dataset directory")->required();
  inspect->add_option("--ckpt", ckpt, "checkpoint")->required();
  inspect->add_option("--scene", scene_id, "scene id")->required();
  inspect->add_option("--expr", text, "referring expression")->required();
  inspect->add_option("--out", bundle_out, "bundle JSON")->required();
  inspect->add_option("--config", config_file, "train config giving the ablation switches");
  inspect->add_option("--candidates", mode, "groundtruth or jittered")->check(CLI::IsMember({"groundtruth", "jittered"}));

  auto* parse = app.add_subcommand("parse-baseline", "template-parser phrases, optionally scored with a checkpoint");
  fs::path parse_out;
  std::string parse_ckpt, parse_report;
  parse->add_option("--data", data_dir, "dataset directory")->required();
  parse->add_option("--split", split, "split to parse")->check(CLI::IsMember({"train", "val", "test"}));
  parse->add_option("--out", parse_out, "JSON-lines of parsed phrases")->required();
  parse->add_option("--ckpt", parse_ckpt, "evaluate this checkpoint with parser masks");
  parse->add_option("--report", parse_report, "report JSON for --ckpt");
  parse->add_option("--config", config_file, "train config giving the ablation switches");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen(gen_spec, gen_out, gen_seed, n_train, n_val, n_test, materialize);
    if (*train) return cmd_train(data_dir, config_file, overrides, ckpt_out, curves, quiet);
    if (*eval) return cmd_eval(data_dir, ckpt, mode, jitter, split, report, config_file);
    if (*ablate) return cmd_ablate(data_dir, ablate_out, config_file, overrides, rows, split);
    if (*inspect) return cmd_inspect(data_dir, ckpt, scene_id, text, bundle_out, config_file, mode);
    if (*parse) return cmd_parse_baseline(data_dir, split, parse_out, parse_ckpt, parse_report, config_file);
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
