#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "mattnet/errors.hpp"
#include "mattnet/harness/ablation.hpp"
#include "mattnet/harness/evaluation.hpp"
#include "mattnet/harness/inspect.hpp"
#include "mattnet/harness/manifest.hpp"

using namespace mattnet;
using namespace mattnet::harness;
namespace fs = std::filesystem;

namespace {

ad::ParamStore random_model(const synth::World& world, const AblationConfig& ablation, std::uint64_t seed) {
  auto params =
      training::init_model(mattnet::testing::small_model(), synth::data_shape(world), ablation, seed);
  mattnet::testing::randomize(params, seed + 100, 0.5);
  return params;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("comprehension picks the best-scoring candidate") {
  auto world = mattnet::testing::small_world();
  auto scenes = mattnet::testing::small_scenes(world, 10);
  const AblationConfig full;
  auto params = random_model(world, full, 1);
  for (const auto& scene : scenes) {
    for (const auto& expr : scene.expressions) {
      const auto c = comprehend(scene.candidates, expr, params, full);
      REQUIRE(c.scores.size() == scene.candidates.objects.size());
      for (std::size_t i = 0; i < c.scores.size(); ++i) {
        CHECK(c.scores[c.predicted].value() >= c.scores[i].value());
        if (i < c.predicted) CHECK(c.scores[i].value() < c.scores[c.predicted].value());
        CHECK(c.scores[i].value() == training::overall_score(scene.candidates, i, expr, params, full).value());
      }
      // no hidden state: asking twice gives the same answer
      CHECK(comprehend(scene.candidates, expr, params, full).predicted == c.predicted);
    }
  }

  PreparedScene single = scenes[0];
  single.candidates.objects.resize(1);
  const auto c = comprehend(single.candidates, single.expressions[0], params, full);
  CHECK(c.predicted == 0);
  CHECK(c.scores.size() == 1);
}

TEST_CASE("evaluation report") {
  auto world = mattnet::testing::small_world();
  auto scenes = mattnet::testing::small_scenes(world, 40);
  const AblationConfig full;
  auto params = random_model(world, full, 2);
  const auto report = evaluate(scenes, params, full, "val", "groundtruth");

  std::size_t n = 0;
  for (const auto& s : scenes) n += s.expressions.size();
  CHECK(report.n_expressions == n);
  CHECK(report.predictions.size() == n);
  CHECK(report.accuracy == doctest::Approx(static_cast<double>(report.n_correct) / n).epsilon(1e-15));
  CHECK(recount_accuracy(report.predictions) == report.accuracy);

  std::size_t kind_total = 0, kind_correct = 0;
  for (const auto& [kind, stats] : report.per_kind) {
    kind_total += stats.n;
    kind_correct += stats.correct;
    CHECK(report.kind_accuracy(kind) == stats.accuracy);
    CHECK(std::abs(stats.mean_weights[0] + stats.mean_weights[1] + stats.mean_weights[2] - 1.0) < 1e-12);
  }
  CHECK(kind_total == n);
  CHECK(kind_correct == report.n_correct);

  // Ground-truth candidates are disjoint boxes, so IoU > 0.5 means "picked the target".
  for (const auto& p : report.predictions) {
    CHECK(p.correct == (p.predicted == p.target));
    CHECK(p.correct == (p.iou > 0.5));
  }

  REQUIRE(report.attributes);
  CHECK(report.attributes->f1 >= 0.0);
  CHECK(report.attributes->f1 <= 1.0);

  const auto doc = report.to_json();
  CHECK(doc.at("accuracy") == report.accuracy);
  CHECK(doc.at("split") == "val");
  CHECK(doc.at("candidates") == "groundtruth");
  CHECK(doc.at("predictions").size() == n);
  CHECK(doc.at("per_kind").contains("subject"));

  CHECK_THROWS_AS(evaluate({}, params, full, "val", "groundtruth"), InputError);
  CHECK_FALSE(evaluate(scenes, params, training::ablation_row(4), "val", "groundtruth").attributes);
}

TEST_CASE("a model that always points at the target scores 100%") {
  auto world = mattnet::testing::small_world();
  auto scenes = mattnet::testing::small_scenes(world, 10);
  const AblationConfig full;
  auto params = random_model(world, full, 3);
  // Move the scene's only expression's target to wherever the model points.
  for (auto& scene : scenes) {
    scene.expressions.resize(1);
    scene.expressions[0].target = comprehend(scene.candidates, scene.expressions[0], params, full).predicted;
  }
  CHECK(evaluate(scenes, params, full, "val", "groundtruth").accuracy == 1.0);
}

TEST_CASE("an untrained model performs at chance") {
  auto world = mattnet::testing::small_world(8);
  auto scenes = mattnet::testing::small_scenes(world, 300);
  double chance = 0.0;
  std::size_t n = 0;
  for (const auto& s : scenes) {
    chance += s.expressions.size() / static_cast<double>(s.candidates.objects.size());
    n += s.expressions.size();
  }
  chance /= static_cast<double>(n);
  const AblationConfig full;
  auto params = training::init_model(mattnet::testing::small_model(), synth::data_shape(world), full, 4);
  const double acc = evaluate(scenes, params, full, "val", "groundtruth").accuracy;
  INFO("chance " << chance << " accuracy " << acc);
  CHECK(std::abs(acc - chance) < 0.07);
}

TEST_CASE("inspection bundle") {
  auto world = mattnet::testing::small_world();
  auto scenes = mattnet::testing::small_scenes(world, 2);
  const auto& scene = scenes[1];
  const auto& expr = scene.expressions[0];
  const AblationConfig full;
  auto params = random_model(world, full, 5);
  const auto bundle = inspect_bundle(scene, expr, params, full, world.attributes);

  for (const char* key : {"scene_id", "expression", "attention", "weighted_attention", "predicted", "candidates",
                          "spatial", "top_attributes"}) {
    CHECK(bundle.contains(key));
  }
  const auto& attn = bundle.at("attention");
  CHECK(attn.at("tokens").get<std::vector<std::string>>() == expr.tokens);
  const auto w = attn.at("weights").get<std::vector<double>>();
  REQUIRE(w.size() == 3);
  CHECK(std::abs(w[0] + w[1] + w[2] - 1.0) < 1e-12);
  int m = 0;
  for (const char* name : {"subj", "loc", "rel"}) {
    const auto a = attn.at("attn").at(name).get<std::vector<double>>();
    const auto wa = bundle.at("weighted_attention").at(name).get<std::vector<double>>();
    REQUIRE(a.size() == expr.tokens.size());
    double sa = 0.0, swa = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
      sa += a[t];
      swa += wa[t];
    }
    CHECK(std::abs(sa - 1.0) < 1e-12);
    CHECK(std::abs(swa - w[m]) < 1e-9);
    ++m;
  }

  const auto comp = comprehend(scene.candidates, expr, params, full);
  CHECK(bundle.at("predicted") == comp.predicted);
  REQUIRE(bundle.at("candidates").size() == scene.candidates.objects.size());
  for (const auto& c : bundle.at("candidates")) {
    const double total = c.at("w_subj").get<double>() * c.at("s_subj").get<double>() +
                         c.at("w_loc").get<double>() * c.at("s_loc").get<double>() +
                         c.at("w_rel").get<double>() * c.at("s_rel").get<double>();
    CHECK(std::abs(total - c.at("total").get<double>()) < 1e-12);
    CHECK(c.at("box").size() == 4);
  }

  const auto& spatial = bundle.at("spatial");
  CHECK(spatial.at("object_id") == comp.predicted);
  const auto grid = spatial.at("grid").get<std::vector<std::vector<double>>>();
  REQUIRE(grid.size() == world.spec.grid_side);
  double mass = 0.0;
  for (const auto& row : grid) {
    REQUIRE(row.size() == world.spec.grid_side);
    for (double x : row) mass += x;
  }
  CHECK(std::abs(mass - 1.0) < 1e-12);

  const auto& top = bundle.at("top_attributes");
  REQUIRE(top.size() == 5);
  for (std::size_t k = 1; k < top.size(); ++k) {
    CHECK(top[k - 1].at("probability").get<double>() >= top[k].at("probability").get<double>());
  }

  const auto base = inspect_bundle(scene, expr, random_model(world, training::ablation_row(1), 6),
                                   training::ablation_row(1), world.attributes);
  CHECK(base.at("spatial").is_null());
  CHECK(base.at("candidates")[0].at("w_subj") == 1.0);
}

TEST_CASE("spatial dump shape") {
  const auto d = spatial_dump(3, ad::Tensor::vector({0.1, 0.2, 0.3, 0.4}));
  CHECK(d.at("object_id") == 3);
  CHECK(d.at("grid") == nlohmann::json::parse("[[0.1,0.2],[0.3,0.4]]"));
  CHECK_THROWS_AS(spatial_dump(0, ad::Tensor::vector({0.5, 0.5, 0.0})), DimensionError);
}

TEST_CASE("ablation suite bookkeeping") {
  auto world = mattnet::testing::small_world();
  auto train_scenes = mattnet::testing::small_scenes(world, 8);
  auto eval_scenes = mattnet::testing::small_scenes(world, 4, 100);
  training::TrainConfig cfg;
  cfg.model = mattnet::testing::small_model();
  cfg.batch_scenes = 4;
  cfg.max_iters = 2;
  std::vector<std::string> progress;
  const auto results = run_ablation_suite(train_scenes, eval_scenes, synth::data_shape(world), cfg,
                                          {1, 2, 3, 4, 5, 6, 7},
                                          [&](const std::string& msg) { progress.push_back(msg); });
  REQUIRE(results.size() == 7);
  CHECK_FALSE(progress.empty());
  for (int r = 1; r <= 7; ++r) {
    CHECK(results[r - 1].row == r);
    CHECK(results[r - 1].config == training::ablation_row(r));
    CHECK(results[r - 1].label == training::ablation_row_label(r));
  }

  const auto path = fs::temp_directory_path() / "mattnet_ablation_test.csv";
  write_ablation_csv(results, path);
  const auto lines = read_lines(path);
  REQUIRE(lines.size() == 8);
  CHECK(lines[0].rfind("row,label,", 0) == 0);
  CHECK(lines[0].find("accuracy") != std::string::npos);
  CHECK(lines[6].rfind("6,+attn_pool,", 0) == 0);
  fs::remove(path);

  const auto doc = ablation_json(results);
  REQUIRE(doc.at("rows").size() == 7);
  CHECK(doc.at("rows")[5].at("accuracy") == results[5].report.accuracy);

  CHECK_THROWS_AS(run_ablation_suite(train_scenes, eval_scenes, synth::data_shape(world), cfg, {9}), InputError);
}

TEST_CASE("run manifests") {
  const auto dir = fs::temp_directory_path() / "mattnet_manifest_test";
  fs::create_directories(dir);
  CHECK(manifest_path(dir) == dir / "manifest.json");
  CHECK(manifest_path(dir / "ckpt.json") == dir / "ckpt.json.manifest.json");

  write_manifest(dir / "ckpt.json", "train", {{"lr", 0.5}}, 17);
  std::ifstream in(dir / "ckpt.json.manifest.json");
  const auto doc = nlohmann::json::parse(in);
  CHECK(doc.at("command") == "train");
  CHECK(doc.at("seed") == 17);
  CHECK(doc.at("config").at("lr") == 0.5);
  CHECK(doc.at("git_describe") == git_describe());
  CHECK_FALSE(git_describe().empty());
  fs::remove_all(dir);
}
