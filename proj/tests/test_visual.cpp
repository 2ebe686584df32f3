#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "gradcheck.hpp"
#include "mattnet/autodiff/ops.hpp"
#include "mattnet/errors.hpp"
#include "mattnet/visual/modules.hpp"

using namespace mattnet;
using namespace mattnet::visual;
using ad::Tensor;

namespace {

VisualConfig small_config() {
  VisualConfig cfg;
  cfg.feature_dim = 4;
  cfg.grid_side = 3;
  cfg.attribute_count = 5;
  cfg.phrase_dim = 6;
  cfg.attention_dim = 5;
  cfg.location_dim = 7;
  cfg.relation_dim = 7;
  cfg.match_hidden = 6;
  cfg.match_dim = 5;
  return cfg;
}

ad::ParamStore random_params(const VisualConfig& cfg, std::uint64_t seed, double bound = 0.0) {
  Rng rng(seed);
  ad::ParamStore params;
  init_subject_params(params, cfg, rng);
  init_location_params(params, cfg, rng);
  init_relation_params(params, cfg, rng);
  if (bound > 0.0) {
    for (auto& [_, t] : params) {
      for (double& x : t.mutable_values()) x = rng.uniform(-bound, bound);
    }
  }
  return params;
}

CandidateObject random_object(const Box& box, int category, const VisualConfig& cfg, Rng& rng) {
  std::vector<double> low(cfg.cells() * cfg.feature_dim), high(low.size());
  for (double& x : low) x = rng.normal();
  for (double& x : high) x = rng.normal();
  return make_candidate(box, category, std::move(low), std::move(high), cfg.cells(), cfg.feature_dim);
}

SceneContext random_scene(std::size_t n, const VisualConfig& cfg, Rng& rng) {
  SceneContext scene{100.0, 80.0, {}};
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform(0, 80), y = rng.uniform(0, 60);
    const Box b{x, y, x + rng.uniform(2, 20), y + rng.uniform(2, 20)};
    scene.objects.push_back(random_object(b, static_cast<int>(rng.index(3)), cfg, rng));
  }
  return scene;
}

Tensor random_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return Tensor::vector(v);
}

double sum_of(const Tensor& t) { return std::accumulate(t.values().begin(), t.values().end(), 0.0); }

}  // namespace

TEST_CASE("iou cases") {
  CHECK(iou({0, 0, 2, 2}, {0, 0, 2, 2}) == 1.0);
  CHECK(iou({0, 0, 1, 1}, {5, 5, 6, 6}) == 0.0);
  CHECK(iou({0, 0, 2, 2}, {1, 1, 3, 3}) == 1.0 / 7.0);
  CHECK(iou({0, 0, 1, 1}, {1, 0, 2, 1}) == 0.0);
  CHECK_THROWS_AS(iou({0, 0, 0, 2}, {0, 0, 1, 1}), InputError);
}

TEST_CASE("absolute location and offsets") {
  const auto full = absolute_location({0, 0, 640, 480}, 640, 480);
  CHECK(full == std::array<double, 5>{0, 0, 1, 1, 1});
  const auto dl = relative_offset({10, 20, 30, 50}, {30, 20, 50, 50});
  CHECK(dl == std::array<double, 5>{1, 0, 1, 0, 1});
  CHECK(clamp_to_canvas({-5, 3, 120, 90}, 100, 80) == Box{0, 3, 100, 80});
}

TEST_CASE("candidate construction checks grid sizes") {
  CHECK_THROWS_AS(make_candidate({0, 0, 1, 1}, 0, std::vector<double>(8), std::vector<double>(9), 3, 3),
                  DimensionError);
  auto obj = make_candidate({0, 0, 1, 1}, 0, std::vector<double>(6, 0.0), {1, 2, 3, 4, 5, 6}, 3, 2);
  CHECK(obj.pooled_feature[0] == 3.0);
  CHECK(obj.pooled_feature[1] == 4.0);
}

TEST_CASE("scene validation") {
  auto cfg = small_config();
  Rng rng(1);
  SceneContext empty{100, 100, {}};
  CHECK_THROWS_AS(empty.validate(), InputError);
  SceneContext outside{100, 100, {random_object({90, 90, 120, 95}, 0, cfg, rng)}};
  CHECK_THROWS_AS(outside.validate(), InputError);
  SceneContext tampered{100, 100, {random_object({0, 0, 10, 10}, 0, cfg, rng)}};
  tampered.validate();
  tampered.objects[0].pooled_feature = Tensor::zeros({cfg.feature_dim});
  CHECK_THROWS_AS(tampered.validate(), InputError);
}

TEST_CASE("neighbour order is by centre distance then index") {
  auto cfg = small_config();
  Rng rng(2);
  SceneContext s{200, 200, {}};
  s.objects.push_back(random_object({90, 90, 110, 110}, 0, cfg, rng));   // centre 100,100
  s.objects.push_back(random_object({120, 90, 140, 110}, 1, cfg, rng));  // distance 30
  s.objects.push_back(random_object({60, 90, 80, 110}, 0, cfg, rng));    // distance 30
  s.objects.push_back(random_object({90, 100, 110, 120}, 1, cfg, rng));  // distance 10
  s.objects.push_back(random_object({0, 0, 10, 10}, 0, cfg, rng));
  CHECK(nearest_neighbors(s, 0, false) == std::vector<std::size_t>{3, 1, 2, 4});
  CHECK(nearest_neighbors(s, 0, true) == std::vector<std::size_t>{2, 4});
  CHECK(nearest_neighbors(s, 0, false, 2) == std::vector<std::size_t>{3, 1});
}

TEST_CASE("attribute prediction") {
  auto cfg = small_config();
  auto params = random_params(cfg, 3, 0.5);
  auto zero = make_candidate({0, 0, 1, 1}, 0, std::vector<double>(cfg.cells() * cfg.feature_dim, 0.0),
                             std::vector<double>(cfg.cells() * cfg.feature_dim, 0.0), cfg.cells(), cfg.feature_dim);
  auto zeroed = params.clone();
  for (const char* name : {"subj.attr_fuse.b", "subj.attr_head.b"}) {
    for (double& x : zeroed.get(name).mutable_values()) x = 0.0;
  }
  auto p0 = predict_attributes(zero, zeroed);
  CHECK(p0.size() == cfg.attribute_count);
  for (double p : p0.values()) CHECK(p == 0.5);

  Rng rng(4);
  auto obj = random_object({0, 0, 5, 5}, 0, cfg, rng);
  auto p = predict_attributes(obj, params);
  // hand composition
  const std::size_t G = cfg.cells(), d = cfg.feature_dim;
  const auto& Wf = params.get("subj.attr_fuse.W");
  const auto& bf = params.get("subj.attr_fuse.b");
  const auto& Wh = params.get("subj.attr_head.W");
  const auto& bh = params.get("subj.attr_head.b");
  std::vector<double> pooled(d, 0.0);
  for (std::size_t c = 0; c < G; ++c) {
    for (std::size_t o = 0; o < d; ++o) {
      double acc = bf[o];
      for (std::size_t k = 0; k < d; ++k) {
        acc += obj.grid_low.at(c, k) * Wf.at(k, o) + obj.grid_high.at(c, k) * Wf.at(d + k, o);
      }
      pooled[o] += acc / static_cast<double>(G);
    }
  }
  for (std::size_t a = 0; a < cfg.attribute_count; ++a) {
    double logit = bh[a];
    for (std::size_t o = 0; o < d; ++o) logit += pooled[o] * Wh.at(o, a);
    CHECK(std::abs(p[a] - 1.0 / (1.0 + std::exp(-logit))) < 1e-12);
    CHECK(p[a] > 0.0);
    CHECK(p[a] < 1.0);
  }
}

TEST_CASE("subject pooling cases") {
  auto cfg = small_config();
  auto params = random_params(cfg, 5, 0.5);
  Rng rng(6);
  auto obj = random_object({0, 0, 5, 5}, 0, cfg, rng);
  auto blob = subject_blob(obj, attribute_blob(obj, params), params);
  auto q = random_vector(cfg.phrase_dim, rng);

  auto att = subject_representation(blob, q, params, Pooling::attentional);
  CHECK(std::abs(sum_of(att.attention) - 1.0) < 1e-12);
  for (std::size_t k = 0; k < cfg.feature_dim; ++k) {
    double expect = 0.0;
    for (std::size_t c = 0; c < cfg.cells(); ++c) expect += att.attention[c] * blob.at(c, k);
    CHECK(std::abs(att.feature[k] - expect) < 1e-12);
  }

  auto flat = params.clone();
  for (const char* name : {"subj.W_v", "subj.W_q"}) {
    for (double& x : flat.get(name).mutable_values()) x = 0.0;
  }
  auto zero_att = subject_representation(blob, q, flat, Pooling::attentional);
  auto avg = subject_representation(blob, q, flat, Pooling::average);
  for (std::size_t k = 0; k < cfg.feature_dim; ++k) CHECK(zero_att.feature[k] == avg.feature[k]);
  for (std::size_t c = 0; c < cfg.cells(); ++c) CHECK(avg.attention[c] == 1.0 / cfg.cells());

  // Saturated attention on one cell returns that cell's row of V.
  auto peaked = params.clone();
  auto Wv = peaked.get("subj.W_v").mutable_values();
  std::fill(Wv.begin(), Wv.end(), 0.0);
  std::fill(peaked.get("subj.W_q").mutable_values().begin(), peaked.get("subj.W_q").mutable_values().end(), 0.0);
  std::vector<double> rows(cfg.cells() * cfg.feature_dim, 0.0);
  rows[4 * cfg.feature_dim] = 1.0;
  auto marker = Tensor::matrix(cfg.cells(), cfg.feature_dim, rows);
  Wv[0] = 1.0;
  auto wha = peaked.get("subj.w_ha").mutable_values();
  std::fill(wha.begin(), wha.end(), 0.0);
  wha[0] = 1e4;
  // Attention logits come from the marker blob; pooled values from V.
  auto projected = project_subject_blob(marker, peaked);
  auto one_hot = subject_representation(blob, q, peaked, Pooling::attentional, &projected);
  CHECK(one_hot.attention[4] == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t k = 0; k < cfg.feature_dim; ++k) CHECK(one_hot.feature[k] == doctest::Approx(blob.at(4, k)));
}

TEST_CASE("location input") {
  auto cfg = small_config();
  Rng rng(7);
  SceneContext s{100, 100, {}};
  s.objects.push_back(random_object({0, 0, 100, 100}, 0, cfg, rng));
  auto solo = location_input(s, 0, true);
  CHECK(solo.size() == 30);
  CHECK(std::vector<double>(solo.begin(), solo.begin() + 5) == std::vector<double>{0, 0, 1, 1, 1});
  for (std::size_t i = 5; i < 30; ++i) CHECK(solo[i] == 0.0);

  SceneContext pair{100, 100, {}};
  pair.objects.push_back(random_object({10, 20, 30, 40}, 2, cfg, rng));
  pair.objects.push_back(random_object({30, 20, 50, 40}, 2, cfg, rng));
  pair.objects.push_back(random_object({60, 60, 70, 70}, 1, cfg, rng));
  auto in = location_input(pair, 0, true);
  CHECK(std::vector<double>(in.begin() + 5, in.begin() + 10) == std::vector<double>{1, 0, 1, 0, 1});
  for (std::size_t i = 10; i < 30; ++i) CHECK(in[i] == 0.0);
  auto off = location_input(pair, 0, false);
  for (std::size_t i = 5; i < 30; ++i) CHECK(off[i] == 0.0);

  // Shifting every box leaves the offset blocks unchanged.
  SceneContext shifted = pair;
  shifted.canvas_w = 140;
  shifted.canvas_h = 150;
  for (auto& o : shifted.objects) o.box = {o.box.x_tl + 40, o.box.y_tl + 50, o.box.x_br + 40, o.box.y_br + 50};
  auto moved = location_input(shifted, 1, true);
  auto orig = location_input(pair, 1, true);
  for (std::size_t i = 5; i < 30; ++i) CHECK(moved[i] == doctest::Approx(orig[i]).epsilon(1e-14));

  auto params = random_params(cfg, 8);
  CHECK(location_representation(pair, 0, params, true).size() == cfg.location_dim);
}

TEST_CASE("relationship score is the max over neighbours") {
  auto cfg = small_config();
  auto params = random_params(cfg, 9, 0.5);
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    auto scene = random_scene(1 + rng.index(5), cfg, rng);
    auto q = random_vector(cfg.phrase_dim, rng);
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
      const double got = relationship_score(scene, i, q, params, ForwardMode::eval()).item();
      double best = kRelationFloor;
      bool any = false;
      for (std::size_t j = 0; j < scene.objects.size(); ++j) {
        if (j == i) continue;
        const auto dm = relative_offset(scene.objects[i].box, scene.objects[j].box);
        std::vector<double> row(scene.objects[j].pooled_feature.values().begin(),
                                scene.objects[j].pooled_feature.values().end());
        row.insert(row.end(), dm.begin(), dm.end());
        auto v = ad::affine(Tensor::vector(row), params.get("rel.W_r"), params.get("rel.b_r"));
        const double s = matching_score("rel.match", v, q, params, ForwardMode::eval()).item();
        best = any ? std::max(best, s) : s;
        any = true;
      }
      CHECK(got == best);
    }
  }
  SceneContext solo{100, 100, {random_object({0, 0, 5, 5}, 0, cfg, rng)}};
  CHECK(relationship_score(solo, 0, random_vector(cfg.phrase_dim, rng), params, ForwardMode::eval()).item() == -1.0);
}

TEST_CASE("matching score bounds") {
  auto cfg = small_config();
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto params = random_params(cfg, 200 + trial, rng.uniform(0.01, 3.0));
    auto v = random_vector(cfg.feature_dim, rng);
    auto q = random_vector(cfg.phrase_dim, rng);
    const double s = matching_score("subj.match", v, q, params, ForwardMode::eval()).item();
    CHECK(s <= 1.0 + 1e-9);
    CHECK(s >= -1.0 - 1e-9);
  }
  auto params = random_params(cfg, 12, 0.5);
  auto v = random_vector(cfg.feature_dim, rng);
  auto e = match_visual_embedding("subj.match", v, params, ForwardMode::eval(), 0.2);
  CHECK(std::abs(ad::dot(e, e).item() - 1.0) < 1e-9);
  CHECK(std::abs(ad::dot(e, ad::scale_shift(e, -1.0)).item() + 1.0) < 1e-9);
}

TEST_CASE("branches have disjoint matching parameters of identical structure") {
  auto cfg = small_config();
  cfg.location_dim = cfg.relation_dim = cfg.feature_dim;
  auto params = random_params(cfg, 13);
  std::set<std::string> seen;
  for (const char* branch : {"subj", "loc", "rel"}) {
    for (const char* layer : {".match.vis_fc1", ".match.vis_fc2", ".match.lang_fc1", ".match.lang_fc2"}) {
      for (const char* part : {".W", ".b"}) {
        const std::string name = std::string(branch) + layer + part;
        REQUIRE(params.contains(name));
        CHECK(seen.insert(name).second);
        const std::string ref = std::string("subj") + layer + part;
        CHECK(params.get(name).shape() == params.get(ref).shape());
        if (std::string(branch) != "subj") CHECK(params.get(name).node() != params.get(ref).node());
      }
    }
  }
  CHECK(params.get("loc.W_l").shape() == ad::Shape{30, cfg.location_dim});
  CHECK(params.get("rel.W_r").shape() == ad::Shape{cfg.feature_dim + 5, cfg.relation_dim});
}

TEST_CASE("visual parameters pass the finite-difference check") {
  auto cfg = small_config();
  auto params = random_params(cfg, 14, 0.4);
  Rng rng(15);
  auto scene = random_scene(4, cfg, rng);
  auto q = random_vector(cfg.phrase_dim, rng);
  auto loss = [&] {
    std::vector<Tensor> terms;
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
      const auto& obj = scene.objects[i];
      auto ablob = attribute_blob(obj, params);
      terms.push_back(ad::sum(attribute_probs(ablob, params)));
      auto subj = subject_representation(subject_blob(obj, ablob, params), q, params, Pooling::attentional);
      terms.push_back(matching_score("subj.match", subj.feature, q, params, ForwardMode::eval()));
      terms.push_back(matching_score("loc.match", location_representation(scene, i, params, true), q, params,
                                     ForwardMode::eval()));
      terms.push_back(relationship_score(scene, i, q, params, ForwardMode::eval()));
    }
    return ad::sum_scalars(terms);
  };
  auto r = mattnet::testing::grad_check(loss, params);
  INFO("worst " << r.worst);
  CHECK(r.max_rel_error < 1e-5);
}
