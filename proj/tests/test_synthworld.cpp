#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "mattnet/errors.hpp"
#include "mattnet/synthworld/dataset.hpp"
#include "mattnet/synthworld/expressions.hpp"
#include "mattnet/synthworld/parser.hpp"

using namespace mattnet;
using namespace mattnet::synth;

namespace {

World default_world(std::uint64_t seed = 3) {
  WorldSpec spec;
  spec.seed = seed;
  return make_world(spec);
}

SynthObject object(int id, Box box, int category, int color, int size = 0, std::vector<int> parts = {}) {
  SynthObject o;
  o.id = id;
  o.box = box;
  o.category = category;
  o.color = color;
  o.size = size;
  o.parts = std::move(parts);
  return o;
}

SyntheticScene scene_of(std::vector<SynthObject> objs) {
  SyntheticScene s;
  s.scene_id = 77;
  s.canvas_w = s.canvas_h = 256;
  s.objects = std::move(objs);
  return s;
}

std::string joined(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) out += (out.empty() ? "" : " ") + t;
  return out;
}

}  // namespace

TEST_CASE("world spec json round trip and validation") {
  WorldSpec spec;
  spec.seed = 42;
  spec.jitter = 0.2;
  auto back = WorldSpec::from_json(spec.to_json());
  CHECK(back.to_json() == spec.to_json());
  CHECK(WorldSpec::from_json(nlohmann::json::object()).to_json() == WorldSpec{}.to_json());
  CHECK_THROWS_AS(WorldSpec::from_json({{"jiter", 0.1}}), InputError);
  CHECK_THROWS_AS(WorldSpec::from_json({{"jitter", 0.5}}), InputError);
  CHECK_THROWS_AS(WorldSpec::from_json({{"objects_per_scene", {5, 3}}}), InputError);
  CHECK_THROWS_AS(WorldSpec::from_json({{"parts", {"wing"}}}), InputError);
  CHECK_THROWS_AS(WorldSpec::from_json({{"colors", {"red", "red"}}}), InputError);
  CHECK_THROWS_AS(WorldSpec::from_json({{"jitter", "big"}}), InputError);
}

TEST_CASE("world cues are orthonormal and the vocabulary covers the grammar") {
  auto w = default_world();
  std::vector<std::vector<double>> low = w.color_cues;
  low.insert(low.end(), w.part_cues.begin(), w.part_cues.end());
  low.insert(low.end(), w.size_cues.begin(), w.size_cues.end());
  for (const auto* set : {&low, &w.category_cues}) {
    for (std::size_t a = 0; a < set->size(); ++a) {
      for (std::size_t b = 0; b < set->size(); ++b) {
        double dot = 0.0;
        for (std::size_t k = 0; k < w.spec.feature_dim; ++k) dot += (*set)[a][k] * (*set)[b][k];
        CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-12));
      }
    }
  }
  CHECK(w.attributes.size() == 11);
  CHECK(w.attribute_index("large") >= 0);
  CHECK(w.attribute_index("ball") == -1);
  for (const char* word : {"red", "small", "ball", "hat", "with", "second", "from", "middle", "next", "of"}) {
    CHECK(w.vocab.contains(word));
  }
}

TEST_CASE("scene generation is deterministic and respects placement rules") {
  auto w = default_world();
  auto make = [&](std::uint64_t id) {
    Rng rng(derive_seed({w.spec.seed, id}));
    auto s = generate_scene(w, id, rng);
    populate_expressions(w, s, rng);
    return s;
  };
  CHECK(scene_to_json(w, make(5), true).dump() == scene_to_json(w, make(5), true).dump());
  CHECK(scene_to_json(w, make(5), false).dump() != scene_to_json(w, make(6), false).dump());

  int with_pair = 0;
  for (std::uint64_t id = 0; id < 1000; ++id) {
    auto s = make(id);
    REQUIRE(s.objects.size() >= 3);
    REQUIRE(s.objects.size() <= 8);
    std::map<int, int> per_category;
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      const auto& o = s.objects[i];
      CHECK(o.id == static_cast<int>(i));
      CHECK(o.box.x_tl >= 0.0);
      CHECK(o.box.y_br <= 256.0);
      ++per_category[o.category];
      if (id < 100) {
        for (std::size_t j = 0; j < i; ++j) CHECK(visual::iou(o.box, s.objects[j].box) <= 0.1);
      }
    }
    bool pair = false;
    for (const auto& [_, n] : per_category) pair |= n >= 2;
    with_pair += pair;
    for (const auto& e : s.expressions) {
      CHECK(identifies_uniquely(w, s, e.tokens, e.target_id));
      CHECK(e.tokens.size() <= kMaxExpressionLength);
      CHECK(e.gold_tags.size() == e.tokens.size());
    }
  }
  CHECK(with_pair >= 800);
}

TEST_CASE("forced subject discriminator") {
  auto w = default_world();
  const int ball = 0, red = 0, black = 4;
  auto s = scene_of({object(0, {20, 20, 50, 50}, ball, black), object(1, {100, 100, 130, 130}, ball, red),
                     object(2, {180, 30, 210, 60}, ball, black)});
  Rng rng(1);
  auto e = generate_expression(w, s, 1, ExpressionKind::subject, rng);
  CHECK(joined(e.tokens) == "red ball");
  CHECK(e.gold_tags == std::vector<std::string>{"subj", "subj"});
  CHECK(e.target_id == 1);
  CHECK_THROWS_AS(generate_expression(w, s, 0, ExpressionKind::subject, rng), InputError);
}

TEST_CASE("two identical balls are told apart by location") {
  auto w = default_world();
  auto s = scene_of({object(0, {20, 100, 50, 130}, 0, 0), object(1, {200, 100, 230, 130}, 0, 0)});
  std::set<std::string> seen;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    for (std::size_t target : {0u, 1u}) {
      auto e = generate_expression(w, s, target, ExpressionKind::subject_location, rng);
      const auto r = referents(w, s, e.tokens);
      CHECK(r.holds == std::vector<std::size_t>{target});
      CHECK(r.unclear.empty());
      seen.insert(joined(e.tokens));
    }
  }
  CHECK(seen.count("red ball on the left"));
  CHECK(seen.count("red ball on the right"));
  CHECK(referents(w, s, {"red", "ball", "on", "the", "left"}).holds == std::vector<std::size_t>{0});
}

TEST_CASE("location dead zone and ordinal gaps") {
  auto w = default_world();
  // Centre x = 130, inside the dead zone around 128.
  auto s = scene_of({object(0, {115, 10, 145, 40}, 0, 0), object(1, {10, 10, 40, 40}, 0, 0)});
  CHECK(location_truth(s, 0, LocationClause::left) == Truth::unclear);
  CHECK(location_truth(s, 1, LocationClause::left) == Truth::holds);
  CHECK(location_truth(s, 1, LocationClause::right) == Truth::fails);
  CHECK(location_truth(s, 1, LocationClause::first_left) == Truth::holds);
  CHECK(location_truth(s, 0, LocationClause::first_right) == Truth::holds);
  auto close = scene_of({object(0, {10, 10, 40, 40}, 0, 0), object(1, {15, 100, 45, 130}, 0, 0)});
  CHECK(location_truth(close, 0, LocationClause::first_left) == Truth::unclear);
  auto three = scene_of({object(0, {10, 10, 40, 40}, 0, 0), object(1, {100, 10, 130, 40}, 0, 0),
                         object(2, {200, 10, 230, 40}, 0, 0)});
  CHECK(location_truth(three, 1, LocationClause::middle) == Truth::holds);
  CHECK(location_truth(three, 1, LocationClause::second_left) == Truth::holds);
  CHECK(location_truth(three, 2, LocationClause::second_left) == Truth::fails);
}

TEST_CASE("relation predicates") {
  const Box a{100, 100, 130, 130};
  CHECK(relation_truth(a, {135, 100, 165, 130}, Relation::next_to) == Truth::holds);
  CHECK(relation_truth(a, {200, 100, 230, 130}, Relation::next_to) == Truth::fails);
  CHECK(relation_truth(a, {100, 140, 130, 170}, Relation::above) == Truth::holds);
  CHECK(relation_truth(a, {100, 140, 130, 170}, Relation::below) == Truth::fails);
  CHECK(relation_truth(a, {100, 60, 130, 90}, Relation::below) == Truth::holds);
  CHECK(relation_truth(a, {140, 100, 170, 130}, Relation::left_of) == Truth::holds);
  CHECK(relation_truth(a, {60, 100, 90, 130}, Relation::right_of) == Truth::holds);
}

TEST_CASE("composite expressions carry all three tag types") {
  auto w = default_world();
  int composites = 0;
  for (std::uint64_t id = 0; id < 300 && composites < 20; ++id) {
    Rng rng(derive_seed({w.spec.seed, id}));
    auto s = generate_scene(w, id, rng);
    for (std::size_t t = 0; t < s.objects.size(); ++t) {
      auto e = try_generate_expression(w, s, t, ExpressionKind::composite, rng);
      if (!e) continue;
      ++composites;
      std::set<std::string> tags(e->gold_tags.begin(), e->gold_tags.end());
      CHECK(tags == std::set<std::string>{"subj", "loc", "rel"});
      for (std::size_t i = 0; i < e->tokens.size(); ++i) {
        if (e->tokens[i] == w.spec.colors[s.objects[t].color] && i == 0) CHECK(e->gold_tags[i] == "subj");
        if (e->tokens[i] == "next") CHECK(e->gold_tags[i] == "rel");
      }
      CHECK(e->gold_tags.back() == "rel");
      CHECK(identifies_uniquely(w, s, e->tokens, t));
    }
  }
  CHECK(composites >= 20);
}

TEST_CASE("semantics render and parse are inverse") {
  auto w = default_world();
  Semantics sem;
  sem.subject = {2, 1, 1, 3};
  sem.location = LocationClause::second_right;
  sem.relation = Relation::left_of;
  sem.anchor = {4, 0, -1, -1};
  auto r = render(w, sem);
  CHECK(joined(r.tokens) == "blue large chair with band second from the right left of the red tree");
  auto back = parse_semantics(w, r.tokens);
  REQUIRE(back);
  CHECK(render(w, *back).tokens == r.tokens);
  CHECK_FALSE(parse_semantics(w, {"ball", "red"}));
  CHECK_FALSE(parse_semantics(w, {"red", "ball", "on", "the"}));
}

TEST_CASE("feature grids: determinism and part locality") {
  WorldSpec spec;
  spec.seed = 9;
  spec.noise = 0.0;
  auto w = make_world(spec);
  const int hat = 0, spot = 2;
  auto s = scene_of({object(0, {20, 20, 90, 90}, 1, 2, 1, {hat, spot})});
  auto grids = candidate_grids(w, s, 0, s.objects[0].box, 5);
  const std::size_t g = spec.grid_side, d = spec.feature_dim;
  for (std::size_t r = 0; r < g; ++r) {
    for (std::size_t c = 0; c < g; ++c) {
      const double u = (c + 0.5) / g, v = (r + 0.5) / g;
      std::vector<double> expect(d, 0.0);
      for (std::size_t k = 0; k < d; ++k) expect[k] = (0.0 + w.color_cues[2][k]) + w.size_cues[1][k];
      if (part_region_contains("hat", u, v)) {
        for (std::size_t k = 0; k < d; ++k) expect[k] += w.part_cues[hat][k];
      }
      if (part_region_contains("spot", u, v)) {
        for (std::size_t k = 0; k < d; ++k) expect[k] += w.part_cues[spot][k];
      }
      for (std::size_t k = 0; k < d; ++k) CHECK(grids.low[(r * g + c) * d + k] == expect[k]);
      for (std::size_t k = 0; k < d; ++k) CHECK(grids.high[(r * g + c) * d + k] == w.category_cues[1][k]);
    }
  }
  // Background cells outside every object are zero.
  auto wide = candidate_grids(w, s, 0, {0, 0, 256, 256}, 5);
  for (std::size_t k = 0; k < d; ++k) CHECK(wide.high[k] == 0.0);

  auto noisy_world = default_world();
  auto a = candidate_grids(noisy_world, s, 0, s.objects[0].box, 11);
  auto b = candidate_grids(noisy_world, s, 0, s.objects[0].box, 11);
  CHECK(a.low == b.low);
  CHECK(a.high == b.high);
}

TEST_CASE("candidates in both modes") {
  auto w = default_world();
  Rng rng(derive_seed({w.spec.seed, 3}));
  auto s = generate_scene(w, 3, rng);
  Rng r0(1), r1(1);
  auto gt = make_candidates(w, s, CandidateMode::groundtruth, 0.0, r0);
  auto j0 = make_candidates(w, s, CandidateMode::jittered, 0.0, r1);
  REQUIRE(gt.objects.size() == s.objects.size());
  REQUIRE(j0.objects.size() == s.objects.size());
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    CHECK(gt.objects[i].box == s.objects[i].box);
    CHECK(j0.objects[i].box == gt.objects[i].box);
    CHECK(std::equal(j0.objects[i].grid_low.values().begin(), j0.objects[i].grid_low.values().end(),
                     gt.objects[i].grid_low.values().begin()));
  }
  gt.validate();

  Rng jr(5);
  int low_iou = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    const auto& src = s.objects[draw % s.objects.size()].box;
    const auto b = jitter_box(src, 0.1, 256, 256, jr);
    CHECK(b.valid());
    low_iou += visual::iou(b, src) < 0.5;
  }
  CHECK(low_iou == 0);
  Rng r2(2);
  CHECK(make_candidates(w, s, CandidateMode::jittered, 0.1, r2).objects.size() == s.objects.size());
  CHECK(candidate_mode_from_name("jittered") == CandidateMode::jittered);
  CHECK_THROWS_AS(candidate_mode_from_name("detected"), InputError);
}

TEST_CASE("dataset splits are disjoint and round-trip through files") {
  auto w = default_world(21);
  auto data = build_dataset(w, 30, 10, 10);
  CHECK(data.train.size() == 30);
  std::set<std::uint64_t> ids;
  std::size_t expressions = 0;
  for (const auto* split : {&data.train, &data.val, &data.test}) {
    for (const auto& s : *split) {
      CHECK(ids.insert(s.scene_id).second);
      expressions += s.expressions.size();
    }
  }
  CHECK(static_cast<double>(expressions) / 50.0 >= 3.5);

  const auto dir = std::filesystem::temp_directory_path() / "mattnet_synth_test";
  std::filesystem::remove_all(dir);
  for (bool materialize : {false, true}) {
    write_dataset(w, data, dir, materialize);
    auto back = read_dataset(dir);
    REQUIRE(back.val.size() == data.val.size());
    auto w2 = make_world(back.spec);
    for (std::size_t i = 0; i < data.val.size(); ++i) {
      CHECK(scene_to_json(w2, back.val[i], false) == scene_to_json(w, data.val[i], false));
      CHECK(back.val[i].materialized.empty() != materialize);
      Rng ra(0), rb(0);
      auto ca = make_candidates(w, data.val[i], CandidateMode::groundtruth, 0.0, ra);
      auto cb = make_candidates(w2, back.val[i], CandidateMode::groundtruth, 0.0, rb);
      for (std::size_t k = 0; k < ca.objects.size(); ++k) {
        const auto va = ca.objects[k].grid_low.values(), vb = cb.objects[k].grid_low.values();
        CHECK(std::equal(va.begin(), va.end(), vb.begin(), vb.end()));
        const auto ha = ca.objects[k].grid_high.values(), hb = cb.objects[k].grid_high.values();
        CHECK(std::equal(ha.begin(), ha.end(), hb.begin(), hb.end()));
      }
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("malformed scene lines are input errors") {
  auto w = default_world();
  auto s = scene_of({object(0, {20, 20, 50, 50}, 0, 0)});
  auto good = scene_to_json(w, s, false);
  scene_from_json(w, good);
  auto bad_box = good;
  bad_box["objects"][0]["box"] = {50, 20, 20, 50};
  CHECK_THROWS_AS(scene_from_json(w, bad_box), InputError);
  auto bad_color = good;
  bad_color["objects"][0]["color"] = "purple";
  CHECK_THROWS_AS(scene_from_json(w, bad_color), InputError);
  auto missing = good;
  missing.erase("canvas");
  CHECK_THROWS_AS(scene_from_json(w, missing), InputError);
  auto bad_target = good;
  bad_target["expressions"] = {{{"tokens", {"red", "ball"}},
                                {"target_id", 3},
                                {"kind", "subject"},
                                {"gold_tags", {"subj", "subj"}},
                                {"attr_labels", std::vector<double>(11, 0.0)}}};
  CHECK_THROWS_AS(scene_from_json(w, bad_target), InputError);
}

TEST_CASE("template parser") {
  auto w = default_world();
  auto parse = [&](const std::vector<std::string>& tokens) { return template_parse(tokens, w.vocab); };
  using lang::Module;
  const std::vector<std::string> a{"red", "ball"};
  auto pa = parse(a);
  CHECK(pa.phrase(a, Module::subj) == a);
  CHECK(pa.phrase(a, Module::loc).empty());
  CHECK(pa.phrase(a, Module::rel).empty());

  const std::vector<std::string> b{"red", "ball", "on", "the", "left"};
  CHECK(parse(b).phrase(b, Module::loc) == std::vector<std::string>{"on", "the", "left"});
  CHECK(parse(b).phrase(b, Module::subj) == a);

  const std::vector<std::string> c{"ball", "next", "to", "the", "cat"};
  CHECK(parse(c).phrase(c, Module::rel) == std::vector<std::string>{"next", "to", "the", "cat"});

  const std::vector<std::string> d{"red", "ball", "second", "from", "the", "left", "above", "the", "blue", "box"};
  auto pd = parse(d);
  CHECK(pd.phrase(d, Module::loc) == std::vector<std::string>{"second", "from", "the", "left"});
  CHECK(pd.phrase(d, Module::rel) == std::vector<std::string>{"above", "the", "blue", "box"});

  // The keyword rules misroute "left of": "left" goes to location.
  const std::vector<std::string> e{"red", "ball", "left", "of", "the", "cat"};
  CHECK(parse(e).phrase(e, Module::loc) == std::vector<std::string>{"left"});

  const std::vector<std::string> f{"shiny", "ball"};
  auto pf = parse(f);
  CHECK(pf.flagged == std::vector<std::string>{"shiny"});
  CHECK(pf.phrase(f, Module::subj) == f);

  auto masks = pd.masks();
  CHECK(masks[0][0] == 0.5);
  CHECK(masks[1][2] == 0.25);
  CHECK(masks[2][9] == 0.25);
  auto none = pa.masks();
  for (double x : none[2]) CHECK(x == 0.0);
}
