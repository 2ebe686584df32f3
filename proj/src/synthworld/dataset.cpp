#include "mattnet/synthworld/dataset.hpp"

#include <fstream>

#include "mattnet/errors.hpp"
#include "mattnet/language/language_net.hpp"
#include "mattnet/synthworld/expressions.hpp"

namespace mattnet::synth {

namespace {

nlohmann::json grid_to_json(const std::vector<double>& flat, std::size_t cells, std::size_t dim) {
  auto rows = nlohmann::json::array();
  for (std::size_t c = 0; c < cells; ++c) {
    rows.push_back(std::vector<double>(flat.begin() + c * dim, flat.begin() + (c + 1) * dim));
  }
  return rows;
}

std::vector<double> grid_from_json(const nlohmann::json& doc, std::size_t cells, std::size_t dim) {
  if (!doc.is_array() || doc.size() != cells) throw InputError("grid must have " + std::to_string(cells) + " rows");
  std::vector<double> flat;
  flat.reserve(cells * dim);
  for (const auto& row : doc) {
    const auto r = row.get<std::vector<double>>();
    if (r.size() != dim) throw InputError("grid rows must have " + std::to_string(dim) + " entries");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return flat;
}

int index_of(const std::vector<std::string>& list, const std::string& word, const char* what) {
  auto it = std::find(list.begin(), list.end(), word);
  if (it == list.end()) throw InputError(std::string("unknown ") + what + " '" + word + "'");
  return static_cast<int>(it - list.begin());
}

}  // namespace

const std::vector<SyntheticScene>& Dataset::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw InputError("unknown split '" + name + "' (expected train, val or test)");
}

Dataset build_dataset(const World& world, std::size_t n_train, std::size_t n_val, std::size_t n_test) {
  Dataset data;
  data.spec = world.spec;
  std::uint64_t next_id = 0;
  for (auto* split : {&data.train, &data.val, &data.test}) {
    const std::size_t count = split == &data.train ? n_train : split == &data.val ? n_val : n_test;
    for (std::size_t i = 0; i < count; ++i, ++next_id) {
      Rng rng(derive_seed({world.spec.seed, next_id}));
      SyntheticScene scene = generate_scene(world, next_id, rng);
      populate_expressions(world, scene, rng);
      split->push_back(std::move(scene));
    }
  }
  return data;
}

nlohmann::json scene_to_json(const World& world, const SyntheticScene& scene, bool materialize) {
  const auto& spec = world.spec;
  nlohmann::json objects = nlohmann::json::array();
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const SynthObject& o = scene.objects[i];
    std::vector<std::string> parts;
    for (int p : o.parts) parts.push_back(spec.parts[p]);
    nlohmann::json obj{{"id", o.id},
                       {"box", {o.box.x_tl, o.box.y_tl, o.box.x_br, o.box.y_br}},
                       {"category", spec.categories[o.category]},
                       {"color", spec.colors[o.color]},
                       {"size", kSizeNames[o.size]},
                       {"parts", parts}};
    if (materialize) {
      const ObjectGrids grids = scene.materialized.empty()
                                    ? candidate_grids(world, scene, i, o.box, derive_seed({spec.seed, scene.scene_id, i}))
                                    : scene.materialized[i];
      obj["grid_low"] = grid_to_json(grids.low, world.cells(), spec.feature_dim);
      obj["grid_high"] = grid_to_json(grids.high, world.cells(), spec.feature_dim);
    }
    objects.push_back(std::move(obj));
  }
  nlohmann::json exprs = nlohmann::json::array();
  for (const auto& e : scene.expressions) {
    exprs.push_back({{"tokens", e.tokens},
                     {"target_id", e.target_id},
                     {"kind", kind_name(e.kind)},
                     {"gold_tags", e.gold_tags},
                     {"attr_labels", e.attr_labels}});
  }
  return {{"scene_id", scene.scene_id},
          {"canvas", {scene.canvas_w, scene.canvas_h}},
          {"objects", objects},
          {"expressions", exprs}};
}

SyntheticScene scene_from_json(const World& world, const nlohmann::json& doc) {
  const auto& spec = world.spec;
  SyntheticScene s;
  try {
    s.scene_id = doc.at("scene_id").get<std::uint64_t>();
    const auto canvas = doc.at("canvas").get<std::vector<double>>();
    if (canvas.size() != 2 || !(canvas[0] > 0 && canvas[1] > 0)) throw InputError("canvas must be [w, h] > 0");
    s.canvas_w = canvas[0];
    s.canvas_h = canvas[1];
    const auto& objects = doc.at("objects");
    if (!objects.is_array() || objects.empty()) throw InputError("scene has no objects");
    bool any_grid = false, all_grids = true;
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const auto& jo = objects[i];
      SynthObject o;
      o.id = jo.at("id").get<int>();
      if (o.id != static_cast<int>(i)) throw InputError("object ids must be 0..n-1 in order");
      const auto b = jo.at("box").get<std::vector<double>>();
      if (b.size() != 4) throw InputError("box must have four coordinates");
      o.box = {b[0], b[1], b[2], b[3]};
      if (!o.box.valid() || o.box.x_tl < 0 || o.box.y_tl < 0 || o.box.x_br > s.canvas_w || o.box.y_br > s.canvas_h) {
        throw InputError("object " + std::to_string(i) + " box is degenerate or outside the canvas");
      }
      o.category = index_of(spec.categories, jo.at("category").get<std::string>(), "category");
      o.color = index_of(spec.colors, jo.at("color").get<std::string>(), "color");
      o.size = index_of(kSizeNames, jo.at("size").get<std::string>(), "size");
      for (const auto& p : jo.at("parts")) o.parts.push_back(index_of(spec.parts, p.get<std::string>(), "part"));
      std::sort(o.parts.begin(), o.parts.end());
      const bool has_grid = jo.contains("grid_low") || jo.contains("grid_high");
      any_grid |= has_grid;
      all_grids &= has_grid;
      if (has_grid) {
        s.materialized.push_back({grid_from_json(jo.at("grid_low"), world.cells(), spec.feature_dim),
                                  grid_from_json(jo.at("grid_high"), world.cells(), spec.feature_dim)});
      }
      s.objects.push_back(std::move(o));
    }
    if (any_grid && !all_grids) throw InputError("either every object or none carries grids");
    for (const auto& je : doc.at("expressions")) {
      GeneratedExpression e;
      e.tokens = je.at("tokens").get<std::vector<std::string>>();
      if (e.tokens.empty() || e.tokens.size() > kMaxExpressionLength) throw InputError("bad expression length");
      e.target_id = je.at("target_id").get<int>();
      if (e.target_id < 0 || e.target_id >= static_cast<int>(s.objects.size())) {
        throw InputError("expression target_id out of range");
      }
      e.kind = kind_from_name(je.at("kind").get<std::string>());
      e.gold_tags = je.at("gold_tags").get<std::vector<std::string>>();
      if (e.gold_tags.size() != e.tokens.size()) throw InputError("gold_tags must align with tokens");
      for (const auto& t : e.gold_tags) lang::module_from_name(t);
      e.attr_labels = je.at("attr_labels").get<std::vector<double>>();
      if (e.attr_labels.size() != world.attributes.size()) throw InputError("attr_labels has the wrong length");
      for (double y : e.attr_labels) {
        if (y != 0.0 && y != 1.0) throw InputError("attr_labels must be 0 or 1");
      }
      s.expressions.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed scene: ") + e.what());
  }
  return s;
}

void write_split(const World& world, const std::vector<SyntheticScene>& scenes, const std::filesystem::path& path,
                 bool materialize) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& s : scenes) out << scene_to_json(world, s, materialize).dump() << '\n';
  if (!out) throw InputError("write failed for " + path.string());
}

std::vector<SyntheticScene> read_split(const World& world, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  std::vector<SyntheticScene> scenes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      scenes.push_back(scene_from_json(world, nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return scenes;
}

void write_dataset(const World& world, const Dataset& data, const std::filesystem::path& dir, bool materialize) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "world.json");
    out << world.spec.to_json().dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "vocab.json");
    out << world.vocab.to_json().dump() << '\n';
  }
  write_split(world, data.train, dir / "train.jsonl", materialize);
  write_split(world, data.val, dir / "val.jsonl", materialize);
  write_split(world, data.test, dir / "test.jsonl", materialize);
}

Dataset read_dataset(const std::filesystem::path& dir) {
  auto read_json = [&](const char* name) {
    std::ifstream in(dir / name);
    if (!in) throw InputError("cannot read " + (dir / name).string());
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw InputError((dir / name).string() + ": " + e.what());
    }
  };
  Dataset data;
  data.spec = WorldSpec::from_json(read_json("world.json"));
  const World world = make_world(data.spec);
  const auto vocab = lang::Vocabulary::from_json(read_json("vocab.json"));
  if (vocab.tokens() != world.vocab.tokens()) throw InputError("vocab.json does not match world.json");
  data.train = read_split(world, dir / "train.jsonl");
  data.val = read_split(world, dir / "val.jsonl");
  data.test = read_split(world, dir / "test.jsonl");
  return data;
}

}  // namespace mattnet::synth
