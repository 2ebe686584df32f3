#include "mattnet/autodiff/checkpoint.hpp"

#include <fstream>

#include "mattnet/errors.hpp"

namespace mattnet::ad {

nlohmann::json checkpoint_to_json(const ParamStore& params) {
  nlohmann::json doc;
  doc["format_version"] = kCheckpointFormatVersion;
  nlohmann::json& body = doc["params"];
  body = nlohmann::json::object();
  for (const auto& [name, t] : params) {
    body[name] = {{"shape", t.shape()},
                  {"values", std::vector<double>(t.values().begin(), t.values().end())}};
  }
  return doc;
}

ParamStore checkpoint_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("format_version", 0) != kCheckpointFormatVersion) {
    throw InputError("checkpoint: missing or unsupported format_version");
  }
  if (!doc.contains("params") || !doc["params"].is_object()) throw InputError("checkpoint: missing params object");
  ParamStore out;
  for (const auto& [name, entry] : doc["params"].items()) {
    try {
      auto shape = entry.at("shape").get<Shape>();
      auto values = entry.at("values").get<std::vector<double>>();
      if (shape.empty() || shape_size(shape) != values.size()) {
        throw InputError("checkpoint: parameter '" + name + "' shape does not match its values");
      }
      out.add(name, Tensor::from(std::move(shape), std::move(values), true));
    } catch (const nlohmann::json::exception& e) {
      throw InputError("checkpoint: malformed parameter '" + name + "': " + e.what());
    }
  }
  return out;
}

std::string dump_checkpoint(const ParamStore& params) { return checkpoint_to_json(params).dump(); }

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write checkpoint " + path.string());
  os << dump_checkpoint(params) << '\n';
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot read checkpoint " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(doc);
}

}  // namespace mattnet::ad
