#include "mattnet/harness/manifest.hpp"

#include <fstream>

#include "mattnet/errors.hpp"

#ifndef MATTNET_GIT_DESCRIBE
#define MATTNET_GIT_DESCRIBE "unknown"
#endif

namespace mattnet::harness {

std::string git_describe() { return MATTNET_GIT_DESCRIBE; }

std::filesystem::path manifest_path(const std::filesystem::path& output) {
  if (std::filesystem::is_directory(output)) return output / "manifest.json";
  return std::filesystem::path(output.string() + ".manifest.json");
}

void write_manifest(const std::filesystem::path& output, const std::string& command, const nlohmann::json& config,
                    std::uint64_t seed) {
  const auto path = manifest_path(output);
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  const nlohmann::json doc{{"command", command}, {"config", config}, {"seed", seed}, {"git_describe", git_describe()}};
  out << doc.dump(2) << '\n';
}

}  // namespace mattnet::harness
