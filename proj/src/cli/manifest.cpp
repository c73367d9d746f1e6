#include "cli/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

#include "dra/errors.hpp"

namespace dra::cli {

std::string hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("hash_file: cannot open '" + path.string() + "'");
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return std::string(hex);
}

RunManifest::RunManifest(std::filesystem::path dir, std::string command,
                         nlohmann::json config_echo, std::optional<std::uint64_t> seed)
    : dir_(std::move(dir)),
      command_(std::move(command)),
      config_echo_(std::move(config_echo)),
      seed_(seed),
      start_(std::chrono::steady_clock::now()) {
  std::filesystem::create_directories(dir_);
}

void RunManifest::add_file(const std::string& name) {
  outputs_.push_back({{"path", name}, {"hash_fnv1a64", hash_file(dir_ / name)}});
}

void RunManifest::finalize() {
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  nlohmann::json doc{{"tool", kToolName},
                     {"version", kToolVersion},
                     {"command", command_},
                     {"config", config_echo_},
                     {"wall_clock_sec", wall},
                     {"outputs", outputs_}};
  if (seed_) doc["seed"] = *seed_;
  if (!summary_.is_null()) doc["summary"] = summary_;
  std::ofstream out(dir_ / "manifest.json");
  if (!out) throw ValidationError("manifest: cannot write to '" + dir_.string() + "'");
  out << doc.dump(2) << '\n';
}

}  // namespace dra::cli
