#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>

namespace dra::cli {

inline constexpr const char* kToolName = "dra";
inline constexpr const char* kToolVersion = "0.1.0";

/// FNV-1a 64-bit hash of a file's bytes, as a 16-digit hex string.
std::string hash_file(const std::filesystem::path& path);

/// Collects the per-run record: resolved config echo, tool version,
/// wall-clock, a result summary, and every output file with its content
/// hash. finalize() writes <dir>/manifest.json.
class RunManifest {
 public:
  RunManifest(std::filesystem::path dir, std::string command, nlohmann::json config_echo,
              std::optional<std::uint64_t> seed);

  const std::filesystem::path& dir() const { return dir_; }

  /// Registers a file (relative to the run directory) that was just written.
  void add_file(const std::string& name);
  void set_summary(nlohmann::json summary) { summary_ = std::move(summary); }
  void finalize();

 private:
  std::filesystem::path dir_;
  std::string command_;
  nlohmann::json config_echo_;
  std::optional<std::uint64_t> seed_;
  nlohmann::json outputs_ = nlohmann::json::array();
  nlohmann::json summary_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace dra::cli
