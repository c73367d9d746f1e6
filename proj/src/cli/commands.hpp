#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dra::cli {

// Exit codes shared by all commands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitAssumption = 4;

struct CommandContext {
  std::filesystem::path config_path;
  std::optional<std::string> out_override;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

int run_check_graph(const CommandContext& ctx);
int run_solve(const CommandContext& ctx);
int run_equilibrium(const CommandContext& ctx, std::optional<double> eps,
                    const std::string& method);
int run_simulate(const CommandContext& ctx);
int run_sweep(const CommandContext& ctx, const std::vector<double>& grid, int workers);
int run_compare(const CommandContext& ctx, std::optional<double> eps,
                std::optional<double> horizon, std::optional<double> cutoff);

}  // namespace dra::cli
