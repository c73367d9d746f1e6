#pragma once

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>

#include "dra/dynamics.hpp"
#include "dra/graph.hpp"
#include "dra/integrate.hpp"
#include "dra/problem.hpp"

namespace dra::cli {

enum class AlgorithmKind { Suboptimal, Pi, PrimalDual };
enum class InitialKind { Zeros, BStart, Explicit };

struct InitialSpec {
  InitialKind kind = InitialKind::BStart;
  std::optional<Eigen::VectorXd> x;
  std::optional<Eigen::VectorXd> lambda;
  std::optional<Eigen::VectorXd> z;   // pi runs only
  std::optional<Eigen::VectorXd> mu;  // primal-dual runs only
};

/// A fully cross-validated experiment description. Unknown keys anywhere in
/// the document are rejected.
struct ExperimentConfig {
  dra::ResourceProblem<double> problem;
  dra::WeightedDigraph<double> graph;
  AlgorithmKind algorithm = AlgorithmKind::Suboptimal;
  double eps = 0;  // suboptimal only
  dra::PiConfig<double> pi{};
  dra::IntegratorOptions<double> integrator{};
  double t_end = 100;  // may be 0: emit the initial state only
  InitialSpec initial{};
  std::string output_dir = "out";

  /// Config echo with all defaults applied; loading it back yields the same
  /// configuration (round-trip idempotence).
  nlohmann::json resolved() const;
};

ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace dra::cli
