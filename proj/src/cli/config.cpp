#include "cli/config.hpp"

#include <fstream>
#include <set>
#include <vector>

#include "dra/errors.hpp"

namespace dra::cli {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ValidationError("config: " + path + ": " + what);
}

void require_object(const json& j, const std::string& path,
                    const std::set<std::string>& allowed) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) fail(path, "unknown key '" + key + "'");
  }
}

const json& require_key(const json& j, const std::string& path, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end()) fail(path, "missing key '" + key + "'");
  return *it;
}

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

Eigen::VectorXd as_vector(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of numbers");
  Eigen::VectorXd v(j.size());
  for (size_t k = 0; k < j.size(); ++k) {
    v[static_cast<Eigen::Index>(k)] = as_number(j[k], path + "[" + std::to_string(k) + "]");
  }
  return v;
}

Eigen::MatrixXd as_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of rows");
  const size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) fail(path, "expected rows to be non-empty arrays");
  Eigen::MatrixXd m(j.size(), cols);
  for (size_t r = 0; r < j.size(); ++r) {
    const std::string rp = path + "[" + std::to_string(r) + "]";
    if (!j[r].is_array() || j[r].size() != cols) fail(rp, "ragged matrix row");
    for (size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          as_number(j[r][c], rp + "[" + std::to_string(c) + "]");
    }
  }
  return m;
}

ResourceProblem<double> parse_problem(const json& j) {
  require_object(j, "problem", {"agents"});
  const json& agents_j = require_key(j, "problem", "agents");
  if (!agents_j.is_array() || agents_j.empty()) fail("problem.agents", "expected a non-empty array");

  std::vector<Agent<double>> agents;
  Eigen::Index dim = -1;
  for (size_t i = 0; i < agents_j.size(); ++i) {
    const std::string ap = "problem.agents[" + std::to_string(i) + "]";
    const json& aj = agents_j[i];
    require_object(aj, ap, {"cost", "b"});
    const json& cj = require_key(aj, ap, "cost");
    require_object(cj, ap + ".cost", {"type", "q", "r", "c"});
    const std::string type = require_key(cj, ap + ".cost", "type").get<std::string>();
    if (type != "quadratic") fail(ap + ".cost.type", "unsupported cost type '" + type + "'");

    Eigen::MatrixXd q = as_matrix(require_key(cj, ap + ".cost", "q"), ap + ".cost.q");
    Eigen::VectorXd b = as_vector(require_key(aj, ap, "b"), ap + ".b");
    Eigen::VectorXd r = cj.contains("r") ? as_vector(cj["r"], ap + ".cost.r")
                                         : Eigen::VectorXd::Zero(q.rows()).eval();
    const double c = cj.contains("c") ? as_number(cj["c"], ap + ".cost.c") : 0.0;

    if (dim < 0) dim = b.size();
    if (b.size() != dim) fail(ap + ".b", "all agents must share one decision dimension");
    try {
      agents.push_back(Agent<double>{std::make_shared<QuadraticCost<double>>(q, r, c), b});
    } catch (const ValidationError& e) {
      fail(ap + ".cost", e.what());
    }
  }
  try {
    return ResourceProblem<double>(dim, std::move(agents));
  } catch (const ValidationError& e) {
    fail("problem", e.what());
  }
}

WeightedDigraph<double> parse_graph(const json& j) {
  require_object(j, "graph", {"nodes", "edges"});
  const json& nodes_j = require_key(j, "graph", "nodes");
  if (!nodes_j.is_number_integer() || nodes_j.get<long>() < 1) {
    fail("graph.nodes", "expected a positive integer");
  }
  const Eigen::Index n = nodes_j.get<Eigen::Index>();
  const json& edges_j = require_key(j, "graph", "edges");
  if (!edges_j.is_array()) fail("graph.edges", "expected an array of [from, to, weight] triples");

  std::vector<GraphEdge<double>> edges;
  for (size_t k = 0; k < edges_j.size(); ++k) {
    const std::string ep = "graph.edges[" + std::to_string(k) + "]";
    const json& ej = edges_j[k];
    if (!ej.is_array() || ej.size() != 3) fail(ep, "expected a [from, to, weight] triple");
    if (!ej[0].is_number_integer() || !ej[1].is_number_integer()) {
      fail(ep, "endpoints must be integers");
    }
    const long from = ej[0].get<long>();
    const long to = ej[1].get<long>();
    const double w = as_number(ej[2], ep + "[2]");
    if (from < 1 || from > n || to < 1 || to > n) fail(ep, "endpoints are 1-indexed node ids");
    edges.push_back(GraphEdge<double>{from - 1, to - 1, w});
  }
  try {
    return WeightedDigraph<double>::from_edges(n, edges);
  } catch (const ValidationError& e) {
    fail("graph", e.what());
  }
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  require_object(doc, "<root>",
                 {"problem", "graph", "algorithm", "integrator", "initial", "output"});

  ResourceProblem<double> problem = parse_problem(require_key(doc, "<root>", "problem"));
  WeightedDigraph<double> graph = parse_graph(require_key(doc, "<root>", "graph"));
  if (graph.nodes() != problem.agent_count()) {
    fail("graph.nodes", "agent count (" + std::to_string(problem.agent_count()) +
                            ") must equal node count (" + std::to_string(graph.nodes()) + ")");
  }

  ExperimentConfig cfg{std::move(problem), std::move(graph)};

  const json& aj = require_key(doc, "<root>", "algorithm");
  require_object(aj, "algorithm", {"type", "eps", "k_p", "k_i"});
  const std::string type = require_key(aj, "algorithm", "type").get<std::string>();
  if (type == "suboptimal") {
    cfg.algorithm = AlgorithmKind::Suboptimal;
    cfg.eps = as_number(require_key(aj, "algorithm", "eps"), "algorithm.eps");
    if (!(cfg.eps > 0)) fail("algorithm.eps", "must be positive");
    if (aj.contains("k_p") || aj.contains("k_i")) {
      fail("algorithm", "pi gains are not valid for the suboptimal algorithm");
    }
  } else if (type == "pi") {
    cfg.algorithm = AlgorithmKind::Pi;
    if (aj.contains("eps")) fail("algorithm", "eps is not valid for the pi algorithm");
    cfg.pi.k_p = aj.contains("k_p") ? as_number(aj["k_p"], "algorithm.k_p") : 1.0;
    cfg.pi.k_i = aj.contains("k_i") ? as_number(aj["k_i"], "algorithm.k_i") : 1.0;
    if (!(cfg.pi.k_p > 0) || !(cfg.pi.k_i > 0)) fail("algorithm", "pi gains must be positive");
  } else if (type == "primal-dual") {
    cfg.algorithm = AlgorithmKind::PrimalDual;
    if (aj.contains("eps") || aj.contains("k_p") || aj.contains("k_i")) {
      fail("algorithm", "primal-dual takes no parameters");
    }
  } else {
    fail("algorithm.type", "unknown algorithm '" + type + "'");
  }

  if (doc.contains("integrator")) {
    const json& ij = doc["integrator"];
    require_object(ij, "integrator",
                   {"method", "h", "rel_tol", "abs_tol", "max_step", "t_end", "record_every"});
    if (ij.contains("method")) {
      const std::string m = ij["method"].get<std::string>();
      if (m == "fixed-rk4") {
        cfg.integrator.method = StepMethod::FixedRk4;
      } else if (m == "adaptive-rkf45") {
        cfg.integrator.method = StepMethod::AdaptiveRkf45;
      } else {
        fail("integrator.method", "unknown method '" + m + "'");
      }
    }
    if (ij.contains("h")) cfg.integrator.h = as_number(ij["h"], "integrator.h");
    if (ij.contains("rel_tol")) cfg.integrator.rel_tol = as_number(ij["rel_tol"], "integrator.rel_tol");
    if (ij.contains("abs_tol")) cfg.integrator.abs_tol = as_number(ij["abs_tol"], "integrator.abs_tol");
    if (ij.contains("max_step")) cfg.integrator.max_step = as_number(ij["max_step"], "integrator.max_step");
    if (ij.contains("t_end")) cfg.t_end = as_number(ij["t_end"], "integrator.t_end");
    if (ij.contains("record_every")) {
      if (!ij["record_every"].is_number_integer() || ij["record_every"].get<int>() < 1) {
        fail("integrator.record_every", "expected a positive integer");
      }
      cfg.integrator.record_every = ij["record_every"].get<int>();
    }
    if (!(cfg.integrator.h > 0) || !(cfg.integrator.rel_tol > 0) ||
        !(cfg.integrator.abs_tol > 0) || !(cfg.integrator.max_step > 0)) {
      fail("integrator", "h, tolerances and max_step must be positive");
    }
    if (cfg.t_end < 0) fail("integrator.t_end", "must be nonnegative");
  }
  cfg.integrator.t_end = cfg.t_end > 0 ? cfg.t_end : 1.0;  // placeholder when horizon is zero

  const Eigen::Index nn = cfg.problem.stacked_dim();
  const Eigen::Index n = cfg.problem.dim();
  if (doc.contains("initial")) {
    const json& ij = doc["initial"];
    require_object(ij, "initial", {"type", "x", "lambda", "z", "mu"});
    const std::string t = require_key(ij, "initial", "type").get<std::string>();
    auto expect_vec = [&](const char* key, Eigen::Index len) {
      const json& vj = require_key(ij, "initial", key);
      Eigen::VectorXd v = as_vector(vj, std::string("initial.") + key);
      if (v.size() != len) {
        fail(std::string("initial.") + key, "expected length " + std::to_string(len));
      }
      return v;
    };
    if (t == "zeros") {
      cfg.initial.kind = InitialKind::Zeros;
    } else if (t == "b-start") {
      cfg.initial.kind = InitialKind::BStart;
    } else if (t == "explicit") {
      cfg.initial.kind = InitialKind::Explicit;
      cfg.initial.x = expect_vec("x", nn);
      if (cfg.algorithm == AlgorithmKind::PrimalDual) {
        cfg.initial.mu = expect_vec("mu", n);
      } else {
        cfg.initial.lambda = expect_vec("lambda", nn);
        if (cfg.algorithm == AlgorithmKind::Pi) cfg.initial.z = expect_vec("z", nn);
      }
    } else {
      fail("initial.type", "unknown initial state '" + t + "'");
    }
    if (cfg.initial.kind != InitialKind::Explicit &&
        (ij.contains("x") || ij.contains("lambda") || ij.contains("z") || ij.contains("mu"))) {
      fail("initial", "explicit vectors are only valid with type 'explicit'");
    }
  }

  if (doc.contains("output")) {
    const json& oj = doc["output"];
    require_object(oj, "output", {"dir"});
    if (oj.contains("dir")) cfg.output_dir = oj["dir"].get<std::string>();
    if (cfg.output_dir.empty()) fail("output.dir", "must not be empty");
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config: " + path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

nlohmann::json ExperimentConfig::resolved() const {
  json agents = json::array();
  for (Eigen::Index i = 0; i < problem.agent_count(); ++i) {
    const auto* qc = dynamic_cast<const QuadraticCost<double>*>(problem.agent(i).cost.get());
    json q = json::array();
    for (Eigen::Index r = 0; r < qc->q().rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < qc->q().cols(); ++c) row.push_back(qc->q()(r, c));
      q.push_back(row);
    }
    json rv = json::array(), bv = json::array();
    for (Eigen::Index k = 0; k < problem.dim(); ++k) {
      rv.push_back(qc->r()[k]);
      bv.push_back(problem.agent(i).b[k]);
    }
    agents.push_back(
        {{"cost", {{"type", "quadratic"}, {"q", q}, {"r", rv}, {"c", qc->c()}}}, {"b", bv}});
  }

  json edges = json::array();
  for (Eigen::Index j = 0; j < graph.nodes(); ++j) {
    for (Eigen::Index i = 0; i < graph.nodes(); ++i) {
      if (graph.weights()(i, j) > 0) {
        edges.push_back(json::array({j + 1, i + 1, graph.weights()(i, j)}));
      }
    }
  }

  json algo;
  switch (algorithm) {
    case AlgorithmKind::Suboptimal:
      algo = {{"type", "suboptimal"}, {"eps", eps}};
      break;
    case AlgorithmKind::Pi:
      algo = {{"type", "pi"}, {"k_p", pi.k_p}, {"k_i", pi.k_i}};
      break;
    case AlgorithmKind::PrimalDual:
      algo = {{"type", "primal-dual"}};
      break;
  }

  json init;
  switch (initial.kind) {
    case InitialKind::Zeros:
      init = {{"type", "zeros"}};
      break;
    case InitialKind::BStart:
      init = {{"type", "b-start"}};
      break;
    case InitialKind::Explicit: {
      init = {{"type", "explicit"}};
      auto vec = [](const Eigen::VectorXd& v) {
        json a = json::array();
        for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
        return a;
      };
      if (initial.x) init["x"] = vec(*initial.x);
      if (initial.lambda) init["lambda"] = vec(*initial.lambda);
      if (initial.z) init["z"] = vec(*initial.z);
      if (initial.mu) init["mu"] = vec(*initial.mu);
      break;
    }
  }

  return json{
      {"problem", {{"agents", agents}}},
      {"graph", {{"nodes", graph.nodes()}, {"edges", edges}}},
      {"algorithm", algo},
      {"integrator",
       {{"method",
         integrator.method == StepMethod::FixedRk4 ? "fixed-rk4" : "adaptive-rkf45"},
        {"h", integrator.h},
        {"rel_tol", integrator.rel_tol},
        {"abs_tol", integrator.abs_tol},
        {"max_step", integrator.max_step},
        {"t_end", t_end},
        {"record_every", integrator.record_every}}},
      {"initial", init},
      {"output", {{"dir", output_dir}}}};
}

}  // namespace dra::cli
