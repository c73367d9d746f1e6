#include <doctest.h>

#include "dra/equilibrium.hpp"
#include "support.hpp"

using namespace dra;
using namespace testsupport;

TEST_CASE("kkt oracle on the reference problem") {
  const KktSolution<double> kkt = solve_kkt(three_agent_problem());
  CHECK((kkt.x_star - Eigen::Vector3d(1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0)).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK(std::abs(kkt.mu_star[0] + 1.0 / 6.0) < 1e-12);
  CHECK(kkt.kkt_residual < 1e-11);
}

TEST_CASE("kkt symmetry: identical costs share the resource equally") {
  std::vector<Agent<double>> agents;
  Rng rng(2);
  for (int i = 0; i < 4; ++i) {
    agents.push_back(Agent<double>{
        std::make_shared<QuadraticCost<double>>(MatX<double>::Identity(2, 2),
                                                VecX<double>::Zero(2), 0.0),
        random_vector(rng, 2)});
  }
  const ResourceProblem<double> p(2, std::move(agents));
  const KktSolution<double> kkt = solve_kkt(p);
  const Eigen::Vector2d share = p.total_resource() / 4.0;
  for (int i = 0; i < 4; ++i) {
    CHECK((kkt.x_star.segment(2 * i, 2) - share).cwiseAbs().maxCoeff() < 1e-11);
  }
}

TEST_CASE("kkt optimality certified by random feasible points") {
  Rng rng(13);
  const auto p = random_quadratic_problem(rng, 2, 5);
  const KktSolution<double> kkt = solve_kkt(p);
  const double best = total_cost<double>(p, kkt.x_star);
  for (int k = 0; k < 1000; ++k) {
    const Eigen::VectorXd cand = project_feasible(p, random_vector(rng, 10, 2.0));
    CHECK(total_cost<double>(p, cand) >= best - 1e-9);
  }
}

TEST_CASE("kkt newton path on a nonquadratic problem") {
  std::vector<Agent<double>> agents;
  agents.push_back(Agent<double>{std::make_shared<QuarticCost>(1, 1.0, 0.05),
                                 VecX<double>::Constant(1, 0.4)});
  agents.push_back(Agent<double>{std::make_shared<QuarticCost>(1, 0.5, 0.02),
                                 VecX<double>::Constant(1, 0.6)});
  const ResourceProblem<double> p(1, std::move(agents));
  const KktSolution<double> kkt = solve_kkt(p);
  CHECK(kkt.kkt_residual < 1e-11);
  // Monte-Carlo certificate on the feasible line
  Rng rng(4);
  const double best = total_cost<double>(p, kkt.x_star);
  for (int k = 0; k < 500; ++k) {
    const Eigen::VectorXd cand = project_feasible(p, random_vector(rng, 2, 1.0));
    CHECK(total_cost<double>(p, cand) >= best - 1e-9);
  }
}

TEST_CASE("newton equilibrium matches the closed form") {
  const auto p = three_agent_problem();
  const auto l = laplacian(three_cycle_graph());
  for (double eps : {1.0, 0.1, 0.01}) {
    const Equilibrium<double> eq = solve_equilibrium_newton(p, l, eps);
    CHECK((eq.x_bar - three_agent_x_bar(eps)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((eq.lambda_bar - three_agent_lambda_bar(eps)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(eq.residual < 1e-11);
  }
  // spot values at eps = 0.1 from the closed form
  const Equilibrium<double> eq = solve_equilibrium_newton(p, l, 0.1);
  CHECK(eq.x_bar[0] == doctest::Approx(0.189241).epsilon(1e-5));
  CHECK(eq.x_bar[1] == doctest::Approx(0.635927).epsilon(1e-5));
  CHECK(eq.x_bar[2] == doctest::Approx(0.174832).epsilon(1e-5));
}

TEST_CASE("equilibrium equals the optimum when b = x*") {
  const auto p = three_agent_problem(1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0);
  const auto l = laplacian(three_cycle_graph());
  const KktSolution<double> kkt = solve_kkt(p);
  for (double eps : {1.0, 0.1, 0.01}) {
    const Equilibrium<double> eq = solve_equilibrium_newton(p, l, eps);
    CHECK((eq.x_bar - kkt.x_star).norm() < 1e-9);
    CHECK((eq.lambda_bar - kkt.lambda_star).norm() < 1e-9);
  }
}

TEST_CASE("solver refuses graphs outside the standing assumption") {
  const auto p = three_agent_problem();
  // unbalanced: one-way chain
  const auto chain = WeightedDigraph<double>::from_edges(
      3, {GraphEdge<double>{0, 1, 1.0}, GraphEdge<double>{1, 2, 1.0}});
  CHECK_THROWS_AS(solve_equilibrium_newton(p, laplacian(chain), 0.1), AssumptionError);
  // balanced but disconnected
  Eigen::MatrixXd two = Eigen::MatrixXd::Zero(3, 3);
  two(0, 1) = 1.0;
  two(1, 0) = 1.0;
  CHECK_THROWS_AS(solve_equilibrium_newton(p, laplacian(WeightedDigraph<double>(two)), 0.1),
                  AssumptionError);
}

TEST_CASE("phi map is constant for quadratic costs") {
  Rng rng(6);
  const auto p = three_agent_problem();
  const auto l = laplacian(three_cycle_graph());
  const KktSolution<double> kkt = solve_kkt(p);
  const double eps = 0.1;

  const Eigen::VectorXd at_zero = phi_map(p, l, eps, kkt, Eigen::VectorXd::Zero(3));
  for (int k = 0; k < 10; ++k) {
    const Eigen::VectorXd z = random_vector(rng, 3);
    CHECK((phi_map(p, l, eps, kkt, z) - at_zero).cwiseAbs().maxCoeff() < 1e-13);
  }
  // the constant is the gap of the equilibrium itself
  const Equilibrium<double> eq = solve_equilibrium_newton(p, l, eps);
  CHECK((at_zero - (eq.x_bar - kkt.x_star)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("phi iteration: one application suffices on quadratics") {
  Rng rng(17);
  const auto p = three_agent_problem();
  const auto l = laplacian(three_cycle_graph());
  const KktSolution<double> kkt = solve_kkt(p);
  for (double eps : {1.0, 0.1, 0.01}) {
    const Equilibrium<double> phi = solve_equilibrium_phi(p, l, eps, kkt);
    CHECK(phi.iterations == 1);
    const Equilibrium<double> newton = solve_equilibrium_newton(p, l, eps);
    CHECK((phi.x_bar - newton.x_bar).norm() < 1e-8);
    CHECK((phi.lambda_bar - newton.lambda_bar).norm() < 1e-8);
  }
}

TEST_CASE("solver agreement on random quadratic problems") {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index agents = 3 + static_cast<Eigen::Index>(rng() % 4);
    const auto p = random_quadratic_problem(rng, 2, agents);
    const auto l = laplacian(random_balanced_graph(rng, agents));
    const KktSolution<double> kkt = solve_kkt(p);
    const double eps = 0.05 + 0.2 * std::uniform_real_distribution<double>(0, 1)(rng);
    const Equilibrium<double> a = solve_equilibrium_newton(p, l, eps);
    const Equilibrium<double> b = solve_equilibrium_phi(p, l, eps, kkt);
    CHECK(b.iterations == 1);
    CHECK((a.x_bar - b.x_bar).norm() < 1e-8);
    CHECK((a.lambda_bar - b.lambda_bar).norm() < 1e-8);
  }
}

TEST_CASE("phi iteration contracts on a smooth nonquadratic problem") {
  std::vector<Agent<double>> agents;
  agents.push_back(Agent<double>{std::make_shared<QuarticCost>(1, 1.0, 0.08),
                                 VecX<double>::Constant(1, 0.5)});
  agents.push_back(Agent<double>{std::make_shared<QuarticCost>(1, 0.7, 0.05),
                                 VecX<double>::Constant(1, 0.2)});
  agents.push_back(Agent<double>{std::make_shared<QuarticCost>(1, 1.3, 0.02),
                                 VecX<double>::Constant(1, 0.3)});
  const ResourceProblem<double> p(1, std::move(agents));
  const auto l = laplacian(three_cycle_graph());
  const KktSolution<double> kkt = solve_kkt(p);

  const Equilibrium<double> eq = solve_equilibrium_phi(p, l, 0.05, kkt);
  CHECK(eq.iterations > 1);
  CHECK(eq.contraction_ratio < 1.0);
  CHECK(eq.residual < 1e-11);

  // cross-check against Newton
  const Equilibrium<double> newton = solve_equilibrium_newton(p, l, 0.05);
  CHECK((eq.x_bar - newton.x_bar).norm() < 1e-8);
}

TEST_CASE("lambda_bar is the negated gradient at x_bar") {
  Rng rng(29);
  const auto p = random_quadratic_problem(rng, 2, 4);
  const auto l = laplacian(random_balanced_graph(rng, 4));
  const Equilibrium<double> eq = solve_equilibrium_newton(p, l, 0.1);
  CHECK((eq.lambda_bar + total_gradient<double>(p, eq.x_bar)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("gap report") {
  const auto p = three_agent_problem();
  const auto l = laplacian(three_cycle_graph());
  const KktSolution<double> kkt = solve_kkt(p);

  const GapReport<double> gap = suboptimality_gap(solve_equilibrium_newton(p, l, 0.1), kkt);
  CHECK(gap.x_gap == doctest::Approx(0.03900).epsilon(1e-3));

  // gaps shrink monotonically along a decreasing eps sequence
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.1, 0.01, 0.001}) {
    const GapReport<double> g = suboptimality_gap(solve_equilibrium_newton(p, l, eps), kkt);
    CHECK(g.x_gap < prev);
    prev = g.x_gap;
  }

  // b = x* gives zero gaps at any eps
  const auto exact = three_agent_problem(1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0);
  const KktSolution<double> ek = solve_kkt(exact);
  for (double eps : {1.0, 0.1, 0.01}) {
    const GapReport<double> g = suboptimality_gap(solve_equilibrium_newton(exact, l, eps), ek);
    CHECK(g.x_gap < 1e-9);
    CHECK(g.lambda_gap < 1e-9);
  }
}

TEST_CASE("constraint exactness across randomized problems") {
  Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index agents = 3 + static_cast<Eigen::Index>(rng() % 6);  // up to 8
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 3);
    const auto p = random_quadratic_problem(rng, n, agents);
    const auto l = laplacian(random_balanced_graph(rng, agents));
    const Eigen::VectorXd d = p.total_resource();
    for (double eps : {0.5, 0.1, 0.02}) {
      const Equilibrium<double> eq = solve_equilibrium_newton(p, l, eps);
      Eigen::VectorXd sum = -d;
      for (Eigen::Index i = 0; i < agents; ++i) sum += eq.x_bar.segment(i * n, n);
      CHECK(sum.cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("closed-form deviation components sum to zero") {
  for (double eps : {0.2, 0.1, 0.02}) {
    const Eigen::Vector3d dev = three_agent_x_bar(eps) -
                                Eigen::Vector3d(1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0);
    CHECK(std::abs(dev.sum()) < 1e-15);
  }
}
