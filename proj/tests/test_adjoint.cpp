#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <advoc/adjoint.hpp>
#include <advoc/errors.hpp>
#include <advoc/io.hpp>

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <fstream>
#include <string>

#include "toy_problems.hpp"

using namespace advoc::adjoint;
using advoc::DomainError;
using advoc::ShapeMismatch;
using advoc::controls::FiberPolicy;
using advoc::controls::RelaxedControl;
using advoc::io::load_problem;
using advoc::io::load_problem_file;
using advoc::trajectory::Trajectory;
using advoc::trajectory::integrate_perturbed;

namespace {

std::string problems_dir() { return ADVOC_PROBLEMS_DIR; }

double inf_norm(const Mat& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

nlohmann::json scalar_contraction_json() {
  nlohmann::json doc;
  doc["name"] = "scalar_contraction";
  doc["n"] = 1;
  doc["m"] = 1;
  doc["horizon"] = {0.0, 1.0};
  doc["u_grid"] = {-1.0, 1.0};
  doc["v_grid"] = {0.0};
  doc["initial_box"] = {{"lo", {1.0}}, {"hi", {1.0}}};
  doc["initial_box_tilde"] = {{"lo", {0.0}}, {"hi", {0.0}}};
  doc["domain"] = {{"lo", {-4.0, -1.0}}, {"hi", {4.0, 1.0}}, {"collar", 1.0}};
  doc["psi"] = 0.51;
  doc["chi"] = 2.6;
  doc["f"] = {{"kind", "affine"}, {"A", {{-0.5}}}, {"lipschitz", 0.5}, {"bound", 2.5}};
  doc["f_tilde"] = {{"kind", "zero"}, {"lipschitz", 0.0}, {"bound", 0.0}};
  doc["h0"] = {{"kind", "linear"}, {"coeffs", {1.0}}, {"lipschitz", 1.0}, {"bound", 5.0}};
  return doc;
}

} // namespace

TEST_CASE("transport is the identity when the dynamics ignore the state") {
  toys::DriftToy toy = toys::make_drift_toy(9);
  toy.doc["f"]["A"] = {{0.0}};
  toy.doc["f"]["lipschitz"] = 0.0;
  const auto spec = load_problem(toy.doc);
  const int n = 200;
  const auto sigma = RelaxedControl::uniform(n, spec.u_grid);
  const Trajectory y = integrate_perturbed(spec, 5, sigma, Adversary::none(),
                                           spec.b_mid(), n);
  const auto Z = integrate_Z(spec, 5, sigma, y);
  REQUIRE(static_cast<int>(Z.size()) == n + 1);
  for (const Mat& zk : Z) CHECK(inf_norm(zk - Mat::Identity(1, 1)) == 0.0);
}

TEST_CASE("scalar contraction transports by the exact exponential") {
  const auto spec = load_problem(scalar_contraction_json());
  const int n = 1000;
  const auto sigma = RelaxedControl::dirac(n, 0, spec.u_grid);
  const Trajectory y = integrate_perturbed(spec, 5, sigma, Adversary::none(),
                                           spec.b_mid(), n);
  const auto Z = integrate_Z(spec, 5, sigma, y);
  // Z' = -Z A with A = -0.5 and Z(1) = 1 gives Z(t) = exp(-0.5 (1 - t)).
  for (int k = 0; k <= n; ++k) {
    const double t = y.times[k];
    CHECK(std::abs(Z[static_cast<size_t>(k)](0, 0) - std::exp(-0.5 * (1.0 - t))) < 1e-9);
  }
  CHECK(Z.back()(0, 0) == 1.0); // terminal condition is exact
}

TEST_CASE("joint adjoints keep the block triangle and the worked diagonal") {
  const auto spec = load_problem_file(problems_dir() + "/abs_bilinear_minimax.json");
  const int n = 1000;
  const auto sigma = RelaxedControl::dirac(n, 1, spec.u_grid); // u = +1
  const FiberPolicy copy = FiberPolicy::from_map(n, spec.u_grid, spec.v_grid,
                                                 [](int, int u) { return u; });
  const Trajectory yh = integrate_perturbed(spec, 10, sigma, Adversary::of(copy),
                                            spec.b_hat_mid(), n);
  const auto Zh = integrate_Z_hat(spec, 10, sigma, Adversary::of(copy), yh);
  for (int k = 0; k <= n; ++k) {
    const Mat& z = Zh[static_cast<size_t>(k)];
    const double t = yh.times[k];
    // The player block cannot react to the adversary state.
    CHECK(z(0, 1) == 0.0);
    CHECK(std::abs(z(0, 0) - 1.0) < 1e-12);
    CHECK(std::abs(z(1, 0)) < 1e-12);
    // With v = u = +1 the second coordinate evolves as xdot = x away from the
    // kink, so its transport factor is exp(1 - t).
    CHECK(std::abs(z(1, 1) - std::exp(1.0 - t)) < 1e-8);
  }
}

TEST_CASE("adjoints agree with the matrix exponential on coupled linear dynamics") {
  const auto spec = load_problem(toys::coupled_linear_json());
  const int n = 2000;
  const auto sigma = RelaxedControl::uniform(n, spec.u_grid);
  const auto pi = FiberPolicy::uniform(n, spec.u_grid, spec.v_grid);

  Mat A(2, 2);
  A << 0.1, 0.3, -0.2, 0.25;
  Mat Ahat(3, 3);
  Ahat << 0.1, 0.3, 0.0, -0.2, 0.25, 0.0, 0.2, -0.1, -0.3;

  const Trajectory y = integrate_perturbed(spec, 8, sigma, Adversary::none(),
                                           spec.b_mid(), n);
  const auto Z = integrate_Z(spec, 8, sigma, y);
  const Trajectory yh = integrate_perturbed(spec, 8, sigma, Adversary::of(pi),
                                            spec.b_hat_mid(), n);
  const auto Zh = integrate_Z_hat(spec, 8, sigma, Adversary::of(pi), yh);

  double worst = 0.0, worst_hat = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double rem = 1.0 - y.times[k];
    worst = std::max(worst, inf_norm(Z[static_cast<size_t>(k)] - (A * rem).exp()));
    worst_hat =
        std::max(worst_hat, inf_norm(Zh[static_cast<size_t>(k)] - (Ahat * rem).exp()));
  }
  CHECK(worst < 1e-6);
  CHECK(worst_hat < 1e-6);
}

TEST_CASE("a needle perturbation moves the cost by the Hamiltonian row gap") {
  const toys::DriftToy toy = toys::make_drift_toy(5);
  const auto spec = load_problem(toy.doc);
  const int n = 200, j = 3;
  const auto sigma = RelaxedControl::uniform(n, spec.u_grid);
  const Trajectory y = integrate_perturbed(spec, j, sigma, Adversary::none(),
                                           spec.b_mid(), n);

  AdjointMatrices adj;
  adj.j = j;
  adj.Z = integrate_Z(spec, j, sigma, y);

  MultiplierSet mult;
  mult.l0 = 1.0;
  mult.l1 = 0.0;
  mult.H0 = Vec::Constant(1, 1.0); // gradient of h0 = y
  mult.H1 = Vec::Zero(1);

  TrajectoryBundle bundle;
  bundle.y_sigma = &y;
  const HamiltonianTable table = assemble_hamiltonians(spec, j, mult, adj, bundle);

  const int step = 77;
  // Pick the control farthest from the mixture average so the effect is large.
  int u_pick = 0;
  double spread = -1.0;
  const double c_avg = (toy.c[0] + toy.c[1] + toy.c[2]) / 3.0;
  for (int u = 0; u < 3; ++u) {
    if (std::abs(toy.c[static_cast<size_t>(u)] - c_avg) > spread) {
      spread = std::abs(toy.c[static_cast<size_t>(u)] - c_avg);
      u_pick = u;
    }
  }

  const double dt = y.dt();
  const double pred =
      dt * (table.base0(step, u_pick) -
            sigma.weights.row(step).dot(table.base0.row(step)));
  REQUIRE(std::abs(pred) > 1e-3);

  const double eps = 0.25;
  RelaxedControl shifted = sigma;
  shifted.weights.row(step) *= (1.0 - eps);
  shifted.weights(step, u_pick) += eps;
  const Trajectory y_eps = integrate_perturbed(spec, j, shifted, Adversary::none(),
                                               spec.b_mid(), n);
  const double meas =
      (spec.h0.value(spec.t1, y_eps.endpoint())[0] -
       spec.h0.value(spec.t1, y.endpoint())[0]) / eps;
  CHECK(std::abs(pred - meas) < 1e-3 * (1.0 + std::abs(pred) + std::abs(meas)));
}

TEST_CASE("transport norms respect the Gronwall envelope and the growth rate") {
  const toys::DriftToy toy = toys::make_drift_toy(6);
  const auto spec = load_problem(toy.doc);
  const int n = 400, j = 5;
  const auto sigma = RelaxedControl::uniform(n, spec.u_grid);
  const Trajectory y = integrate_perturbed(spec, j, sigma, Adversary::none(),
                                           spec.b_mid(), n);
  AdjointMatrices adj;
  adj.j = j;
  adj.Z = integrate_Z(spec, j, sigma, y);

  const double bound = AdjointMatrices::gronwall_bound(spec);
  CHECK(adj.sup_norm() <= bound);
  CHECK(bound == doctest::Approx(1.0 + (spec.t1 - spec.t0) * spec.lipschitz() *
                                           std::exp(spec.t1 - spec.t0)));

  // Entrywise growth between grid nodes is at most dt * psi * sup|Z|.
  const double dt = y.dt();
  const double cap = 1.05 * dt * spec.lipschitz() * adj.sup_norm() + 1e-12;
  for (size_t k = 0; k + 1 < adj.Z.size(); ++k) {
    CHECK(inf_norm(adj.Z[k + 1] - adj.Z[k]) <= cap);
  }
}

TEST_CASE("limit sweeps are Cauchy when the smoothing is genuinely active") {
  nlohmann::json doc =
      nlohmann::json::parse(std::ifstream(problems_dir() + "/abs_bilinear_minimax.json"));
  doc["initial_box_tilde"] = {{"lo", {0.05}}, {"hi", {0.05}}};
  const auto spec = load_problem(doc);
  const int n = 400;
  const auto sigma = RelaxedControl::dirac(n, 1, spec.u_grid); // u = +1
  const FiberPolicy copy = FiberPolicy::from_map(n, spec.u_grid, spec.v_grid,
                                                 [](int, int u) { return u; });
  MultiplierSet mult;
  mult.l0 = 0.5;
  mult.omega.push_back({copy, 0.5});

  const auto sweep = limit_sweep(spec, {5, 10, 20, 40, 80}, {sigma}, {mult}, n);
  REQUIRE(sweep.adjoint_increments.size() == 4);
  CHECK(sweep.adjoint_increments[0] > 1e-4); // the kink region is really seen
  CHECK_FALSE(sweep.non_cauchy_adjoint);
  CHECK_FALSE(sweep.non_cauchy_multiplier);
  CHECK(sweep.limit.j == 80);
  REQUIRE(sweep.limit.Z_hat_per_atom.size() == 1);

  SUBCASE("input guards") {
    CHECK_THROWS_AS(limit_sweep(spec, {10, 5}, {sigma}, {}, n), DomainError);
    CHECK_THROWS_AS(limit_sweep(spec, {5, 10}, {}, {}, n), DomainError);
    CHECK_THROWS_AS(limit_sweep(spec, {5, 10, 20}, {sigma, sigma}, {}, n),
                    ShapeMismatch);
  }
}
