#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <advoc/errors.hpp>
#include <advoc/io.hpp>
#include <advoc/trajectory.hpp>

#include <cmath>
#include <fstream>
#include <string>

#include "toy_problems.hpp"

using namespace advoc::trajectory;
using advoc::DomainError;
using advoc::ShapeMismatch;
using advoc::StepCountTooSmall;
using advoc::controls::FiberPolicy;
using advoc::controls::RelaxedControl;
using advoc::io::load_problem;
using advoc::io::load_problem_file;
using advoc::problem::ProblemSpec;

namespace {

nlohmann::json abs_growth_json() {
  // ydot = |y|, y(0) = 1: the solution is e^t while y stays positive.
  nlohmann::json doc;
  doc["name"] = "abs_growth";
  doc["n"] = 1;
  doc["m"] = 1;
  doc["horizon"] = {0.0, 1.0};
  doc["u_grid"] = {0.0};
  doc["v_grid"] = {0.0};
  doc["initial_box"] = {{"lo", {1.0}}, {"hi", {1.0}}};
  doc["initial_box_tilde"] = {{"lo", {0.0}}, {"hi", {0.0}}};
  doc["domain"] = {{"lo", {-4.0, -1.0}}, {"hi", {4.0, 1.0}}, {"collar", 1.0}};
  doc["psi"] = 1.0;
  doc["chi"] = 5.0;
  doc["f"] = {{"kind", "abs_of_coord"}, {"index", 0}, {"lipschitz", 1.0}, {"bound", 5.0}};
  doc["f_tilde"] = {{"kind", "zero"}, {"lipschitz", 0.0}, {"bound", 0.0}};
  doc["h0"] = {{"kind", "linear"}, {"coeffs", {1.0}}, {"lipschitz", 1.0}, {"bound", 6.0}};
  return doc;
}

std::string problems_dir() { return ADVOC_PROBLEMS_DIR; }

} // namespace

TEST_CASE("relaxed integration reproduces exponential growth") {
  const ProblemSpec spec = load_problem(abs_growth_json());
  const auto sigma = RelaxedControl::dirac(1000, 0, spec.u_grid);
  const Trajectory tr = integrate_relaxed(spec, sigma, spec.b_mid(), 1000);
  CHECK(tr.n_steps() == 1000);
  CHECK(tr.times[0] == 0.0);
  CHECK(tr.times[1000] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(tr.endpoint()[0] - std::exp(1.0)) < 1e-6);
}

TEST_CASE("integration error decays at fourth order under step halving") {
  const ProblemSpec spec = load_problem(abs_growth_json());
  auto err_at = [&](int n) {
    const auto sigma = RelaxedControl::dirac(n, 0, spec.u_grid);
    return std::abs(integrate_relaxed(spec, sigma, spec.b_mid(), n).endpoint()[0] -
                    std::exp(1.0));
  };
  const double e100 = err_at(100);
  const double e200 = err_at(200);
  CHECK(e100 > 0.0);
  CHECK(e100 / e200 > 8.0); // classical RK4 gives ~16
}

TEST_CASE("fiber integration follows the adversary's conditional choice") {
  const ProblemSpec spec =
      load_problem_file(problems_dir() + "/abs_bilinear_minimax.json");
  const int n = 1000;
  // Player pins u = +1 (index 1); adversary answers v = -1 (index 0), so the
  // second coordinate decays like e^{-t} from 1.
  const auto sigma = RelaxedControl::dirac(n, 1, spec.u_grid);
  const auto pi = FiberPolicy::from_map(n, spec.u_grid, spec.v_grid,
                                        [](int, int) { return 0; });
  const Trajectory tr = integrate_fiber(spec, sigma, pi, spec.b_hat_mid(), n);
  CHECK(std::abs(tr.endpoint()[0] - spec.b_mid()[0]) < 1e-12); // f = 0 keeps y put
  CHECK(std::abs(tr.endpoint()[1] - std::exp(-1.0)) < 1e-8);
}

TEST_CASE("product joints equal fiber joints built from the same marginal") {
  const ProblemSpec spec =
      load_problem_file(problems_dir() + "/abs_bilinear_minimax.json");
  const int n = 400;
  auto sigma = RelaxedControl::uniform(n, spec.u_grid);
  auto sigma_p = RelaxedControl::uniform(n, spec.v_grid);
  sigma_p.weights.col(0).setConstant(0.3);
  sigma_p.weights.col(1).setConstant(0.7);

  const Trajectory via_product = integrate_product(spec, sigma, sigma_p, spec.b_hat_mid(), n);
  const FiberPolicy pi = FiberPolicy::from_relaxed(sigma_p, spec.u_grid->size(), spec.u_grid);
  const Trajectory via_fiber = integrate_fiber(spec, sigma, pi, spec.b_hat_mid(), n);
  CHECK((via_product.states - via_fiber.states).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("smoothed integration is exact on affine dynamics for every j") {
  const toys::DriftToy toy = toys::make_drift_toy(4);
  const ProblemSpec spec = load_problem(toy.doc);
  const int n = 500;
  auto sigma = RelaxedControl::uniform(n, spec.u_grid);
  sigma.weights.col(0).setConstant(0.2);
  sigma.weights.col(1).setConstant(0.5);
  sigma.weights.col(2).setConstant(0.3);
  const Trajectory raw = integrate_relaxed(spec, sigma, spec.b_mid(), n);
  for (int j : {1, 5, 40}) {
    const Trajectory smooth =
        integrate_perturbed(spec, j, sigma, Adversary::none(), spec.b_mid(), n);
    CHECK((raw.states - smooth.states).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("proximity gaps stay inside the certified bounds and shrink with j") {
  // Start the adversary coordinate near the |x| kink so the smoothing error is
  // actually visible along the trajectory.
  nlohmann::json doc =
      nlohmann::json::parse(std::ifstream(problems_dir() + "/abs_bilinear_minimax.json"));
  doc["initial_box_tilde"] = {{"lo", {0.05}}, {"hi", {0.05}}};
  const ProblemSpec spec = load_problem(doc);
  const int n = 1000;
  // Pin u = +1 and let the adversary copy it, so the second coordinate really
  // crosses the smoothing region (a uniform pair averages the drift to zero).
  const auto sigma = RelaxedControl::dirac(n, 1, spec.u_grid);
  const auto pi = FiberPolicy::from_map(n, spec.u_grid, spec.v_grid,
                                        [](int, int u) { return u; });

  const ProximityReport r5 = proximity_report(spec, 5, sigma, pi, spec.b_hat_mid(), n);
  const ProximityReport r10 = proximity_report(spec, 10, sigma, pi, spec.b_hat_mid(), n);

  CHECK(r5.pass(1e-8));
  CHECK(r10.pass(1e-8));
  CHECK(r5.gap_state > 1e-6);               // the kink is genuinely felt at j = 5
  CHECK(r10.gap_state < r5.gap_state + 1e-12);
  CHECK(r10.bound_state == doctest::Approx(0.5 * r5.bound_state).epsilon(1e-12));
  CHECK(r5.bound_field == doctest::Approx((r5.constants.c_y_hat + 1.0) / 5.0).epsilon(1e-12));
}

TEST_CASE("integration guards reject malformed inputs") {
  const ProblemSpec spec = load_problem(abs_growth_json());
  const auto sigma = RelaxedControl::dirac(100, 0, spec.u_grid);

  // Wrong row count vs n_steps.
  CHECK_THROWS_AS(integrate_relaxed(spec, sigma, spec.b_mid(), 200), ShapeMismatch);
  // Wrong state dimension.
  CHECK_THROWS_AS(integrate_relaxed(spec, sigma, Eigen::VectorXd::Zero(2), 100),
                  ShapeMismatch);
  // Initial state outside the declared box.
  CHECK_THROWS_AS(
      integrate_relaxed(spec, sigma, Eigen::VectorXd::Constant(1, 0.25), 100),
      DomainError);
  // Step count too coarse for the declared Lipschitz constant (dt * L > 0.5).
  const auto sigma1 = RelaxedControl::dirac(1, 0, spec.u_grid);
  CHECK_THROWS_AS(integrate_relaxed(spec, sigma1, spec.b_mid(), 1), StepCountTooSmall);
  // j must be positive.
  CHECK_THROWS_AS(
      integrate_perturbed(spec, 0, sigma, Adversary::none(), spec.b_mid(), 100),
      DomainError);
}
