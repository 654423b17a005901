#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <advoc/errors.hpp>
#include <advoc/io.hpp>
#include <advoc/solver.hpp>
#include <advoc/trajectory.hpp>

#include <cmath>
#include <string>

#include "oracles.hpp"
#include "toy_problems.hpp"

using namespace advoc::solver;
using advoc::DomainError;
using advoc::InfeasibleStart;
using advoc::adjoint::kLimit;
using advoc::controls::ControlGrid;
using advoc::io::load_problem;
using advoc::io::load_problem_file;
using advoc::trajectory::Adversary;
using advoc::trajectory::ProximityConstants;
using advoc::trajectory::integrate_perturbed;

namespace {

std::string problems_dir() { return ADVOC_PROBLEMS_DIR; }

// Minimal table for player_step tests: only H and its sup matter.
HamiltonianTable table_from(const Mat& H) {
  HamiltonianTable t;
  t.H = H;
  t.sup_abs_H = H.cwiseAbs().maxCoeff();
  return t;
}

nlohmann::json lying_equality_json(double declared_lipschitz) {
  nlohmann::json doc;
  doc["name"] = "kinked_equality";
  doc["n"] = 1;
  doc["m"] = 1;
  doc["horizon"] = {0.0, 1.0};
  doc["u_grid"] = {-1.0, 1.0};
  doc["v_grid"] = {0.0};
  doc["initial_box"] = {{"lo", {0.0}}, {"hi", {0.0}}};
  doc["initial_box_tilde"] = {{"lo", {0.0}}, {"hi", {0.0}}};
  doc["domain"] = {{"lo", {-1.0, -1.0}}, {"hi", {1.0, 1.0}}, {"collar", 1.0}};
  doc["psi"] = 0.01;
  doc["chi"] = 0.01;
  doc["f"] = {{"kind", "zero"}, {"lipschitz", 0.0}, {"bound", 0.0}};
  doc["f_tilde"] = {{"kind", "zero"}, {"lipschitz", 0.0}, {"bound", 0.0}};
  doc["h0"] = {{"kind", "linear"}, {"coeffs", {1.0}}, {"lipschitz", 1.0}, {"bound", 2.0}};
  doc["h1"] = {{"kind", "abs_of_coord"}, {"index", 0},
               {"lipschitz", declared_lipschitz}, {"bound", 2.0}};
  return doc;
}

} // namespace

TEST_CASE("player steps target the admissible argmin Dirac") {
  ControlGrid grid;
  grid.points = Vec(3);
  grid.points << -1.0, 0.0, 1.0;

  Mat H(2, 3);
  H << 3.0, 1.0, 2.0,  // argmin u = 1
      -1.0, 0.0, -2.0; // argmin u = 2
  const auto table = table_from(H);

  auto g = std::make_shared<ControlGrid>(grid);
  const auto sigma = RelaxedControl::uniform(2, g);

  SUBCASE("full step lands exactly on the Dirac") {
    StepRule rule{StepRule::Kind::fixed, 1.0};
    const RelaxedControl out = player_step(sigma, table, *g, rule, 0);
    CHECK(out.weights(0, 1) == 1.0);
    CHECK(out.weights(1, 2) == 1.0);
    CHECK(out.weights(0, 0) == 0.0);
    // The first vanishing step has the same gamma = 1.
    StepRule vanishing{};
    const RelaxedControl out2 = player_step(sigma, table, *g, vanishing, 0);
    CHECK((out.weights - out2.weights).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("vanishing steps blend at rate 2/(iter+2)") {
    StepRule rule{}; // vanishing
    const RelaxedControl out = player_step(sigma, table, *g, rule, 2); // gamma = 1/2
    CHECK(out.weights(0, 1) == doctest::Approx(0.5 * (1.0 / 3.0) + 0.5));
    CHECK(out.weights(0, 0) == doctest::Approx(0.5 * (1.0 / 3.0)));
    CHECK(out.weights.row(0).sum() == doctest::Approx(1.0));
  }

  SUBCASE("the argmin Dirac is a fixed point with zero gap") {
    RelaxedControl best = sigma;
    best.weights.setZero();
    best.weights(0, 1) = 1.0;
    best.weights(1, 2) = 1.0;
    CHECK(table.fw_gap(best, 0.5, *g) == 0.0);
    StepRule rule{StepRule::Kind::fixed, 1.0};
    const RelaxedControl out = player_step(best, table, *g, rule, 5);
    CHECK((out.weights - best.weights).cwiseAbs().maxCoeff() == 0.0);
    // Uniform weights leave a strictly positive gap.
    CHECK(table.fw_gap(sigma, 0.5, *g) > 0.0);
  }

  SUBCASE("argmin selection is invariant under positive rescaling") {
    const auto scaled = table_from(Mat(100.0 * H));
    StepRule rule{StepRule::Kind::fixed, 1.0};
    const RelaxedControl a = player_step(sigma, table, *g, rule, 0);
    const RelaxedControl b = player_step(sigma, scaled, *g, rule, 0);
    CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("masked points are never selected") {
    ControlGrid masked = grid;
    masked.mask.resize(2, 3);
    masked.mask.setOnes();
    masked.mask(0, 1) = 0; // forbid the unmasked argmin at step 0
    auto mg = std::make_shared<ControlGrid>(masked);
    auto sig = RelaxedControl::uniform(2, mg);
    StepRule rule{StepRule::Kind::fixed, 1.0};
    const RelaxedControl out = player_step(sig, table, *mg, rule, 0);
    CHECK(out.weights(0, 2) == 1.0); // next best admissible at step 0
    CHECK(out.weights(1, 2) == 1.0);
  }
}

TEST_CASE("adversary best responses track the transported gradient") {
  const auto spec = load_problem_file(problems_dir() + "/abs_bilinear_minimax.json");
  const int n = 50;
  const auto sigma = RelaxedControl::dirac(n, 1, spec.u_grid); // u = +1
  const auto pi0 = FiberPolicy::uniform(n, spec.u_grid, spec.v_grid);
  const Trajectory yh = integrate_perturbed(spec, 5, sigma, Adversary::of(pi0),
                                            spec.b_hat_mid(), n);

  Mat k_hat = Mat::Ones(n + 1, 2);

  SUBCASE("hyperrelaxed: per-(step,u) maximizer of k_hat . f_hat") {
    const FiberPolicy br = adversary_best_response(spec, 5, sigma, k_hat, yh,
                                                   Mode::hyperrelaxed);
    for (int k = 0; k < n; ++k) {
      // f_hat = (0, |x| u v): positive k_hat row wants uv > 0.
      CHECK(br.weights[static_cast<size_t>(k)](1, 1) == 1.0); // u=+1 -> v=+1
      CHECK(br.weights[static_cast<size_t>(k)](0, 0) == 1.0); // u=-1 -> v=-1
    }
    const FiberPolicy flipped = adversary_best_response(spec, 5, sigma, Mat(-k_hat),
                                                        yh, Mode::hyperrelaxed);
    for (int k = 0; k < n; ++k) {
      CHECK(flipped.weights[static_cast<size_t>(k)](1, 0) == 1.0); // u=+1 -> v=-1
      CHECK(flipped.weights[static_cast<size_t>(k)](0, 1) == 1.0); // u=-1 -> v=+1
    }
  }

  SUBCASE("relaxed: sigma-averaged response is u-independent") {
    const FiberPolicy br = adversary_best_response(spec, 5, sigma, k_hat, yh,
                                                   Mode::relaxed);
    for (int k = 0; k < n; ++k) {
      // Average over sigma (Dirac at u=+1) leaves |x| v: pick v = +1 for all u.
      CHECK(br.weights[static_cast<size_t>(k)](0, 1) == 1.0);
      CHECK(br.weights[static_cast<size_t>(k)](1, 1) == 1.0);
    }
  }

  SUBCASE("raw-field evaluation works through the limit sentinel") {
    const FiberPolicy br = adversary_best_response(spec, kLimit, sigma, k_hat, yh,
                                                   Mode::hyperrelaxed);
    CHECK(br.weights[0](1, 1) == 1.0);
  }
}

TEST_CASE("perturbed problems calibrate the equality shift inside the window") {
  SUBCASE("honest Lipschitz constant: shift equals the smoothing gap") {
    const auto spec = load_problem(lying_equality_json(1.0));
    const auto sigma = RelaxedControl::uniform(100, spec.u_grid);
    const double m1 = oracles::bump_first_moment(1);
    for (int j : {5, 10}) {
      const PerturbedProblem pp = make_perturbed(spec, j, sigma, 100);
      CHECK(pp.j == j);
      // y stays at 0, so the gap is exactly the smoothed |.| at the kink.
      CHECK(std::abs(pp.a_j - m1 / j) < 5e-4 / j);
      CHECK(pp.b_bar[0] == 0.0);
    }
  }

  SUBCASE("understated Lipschitz constant leaves no admissible shift") {
    const auto spec = load_problem(lying_equality_json(0.01));
    const auto sigma = RelaxedControl::uniform(100, spec.u_grid);
    CHECK_THROWS_AS(make_perturbed(spec, 5, sigma, 100), InfeasibleStart);
  }

  SUBCASE("inequality tightening is c_hhat / j") {
    const auto spec = load_problem_file(problems_dir() + "/abs_bilinear_minimax.json");
    const auto sigma = RelaxedControl::uniform(100, spec.u_grid);
    const ProximityConstants c = ProximityConstants::of(spec);
    const PerturbedProblem pp = make_perturbed(spec, 5, sigma, 100);
    CHECK(pp.constraint_shift == doctest::Approx(c.c_h_hat / 5.0).epsilon(1e-12));
    CHECK(pp.b_bar[0] == spec.b_mid()[0]);
    CHECK(pp.b_hat().size() == 2);
  }
}

TEST_CASE("unconstrained solves recover the enumerated optimum with l0 = 1") {
  const toys::DriftToy toy = toys::make_drift_toy(7);
  const auto spec = load_problem(toy.doc);

  SolveConfig cfg;
  cfg.n_steps = 200;
  const NCCertificate cert = run_j_sweep(spec, {5, 10}, cfg);

  CHECK(cert.status == "certified");
  CHECK(cert.multipliers.l0 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cert.multipliers.l1 == 0.0);
  CHECK(cert.multipliers.omega.empty());
  CHECK(cert.multipliers.normalized());

  const double oracle = oracles::enumerate_min(
      [&](double, const oracles::Vec& y, int u) {
        return oracles::Vec::Constant(1, toy.a * y[0] + toy.c[static_cast<size_t>(u)]);
      },
      oracles::Vec::Constant(1, toy.y0), 0.0, 1.0, 3, 8, 25,
      [](const oracles::Vec& y) { return y[0]; });
  CHECK(std::abs(cert.value - oracle) < 1e-6);
}

TEST_CASE("warm starts reuse the incumbent without degrading the solve") {
  const toys::DriftToy toy = toys::make_drift_toy(8);
  const auto spec = load_problem(toy.doc);
  SolveConfig cfg;
  cfg.n_steps = 200;

  const auto sigma0 = RelaxedControl::uniform(200, spec.u_grid);
  const PerturbedProblem pp = make_perturbed(spec, 5, sigma0, 200);
  const SolveResult cold = solve_perturbed(pp, cfg, sigma0);
  const SolveResult warm = solve_perturbed(pp, cfg, cold.sigma);

  CHECK_FALSE(cold.hit_max_iterations);
  CHECK_FALSE(warm.hit_max_iterations);
  CHECK(warm.fw_iterations <= cold.fw_iterations);
  CHECK(std::abs(warm.value - cold.value) < 1e-12);
}

TEST_CASE("a nondegenerate initial box shows up in the transversality residual") {
  // With the initial state fixed at the box midpoint, a minimizing corner that
  // differs from the midpoint must be reported, not certified away.
  nlohmann::json doc = toys::make_drift_toy(12).doc;
  doc["initial_box"] = {{"lo", {-0.1}}, {"hi", {0.1}}};
  doc["f"] = {{"kind", "affine"},
              {"A", {{0.25}}},
              {"offsets", {{-1.0}, {0.0}, {1.0}}},
              {"lipschitz", 0.25},
              {"bound", 8.0}};
  doc["psi"] = 0.26;
  const auto spec = load_problem(doc);

  SolveConfig cfg;
  cfg.n_steps = 200;
  const NCCertificate cert = run_j_sweep(spec, {5, 10}, cfg);

  CHECK(cert.status == "flagged");
  CHECK(cert.flag_reason.find("residual") != std::string::npos);
  // l(z) = k(t0) z with k(t0) = e^{0.25}; the midpoint sits 0.1 above the
  // minimizing corner.
  CHECK(cert.residuals.transversality ==
        doctest::Approx(0.1 * std::exp(0.25)).epsilon(1e-3));
}

TEST_CASE("verify_conditions reproduces the certificate residuals") {
  const auto spec = load_problem_file(problems_dir() + "/abs_bilinear_minimax.json");
  SolveConfig cfg;
  cfg.n_steps = 200;
  const NCCertificate cert = run_j_sweep(spec, {5, 10}, cfg);
  REQUIRE(cert.status == "certified");

  const ResidualSet again = verify_conditions(spec, cert.sigma_bar, cert, cfg);
  CHECK(std::abs(again.min_condition - cert.residuals.min_condition) < 1e-12);
  CHECK(std::abs(again.fiber_condition - cert.residuals.fiber_condition) < 1e-12);
  CHECK(std::abs(again.active_constraint - cert.residuals.active_constraint) < 1e-12);
  CHECK(std::abs(again.transversality - cert.residuals.transversality) < 1e-12);
}

TEST_CASE("residual thresholds gate certification") {
  SolveConfig cfg;
  ResidualSet r;
  CHECK(residuals_certified(r, 1.0, cfg));
  r.min_condition = 2.0 * cfg.tol_min_scale; // relative to sup |H| = 1
  CHECK_FALSE(residuals_certified(r, 1.0, cfg));
  CHECK(residuals_certified(r, 100.0, cfg)); // same raw residual, larger scale
  r = ResidualSet{};
  r.fiber_condition = 2e-6;
  CHECK_FALSE(residuals_certified(r, 1.0, cfg));
  r = ResidualSet{};
  r.active_constraint = 2e-6;
  CHECK_FALSE(residuals_certified(r, 1.0, cfg));
  r = ResidualSet{};
  r.transversality = 2e-8;
  CHECK_FALSE(residuals_certified(r, 1.0, cfg));
}

TEST_CASE("sweep input guards") {
  const auto spec = load_problem(toys::make_drift_toy(13).doc);
  SolveConfig cfg;
  cfg.n_steps = 100;
  CHECK_THROWS_AS(run_j_sweep(spec, {}, cfg), DomainError);
  CHECK_THROWS_AS(run_j_sweep(spec, {10, 5}, cfg), DomainError);
}

TEST_CASE("an empty multiplier set is not normalized") {
  MultiplierSet ms;
  CHECK_FALSE(ms.normalized());
  ms.l0 = 0.5;
  CHECK(ms.normalized());
  ms.l1 = 0.6; // sum exceeds one
  CHECK_FALSE(ms.normalized());
}
