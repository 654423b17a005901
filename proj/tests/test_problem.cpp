#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <advoc/io.hpp>
#include <advoc/problem.hpp>
#include <advoc/trajectory.hpp>

#include <cmath>
#include <string>

#include "toy_problems.hpp"

using namespace advoc::problem;
using advoc::controls::RelaxedControl;
using advoc::io::load_problem;
using advoc::io::load_problem_file;
using advoc::trajectory::ProximityConstants;
using advoc::trajectory::integrate_relaxed;

namespace {
const ValidationEntry& entry(const ValidationReport& rep, const std::string& name) {
  for (const auto& e : rep.entries)
    if (e.name == name) return e;
  REQUIRE(false);
  return rep.entries.front();
}
} // namespace

TEST_CASE("an honest spec passes validation; measurability is assumed, not checked") {
  const ProblemSpec spec = load_problem(toys::make_drift_toy(1).doc);
  const ValidationReport rep = validate(spec, 4000, 0);
  CHECK(rep.passed_all);
  const auto& h1e = entry(rep, "H1 measurability");
  CHECK(h1e.passed);
  CHECK(h1e.detail.find("not checked") != std::string::npos);
  CHECK(entry(rep, "H2 pointwise bound").worst_ratio <= 1.0);
  CHECK(entry(rep, "H2 Lipschitz").worst_ratio <= 1.0);
}

TEST_CASE("validation catches understated profiles and constants") {
  const toys::DriftToy toy = toys::make_drift_toy(2);

  SUBCASE("psi too small") {
    nlohmann::json doc = toy.doc;
    doc["psi"] = std::abs(toy.a) / 2.0;
    const ProblemSpec spec = load_problem(doc);
    const ValidationReport rep = validate(spec, 4000, 0);
    CHECK_FALSE(rep.passed_all);
    const auto& e = entry(rep, "H2 Lipschitz");
    CHECK_FALSE(e.passed);
    CHECK(e.worst_ratio == doctest::Approx(2.0).epsilon(0.05));
  }

  SUBCASE("chi too small") {
    nlohmann::json doc = toy.doc;
    doc["chi"] = 0.5; // the drift offsets alone exceed this
    const ProblemSpec spec = load_problem(doc);
    const ValidationReport rep = validate(spec, 4000, 0);
    CHECK_FALSE(entry(rep, "H2 pointwise bound").passed);
  }

  SUBCASE("endpoint Lipschitz constant too small") {
    nlohmann::json doc = toy.doc;
    doc["h0"] = {{"kind", "linear"}, {"coeffs", {2.0}}, {"lipschitz", 1.0}, {"bound", 20.0}};
    const ProblemSpec spec = load_problem(doc);
    const ValidationReport rep = validate(spec, 4000, 0);
    CHECK_FALSE(rep.passed_all);
    const auto& e = entry(rep, "H3 h0 Lipschitz");
    CHECK_FALSE(e.passed);
    CHECK(e.worst_ratio == doctest::Approx(2.0).epsilon(0.05));
  }
}

TEST_CASE("spec helpers: midpoints, alpha, kernel wiring") {
  const ProblemSpec spec = load_problem(toys::make_drift_toy(3).doc);
  CHECK(spec.joint_dim() == 2);
  CHECK(spec.alpha() == doctest::Approx(8.0).epsilon(1e-9)); // constant chi over unit horizon
  const Eigen::VectorXd bh = spec.b_hat_mid();
  REQUIRE(bh.size() == 2);
  CHECK(bh[0] == spec.b_mid()[0]);
  CHECK(bh[1] == spec.bt_mid()[0]);
  REQUIRE(spec.kernel_n);
  REQUIRE(spec.kernel_joint);
  CHECK(spec.kernel_n->dim == 1);
  CHECK(spec.kernel_joint->dim == 2);
}

TEST_CASE("proximity constants follow the declared profiles") {
  const ProblemSpec spec =
      load_problem_file(std::string(ADVOC_PROBLEMS_DIR) + "/abs_bilinear_minimax.json");
  const ProximityConstants c = ProximityConstants::of(spec);
  CHECK(c.alpha == doctest::Approx(3.5).epsilon(1e-9));
  CHECK(c.L_f_hat == doctest::Approx(1.0));
  CHECK(c.c_y_hat == doctest::Approx(1.0 + 3.5 * std::exp(3.5)).epsilon(1e-9));
  CHECK(c.c_h0 == doctest::Approx(c.c_y_hat + 1.0).epsilon(1e-9));
  CHECK(c.c_h_hat == doctest::Approx(std::sqrt(2.0) * (c.c_y_hat + 1.0)).epsilon(1e-6));
  CHECK(c.c_h1 == 0.0); // no equality endpoint constraint
  CHECK_NOTHROW(c.check());
  ProximityConstants broken = c;
  broken.c_y_hat *= 1.5;
  CHECK_THROWS(broken.check());
}

TEST_CASE("time normalization tames the Lipschitz constant and keeps endpoints") {
  const ProblemSpec spec = load_problem(toys::stiff_affine_json(2.0));
  REQUIRE(spec.sup_psi == doctest::Approx(2.0));
  const auto [norm, resc] = normalize_time(spec);

  CHECK_FALSE(resc.identity);
  CHECK(norm.sup_psi <= 1.0 + 1e-12);
  // Constant psi = 2 stretches the unit horizon to length 2.
  CHECK(norm.t1 - norm.t0 == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(resc.s1 - resc.s0 == doctest::Approx(2.0).epsilon(1e-9));

  // The maps are inverse to each other along the horizon.
  for (int i = 0; i <= 10; ++i) {
    const double tau = spec.t0 + i * (spec.t1 - spec.t0) / 10.0;
    CHECK(resc.tau_of(resc.t_of(tau)) == doctest::Approx(tau).epsilon(1e-9));
  }

  // Endpoint of a fixed Dirac policy is invariant under the reparametrization.
  const auto dirac = RelaxedControl::dirac(2000, 1, spec.u_grid);
  const double raw = integrate_relaxed(spec, dirac, spec.b_mid(), 2000).endpoint()[0];
  const auto dirac_n = RelaxedControl::dirac(2000, 1, norm.u_grid);
  const double resc_val = integrate_relaxed(norm, dirac_n, norm.b_mid(), 2000).endpoint()[0];
  // 10x the integrator tolerance at this step count.
  CHECK(std::abs(raw - resc_val) < 1e-8);

  // Idempotent: a normalized spec passes through unchanged.
  const auto [again, resc2] = normalize_time(norm);
  CHECK(resc2.identity);
  CHECK(again.t1 - again.t0 == doctest::Approx(norm.t1 - norm.t0));
  CHECK(again.sup_psi == doctest::Approx(norm.sup_psi));
}
