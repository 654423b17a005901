#pragma once

#include <optional>
#include <string>
#include <vector>

#include "advoc/adjoint.hpp"

namespace advoc::solver {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using adjoint::AdjointMatrices;
using adjoint::HamiltonianTable;
using adjoint::Mode;
using adjoint::MultiplierSet;
using controls::FiberPolicy;
using controls::RelaxedControl;
using problem::ProblemSpec;
using trajectory::Trajectory;

// Frank-Wolfe step size: vanishing 2/(iter+2) or a fixed gamma in (0, 1].
struct StepRule {
  enum class Kind { vanishing, fixed } kind = Kind::vanishing;
  double gamma = 1.0;
  double operator()(int iter) const {
    return kind == Kind::vanishing ? 2.0 / (iter + 2.0) : gamma;
  }
};

struct SolveConfig {
  Mode mode = Mode::hyperrelaxed;
  int n_steps = 2000;
  int max_atoms = 8;          // working set size for the adversary constraints
  int penalty_rounds = 4;
  double penalty_mu0 = 1.0;
  double penalty_growth = 10.0;
  int max_fw_iters = 60;      // per round
  double tol_exchange = 1e-5; // admit a new atom only above this violation gap
  double tol_fiber = 1e-6;
  double tol_active = 1e-6;
  double tol_min_scale = 1e-4;       // times sup |H|
  double tol_transversality = 1e-8;
  StepRule step_rule;
  unsigned seed = 0;
};

// The smoothed problem at index j with its calibrated equality shift a_j
// (clipped to the proximity window +-c_h1/j around the incumbent's smoothing
// error) and the inequality tightening c_hhat/j. Initial states are fixed at
// the box midpoints.
struct PerturbedProblem {
  const ProblemSpec* spec = nullptr;
  int j = 0;
  double a_j = 0.0;
  double constraint_shift = 0.0;
  Vec b_bar, bt_bar;

  Vec b_hat() const {
    Vec out(b_bar.size() + bt_bar.size());
    out << b_bar, bt_bar;
    return out;
  }
};

// Throws InfeasibleStart if no admissible shift keeps the incumbent feasible
// for the smoothed equality.
PerturbedProblem make_perturbed(const ProblemSpec& spec, int j,
                                const RelaxedControl& sigma_init, int n_steps);

// One adversary constraint in the working set, with its cached trajectory,
// transported gradient rows, and shifted constraint value.
struct AtomContext {
  FiberPolicy policy;
  Trajectory y_hat;
  std::vector<Mat> Z_hat;
  Vec H_hat;            // endpoint gradient of the smoothed inequality
  Mat k_hat;            // (n_steps+1) x (n+m)
  double constraint_value = 0.0; // smoothed h_hat + shift at the endpoint
  double hinge = 0.0;            // max(0, constraint_value)
};

// Pointwise maximizer of k_hat . f_hat over admissible v; ties take the
// lowest grid index. Hyperrelaxed mode maximizes per (step, u); relaxed mode
// averages over sigma first and returns a u-independent policy. j == kLimit
// evaluates the raw fields.
FiberPolicy adversary_best_response(const ProblemSpec& spec, int j,
                                    const RelaxedControl& sigma, const Mat& k_hat,
                                    const Trajectory& y_hat, Mode mode);

// One Frank-Wolfe step on the player weights against the assembled table:
// the target is the Dirac at the admissible argmin per step (lowest index on
// ties), blended with weight step_rule(iter).
RelaxedControl player_step(const RelaxedControl& sigma, const HamiltonianTable& table,
                           const controls::ControlGrid& grid, const StepRule& rule,
                           int iter);

struct ResidualSet {
  double min_condition = 0.0;
  double fiber_condition = 0.0;
  double active_constraint = 0.0;
  double transversality = 0.0;
};

struct SolveResult {
  RelaxedControl sigma;
  MultiplierSet multipliers;
  std::vector<AtomContext> atoms;
  double value = 0.0;          // raw endpoint cost at sigma
  double value_smoothed = 0.0; // smoothed endpoint cost at sigma
  bool hit_max_iterations = false;
  int fw_iterations = 0;
  int exchange_additions = 0;
};

// Penalty / Frank-Wolfe / exchange loop on the smoothed problem. Exhausting
// the iteration budget flags the result instead of throwing; the best iterate
// is returned either way.
SolveResult solve_perturbed(const PerturbedProblem& pp, const SolveConfig& config,
                            const RelaxedControl& sigma_init);

struct JRecord {
  int j = 0;
  bool solved = false;
  double l0 = 0.0, l1 = 0.0, omega_mass = 0.0;
  ResidualSet residuals;
  double value = 0.0;
  double sup_Z = 0.0, gronwall = 0.0;
  int n_atoms = 0;
  std::string note;
};

struct NCCertificate {
  std::string problem_name;
  Mode mode = Mode::hyperrelaxed;
  std::vector<int> j_seq;
  int n_steps = 0;
  MultiplierSet multipliers;   // normalized, from the largest solved j
  RelaxedControl sigma_bar;
  ResidualSet residuals;       // evaluated with raw fields + largest-j adjoints
  std::vector<JRecord> j_history;
  std::vector<double> adjoint_increments;
  std::vector<double> multiplier_increments;
  bool non_cauchy_adjoint = false;
  bool non_cauchy_multiplier = false;
  double value = 0.0;
  std::string status;          // "certified" or "flagged"
  std::string flag_reason;     // empty when certified
};

// Solve the smoothed problems along the j sequence (warm-starting the player
// weights), extract multipliers at each level, and assemble the certificate
// with limit residuals and Cauchy diagnostics.
NCCertificate run_j_sweep(const ProblemSpec& spec, std::vector<int> j_seq,
                          const SolveConfig& config);

// Re-evaluate the four residuals of a certificate from scratch: raw field
// values along unsmoothed trajectories, adjoints and endpoint gradients from
// the certificate's largest j. Deterministic, so a faithful certificate
// reproduces its stored residuals.
ResidualSet verify_conditions(const ProblemSpec& spec, const RelaxedControl& sigma_bar,
                              const NCCertificate& cert, const SolveConfig& config);

// Tolerance predicate used for the certified/flagged status.
bool residuals_certified(const ResidualSet& r, double sup_abs_H,
                         const SolveConfig& config);

} // namespace advoc::solver
