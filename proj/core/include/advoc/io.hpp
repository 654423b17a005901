#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "advoc/solver.hpp"

namespace advoc::io {

using nlohmann::json;
using nlohmann::ordered_json;

// Build a full problem from its JSON description. Field blocks use the
// registry kinds; unknown kinds throw DomainError echoing the name. The
// returned spec is finalized (kernels built).
problem::ProblemSpec load_problem(const json& doc);
problem::ProblemSpec load_problem_file(const std::string& path);

struct RunConfig {
  std::string problem_path;
  std::string out_dir = "out";
  std::vector<int> j_seq = {5, 10, 20, 40, 80};
  int n_steps = 2000;
  adjoint::Mode mode = adjoint::Mode::hyperrelaxed;
  double tol_exchange = 1e-5;
  unsigned seed = 0;

  void check() const; // j strictly increasing and nonempty, n_steps >= 10
  solver::SolveConfig solve_config() const;
};

// Deterministic serializations (insertion-ordered keys, no timestamps).
ordered_json certificate_to_json(const solver::NCCertificate& cert);
solver::NCCertificate certificate_from_json(const json& doc);
ordered_json validation_to_json(const problem::ValidationReport& report);

// header: j,l0,l1_norm,omega_mass,min_residual,fiber_residual,active_residual
std::string convergence_csv(const solver::NCCertificate& cert);
std::string trajectory_csv(const trajectory::Trajectory& traj);

// Full pipeline: load, validate, normalize time, sweep the j sequence, write
// validation.json / certificate.json / convergence.csv / trajectory.csv into
// out_dir. Exit codes: 0 certified, 2 parse error (nothing written),
// 3 validation failure (validation.json written), 4 solver flagged (all
// artifacts written).
int run_cli(const RunConfig& rc);

// Summarize a certificate (path to certificate.json or to its directory).
// Exit codes: 0 certified, 1 flagged or empty, 2 parse error.
int report_cli(const std::string& path);

} // namespace advoc::io
