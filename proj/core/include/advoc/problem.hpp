#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "advoc/controls.hpp"
#include "advoc/mollify.hpp"

namespace advoc::problem {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using mollify::LipschitzField;
using mollify::Mollifier;
using mollify::FredholmApprox;

// Full two-player problem data: player-1 dynamics f on R^n, player-2 dynamics
// f_tilde on the joint state R^{n+m}, endpoint cost h0, optional endpoint
// equality h1 (both on R^n), optional endpoint inequality h_hat (on R^{n+m}),
// control grids, initial boxes, horizon, and the integrable bound profiles.
struct ProblemSpec {
  std::string name;
  int n = 0, m = 0;
  double t0 = 0.0, t1 = 1.0;

  std::shared_ptr<const controls::ControlGrid> u_grid;
  std::shared_ptr<const controls::ControlGrid> v_grid;

  LipschitzField f;        // (t, y, u)       -> R^n, ignores v
  LipschitzField f_tilde;  // (t, (y,yt), u, v) -> R^m
  LipschitzField h0;       // y -> R
  LipschitzField h1;       // y -> R (valid iff has_h1)
  LipschitzField h_hat;    // (y,yt) -> R (valid iff has_h_hat)
  bool has_h1 = false;
  bool has_h_hat = false;

  Vec b_lo, b_hi;          // initial box for y
  Vec bt_lo, bt_hi;        // initial box for yt

  std::function<double(double)> psi;  // state-Lipschitz profile of (f, f_tilde)
  std::function<double(double)> chi;  // pointwise bound profile
  double sup_psi = 0.0;               // declared sup of psi over the horizon

  // Kernels for the two state dimensions, built by finalize().
  std::shared_ptr<const Mollifier> kernel_n;
  std::shared_ptr<const Mollifier> kernel_joint;

  void finalize(int nodes_n = 0, int nodes_joint = 0);

  int joint_dim() const { return n + m; }
  Vec b_mid() const { return 0.5 * (b_lo + b_hi); }
  Vec bt_mid() const { return 0.5 * (bt_lo + bt_hi); }
  Vec b_hat_mid() const;

  // Effective state-Lipschitz constant used by integrator guards and the
  // adjoint Gronwall bound.
  double lipschitz() const { return sup_psi; }

  // integral of chi over the horizon
  double alpha() const;

  FredholmApprox fa_f(int j) const { return {&f, kernel_n.get(), j}; }
  FredholmApprox fa_f_tilde(int j) const { return {&f_tilde, kernel_joint.get(), j}; }
  FredholmApprox fa_h0(int j) const { return {&h0, kernel_n.get(), j}; }
  FredholmApprox fa_h1(int j) const { return {&h1, kernel_n.get(), j}; }
  FredholmApprox fa_h_hat(int j) const { return {&h_hat, kernel_joint.get(), j}; }
};

struct ValidationEntry {
  std::string name;
  bool passed = false;
  double worst_ratio = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationEntry> entries;
  bool passed_all = false;
};

// Randomized sampling check of the standing hypotheses: pointwise bound and
// state-Lipschitz continuity of the dynamics against the declared profiles,
// Lipschitz continuity of the endpoint functions against their declared
// constants. Measurability in t is assumed and reported as not checked.
ValidationReport validate(const ProblemSpec& spec, int n_samples = 10000,
                          unsigned seed = 0);

// Monotone reparametrization of time by phi = max(1, psi), stored on a fine
// grid with linear interpolation both ways.
struct TimeRescaling {
  bool identity = true;
  double t0 = 0.0, t1 = 0.0;       // original horizon
  double s0 = 0.0, s1 = 0.0;       // rescaled horizon
  Eigen::VectorXd tau_grid;        // original times
  Eigen::VectorXd t_grid;          // rescaled times, same length
  double tau_of(double t) const;   // rescaled -> original
  double t_of(double tau) const;   // original -> rescaled
};

// Divide the dynamics by phi = max(1, psi) and stretch the horizon so the
// state-Lipschitz constant becomes <= 1. Endpoint functions and initial
// boxes are unchanged; endpoint values of any fixed policy are invariant.
// Idempotent: a spec with sup_psi <= 1 is returned unchanged.
std::pair<ProblemSpec, TimeRescaling> normalize_time(const ProblemSpec& spec);

} // namespace advoc::problem
