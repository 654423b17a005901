#pragma once

#include <Eigen/Core>
#include <string>

#include "advoc/problem.hpp"

namespace advoc::trajectory {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
// Row-major so a row is a contiguous state vector; field and jacobian
// evaluators receive rows as raw pointers.
using StateMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using problem::ProblemSpec;

struct Trajectory {
  Vec times;            // n_steps + 1 nodes, uniform
  StateMat states;      // (n_steps + 1) x dim
  std::string control_tag;

  int n_steps() const { return static_cast<int>(times.size()) - 1; }
  double dt() const { return times[1] - times[0]; }
  Vec endpoint() const { return states.row(states.rows() - 1); }
};

// Adversary argument for joint integrations: absent (player-only state),
// a relaxed control (independent of u), or a fiber policy.
struct Adversary {
  enum class Kind { none, relaxed, fiber } kind = Kind::none;
  const controls::RelaxedControl* sigma_p = nullptr;
  const controls::FiberPolicy* pi = nullptr;

  static Adversary none() { return {}; }
  static Adversary of(const controls::RelaxedControl& sp) {
    Adversary a; a.kind = Kind::relaxed; a.sigma_p = &sp; return a;
  }
  static Adversary of(const controls::FiberPolicy& p) {
    Adversary a; a.kind = Kind::fiber; a.pi = &p; return a;
  }
};

// Fixed-step RK4 on the sigma-averaged player dynamics (state dimension n).
// The control row of step k is held constant across the step's stages.
Trajectory integrate_relaxed(const ProblemSpec& spec, const controls::RelaxedControl& sigma,
                             const Vec& b, int n_steps = 2000);

// Joint state (y, yt) under sigma composed with a fiber policy.
Trajectory integrate_fiber(const ProblemSpec& spec, const controls::RelaxedControl& sigma,
                           const controls::FiberPolicy& pi, const Vec& b_hat,
                           int n_steps = 2000);

// Joint state under the independent product sigma x sigma_p.
Trajectory integrate_product(const ProblemSpec& spec, const controls::RelaxedControl& sigma,
                             const controls::RelaxedControl& sigma_p, const Vec& b_hat,
                             int n_steps = 2000);

// Same dynamics with the fields replaced by their smoothed versions at index
// j. Adversary::none integrates the player state only (b has dimension n);
// otherwise b is the joint initial state.
Trajectory integrate_perturbed(const ProblemSpec& spec, int j,
                               const controls::RelaxedControl& sigma,
                               const Adversary& adversary, const Vec& b,
                               int n_steps = 2000);

// Constants of the trajectory/endpoint proximity bounds:
//   alpha = integral of chi; c_y_hat = L_fhat + alpha e^alpha;
//   c_{h} = L_h (c_y_hat + 1) for each endpoint function.
struct ProximityConstants {
  double alpha = 0.0;
  double L_f_hat = 0.0;
  double c_y_hat = 0.0;
  double c_h0 = 0.0, c_h1 = 0.0, c_h_hat = 0.0;

  static ProximityConstants of(const ProblemSpec& spec);
  void check(double tol = 1e-12) const; // recompute-and-compare invariant
};

// Measured sup-gaps between the smoothed-at-j and raw systems under the same
// (sigma, pi), each next to its certified bound.
struct ProximityReport {
  ProximityConstants constants;
  int j = 0;
  double gap_state = 0.0, bound_state = 0.0;   // sup_t |yhat_j(t) - yhat(t)|
  double gap_field = 0.0, bound_field = 0.0;   // sup_{t,u,v} |fhat_j - fhat|
  double gap_h0 = 0.0, bound_h0 = 0.0;         // endpoint cost gap
  double gap_h1 = 0.0, bound_h1 = 0.0;         // endpoint equality gap
  double gap_h_hat = 0.0, bound_h_hat = 0.0;   // endpoint inequality gap
  bool pass(double slack) const {
    return gap_state <= bound_state + slack && gap_field <= bound_field + slack &&
           gap_h0 <= bound_h0 + slack && gap_h1 <= bound_h1 + slack &&
           gap_h_hat <= bound_h_hat + slack;
  }
};

ProximityReport proximity_report(const ProblemSpec& spec, int j,
                                 const controls::RelaxedControl& sigma,
                                 const controls::FiberPolicy& pi, const Vec& b_hat,
                                 int n_steps = 2000);

} // namespace advoc::trajectory
