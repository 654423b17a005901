#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "advoc/trajectory.hpp"

namespace advoc::adjoint {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using problem::ProblemSpec;
using trajectory::Adversary;
using trajectory::Trajectory;

// Sentinel index: evaluate with the raw (unsmoothed) fields. Adjoint
// integration itself always runs at a finite j; kLimit appears only in
// Hamiltonian assembly, where the limit objects are largest-j surrogates.
constexpr int kLimit = -1;

// Backward transport matrices: solutions of Z'(t) = -Z(t) A(t) with Z(t1) = I,
// A the control-averaged state Jacobian of the smoothed dynamics along the
// supplied trajectory. Row convention: a terminal gradient g^T is transported
// to g^T Z(t).
std::vector<Mat> integrate_Z(const ProblemSpec& spec, int j,
                             const controls::RelaxedControl& sigma,
                             const Trajectory& traj);

std::vector<Mat> integrate_Z_hat(const ProblemSpec& spec, int j,
                                 const controls::RelaxedControl& sigma,
                                 const Adversary& adversary, const Trajectory& traj);

struct AdjointMatrices {
  std::vector<Mat> Z;                          // n_steps+1 entries, n x n
  std::vector<std::vector<Mat>> Z_hat_per_atom; // per atom, n_steps+1 entries
  int j = 0;

  double sup_norm() const;          // max infinity-norm over all entries
  static double sup_norm_of(const std::vector<Mat>& seq);
  // 1 + (t1-t0) L e^{t1-t0}
  static double gronwall_bound(const ProblemSpec& spec);
};

enum class Mode { relaxed, hyperrelaxed };

struct OmegaAtom {
  controls::FiberPolicy policy;
  double weight = 0.0;
};

// Cost/equality/constraint multipliers with the endpoint gradients and the
// transversality vector. H0/H1 are gradients of the (smoothed) endpoint
// functions at the final player state; H_hat_per_atom at the joint endpoint
// of each atom's trajectory; lambda = sum_a weight_a k_hat_a(t0).
struct MultiplierSet {
  double l0 = 0.0;
  double l1 = 0.0;
  std::vector<OmegaAtom> omega;
  Mode mode = Mode::hyperrelaxed;
  Vec H0, H1;
  std::vector<Vec> H_hat_per_atom;
  Vec lambda;

  double omega_mass() const;
  double norm_sum() const { return l0 + std::abs(l1) + omega_mass(); }
  bool normalized(double tol = 1e-9) const {
    const double s = norm_sum();
    return l0 >= 0.0 && s > 0.0 && s <= 1.0 + tol;
  }
};

// Pointwise Hamiltonian data on the control grid. k(t) = (l0 H0 + l1 H1) Z(t);
// k_hat_a(t) = H_hat_a Z_hat_a(t). fiber_vals hold k_hat_a . f_hat at every
// (step, u, v); frak_h is their max over admissible v, frak_h_avg the average
// under the atom's own fiber weights. H combines everything with the
// multiplier weights (max form for hyperrelaxed atoms, averaged form for
// relaxed ones).
struct HamiltonianTable {
  Mat k;                                   // (n_steps+1) x n
  std::vector<Mat> k_hat;                  // per atom, (n_steps+1) x (n+m)
  Mat base0, base1;                        // n_steps x n_u
  std::vector<std::vector<Mat>> fiber_vals; // per atom, per step, n_u x n_v
  std::vector<Mat> frak_h;                 // per atom, n_steps x n_u
  std::vector<Mat> frak_h_avg;             // per atom, n_steps x n_u
  Mat H;                                   // n_steps x n_u
  double sup_abs_H = 0.0;

  // integral FW gap sum_k dt (sigma_k . H_k - min_u H_k)
  double fw_gap(const controls::RelaxedControl& sigma, double dt,
                const controls::ControlGrid& grid) const;
};

struct TrajectoryBundle {
  const Trajectory* y_sigma = nullptr;               // player trajectory
  std::vector<const Trajectory*> y_hat_per_atom;     // joint, one per atom
};

// j >= 1: field values from the smoothed dynamics; j == kLimit: raw values.
// Adjoints and the gradient vectors inside multipliers are supplied by the
// caller either way.
HamiltonianTable assemble_hamiltonians(const ProblemSpec& spec, int j,
                                       const MultiplierSet& multipliers,
                                       const AdjointMatrices& adjoints,
                                       const TrajectoryBundle& trajs);

// Integrate the adjoint family along a j-sequence and report the limit
// surrogate (largest j) together with Cauchy diagnostics of both the adjoint
// matrices and the multiplier triples.
struct LimitSweepResult {
  AdjointMatrices limit;
  std::vector<double> adjoint_increments;
  std::vector<double> multiplier_increments;
  bool non_cauchy_adjoint = false;
  bool non_cauchy_multiplier = false;
};

LimitSweepResult limit_sweep(const ProblemSpec& spec, std::vector<int> j_seq,
                             const std::vector<controls::RelaxedControl>& sigma_seq,
                             const std::vector<MultiplierSet>& multiplier_seq,
                             int n_steps);

} // namespace advoc::adjoint
