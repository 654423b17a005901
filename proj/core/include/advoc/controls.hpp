#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "advoc/errors.hpp"

namespace advoc::controls {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Finite control grid (player or adversary) with an optional per-time-step
// admissibility mask. An empty mask means every point is admissible always.
struct ControlGrid {
  Vec points;                         // grid values (1-D control sets)
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask; // n_steps x n_points, 0/1

  int size() const { return static_cast<int>(points.size()); }
  bool admissible(int step, int i) const {
    if (mask.size() == 0) return true;
    return mask(step, i) != 0;
  }
  void check(int n_steps) const; // at least one admissible point per step
};

// Time-indexed probability weights over a control grid (row-stochastic).
struct RelaxedControl {
  Mat weights; // n_steps x n_points
  std::shared_ptr<const ControlGrid> grid;

  int n_steps() const { return static_cast<int>(weights.rows()); }
  int n_points() const { return static_cast<int>(weights.cols()); }
  void check(double tol = 1e-12) const;

  static RelaxedControl uniform(int n_steps, std::shared_ptr<const ControlGrid> grid);
  static RelaxedControl dirac(int n_steps, int index, std::shared_ptr<const ControlGrid> grid);
};

// Adversary policy conditioned on the player's control: for each (step, u) a
// probability row over V.
struct FiberPolicy {
  std::vector<Mat> weights; // n_steps entries of n_u x n_v, each row stochastic
  std::shared_ptr<const ControlGrid> u_grid;
  std::shared_ptr<const ControlGrid> v_grid;

  int n_steps() const { return static_cast<int>(weights.size()); }
  int n_u() const { return weights.empty() ? 0 : static_cast<int>(weights[0].rows()); }
  int n_v() const { return weights.empty() ? 0 : static_cast<int>(weights[0].cols()); }
  void check(double tol = 1e-12) const;
  bool almost_equal(const FiberPolicy& other, double tol = 1e-12) const;

  static FiberPolicy uniform(int n_steps, std::shared_ptr<const ControlGrid> u_grid,
                             std::shared_ptr<const ControlGrid> v_grid);
  // Row for u is the Dirac at v_index(step, u).
  static FiberPolicy from_map(int n_steps, std::shared_ptr<const ControlGrid> u_grid,
                              std::shared_ptr<const ControlGrid> v_grid,
                              const std::function<int(int step, int u)>& v_index);
  // u-independent policy built from an adversary relaxed control.
  static FiberPolicy from_relaxed(const RelaxedControl& sigma_p, int n_u,
                                  std::shared_ptr<const ControlGrid> u_grid);
};

// Joint time-slice measures over U x V.
struct JointControl {
  enum class Provenance { product, fiber };
  std::vector<Mat> slices; // n_steps entries of n_u x n_v, each summing to 1
  Provenance provenance = Provenance::product;

  int n_steps() const { return static_cast<int>(slices.size()); }
  void check(double tol = 1e-12) const;
  // Marginal over v recovers the player control weights.
  Mat marginal_u() const;
};

JointControl product(const RelaxedControl& sigma, const RelaxedControl& sigma_p);
JointControl fiber_compose(const RelaxedControl& sigma, const FiberPolicy& pi);

// Is every slice an outer product of its marginals?
bool is_rank_one(const JointControl& jc, double tol = 1e-10);

// Countable family: base control overridden by a constant Dirac on a rational
// subinterval of the horizon, one member per (grid point, interval) pair.
struct DenseFamily {
  struct Atom {
    int u_index;
    // rational interval endpoints, as fractions of the horizon
    long num_a, num_b, den;
  };
  RelaxedControl base;
  std::vector<Atom> atoms;
  std::vector<RelaxedControl> members; // members[0] == base
};

DenseFamily build_dense_family(const RelaxedControl& base, int n_atoms, unsigned seed);

// The nonatomic reference measure dt x sigma on the (time, control) cells.
struct BaseMeasure {
  const RelaxedControl* reference;
  Mat density; // n_steps x n_points, density(k,u) = dt * weights(k,u)
  double total_mass = 0.0;
};

BaseMeasure base_measure(const RelaxedControl& reference, double dt);

} // namespace advoc::controls
