#include "advoc/controls.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace advoc::controls {

void ControlGrid::check(int n_steps) const {
  if (points.size() == 0) throw DomainError("ControlGrid: empty grid");
  if (mask.size() == 0) return;
  if (mask.cols() != points.size() || mask.rows() != n_steps)
    throw ShapeMismatch("ControlGrid: mask shape does not match grid/steps");
  for (int k = 0; k < mask.rows(); ++k) {
    bool any = false;
    for (int i = 0; i < mask.cols(); ++i) any = any || mask(k, i) != 0;
    if (!any) throw DomainError("ControlGrid: no admissible point at a step");
  }
}

void RelaxedControl::check(double tol) const {
  for (int k = 0; k < weights.rows(); ++k) {
    double s = 0.0;
    for (int i = 0; i < weights.cols(); ++i) {
      const double w = weights(k, i);
      if (w < -tol) throw DomainError("RelaxedControl: negative weight");
      if (grid && !grid->admissible(k, i) && w > tol)
        throw DomainError("RelaxedControl: weight on inadmissible point");
      s += w;
    }
    if (std::abs(s - 1.0) > tol)
      throw DomainError("RelaxedControl: row does not sum to 1");
  }
}

RelaxedControl RelaxedControl::uniform(int n_steps, std::shared_ptr<const ControlGrid> grid) {
  RelaxedControl rc;
  rc.grid = grid;
  const int n = grid->size();
  rc.weights.resize(n_steps, n);
  for (int k = 0; k < n_steps; ++k) {
    int count = 0;
    for (int i = 0; i < n; ++i) count += grid->admissible(k, i) ? 1 : 0;
    for (int i = 0; i < n; ++i)
      rc.weights(k, i) = grid->admissible(k, i) ? 1.0 / count : 0.0;
  }
  return rc;
}

RelaxedControl RelaxedControl::dirac(int n_steps, int index,
                                     std::shared_ptr<const ControlGrid> grid) {
  RelaxedControl rc;
  rc.grid = grid;
  rc.weights = Mat::Zero(n_steps, grid->size());
  rc.weights.col(index).setOnes();
  return rc;
}

void FiberPolicy::check(double tol) const {
  for (const auto& w : weights) {
    for (int u = 0; u < w.rows(); ++u) {
      double s = 0.0;
      for (int v = 0; v < w.cols(); ++v) {
        if (w(u, v) < -tol) throw DomainError("FiberPolicy: negative weight");
        s += w(u, v);
      }
      if (std::abs(s - 1.0) > tol)
        throw DomainError("FiberPolicy: fiber does not sum to 1");
    }
  }
}

bool FiberPolicy::almost_equal(const FiberPolicy& other, double tol) const {
  if (n_steps() != other.n_steps() || n_u() != other.n_u() || n_v() != other.n_v())
    return false;
  for (int k = 0; k < n_steps(); ++k)
    if (((weights[k] - other.weights[k]).cwiseAbs().maxCoeff()) > tol) return false;
  return true;
}

FiberPolicy FiberPolicy::uniform(int n_steps, std::shared_ptr<const ControlGrid> u_grid,
                                 std::shared_ptr<const ControlGrid> v_grid) {
  FiberPolicy p;
  p.u_grid = u_grid;
  p.v_grid = v_grid;
  p.weights.reserve(n_steps);
  const int nu = u_grid->size(), nv = v_grid->size();
  for (int k = 0; k < n_steps; ++k) {
    Mat w(nu, nv);
    for (int u = 0; u < nu; ++u) {
      int count = 0;
      for (int v = 0; v < nv; ++v) count += v_grid->admissible(k, v) ? 1 : 0;
      for (int v = 0; v < nv; ++v)
        w(u, v) = v_grid->admissible(k, v) ? 1.0 / count : 0.0;
    }
    p.weights.push_back(std::move(w));
  }
  return p;
}

FiberPolicy FiberPolicy::from_map(int n_steps, std::shared_ptr<const ControlGrid> u_grid,
                                  std::shared_ptr<const ControlGrid> v_grid,
                                  const std::function<int(int, int)>& v_index) {
  FiberPolicy p;
  p.u_grid = u_grid;
  p.v_grid = v_grid;
  p.weights.reserve(n_steps);
  const int nu = u_grid->size(), nv = v_grid->size();
  for (int k = 0; k < n_steps; ++k) {
    Mat w = Mat::Zero(nu, nv);
    for (int u = 0; u < nu; ++u) w(u, v_index(k, u)) = 1.0;
    p.weights.push_back(std::move(w));
  }
  return p;
}

FiberPolicy FiberPolicy::from_relaxed(const RelaxedControl& sigma_p, int n_u,
                                      std::shared_ptr<const ControlGrid> u_grid) {
  FiberPolicy p;
  p.u_grid = u_grid;
  p.v_grid = sigma_p.grid;
  p.weights.reserve(sigma_p.n_steps());
  for (int k = 0; k < sigma_p.n_steps(); ++k) {
    Mat w(n_u, sigma_p.n_points());
    for (int u = 0; u < n_u; ++u) w.row(u) = sigma_p.weights.row(k);
    p.weights.push_back(std::move(w));
  }
  return p;
}

void JointControl::check(double tol) const {
  for (const auto& s : slices) {
    if ((s.array() < -tol).any()) throw DomainError("JointControl: negative weight");
    if (std::abs(s.sum() - 1.0) > tol)
      throw DomainError("JointControl: slice does not sum to 1");
  }
}

Mat JointControl::marginal_u() const {
  if (slices.empty()) return Mat();
  Mat m(n_steps(), slices[0].rows());
  for (int k = 0; k < n_steps(); ++k) m.row(k) = slices[k].rowwise().sum();
  return m;
}

JointControl product(const RelaxedControl& sigma, const RelaxedControl& sigma_p) {
  if (sigma.n_steps() != sigma_p.n_steps())
    throw ShapeMismatch("product: step counts differ");
  JointControl jc;
  jc.provenance = JointControl::Provenance::product;
  jc.slices.reserve(sigma.n_steps());
  for (int k = 0; k < sigma.n_steps(); ++k)
    jc.slices.push_back(sigma.weights.row(k).transpose() * sigma_p.weights.row(k));
  jc.check();
  return jc;
}

JointControl fiber_compose(const RelaxedControl& sigma, const FiberPolicy& pi) {
  if (sigma.n_steps() != pi.n_steps())
    throw ShapeMismatch("fiber_compose: step counts differ");
  if (sigma.n_points() != pi.n_u())
    throw ShapeMismatch("fiber_compose: U grids differ");
  JointControl jc;
  jc.provenance = JointControl::Provenance::fiber;
  jc.slices.reserve(sigma.n_steps());
  for (int k = 0; k < sigma.n_steps(); ++k)
    jc.slices.push_back(sigma.weights.row(k).transpose().asDiagonal() * pi.weights[k]);
  jc.check();
  return jc;
}

bool is_rank_one(const JointControl& jc, double tol) {
  for (const auto& s : jc.slices) {
    const Vec ru = s.rowwise().sum();
    const Vec rv = s.colwise().sum().transpose();
    if (((s - ru * rv.transpose()).cwiseAbs().maxCoeff()) > tol) return false;
  }
  return true;
}

DenseFamily build_dense_family(const RelaxedControl& base, int n_atoms, unsigned seed) {
  DenseFamily fam;
  fam.base = base;
  fam.members.push_back(base);
  if (n_atoms <= 0) return fam;

  const int n_steps = base.n_steps();
  const int n_u = base.n_points();

  // Structured enumeration: dyadic rational intervals by level, cycling the
  // grid points within each level in a seeded order. Every grid point is
  // paired with [0,1] first so the family covers the whole grid early.
  std::mt19937 rng(seed);
  std::vector<int> u_order(n_u);
  for (int i = 0; i < n_u; ++i) u_order[i] = i;
  std::shuffle(u_order.begin(), u_order.end(), rng);

  int made = 0;
  for (long level = 0; made < n_atoms; ++level) {
    const long den = 1L << level;
    for (long piece = 0; piece < den && made < n_atoms; ++piece) {
      for (int ui = 0; ui < n_u && made < n_atoms; ++ui) {
        DenseFamily::Atom a;
        a.u_index = u_order[ui];
        a.num_a = piece;
        a.num_b = piece + 1;
        a.den = den;
        RelaxedControl member = base;
        for (int k = 0; k < n_steps; ++k) {
          // midpoint of step k as a fraction of the horizon
          const double frac = (k + 0.5) / n_steps;
          if (frac >= static_cast<double>(a.num_a) / a.den &&
              frac <= static_cast<double>(a.num_b) / a.den) {
            member.weights.row(k).setZero();
            member.weights(k, a.u_index) = 1.0;
          }
        }
        member.check();
        fam.atoms.push_back(a);
        fam.members.push_back(std::move(member));
        ++made;
      }
    }
  }
  return fam;
}

BaseMeasure base_measure(const RelaxedControl& reference, double dt) {
  BaseMeasure bm;
  bm.reference = &reference;
  bm.density = dt * reference.weights;
  bm.total_mass = bm.density.sum();
  return bm;
}

} // namespace advoc::controls
