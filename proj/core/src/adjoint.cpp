#include "advoc/adjoint.hpp"

#include <cmath>
#include <cstring>

#include "advoc/mollify.hpp"

namespace advoc::adjoint {

using controls::FiberPolicy;
using controls::RelaxedControl;
using mollify::FredholmApprox;
using mollify::fredholm_grad_into;
using mollify::fredholm_value_into;

namespace {

// sigma-averaged Jacobian of the smoothed player dynamics at (t, y):
// A = sum_u sigma(k,u) d_y f^j(t, y, u), written into A (n x n).
struct PlayerJacobian {
  const ProblemSpec* spec;
  FredholmApprox fa;
  const RelaxedControl* sigma;
  mutable Eigen::VectorXd x_scratch, f_scratch;
  mutable std::vector<double> grad_buf; // row-major n x n

  PlayerJacobian(const ProblemSpec& s, int j, const RelaxedControl& sg)
      : spec(&s), fa(s.fa_f(j)), sigma(&sg),
        x_scratch(s.n), f_scratch(s.n), grad_buf(static_cast<size_t>(s.n) * s.n) {}

  void eval(int step, double t, const double* y, Mat& A) const {
    const int n = spec->n;
    A.setZero();
    for (int u = 0; u < sigma->n_points(); ++u) {
      const double w = sigma->weights(step, u);
      if (w <= 0.0) continue;
      fredholm_grad_into(fa, t, y, u, 0, grad_buf.data(), x_scratch.data(),
                         f_scratch.data());
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) A(r, c) += w * grad_buf[r * n + c];
    }
  }
};

// (sigma x pi)-averaged Jacobian of the smoothed joint dynamics at (t, yhat):
// block lower-triangular, top-left d_y f^j, bottom rows d_yhat f_tilde^j.
struct JointJacobian {
  const ProblemSpec* spec;
  FredholmApprox fa_f, fa_ft;
  const RelaxedControl* sigma;
  const FiberPolicy* pi;
  mutable Eigen::VectorXd x_scratch, f_scratch;
  mutable std::vector<double> grad_f;  // row-major n x n
  mutable std::vector<double> grad_ft; // row-major m x (n+m)

  JointJacobian(const ProblemSpec& s, int j, const RelaxedControl& sg,
                const FiberPolicy& p)
      : spec(&s), fa_f(s.fa_f(j)), fa_ft(s.fa_f_tilde(j)), sigma(&sg), pi(&p),
        x_scratch(s.joint_dim()), f_scratch(std::max(s.n, s.m)),
        grad_f(static_cast<size_t>(s.n) * s.n),
        grad_ft(static_cast<size_t>(s.m) * s.joint_dim()) {}

  void eval(int step, double t, const double* y_hat, Mat& A) const {
    const int n = spec->n, m = spec->m, p = n + m;
    A.setZero();
    const Mat& pk = pi->weights[static_cast<size_t>(step)];
    for (int u = 0; u < sigma->n_points(); ++u) {
      const double wu = sigma->weights(step, u);
      if (wu <= 0.0) continue;
      fredholm_grad_into(fa_f, t, y_hat, u, 0, grad_f.data(), x_scratch.data(),
                         f_scratch.data());
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) A(r, c) += wu * grad_f[r * n + c];
      for (int v = 0; v < pk.cols(); ++v) {
        const double w = wu * pk(u, v);
        if (w <= 0.0) continue;
        fredholm_grad_into(fa_ft, t, y_hat, u, v, grad_ft.data(),
                           x_scratch.data(), f_scratch.data());
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < p; ++c) A(n + r, c) += w * grad_ft[r * p + c];
      }
    }
  }
};

// Backward RK4 for Z' = -Z A(t) from Z(t1) = I, reusing the forward state
// grid: full stages at the stored nodes, half stages at node midpoints.
template <typename Jac>
std::vector<Mat> integrate_backward(const Trajectory& traj, int dim, const Jac& jac) {
  const int n_steps = traj.n_steps();
  if (n_steps < 1) throw ShapeMismatch("adjoint: trajectory has no steps");
  if (traj.states.cols() != dim)
    throw ShapeMismatch("adjoint: trajectory state dimension mismatch");
  const double dt = traj.dt();

  std::vector<Mat> Z(static_cast<size_t>(n_steps) + 1);
  Z[static_cast<size_t>(n_steps)] = Mat::Identity(dim, dim);

  Mat A(dim, dim), K1(dim, dim), K2(dim, dim), K3(dim, dim), K4(dim, dim);
  Vec mid(dim);
  for (int k = n_steps - 1; k >= 0; --k) {
    const Mat& Zr = Z[static_cast<size_t>(k) + 1];
    const double t_right = traj.times[k + 1];
    const double t_mid = 0.5 * (traj.times[k] + traj.times[k + 1]);
    const double t_left = traj.times[k];
    mid = 0.5 * (traj.states.row(k) + traj.states.row(k + 1));

    const double h = -dt; // integrating right to left
    jac.eval(k, t_right, traj.states.row(k + 1).data(), A);
    K1.noalias() = -Zr * A;
    jac.eval(k, t_mid, mid.data(), A);
    K2.noalias() = -(Zr + 0.5 * h * K1) * A;
    K3.noalias() = -(Zr + 0.5 * h * K2) * A;
    jac.eval(k, t_left, traj.states.row(k).data(), A);
    K4.noalias() = -(Zr + h * K3) * A;
    Z[static_cast<size_t>(k)] = Zr + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4);
  }
  return Z;
}

double induced_inf_norm(const Mat& M) {
  return M.cwiseAbs().rowwise().sum().maxCoeff();
}

} // namespace

std::vector<Mat> integrate_Z(const ProblemSpec& spec, int j,
                             const RelaxedControl& sigma, const Trajectory& traj) {
  if (j < 1) throw DomainError("integrate_Z: j must be >= 1");
  if (sigma.n_steps() != traj.n_steps())
    throw ShapeMismatch("integrate_Z: sigma rows != trajectory steps");
  PlayerJacobian jac(spec, j, sigma);
  return integrate_backward(traj, spec.n, jac);
}

std::vector<Mat> integrate_Z_hat(const ProblemSpec& spec, int j,
                                 const RelaxedControl& sigma,
                                 const Adversary& adversary, const Trajectory& traj) {
  if (j < 1) throw DomainError("integrate_Z_hat: j must be >= 1");
  if (sigma.n_steps() != traj.n_steps())
    throw ShapeMismatch("integrate_Z_hat: sigma rows != trajectory steps");
  if (adversary.kind == Adversary::Kind::none)
    throw DomainError("integrate_Z_hat: adversary required for the joint state");
  FiberPolicy local;
  const FiberPolicy* pi = adversary.pi;
  if (adversary.kind == Adversary::Kind::relaxed) {
    local = FiberPolicy::from_relaxed(*adversary.sigma_p, sigma.n_points(), sigma.grid);
    pi = &local;
  }
  JointJacobian jac(spec, j, sigma, *pi);
  return integrate_backward(traj, spec.joint_dim(), jac);
}

double AdjointMatrices::sup_norm_of(const std::vector<Mat>& seq) {
  double s = 0.0;
  for (const Mat& M : seq) s = std::max(s, induced_inf_norm(M));
  return s;
}

double AdjointMatrices::sup_norm() const {
  double s = sup_norm_of(Z);
  for (const auto& seq : Z_hat_per_atom) s = std::max(s, sup_norm_of(seq));
  return s;
}

double AdjointMatrices::gronwall_bound(const ProblemSpec& spec) {
  const double T = spec.t1 - spec.t0;
  return 1.0 + T * spec.lipschitz() * std::exp(T);
}

double MultiplierSet::omega_mass() const {
  double s = 0.0;
  for (const OmegaAtom& a : omega) s += a.weight;
  return s;
}

namespace {

// f_hat value (n+m components) at a joint state, smoothed at j or raw.
struct JointFieldEval {
  const ProblemSpec* spec;
  int j;
  FredholmApprox fa_f, fa_ft;
  mutable Eigen::VectorXd x_scratch, f_scratch;

  JointFieldEval(const ProblemSpec& s, int jj)
      : spec(&s), j(jj), fa_f(s.fa_f(std::max(jj, 1))),
        fa_ft(s.fa_f_tilde(std::max(jj, 1))), x_scratch(s.joint_dim()),
        f_scratch(std::max(s.n, s.m)) {}

  // out must hold n+m doubles; the y-part of y_hat drives f.
  void eval(double t, const double* y_hat, int u, int v, double* out) const {
    if (j >= 1) {
      fredholm_value_into(fa_f, t, y_hat, u, 0, out, x_scratch.data(), f_scratch.data());
      fredholm_value_into(fa_ft, t, y_hat, u, v, out + spec->n, x_scratch.data(),
                          f_scratch.data());
    } else {
      spec->f.eval(t, y_hat, u, 0, out);
      spec->f_tilde.eval(t, y_hat, u, v, out + spec->n);
    }
  }
};

} // namespace

HamiltonianTable assemble_hamiltonians(const ProblemSpec& spec, int j,
                                       const MultiplierSet& multipliers,
                                       const AdjointMatrices& adjoints,
                                       const TrajectoryBundle& trajs) {
  if (trajs.y_sigma == nullptr)
    throw ShapeMismatch("assemble_hamiltonians: missing player trajectory");
  const Trajectory& y = *trajs.y_sigma;
  const int n_steps = y.n_steps();
  const int n = spec.n, p = spec.joint_dim();
  const int n_u = spec.u_grid->size(), n_v = spec.v_grid->size();
  const size_t n_atoms = multipliers.omega.size();
  if (adjoints.Z.size() != static_cast<size_t>(n_steps) + 1)
    throw ShapeMismatch("assemble_hamiltonians: Z length != n_steps + 1");
  if (adjoints.Z_hat_per_atom.size() != n_atoms ||
      trajs.y_hat_per_atom.size() != n_atoms)
    throw ShapeMismatch("assemble_hamiltonians: per-atom data != #omega atoms");
  if (multipliers.H_hat_per_atom.size() != n_atoms)
    throw ShapeMismatch("assemble_hamiltonians: endpoint gradients != #omega atoms");

  HamiltonianTable table;

  // k(t) rows: terminal gradient l0 H0 + l1 H1 transported by Z.
  Vec g = Vec::Zero(n);
  if (multipliers.H0.size() == n) g += multipliers.l0 * multipliers.H0;
  if (multipliers.H1.size() == n) g += multipliers.l1 * multipliers.H1;
  table.k.resize(n_steps + 1, n);
  for (int kk = 0; kk <= n_steps; ++kk)
    table.k.row(kk) = g.transpose() * adjoints.Z[static_cast<size_t>(kk)];

  table.k_hat.resize(n_atoms);
  for (size_t a = 0; a < n_atoms; ++a) {
    const Vec& gh = multipliers.H_hat_per_atom[a];
    if (gh.size() != p)
      throw ShapeMismatch("assemble_hamiltonians: H_hat dimension != n + m");
    table.k_hat[a].resize(n_steps + 1, p);
    for (int kk = 0; kk <= n_steps; ++kk)
      table.k_hat[a].row(kk) =
          gh.transpose() * adjoints.Z_hat_per_atom[a][static_cast<size_t>(kk)];
  }

  // Player tables: rows of H0^T Z and H1^T Z dotted with f(t_k, y_k, u).
  FredholmApprox fa_f = spec.fa_f(std::max(j, 1));
  Vec x_scratch(n), fval(n), f_scratch(n);
  table.base0 = Mat::Zero(n_steps, n_u);
  table.base1 = Mat::Zero(n_steps, n_u);
  const bool have_H0 = multipliers.H0.size() == n;
  const bool have_H1 = multipliers.H1.size() == n;
  Eigen::RowVectorXd r0(n), r1(n);
  for (int kk = 0; kk < n_steps; ++kk) {
    const double t = y.times[kk];
    const double* yk = y.states.row(kk).data();
    if (have_H0)
      r0 = multipliers.H0.transpose() * adjoints.Z[static_cast<size_t>(kk)];
    if (have_H1)
      r1 = multipliers.H1.transpose() * adjoints.Z[static_cast<size_t>(kk)];
    for (int u = 0; u < n_u; ++u) {
      if (j >= 1)
        fredholm_value_into(fa_f, t, yk, u, 0, fval.data(), x_scratch.data(),
                            f_scratch.data());
      else
        spec.f.eval(t, yk, u, 0, fval.data());
      if (have_H0) table.base0(kk, u) = r0 * fval;
      if (have_H1) table.base1(kk, u) = r1 * fval;
    }
  }

  // Fiber tables per atom.
  JointFieldEval field(spec, j);
  Vec fhat(p);
  table.fiber_vals.resize(n_atoms);
  table.frak_h.resize(n_atoms);
  table.frak_h_avg.resize(n_atoms);
  for (size_t a = 0; a < n_atoms; ++a) {
    const Trajectory& yh = *trajs.y_hat_per_atom[a];
    if (yh.n_steps() != n_steps)
      throw ShapeMismatch("assemble_hamiltonians: atom step count mismatch");
    const FiberPolicy& pi = multipliers.omega[a].policy;
    table.fiber_vals[a].assign(static_cast<size_t>(n_steps), Mat::Zero(n_u, n_v));
    table.frak_h[a] = Mat::Zero(n_steps, n_u);
    table.frak_h_avg[a] = Mat::Zero(n_steps, n_u);
    for (int kk = 0; kk < n_steps; ++kk) {
      const double t = yh.times[kk];
      const double* xk = yh.states.row(kk).data();
      const Eigen::RowVectorXd kh = table.k_hat[a].row(kk);
      Mat& vals = table.fiber_vals[a][static_cast<size_t>(kk)];
      const Mat& pik = pi.weights[static_cast<size_t>(kk)];
      for (int u = 0; u < n_u; ++u) {
        double best = 0.0;
        bool any = false;
        double avg = 0.0;
        for (int v = 0; v < n_v; ++v) {
          field.eval(t, xk, u, v, fhat.data());
          const double val = kh * fhat;
          vals(u, v) = val;
          avg += pik(u, v) * val;
          if (spec.v_grid->admissible(kk, v) && (!any || val > best)) {
            best = val;
            any = true;
          }
        }
        table.frak_h[a](kk, u) = best;
        table.frak_h_avg[a](kk, u) = avg;
      }
    }
  }

  // Total table and its sup over admissible entries.
  table.H = multipliers.l0 * table.base0 + multipliers.l1 * table.base1;
  for (size_t a = 0; a < n_atoms; ++a) {
    const Mat& frak = multipliers.mode == Mode::hyperrelaxed ? table.frak_h[a]
                                                             : table.frak_h_avg[a];
    table.H += multipliers.omega[a].weight * frak;
  }
  table.sup_abs_H = 0.0;
  for (int kk = 0; kk < n_steps; ++kk)
    for (int u = 0; u < n_u; ++u)
      if (spec.u_grid->admissible(kk, u))
        table.sup_abs_H = std::max(table.sup_abs_H, std::abs(table.H(kk, u)));
  return table;
}

double HamiltonianTable::fw_gap(const RelaxedControl& sigma, double dt,
                                const controls::ControlGrid& grid) const {
  double gap = 0.0;
  for (int kk = 0; kk < H.rows(); ++kk) {
    double avg = 0.0, best = 0.0;
    bool any = false;
    for (int u = 0; u < H.cols(); ++u) {
      avg += sigma.weights(kk, u) * H(kk, u);
      if (grid.admissible(kk, u) && (!any || H(kk, u) < best)) {
        best = H(kk, u);
        any = true;
      }
    }
    gap += dt * (avg - best);
  }
  return gap;
}

LimitSweepResult limit_sweep(const ProblemSpec& spec, std::vector<int> j_seq,
                             const std::vector<RelaxedControl>& sigma_seq,
                             const std::vector<MultiplierSet>& multiplier_seq,
                             int n_steps) {
  if (j_seq.empty()) j_seq = {5, 10, 20, 40, 80};
  for (size_t i = 1; i < j_seq.size(); ++i)
    if (j_seq[i] <= j_seq[i - 1])
      throw DomainError("limit_sweep: j sequence must be strictly increasing");
  if (sigma_seq.empty())
    throw DomainError("limit_sweep: at least one control required");
  if (sigma_seq.size() != 1 && sigma_seq.size() != j_seq.size())
    throw ShapeMismatch("limit_sweep: sigma sequence length != j sequence");
  if (!multiplier_seq.empty() && multiplier_seq.size() != 1 &&
      multiplier_seq.size() != j_seq.size())
    throw ShapeMismatch("limit_sweep: multiplier sequence length != j sequence");

  const Vec b = spec.b_mid();
  const Vec b_hat = spec.b_hat_mid();

  LimitSweepResult out;
  std::vector<AdjointMatrices> per_j;
  per_j.reserve(j_seq.size());
  for (size_t i = 0; i < j_seq.size(); ++i) {
    const int j = j_seq[i];
    const RelaxedControl& sigma = sigma_seq[sigma_seq.size() == 1 ? 0 : i];
    const MultiplierSet* mult = nullptr;
    if (!multiplier_seq.empty())
      mult = &multiplier_seq[multiplier_seq.size() == 1 ? 0 : i];

    AdjointMatrices adj;
    adj.j = j;
    Trajectory y = trajectory::integrate_perturbed(spec, j, sigma, Adversary::none(),
                                                   b, n_steps);
    adj.Z = integrate_Z(spec, j, sigma, y);
    if (mult != nullptr) {
      for (const OmegaAtom& atom : mult->omega) {
        Trajectory yh = trajectory::integrate_perturbed(
            spec, j, sigma, Adversary::of(atom.policy), b_hat, n_steps);
        adj.Z_hat_per_atom.push_back(
            integrate_Z_hat(spec, j, sigma, Adversary::of(atom.policy), yh));
      }
    }
    per_j.push_back(std::move(adj));
  }

  // Cauchy increments of the matrices between consecutive j.
  for (size_t i = 1; i < per_j.size(); ++i) {
    double inc = 0.0;
    const auto& prev = per_j[i - 1];
    const auto& cur = per_j[i];
    for (size_t kk = 0; kk < cur.Z.size(); ++kk)
      inc = std::max(inc, induced_inf_norm(cur.Z[kk] - prev.Z[kk]));
    const size_t n_common =
        std::min(prev.Z_hat_per_atom.size(), cur.Z_hat_per_atom.size());
    for (size_t a = 0; a < n_common; ++a)
      for (size_t kk = 0; kk < cur.Z_hat_per_atom[a].size(); ++kk)
        inc = std::max(inc, induced_inf_norm(cur.Z_hat_per_atom[a][kk] -
                                             prev.Z_hat_per_atom[a][kk]));
    out.adjoint_increments.push_back(inc);
  }

  if (multiplier_seq.size() == j_seq.size()) {
    for (size_t i = 1; i < multiplier_seq.size(); ++i) {
      const MultiplierSet& a = multiplier_seq[i - 1];
      const MultiplierSet& b2 = multiplier_seq[i];
      out.multiplier_increments.push_back(std::abs(b2.l0 - a.l0) +
                                          std::abs(b2.l1 - a.l1) +
                                          std::abs(b2.omega_mass() - a.omega_mass()));
    }
  }

  out.non_cauchy_adjoint = mollify::increments_non_cauchy(out.adjoint_increments);
  out.non_cauchy_multiplier = mollify::increments_non_cauchy(out.multiplier_increments);
  out.limit = std::move(per_j.back());
  return out;
}

} // namespace advoc::adjoint
