#include "advoc/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "advoc/mollify.hpp"

namespace advoc::solver {

using adjoint::OmegaAtom;
using adjoint::TrajectoryBundle;
using controls::ControlGrid;
using mollify::FredholmApprox;
using mollify::LipschitzField;
using trajectory::Adversary;
using trajectory::ProximityConstants;

namespace {

double endpoint_value_raw(const LipschitzField& h, double t1, const Vec& x) {
  Vec out(1);
  h.eval(t1, x.data(), 0, 0, out.data());
  return out[0];
}

double endpoint_value_j(const FredholmApprox& fa, double t1, const Vec& x) {
  return mollify::fredholm_value(fa, t1, x)[0];
}

Vec endpoint_grad_j(const FredholmApprox& fa, double t1, const Vec& x) {
  return mollify::fredholm_grad(fa, t1, x).row(0).transpose();
}

// k_hat . f_hat evaluator shared by the best response and the residuals;
// j == adjoint::kLimit switches to the raw fields.
struct FiberValue {
  const ProblemSpec* spec;
  int j;
  FredholmApprox fa_f, fa_ft;
  mutable Vec x_scratch, f_scratch, fhat;

  FiberValue(const ProblemSpec& s, int jj)
      : spec(&s), j(jj), fa_f(s.fa_f(std::max(jj, 1))),
        fa_ft(s.fa_f_tilde(std::max(jj, 1))), x_scratch(s.joint_dim()),
        f_scratch(std::max(s.n, s.m)), fhat(s.joint_dim()) {}

  double eval(double t, const double* y_hat, int u, int v,
              const Eigen::RowVectorXd& k_hat) const {
    if (j >= 1) {
      mollify::fredholm_value_into(fa_f, t, y_hat, u, 0, fhat.data(),
                                   x_scratch.data(), f_scratch.data());
      mollify::fredholm_value_into(fa_ft, t, y_hat, u, v, fhat.data() + spec->n,
                                   x_scratch.data(), f_scratch.data());
    } else {
      spec->f.eval(t, y_hat, u, 0, fhat.data());
      spec->f_tilde.eval(t, y_hat, u, v, fhat.data() + spec->n);
    }
    return k_hat * fhat;
  }
};

} // namespace

PerturbedProblem make_perturbed(const ProblemSpec& spec, int j,
                                const RelaxedControl& sigma_init, int n_steps) {
  if (j < 1) throw DomainError("make_perturbed: j must be >= 1");
  PerturbedProblem pp;
  pp.spec = &spec;
  pp.j = j;
  pp.b_bar = spec.b_mid();
  pp.bt_bar = spec.bt_mid();

  const ProximityConstants pcs = ProximityConstants::of(spec);
  if (spec.has_h_hat) pp.constraint_shift = pcs.c_h_hat / j;

  if (spec.has_h1) {
    const Trajectory y_raw =
        trajectory::integrate_relaxed(spec, sigma_init, pp.b_bar, n_steps);
    const Trajectory y_j = trajectory::integrate_perturbed(
        spec, j, sigma_init, Adversary::none(), pp.b_bar, n_steps);
    const double delta = endpoint_value_j(spec.fa_h1(j), spec.t1, y_j.endpoint()) -
                         endpoint_value_raw(spec.h1, spec.t1, y_raw.endpoint());
    const double window = pcs.c_h1 / j;
    if (std::abs(delta) > window * (1.0 + 1e-9) + 1e-12)
      throw InfeasibleStart(
          "make_perturbed: smoothing error of the equality exceeds its proximity "
          "window, no admissible shift keeps the incumbent feasible");
    pp.a_j = std::clamp(delta, -window, window);
  }
  return pp;
}

FiberPolicy adversary_best_response(const ProblemSpec& spec, int j,
                                    const RelaxedControl& sigma, const Mat& k_hat,
                                    const Trajectory& y_hat, Mode mode) {
  const int n_steps = y_hat.n_steps();
  if (k_hat.rows() != n_steps + 1 || k_hat.cols() != spec.joint_dim())
    throw ShapeMismatch("adversary_best_response: k_hat shape mismatch");
  if (sigma.n_steps() != n_steps)
    throw ShapeMismatch("adversary_best_response: sigma rows != steps");
  const int n_u = spec.u_grid->size(), n_v = spec.v_grid->size();
  const FiberValue fv(spec, j);

  if (mode == Mode::hyperrelaxed) {
    // per (step, u) maximizer over admissible v
    std::vector<std::vector<int>> choice(static_cast<size_t>(n_steps),
                                         std::vector<int>(n_u, 0));
    for (int kk = 0; kk < n_steps; ++kk) {
      const double t = y_hat.times[kk];
      const double* xk = y_hat.states.row(kk).data();
      const Eigen::RowVectorXd kh = k_hat.row(kk);
      for (int u = 0; u < n_u; ++u) {
        double best = 0.0;
        int best_v = -1;
        for (int v = 0; v < n_v; ++v) {
          if (!spec.v_grid->admissible(kk, v)) continue;
          const double val = fv.eval(t, xk, u, v, kh);
          if (best_v < 0 || val > best) {
            best = val;
            best_v = v;
          }
        }
        choice[static_cast<size_t>(kk)][static_cast<size_t>(u)] = best_v;
      }
    }
    return FiberPolicy::from_map(n_steps, spec.u_grid, spec.v_grid,
                                 [&choice](int step, int u) {
                                   return choice[static_cast<size_t>(step)]
                                                [static_cast<size_t>(u)];
                                 });
  }

  // relaxed mode: average the objective over sigma(t)(du) first, then pick a
  // u-independent maximizer per step
  std::vector<int> choice(static_cast<size_t>(n_steps), 0);
  for (int kk = 0; kk < n_steps; ++kk) {
    const double t = y_hat.times[kk];
    const double* xk = y_hat.states.row(kk).data();
    const Eigen::RowVectorXd kh = k_hat.row(kk);
    double best = 0.0;
    int best_v = -1;
    for (int v = 0; v < n_v; ++v) {
      if (!spec.v_grid->admissible(kk, v)) continue;
      double avg = 0.0;
      for (int u = 0; u < n_u; ++u) {
        const double w = sigma.weights(kk, u);
        if (w <= 0.0) continue;
        avg += w * fv.eval(t, xk, u, v, kh);
      }
      if (best_v < 0 || avg > best) {
        best = avg;
        best_v = v;
      }
    }
    choice[static_cast<size_t>(kk)] = best_v;
  }
  return FiberPolicy::from_map(n_steps, spec.u_grid, spec.v_grid,
                               [&choice](int step, int) {
                                 return choice[static_cast<size_t>(step)];
                               });
}

RelaxedControl player_step(const RelaxedControl& sigma, const HamiltonianTable& table,
                           const ControlGrid& grid, const StepRule& rule, int iter) {
  RelaxedControl out = sigma;
  const double gamma = rule(iter);
  for (int kk = 0; kk < out.n_steps(); ++kk) {
    int best_u = -1;
    double best = 0.0;
    for (int u = 0; u < out.n_points(); ++u) {
      if (!grid.admissible(kk, u)) continue;
      if (best_u < 0 || table.H(kk, u) < best) {
        best = table.H(kk, u);
        best_u = u;
      }
    }
    out.weights.row(kk) *= (1.0 - gamma);
    out.weights(kk, best_u) += gamma;
  }
  return out;
}

namespace {

// All per-(sigma, atom set) caches of the penalty loop. Multiplier estimates
// and the combined table are rebuilt on every refresh; trajectories and
// adjoints only when marked dirty.
struct Engine {
  const PerturbedProblem& pp;
  const SolveConfig& cfg;
  const ProblemSpec& spec;
  double s1 = 1.0, sa = 1.0; // shift scales for the equality / inequality

  RelaxedControl sigma;
  std::vector<AtomContext> atoms;
  bool dirty = true;

  Trajectory y;
  std::vector<Mat> Z;
  Vec H0, H1;
  double h0_val = 0.0, h1_val = 0.0;
  HamiltonianTable table;
  MultiplierSet estimates;

  Engine(const PerturbedProblem& p, const SolveConfig& c, RelaxedControl s)
      : pp(p), cfg(c), spec(*p.spec), sigma(std::move(s)) {
    const ProximityConstants pcs = ProximityConstants::of(spec);
    if (spec.has_h1 && pcs.c_h1 > 0.0) s1 = pcs.c_h1 / pp.j;
    if (spec.has_h_hat && pp.constraint_shift > 0.0) sa = pp.constraint_shift;
  }

  void set_sigma(RelaxedControl s) {
    sigma = std::move(s);
    dirty = true;
  }

  void recompute_caches() {
    y = trajectory::integrate_perturbed(spec, pp.j, sigma, Adversary::none(),
                                        pp.b_bar, cfg.n_steps);
    Z = adjoint::integrate_Z(spec, pp.j, sigma, y);
    H0 = endpoint_grad_j(spec.fa_h0(pp.j), spec.t1, y.endpoint());
    h0_val = endpoint_value_j(spec.fa_h0(pp.j), spec.t1, y.endpoint());
    if (spec.has_h1) {
      H1 = endpoint_grad_j(spec.fa_h1(pp.j), spec.t1, y.endpoint());
      h1_val = endpoint_value_j(spec.fa_h1(pp.j), spec.t1, y.endpoint());
    } else {
      H1.resize(0);
      h1_val = 0.0;
    }
    const Vec b_hat = pp.b_hat();
    for (AtomContext& a : atoms) {
      a.y_hat = trajectory::integrate_perturbed(spec, pp.j, sigma,
                                                Adversary::of(a.policy), b_hat,
                                                cfg.n_steps);
      a.Z_hat = adjoint::integrate_Z_hat(spec, pp.j, sigma,
                                         Adversary::of(a.policy), a.y_hat);
      a.H_hat = endpoint_grad_j(spec.fa_h_hat(pp.j), spec.t1, a.y_hat.endpoint());
      a.constraint_value =
          endpoint_value_j(spec.fa_h_hat(pp.j), spec.t1, a.y_hat.endpoint()) +
          pp.constraint_shift;
      a.hinge = std::max(0.0, a.constraint_value);
    }
    dirty = false;
  }

  // multiplier estimates at penalty weight mu, in shift-scaled units
  void extract_estimates(double mu) {
    estimates = MultiplierSet{};
    estimates.mode = cfg.mode;
    estimates.l0 = 1.0;
    estimates.l1 = spec.has_h1 ? mu * (h1_val - pp.a_j) / s1 : 0.0;
    estimates.H0 = H0;
    estimates.H1 = H1;
    for (const AtomContext& a : atoms) {
      estimates.omega.push_back({a.policy, mu * a.hinge / sa});
      estimates.H_hat_per_atom.push_back(a.H_hat);
    }
  }

  void refresh(double mu) {
    if (dirty) recompute_caches();
    extract_estimates(mu);
    AdjointMatrices adj;
    adj.j = pp.j;
    adj.Z = Z;
    for (const AtomContext& a : atoms) adj.Z_hat_per_atom.push_back(a.Z_hat);
    TrajectoryBundle bundle;
    bundle.y_sigma = &y;
    for (const AtomContext& a : atoms) bundle.y_hat_per_atom.push_back(&a.y_hat);
    table = adjoint::assemble_hamiltonians(spec, pp.j, estimates, adj, bundle);
    for (size_t a = 0; a < atoms.size(); ++a) atoms[a].k_hat = table.k_hat[a];
  }

  // First working-set atom: best response against the uniform-policy adjoint.
  void bootstrap_atom() {
    const FiberPolicy pi0 =
        FiberPolicy::uniform(cfg.n_steps, spec.u_grid, spec.v_grid);
    const Vec b_hat = pp.b_hat();
    const Trajectory y0 = trajectory::integrate_perturbed(
        spec, pp.j, sigma, Adversary::of(pi0), b_hat, cfg.n_steps);
    const std::vector<Mat> Z0 =
        adjoint::integrate_Z_hat(spec, pp.j, sigma, Adversary::of(pi0), y0);
    const Vec Hh = endpoint_grad_j(spec.fa_h_hat(pp.j), spec.t1, y0.endpoint());
    Mat k_hat(cfg.n_steps + 1, spec.joint_dim());
    for (int kk = 0; kk <= cfg.n_steps; ++kk)
      k_hat.row(kk) = Hh.transpose() * Z0[static_cast<size_t>(kk)];
    AtomContext atom;
    atom.policy = adversary_best_response(spec, pp.j, sigma, k_hat, y0, cfg.mode);
    atoms.push_back(std::move(atom));
    dirty = true;
  }

  // Column-generation step: best responses from the current atoms' adjoints,
  // admitted only on a true constraint-value improvement.
  bool try_exchange() {
    double worst_incumbent = 0.0;
    bool have_incumbent = false;
    for (const AtomContext& a : atoms) {
      if (!have_incumbent || a.constraint_value > worst_incumbent) {
        worst_incumbent = a.constraint_value;
        have_incumbent = true;
      }
    }

    std::vector<FiberPolicy> candidates;
    double best_val = 0.0;
    int best_idx = -1;
    const Vec b_hat = pp.b_hat();
    for (const AtomContext& a : atoms) {
      FiberPolicy cand =
          adversary_best_response(spec, pp.j, sigma, a.k_hat, a.y_hat, cfg.mode);
      bool duplicate = false;
      for (const AtomContext& b : atoms)
        if (cand.almost_equal(b.policy)) { duplicate = true; break; }
      for (const FiberPolicy& c : candidates)
        if (!duplicate && cand.almost_equal(c)) { duplicate = true; break; }
      if (duplicate) continue;
      const Trajectory yc = trajectory::integrate_perturbed(
          spec, pp.j, sigma, Adversary::of(cand), b_hat, cfg.n_steps);
      const double val =
          endpoint_value_j(spec.fa_h_hat(pp.j), spec.t1, yc.endpoint()) +
          pp.constraint_shift;
      candidates.push_back(std::move(cand));
      if (best_idx < 0 || val > best_val) {
        best_val = val;
        best_idx = static_cast<int>(candidates.size()) - 1;
      }
    }
    if (best_idx < 0) return false;
    if (have_incumbent && best_val <= worst_incumbent + cfg.tol_exchange)
      return false;

    AtomContext atom;
    atom.policy = candidates[static_cast<size_t>(best_idx)];
    atoms.push_back(std::move(atom));
    if (static_cast<int>(atoms.size()) > cfg.max_atoms) {
      // evict the oldest slack atom, else plainly the oldest
      size_t victim = 0;
      for (size_t i = 0; i + 1 < atoms.size(); ++i)
        if (atoms[i].hinge <= 0.0) { victim = i; break; }
      atoms.erase(atoms.begin() + static_cast<std::ptrdiff_t>(victim));
    }
    dirty = true;
    return true;
  }
};

} // namespace

SolveResult solve_perturbed(const PerturbedProblem& pp, const SolveConfig& config,
                            const RelaxedControl& sigma_init) {
  if (pp.spec == nullptr) throw DomainError("solve_perturbed: empty problem");
  const ProblemSpec& spec = *pp.spec;
  sigma_init.check();
  if (sigma_init.n_steps() != config.n_steps)
    throw ShapeMismatch("solve_perturbed: sigma rows != n_steps");

  Engine eng(pp, config, sigma_init);
  if (spec.has_h_hat) eng.bootstrap_atom();

  SolveResult res;
  double mu = config.penalty_mu0;
  double mu_final = config.penalty_mu0;
  int total_fw = 0;
  for (int round = 0; round < config.penalty_rounds; ++round) {
    mu_final = mu;
    while (true) {
      bool stalled = false;
      for (int iter = 0; iter < config.max_fw_iters; ++iter) {
        eng.refresh(mu);
        const double gap = eng.table.fw_gap(eng.sigma, eng.y.dt(), *spec.u_grid);
        const double stall_tol =
            1e-9 * std::max(1.0, eng.table.sup_abs_H) * (spec.t1 - spec.t0);
        if (gap <= stall_tol) {
          stalled = true;
          break;
        }
        eng.set_sigma(player_step(eng.sigma, eng.table, *spec.u_grid,
                                  config.step_rule, total_fw));
        ++total_fw;
      }
      if (!stalled) {
        res.hit_max_iterations = true;
        break;
      }
      if (!spec.has_h_hat) break;
      eng.refresh(mu);
      if (!eng.try_exchange()) break;
      ++res.exchange_additions;
    }
    mu *= config.penalty_growth;
  }

  eng.refresh(mu_final);
  res.fw_iterations = total_fw;
  res.sigma = eng.sigma;
  res.atoms = eng.atoms;

  // Normalize the final estimates so the multiplier sum is exactly one.
  const double l1_raw = eng.estimates.l1;
  double omega_raw_sum = 0.0;
  for (const OmegaAtom& a : eng.estimates.omega) omega_raw_sum += a.weight;
  const double s = 1.0 + std::abs(l1_raw) + omega_raw_sum;

  MultiplierSet& out = res.multipliers;
  out.mode = config.mode;
  out.l0 = 1.0 / s;
  out.l1 = l1_raw / s;
  out.H0 = eng.H0;
  out.H1 = eng.H1;
  for (size_t a = 0; a < eng.estimates.omega.size(); ++a) {
    const double w = eng.estimates.omega[a].weight / s;
    if (w <= 1e-12) continue;
    out.omega.push_back({eng.estimates.omega[a].policy, w});
    out.H_hat_per_atom.push_back(eng.estimates.H_hat_per_atom[a]);
  }
  out.lambda = Vec::Zero(spec.joint_dim());
  {
    size_t kept = 0;
    for (size_t a = 0; a < eng.estimates.omega.size(); ++a) {
      const double w = eng.estimates.omega[a].weight / s;
      if (w <= 1e-12) continue;
      out.lambda += w * eng.atoms[a].k_hat.row(0).transpose();
      ++kept;
    }
    (void)kept;
  }

  res.value_smoothed = eng.h0_val;
  const Trajectory y_raw =
      trajectory::integrate_relaxed(spec, res.sigma, pp.b_bar, config.n_steps);
  res.value = endpoint_value_raw(spec.h0, spec.t1, y_raw.endpoint());
  return res;
}

namespace {

struct ResidualEvaluation {
  ResidualSet residuals;
  double sup_abs_H = 0.0;
  AdjointMatrices adj;
  HamiltonianTable table;
};

// Residuals of the limit conditions: raw fields along unsmoothed trajectories,
// adjoints and endpoint gradients taken from level j as the limit surrogates.
ResidualEvaluation evaluate_residuals(const ProblemSpec& spec, int j,
                                      const RelaxedControl& sigma,
                                      const MultiplierSet& mult,
                                      const SolveConfig& cfg) {
  ResidualEvaluation ev;
  const Vec b = spec.b_mid();
  const Vec b_hat = spec.b_hat_mid();
  const int n_steps = cfg.n_steps;
  const size_t n_atoms = mult.omega.size();

  const Trajectory y_raw = trajectory::integrate_relaxed(spec, sigma, b, n_steps);
  std::vector<Trajectory> yh_raw;
  yh_raw.reserve(n_atoms);
  for (const OmegaAtom& a : mult.omega)
    yh_raw.push_back(
        trajectory::integrate_fiber(spec, sigma, a.policy, b_hat, n_steps));

  ev.adj.j = j;
  const Trajectory y_j = trajectory::integrate_perturbed(
      spec, j, sigma, Adversary::none(), b, n_steps);
  ev.adj.Z = adjoint::integrate_Z(spec, j, sigma, y_j);
  for (const OmegaAtom& a : mult.omega) {
    const Trajectory yh_j = trajectory::integrate_perturbed(
        spec, j, sigma, Adversary::of(a.policy), b_hat, n_steps);
    ev.adj.Z_hat_per_atom.push_back(
        adjoint::integrate_Z_hat(spec, j, sigma, Adversary::of(a.policy), yh_j));
  }

  TrajectoryBundle bundle;
  bundle.y_sigma = &y_raw;
  for (const Trajectory& t : yh_raw) bundle.y_hat_per_atom.push_back(&t);
  ev.table = adjoint::assemble_hamiltonians(spec, adjoint::kLimit, mult, ev.adj, bundle);
  ev.sup_abs_H = ev.table.sup_abs_H;

  // (v) pointwise minimum condition of the player Hamiltonian
  double min_res = 0.0;
  for (int kk = 0; kk < n_steps; ++kk) {
    double avg = 0.0, best = 0.0;
    bool any = false;
    for (int u = 0; u < ev.table.H.cols(); ++u) {
      avg += sigma.weights(kk, u) * ev.table.H(kk, u);
      if (spec.u_grid->admissible(kk, u) && (!any || ev.table.H(kk, u) < best)) {
        best = ev.table.H(kk, u);
        any = true;
      }
    }
    min_res = std::max(min_res, avg - best);
  }
  ev.residuals.min_condition = min_res;

  // (iii) fiber maximality of each atom policy on the support
  double fiber_res = 0.0;
  const double support_tol = 1e-8;
  for (size_t a = 0; a < n_atoms; ++a) {
    const FiberPolicy& pi = mult.omega[a].policy;
    for (int kk = 0; kk < n_steps; ++kk) {
      if (mult.mode == Mode::hyperrelaxed) {
        for (int u = 0; u < ev.table.frak_h[a].cols(); ++u) {
          if (sigma.weights(kk, u) <= support_tol) continue;
          fiber_res = std::max(fiber_res, ev.table.frak_h[a](kk, u) -
                                              ev.table.frak_h_avg[a](kk, u));
        }
      } else {
        const Mat& vals = ev.table.fiber_vals[a][static_cast<size_t>(kk)];
        double best = 0.0;
        bool any = false;
        Vec r = Vec::Zero(vals.cols());
        for (int v = 0; v < vals.cols(); ++v) {
          for (int u = 0; u < vals.rows(); ++u)
            r[v] += sigma.weights(kk, u) * vals(u, v);
          if (spec.v_grid->admissible(kk, v) && (!any || r[v] > best)) {
            best = r[v];
            any = true;
          }
        }
        for (int v = 0; v < vals.cols(); ++v)
          if (pi.weights[static_cast<size_t>(kk)](0, v) > support_tol)
            fiber_res = std::max(fiber_res, best - r[v]);
      }
    }
  }
  ev.residuals.fiber_condition = fiber_res;

  // (iv) the inequality is active along every weighted atom, and no fresh best
  // response attains a strictly larger constraint value
  double active_res = 0.0;
  if (spec.has_h_hat && n_atoms > 0) {
    double worst_atom = 0.0;
    bool have = false;
    for (size_t a = 0; a < n_atoms; ++a) {
      const double val =
          endpoint_value_raw(spec.h_hat, spec.t1, yh_raw[a].endpoint());
      active_res = std::max(active_res, std::abs(val));
      if (!have || val > worst_atom) {
        worst_atom = val;
        have = true;
      }
    }
    double best_fresh = worst_atom;
    for (size_t a = 0; a < n_atoms; ++a) {
      const FiberPolicy fresh = adversary_best_response(
          spec, adjoint::kLimit, sigma, ev.table.k_hat[a], yh_raw[a], mult.mode);
      const Trajectory yf =
          trajectory::integrate_fiber(spec, sigma, fresh, b_hat, n_steps);
      best_fresh = std::max(
          best_fresh, endpoint_value_raw(spec.h_hat, spec.t1, yf.endpoint()));
    }
    active_res = std::max(active_res, best_fresh - worst_atom);
  }
  ev.residuals.active_constraint = active_res;

  // transversality: the initial state minimizes k(t0) . b + lambda . (b, bt)
  // over the box corners
  {
    const Eigen::RowVectorXd k0 = ev.table.k.row(0);
    Vec lambda = mult.lambda;
    if (lambda.size() != spec.joint_dim()) lambda = Vec::Zero(spec.joint_dim());
    const int p = spec.joint_dim();
    Vec corner(p);
    auto ell = [&](const Vec& z) {
      double s = lambda.dot(z);
      for (int i = 0; i < spec.n; ++i) s += k0[i] * z[i];
      return s;
    };
    Vec mid(p);
    mid << spec.b_mid(), spec.bt_mid();
    double best = ell(mid);
    const int n_corners = 1 << p;
    for (int c = 0; c < n_corners; ++c) {
      for (int i = 0; i < spec.n; ++i)
        corner[i] = (c >> i) & 1 ? spec.b_hi[i] : spec.b_lo[i];
      for (int i = 0; i < spec.m; ++i)
        corner[spec.n + i] =
            (c >> (spec.n + i)) & 1 ? spec.bt_hi[i] : spec.bt_lo[i];
      best = std::min(best, ell(corner));
    }
    ev.residuals.transversality = ell(mid) - best;
  }
  return ev;
}

double adjoint_increment(const AdjointMatrices& a, const AdjointMatrices& b) {
  auto norm = [](const Mat& M) { return M.cwiseAbs().rowwise().sum().maxCoeff(); };
  double inc = 0.0;
  const size_t nz = std::min(a.Z.size(), b.Z.size());
  for (size_t k = 0; k < nz; ++k) inc = std::max(inc, norm(b.Z[k] - a.Z[k]));
  const size_t na = std::min(a.Z_hat_per_atom.size(), b.Z_hat_per_atom.size());
  for (size_t at = 0; at < na; ++at) {
    const size_t nk =
        std::min(a.Z_hat_per_atom[at].size(), b.Z_hat_per_atom[at].size());
    for (size_t k = 0; k < nk; ++k)
      inc = std::max(inc, norm(b.Z_hat_per_atom[at][k] - a.Z_hat_per_atom[at][k]));
  }
  return inc;
}

} // namespace

bool residuals_certified(const ResidualSet& r, double sup_abs_H,
                         const SolveConfig& config) {
  const double tol_min = config.tol_min_scale * std::max(sup_abs_H, 1e-12);
  return r.min_condition <= tol_min && r.fiber_condition <= config.tol_fiber &&
         r.active_constraint <= config.tol_active &&
         r.transversality <= config.tol_transversality;
}

NCCertificate run_j_sweep(const ProblemSpec& spec, std::vector<int> j_seq,
                          const SolveConfig& config) {
  if (j_seq.empty())
    throw DomainError("run_j_sweep: empty j sequence");
  for (size_t i = 1; i < j_seq.size(); ++i)
    if (j_seq[i] <= j_seq[i - 1])
      throw DomainError("run_j_sweep: j sequence must be strictly increasing");

  NCCertificate cert;
  cert.problem_name = spec.name;
  cert.mode = config.mode;
  cert.j_seq = j_seq;
  cert.n_steps = config.n_steps;

  RelaxedControl sigma = RelaxedControl::uniform(config.n_steps, spec.u_grid);
  std::vector<std::string> flags;
  std::vector<AdjointMatrices> solved_adj;
  std::vector<MultiplierSet> solved_mults;
  bool have_last = false;
  double last_sup_H = 0.0;

  for (int j : j_seq) {
    JRecord rec;
    rec.j = j;
    try {
      const PerturbedProblem pp = make_perturbed(spec, j, sigma, config.n_steps);
      SolveResult res = solve_perturbed(pp, config, sigma);
      sigma = res.sigma;
      ResidualEvaluation ev =
          evaluate_residuals(spec, j, sigma, res.multipliers, config);

      rec.solved = true;
      rec.l0 = res.multipliers.l0;
      rec.l1 = res.multipliers.l1;
      rec.omega_mass = res.multipliers.omega_mass();
      rec.residuals = ev.residuals;
      rec.value = res.value;
      rec.sup_Z = ev.adj.sup_norm();
      rec.gronwall = AdjointMatrices::gronwall_bound(spec);
      rec.n_atoms = static_cast<int>(res.multipliers.omega.size());
      if (res.hit_max_iterations) {
        rec.note = "iteration budget exhausted";
        flags.push_back("iteration budget exhausted at j=" + std::to_string(j));
      }

      solved_adj.push_back(std::move(ev.adj));
      solved_mults.push_back(res.multipliers);
      cert.multipliers = std::move(res.multipliers);
      cert.sigma_bar = sigma;
      cert.residuals = ev.residuals;
      cert.value = res.value;
      last_sup_H = ev.sup_abs_H;
      have_last = true;
    } catch (const InfeasibleStart& e) {
      rec.note = e.what();
      flags.push_back("level j=" + std::to_string(j) + " skipped: infeasible start");
    }
    cert.j_history.push_back(std::move(rec));
  }

  if (!have_last) {
    cert.status = "flagged";
    cert.flag_reason = "no smoothing level was solved";
    cert.sigma_bar = sigma;
    return cert;
  }

  for (size_t i = 1; i < solved_adj.size(); ++i)
    cert.adjoint_increments.push_back(
        adjoint_increment(solved_adj[i - 1], solved_adj[i]));
  for (size_t i = 1; i < solved_mults.size(); ++i)
    cert.multiplier_increments.push_back(
        std::abs(solved_mults[i].l0 - solved_mults[i - 1].l0) +
        std::abs(solved_mults[i].l1 - solved_mults[i - 1].l1) +
        std::abs(solved_mults[i].omega_mass() - solved_mults[i - 1].omega_mass()));
  cert.non_cauchy_adjoint = mollify::increments_non_cauchy(cert.adjoint_increments);
  cert.non_cauchy_multiplier =
      mollify::increments_non_cauchy(cert.multiplier_increments);
  if (cert.non_cauchy_adjoint) flags.push_back("adjoint increments not decreasing");
  if (cert.non_cauchy_multiplier)
    flags.push_back("multiplier increments not decreasing");

  if (!cert.multipliers.normalized())
    flags.push_back("multiplier normalization violated");
  if (!residuals_certified(cert.residuals, last_sup_H, config))
    flags.push_back("limit residuals above tolerance");

  if (flags.empty()) {
    cert.status = "certified";
  } else {
    cert.status = "flagged";
    std::ostringstream reason;
    for (size_t i = 0; i < flags.size(); ++i) {
      if (i) reason << "; ";
      reason << flags[i];
    }
    cert.flag_reason = reason.str();
  }
  return cert;
}

ResidualSet verify_conditions(const ProblemSpec& spec, const RelaxedControl& sigma_bar,
                              const NCCertificate& cert, const SolveConfig& config) {
  int j = 0;
  for (const JRecord& r : cert.j_history)
    if (r.solved) j = std::max(j, r.j);
  if (j == 0 && !cert.j_seq.empty()) j = cert.j_seq.back();
  if (j == 0) throw DomainError("verify_conditions: certificate has no level");
  SolveConfig cfg = config;
  cfg.n_steps = cert.n_steps > 0 ? cert.n_steps : config.n_steps;
  return evaluate_residuals(spec, j, sigma_bar, cert.multipliers, cfg).residuals;
}

} // namespace advoc::solver
