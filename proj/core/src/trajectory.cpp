#include "advoc/trajectory.hpp"

#include <cmath>

namespace advoc::trajectory {

using controls::FiberPolicy;
using controls::RelaxedControl;
using mollify::fredholm_value_into;

namespace {

void check_step_guard(const ProblemSpec& spec, int n_steps) {
  if (n_steps < 1) throw DomainError("integrate: n_steps must be positive");
  const double dt = (spec.t1 - spec.t0) / n_steps;
  if (dt * spec.lipschitz() > 0.5)
    throw StepCountTooSmall("integrate: dt * L > 0.5; raise n_steps");
}

// Generic fixed-step RK4 over drift(t, step_index, state, out).
template <typename Drift>
Trajectory rk4(const ProblemSpec& spec, int dim, const Vec& x0, int n_steps,
               Drift&& drift, std::string tag) {
  check_step_guard(spec, n_steps);
  Trajectory tr;
  tr.control_tag = std::move(tag);
  tr.times.resize(n_steps + 1);
  tr.states.resize(n_steps + 1, dim);
  const double dt = (spec.t1 - spec.t0) / n_steps;

  Vec x = x0, k1(dim), k2(dim), k3(dim), k4(dim), xt(dim);
  tr.states.row(0) = x;
  tr.times[0] = spec.t0;
  for (int k = 0; k < n_steps; ++k) {
    const double t = spec.t0 + k * dt;
    drift(t, k, x, k1);
    xt = x + 0.5 * dt * k1;
    drift(t + 0.5 * dt, k, xt, k2);
    xt = x + 0.5 * dt * k2;
    drift(t + 0.5 * dt, k, xt, k3);
    xt = x + dt * k3;
    drift(t + dt, k, xt, k4);
    x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    tr.states.row(k + 1) = x;
    tr.times[k + 1] = spec.t0 + (k + 1) * dt;
  }
  return tr;
}

} // namespace

Trajectory integrate_relaxed(const ProblemSpec& spec, const RelaxedControl& sigma,
                             const Vec& b, int n_steps) {
  if (sigma.n_steps() != n_steps)
    throw ShapeMismatch("integrate_relaxed: control rows != n_steps");
  if (b.size() != spec.n) throw ShapeMismatch("integrate_relaxed: bad initial state");
  for (int i = 0; i < spec.n; ++i)
    if (b[i] < spec.b_lo[i] - 1e-9 || b[i] > spec.b_hi[i] + 1e-9)
      throw DomainError("integrate_relaxed: initial state outside B");

  const int nu = sigma.n_points();
  Vec fbuf(spec.n);
  auto drift = [&](double t, int k, const Vec& x, Vec& out) {
    out.setZero();
    for (int u = 0; u < nu; ++u) {
      const double w = sigma.weights(k, u);
      if (w == 0.0) continue;
      spec.f.eval(t, x.data(), u, 0, fbuf.data());
      out += w * fbuf;
    }
  };
  return rk4(spec, spec.n, b, n_steps, drift, "relaxed");
}

namespace {

// Joint drift under sigma (x) pi, raw fields.
struct FiberDrift {
  const ProblemSpec& spec;
  const RelaxedControl& sigma;
  const FiberPolicy& pi;
  mutable Vec fbuf_n, fbuf_m;

  FiberDrift(const ProblemSpec& s, const RelaxedControl& sg, const FiberPolicy& p)
      : spec(s), sigma(sg), pi(p), fbuf_n(s.n), fbuf_m(s.m) {}

  void operator()(double t, int k, const Vec& x, Vec& out) const {
    out.setZero();
    const int nu = sigma.n_points(), nv = pi.n_v();
    const Mat& pw = pi.weights[k];
    for (int u = 0; u < nu; ++u) {
      const double wu = sigma.weights(k, u);
      if (wu == 0.0) continue;
      spec.f.eval(t, x.data(), u, 0, fbuf_n.data());
      out.head(spec.n) += wu * fbuf_n;
      for (int v = 0; v < nv; ++v) {
        const double w = wu * pw(u, v);
        if (w == 0.0) continue;
        spec.f_tilde.eval(t, x.data(), u, v, fbuf_m.data());
        out.tail(spec.m) += w * fbuf_m;
      }
    }
  }
};

} // namespace

Trajectory integrate_fiber(const ProblemSpec& spec, const RelaxedControl& sigma,
                           const FiberPolicy& pi, const Vec& b_hat, int n_steps) {
  if (sigma.n_steps() != n_steps || pi.n_steps() != n_steps)
    throw ShapeMismatch("integrate_fiber: control rows != n_steps");
  if (b_hat.size() != spec.joint_dim())
    throw ShapeMismatch("integrate_fiber: bad joint initial state");
  FiberDrift drift(spec, sigma, pi);
  return rk4(spec, spec.joint_dim(), b_hat, n_steps,
             [&](double t, int k, const Vec& x, Vec& out) { drift(t, k, x, out); },
             "fiber");
}

Trajectory integrate_product(const ProblemSpec& spec, const RelaxedControl& sigma,
                             const RelaxedControl& sigma_p, const Vec& b_hat,
                             int n_steps) {
  const FiberPolicy pi =
      FiberPolicy::from_relaxed(sigma_p, sigma.n_points(), sigma.grid);
  Trajectory tr = integrate_fiber(spec, sigma, pi, b_hat, n_steps);
  tr.control_tag = "product";
  return tr;
}

Trajectory integrate_perturbed(const ProblemSpec& spec, int j, const RelaxedControl& sigma,
                               const Adversary& adversary, const Vec& b, int n_steps) {
  if (j < 1) throw DomainError("integrate_perturbed: j must be >= 1");
  const auto fa_f = spec.fa_f(j);
  const int nu = sigma.n_points();

  if (adversary.kind == Adversary::Kind::none) {
    if (b.size() != spec.n) throw ShapeMismatch("integrate_perturbed: bad initial state");
    Vec fbuf(spec.n), xs(spec.n), fs(spec.n);
    auto drift = [&](double t, int k, const Vec& x, Vec& out) {
      out.setZero();
      for (int u = 0; u < nu; ++u) {
        const double w = sigma.weights(k, u);
        if (w == 0.0) continue;
        fredholm_value_into(fa_f, t, x.data(), u, 0, fbuf.data(), xs.data(), fs.data());
        out += w * fbuf;
      }
    };
    return rk4(spec, spec.n, b, n_steps, drift, "perturbed:j=" + std::to_string(j));
  }

  // joint state
  const FiberPolicy pi_local =
      adversary.kind == Adversary::Kind::relaxed
          ? FiberPolicy::from_relaxed(*adversary.sigma_p, nu, sigma.grid)
          : FiberPolicy();
  const FiberPolicy& pi =
      adversary.kind == Adversary::Kind::relaxed ? pi_local : *adversary.pi;
  if (sigma.n_steps() != n_steps || pi.n_steps() != n_steps)
    throw ShapeMismatch("integrate_perturbed: control rows != n_steps");
  if (b.size() != spec.joint_dim())
    throw ShapeMismatch("integrate_perturbed: bad joint initial state");

  const auto fa_ft = spec.fa_f_tilde(j);
  const int nv = pi.n_v();
  const int dj = spec.joint_dim();
  Vec fn(spec.n), fm(spec.m), xs_n(spec.n), fs_n(spec.n), xs_j(dj), fs_j(spec.m);
  auto drift = [&](double t, int k, const Vec& x, Vec& out) {
    out.setZero();
    const Mat& pw = pi.weights[k];
    for (int u = 0; u < nu; ++u) {
      const double wu = sigma.weights(k, u);
      if (wu == 0.0) continue;
      fredholm_value_into(fa_f, t, x.data(), u, 0, fn.data(), xs_n.data(), fs_n.data());
      out.head(spec.n) += wu * fn;
      for (int v = 0; v < nv; ++v) {
        const double w = wu * pw(u, v);
        if (w == 0.0) continue;
        fredholm_value_into(fa_ft, t, x.data(), u, v, fm.data(), xs_j.data(),
                            fs_j.data());
        out.tail(spec.m) += w * fm;
      }
    }
  };
  return rk4(spec, dj, b, n_steps, drift, "perturbed:j=" + std::to_string(j));
}

ProximityConstants ProximityConstants::of(const ProblemSpec& spec) {
  ProximityConstants c;
  c.alpha = spec.alpha();
  c.L_f_hat = spec.lipschitz();
  c.c_y_hat = c.L_f_hat + c.alpha * std::exp(c.alpha);
  c.c_h0 = spec.h0.lipschitz_const * (c.c_y_hat + 1.0);
  c.c_h1 = spec.has_h1 ? spec.h1.lipschitz_const * (c.c_y_hat + 1.0) : 0.0;
  c.c_h_hat = spec.has_h_hat ? spec.h_hat.lipschitz_const * (c.c_y_hat + 1.0) : 0.0;
  return c;
}

void ProximityConstants::check(double tol) const {
  const double cy = L_f_hat + alpha * std::exp(alpha);
  if (std::abs(cy - c_y_hat) > tol * std::max(1.0, cy))
    throw DomainError("ProximityConstants: c_y_hat inconsistent");
}

ProximityReport proximity_report(const ProblemSpec& spec, int j,
                                 const RelaxedControl& sigma, const FiberPolicy& pi,
                                 const Vec& b_hat, int n_steps) {
  ProximityReport rep;
  rep.constants = ProximityConstants::of(spec);
  rep.j = j;
  const auto& c = rep.constants;

  const Trajectory raw = integrate_fiber(spec, sigma, pi, b_hat, n_steps);
  const Trajectory mol =
      integrate_perturbed(spec, j, sigma, Adversary::of(pi), b_hat, n_steps);

  // (i) state gap
  rep.gap_state = (mol.states - raw.states).rowwise().norm().maxCoeff();
  rep.bound_state = c.c_y_hat / j;

  // (ii) field gap along the two trajectories, all control pairs
  const auto fa_f = spec.fa_f(j);
  const auto fa_ft = spec.fa_f_tilde(j);
  const int nu = spec.u_grid->size(), nv = spec.v_grid->size();
  double gap_field = 0.0;
  Vec raw_val(spec.joint_dim()), mol_val(spec.joint_dim());
  for (int k = 0; k <= n_steps; ++k) {
    const double t = raw.times[k];
    const Vec xr = raw.states.row(k);
    const Vec xm = mol.states.row(k);
    for (int u = 0; u < nu; ++u) {
      for (int v = 0; v < nv; ++v) {
        raw_val.head(spec.n) = spec.f.value(t, xr.head(spec.n), u, v);
        raw_val.tail(spec.m) = spec.f_tilde.value(t, xr, u, v);
        mol_val.head(spec.n) = fredholm_value(fa_f, t, xm.head(spec.n), u, v);
        mol_val.tail(spec.m) = fredholm_value(fa_ft, t, xm, u, v);
        gap_field = std::max(gap_field, (mol_val - raw_val).norm());
      }
    }
  }
  rep.gap_field = gap_field;
  rep.bound_field = (c.c_y_hat + 1.0) / j;

  // endpoint gaps
  const Vec yr = raw.endpoint().head(spec.n);
  const Vec ym = mol.endpoint().head(spec.n);
  const Vec yhr = raw.endpoint();
  const Vec yhm = mol.endpoint();
  rep.gap_h0 = std::abs(fredholm_value(spec.fa_h0(j), spec.t1, ym)[0] -
                        spec.h0.value(spec.t1, yr)[0]);
  rep.bound_h0 = c.c_h0 / j;
  if (spec.has_h1) {
    rep.gap_h1 = std::abs(fredholm_value(spec.fa_h1(j), spec.t1, ym)[0] -
                          spec.h1.value(spec.t1, yr)[0]);
    rep.bound_h1 = c.c_h1 / j;
  }
  if (spec.has_h_hat) {
    rep.gap_h_hat = std::abs(fredholm_value(spec.fa_h_hat(j), spec.t1, yhm)[0] -
                             spec.h_hat.value(spec.t1, yhr)[0]);
    rep.bound_h_hat = c.c_h_hat / j;
  }
  return rep;
}

} // namespace advoc::trajectory
