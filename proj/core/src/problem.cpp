#include "advoc/problem.hpp"

#include <cmath>
#include <random>

#include "advoc/quadrature.hpp"

namespace advoc::problem {

Vec ProblemSpec::b_hat_mid() const {
  Vec b(n + m);
  b.head(n) = b_mid();
  b.tail(m) = bt_mid();
  return b;
}

void ProblemSpec::finalize(int nodes_n, int nodes_joint) {
  if (n < 1 || m < 1) throw DomainError("ProblemSpec: n and m must be positive");
  if (!(t1 > t0)) throw DomainError("ProblemSpec: empty horizon");
  if (!u_grid || !v_grid) throw DomainError("ProblemSpec: missing control grids");
  kernel_n = std::make_shared<Mollifier>(mollify::make_mollifier(n, nodes_n));
  kernel_joint = std::make_shared<Mollifier>(mollify::make_mollifier(n + m, nodes_joint));
}

double ProblemSpec::alpha() const {
  return quadrature::adaptive_simpson(chi, t0, t1, 1e-12);
}

namespace {

double lipschitz_ratio(const LipschitzField& g, double t, const Vec& a, const Vec& b,
                       int u, int v, double L) {
  const Vec fa = g.value(t, a, u, v);
  const Vec fb = g.value(t, b, u, v);
  const double num = (fa - fb).norm();
  const double den = (a - b).norm();
  if (den < 1e-14) return 0.0;
  if (L <= 0.0) return num > 1e-12 * std::max(1.0, fa.norm()) ? HUGE_VAL : 0.0;
  return num / (L * den);
}

Vec sample_box(std::mt19937_64& rng, const Vec& lo, const Vec& hi) {
  std::uniform_real_distribution<double> un(0.0, 1.0);
  Vec x(lo.size());
  for (int i = 0; i < lo.size(); ++i) x[i] = lo[i] + un(rng) * (hi[i] - lo[i]);
  return x;
}

} // namespace

ValidationReport validate(const ProblemSpec& spec, int n_samples, unsigned seed) {
  ValidationReport rep;
  rep.entries.push_back({"H1 measurability", true, 0.0, "assumed, not checked"});

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ut(spec.t0, spec.t1);
  const int nu = spec.u_grid->size(), nv = spec.v_grid->size();

  auto joint_value = [&](double t, const Vec& yh, int u, int v, Vec& out) {
    out.head(spec.n) = spec.f.value(t, yh.head(spec.n), u, v);
    out.tail(spec.m) = spec.f_tilde.value(t, yh, u, v);
  };

  double worst_bound = 0.0, worst_lip = 0.0;
  Vec fa(spec.n + spec.m), fb(spec.n + spec.m);
  for (int s = 0; s < n_samples; ++s) {
    const double t = ut(rng);
    const Vec a = sample_box(rng, spec.f_tilde.lo, spec.f_tilde.hi);
    const Vec b = sample_box(rng, spec.f_tilde.lo, spec.f_tilde.hi);
    const double den = (a - b).norm();
    for (int u = 0; u < nu; ++u) {
      for (int v = 0; v < nv; ++v) {
        joint_value(t, a, u, v, fa);
        joint_value(t, b, u, v, fb);
        const double c = spec.chi(t);
        worst_bound = std::max(worst_bound, c > 0 ? fa.norm() / c : HUGE_VAL);
        if (den > 1e-14) {
          const double p = spec.psi(t);
          worst_lip = std::max(worst_lip,
                               p > 0 ? (fa - fb).norm() / (p * den) : HUGE_VAL);
        }
      }
    }
  }
  rep.entries.push_back({"H2 pointwise bound", worst_bound <= 1.0 + 1e-9, worst_bound,
                         "sup |f_hat| / chi(t) over samples"});
  rep.entries.push_back({"H2 Lipschitz", worst_lip <= 1.0 + 1e-9, worst_lip,
                         "sup |f_hat(a)-f_hat(b)| / (psi(t) |a-b|) over sample pairs"});

  auto endpoint_entry = [&](const char* name, const LipschitzField& g) {
    double worst = 0.0;
    for (int s = 0; s < n_samples; ++s) {
      const Vec a = sample_box(rng, g.lo, g.hi);
      const Vec b = sample_box(rng, g.lo, g.hi);
      worst = std::max(worst, lipschitz_ratio(g, spec.t1, a, b, 0, 0, g.lipschitz_const));
    }
    rep.entries.push_back({name, worst <= 1.0 + 1e-9, worst,
                           "sup |g(a)-g(b)| / (L |a-b|) over sample pairs"});
  };
  endpoint_entry("H3 h0 Lipschitz", spec.h0);
  if (spec.has_h1) endpoint_entry("H3 h1 Lipschitz", spec.h1);
  if (spec.has_h_hat) endpoint_entry("H3 h_hat Lipschitz", spec.h_hat);

  rep.passed_all = true;
  for (const auto& e : rep.entries) rep.passed_all = rep.passed_all && e.passed;
  return rep;
}

double TimeRescaling::tau_of(double t) const {
  if (identity) return t;
  // binary search in t_grid (strictly increasing)
  const auto n = t_grid.size();
  if (t <= t_grid[0]) return tau_grid[0];
  if (t >= t_grid[n - 1]) return tau_grid[n - 1];
  Eigen::Index lo = 0, hi = n - 1;
  while (hi - lo > 1) {
    const Eigen::Index mid = (lo + hi) / 2;
    (t_grid[mid] <= t ? lo : hi) = mid;
  }
  const double w = (t - t_grid[lo]) / (t_grid[lo + 1] - t_grid[lo]);
  return tau_grid[lo] + w * (tau_grid[lo + 1] - tau_grid[lo]);
}

double TimeRescaling::t_of(double tau) const {
  if (identity) return tau;
  const auto n = tau_grid.size();
  if (tau <= tau_grid[0]) return t_grid[0];
  if (tau >= tau_grid[n - 1]) return t_grid[n - 1];
  Eigen::Index lo = 0, hi = n - 1;
  while (hi - lo > 1) {
    const Eigen::Index mid = (lo + hi) / 2;
    (tau_grid[mid] <= tau ? lo : hi) = mid;
  }
  const double w = (tau - tau_grid[lo]) / (tau_grid[lo + 1] - tau_grid[lo]);
  return t_grid[lo] + w * (t_grid[lo + 1] - t_grid[lo]);
}

std::pair<ProblemSpec, TimeRescaling> normalize_time(const ProblemSpec& spec) {
  TimeRescaling map;
  map.t0 = spec.t0;
  map.t1 = spec.t1;
  if (spec.sup_psi <= 1.0) {
    map.identity = true;
    map.s0 = spec.t0;
    map.s1 = spec.t1;
    return {spec, map};
  }

  const auto phi = [psi = spec.psi](double tau) { return std::max(1.0, psi(tau)); };

  const int N = 4096;
  map.identity = false;
  map.tau_grid.resize(N + 1);
  map.t_grid.resize(N + 1);
  const double dtau = (spec.t1 - spec.t0) / N;
  map.tau_grid[0] = spec.t0;
  map.t_grid[0] = spec.t0;
  for (int i = 1; i <= N; ++i) {
    const double a = spec.t0 + (i - 1) * dtau;
    const double b = spec.t0 + i * dtau;
    map.tau_grid[i] = b;
    map.t_grid[i] = map.t_grid[i - 1] + 0.5 * dtau * (phi(a) + phi(b));
  }
  map.s0 = spec.t0;
  map.s1 = map.t_grid[N];

  ProblemSpec out = spec;
  out.t0 = map.s0;
  out.t1 = map.s1;

  // shared copy of the map for the field closures
  auto shared = std::make_shared<TimeRescaling>(map);
  auto wrap_field = [shared, phi](const LipschitzField& g) {
    LipschitzField w = g;
    const int k = g.dim_out;
    w.eval = [inner = g.eval, shared, phi, k](double t, const double* x, int u, int v,
                                              double* out_buf) {
      const double tau = shared->tau_of(t);
      const double scale = 1.0 / phi(tau);
      inner(tau, x, u, v, out_buf);
      for (int o = 0; o < k; ++o) out_buf[o] *= scale;
    };
    w.lipschitz_const = std::min(g.lipschitz_const, 1.0);
    return w;
  };

  out.f = wrap_field(spec.f);
  out.f_tilde = wrap_field(spec.f_tilde);
  // endpoint functions are untouched by the reparametrization

  out.psi = [psi = spec.psi, shared](double t) {
    return std::min(1.0, psi(shared->tau_of(t)));
  };
  out.chi = [chi = spec.chi, shared, phi](double t) {
    const double tau = shared->tau_of(t);
    return chi(tau) / phi(tau);
  };
  out.sup_psi = std::min(spec.sup_psi, 1.0);
  return {out, map};
}

} // namespace advoc::problem
