#include "advoc/mollify.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "advoc/quadrature.hpp"

namespace advoc::mollify {

namespace {

double bump_r2(double r2) {
  if (r2 >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - r2));
}

// d/ds of bump(|s|^2) along coordinate c is s_c * factor(r2) with
// factor = -2 exp(-1/w) / w^2, w = 1 - r2. Written overflow-safe: w > 0.
double bump_grad_factor(double r2) {
  if (r2 >= 1.0) return 0.0;
  const double w = 1.0 - r2;
  return -2.0 * std::exp(-1.0 / w) / (w * w);
}

int default_nodes(int dim) {
  switch (dim) {
    case 1: return 48;
    case 2: return 40;
    default: return 24;
  }
}

} // namespace

double bump(const Vec& x) { return bump_r2(x.squaredNorm()); }

double kernel_value(const Vec& x, const Mollifier& m) {
  if (x.size() != m.dim) throw ShapeMismatch("kernel_value: point dimension mismatch");
  return bump_r2(x.squaredNorm()) / m.normalization;
}

Mollifier make_mollifier(int dim, int nodes_per_axis) {
  if (dim < 1 || dim > 3)
    throw DomainError("make_mollifier: only state dimensions 1..3 are supported");
  if (nodes_per_axis <= 0) nodes_per_axis = default_nodes(dim);

  const auto rule = quadrature::gauss_legendre(nodes_per_axis);
  const int n1 = nodes_per_axis;
  long total = 1;
  for (int d = 0; d < dim; ++d) total *= n1;

  // First pass: collect in-ball nodes of the tensor grid.
  std::vector<Eigen::VectorXd> pts;
  std::vector<double> wts;
  pts.reserve(total);
  Eigen::VectorXi idx = Eigen::VectorXi::Zero(dim);
  for (long c = 0; c < total; ++c) {
    Vec s(dim);
    double w = 1.0;
    long rem = c;
    for (int d = 0; d < dim; ++d) {
      const int i = static_cast<int>(rem % n1);
      rem /= n1;
      s[d] = rule.nodes[i];
      w *= rule.weights[i];
    }
    if (s.squaredNorm() < 1.0 && bump_r2(s.squaredNorm()) > 0.0) {
      pts.push_back(s);
      wts.push_back(w);
    }
  }

  Mollifier m;
  m.dim = dim;
  m.nodes_per_axis = nodes_per_axis;
  const int nn = static_cast<int>(pts.size());
  m.nodes.resize(nn, dim);
  m.value_weights.resize(nn);
  m.grad_weights.resize(nn, dim);

  double norm = 0.0;
  for (int i = 0; i < nn; ++i) norm += wts[i] * bump_r2(pts[i].squaredNorm());
  m.normalization = norm;

  Mat G = Mat::Zero(dim, dim); // discrete moment -sum g_i s_i^T, should be I
  for (int i = 0; i < nn; ++i) {
    const double r2 = pts[i].squaredNorm();
    m.nodes.row(i) = pts[i];
    m.value_weights[i] = wts[i] * bump_r2(r2) / norm;
    const Vec g = pts[i] * (wts[i] * bump_grad_factor(r2) / norm);
    m.grad_weights.row(i) = g;
    G.noalias() -= g * pts[i].transpose();
  }
  // Renormalize the gradient weights so affine fields differentiate exactly.
  const Mat C = G.inverse();
  m.grad_weights = m.grad_weights * C.transpose();
  return m;
}

namespace {

void check_ball_in_domain(const FredholmApprox& fa, const double* x) {
  const auto& b = *fa.base;
  const double r = 1.0 / fa.j;
  for (int d = 0; d < b.dim_state; ++d) {
    if (x[d] - r < b.lo[d] - b.collar || x[d] + r > b.hi[d] + b.collar)
      throw DomainError("fredholm: the 1/j ball around x leaves the field domain");
  }
}

} // namespace

void fredholm_value_into(const FredholmApprox& fa, double t, const double* x,
                         int u, int v, double* out, double* x_scratch,
                         double* f_scratch) {
  const auto& m = *fa.mollifier;
  const auto& b = *fa.base;
  check_ball_in_domain(fa, x);
  const int k = b.dim_out, d = b.dim_state, nn = static_cast<int>(m.nodes.rows());
  const double inv_j = 1.0 / fa.j;
  for (int o = 0; o < k; ++o) out[o] = 0.0;
  for (int i = 0; i < nn; ++i) {
    for (int c = 0; c < d; ++c) x_scratch[c] = x[c] - m.nodes(i, c) * inv_j;
    b.eval(t, x_scratch, u, v, f_scratch);
    const double w = m.value_weights[i];
    for (int o = 0; o < k; ++o) out[o] += w * f_scratch[o];
  }
}

Vec fredholm_value(const FredholmApprox& fa, double t, const Vec& x, int u, int v) {
  if (x.size() != fa.base->dim_state)
    throw ShapeMismatch("fredholm_value: state dimension mismatch");
  Vec out(fa.base->dim_out), xs(fa.base->dim_state), fs(fa.base->dim_out);
  fredholm_value_into(fa, t, x.data(), u, v, out.data(), xs.data(), fs.data());
  return out;
}

void fredholm_grad_into(const FredholmApprox& fa, double t, const double* x,
                        int u, int v, double* out, double* x_scratch,
                        double* f_scratch) {
  const auto& m = *fa.mollifier;
  const auto& b = *fa.base;
  check_ball_in_domain(fa, x);
  const int k = b.dim_out, d = b.dim_state, nn = static_cast<int>(m.nodes.rows());
  const double inv_j = 1.0 / fa.j;
  for (int o = 0; o < k * d; ++o) out[o] = 0.0;
  for (int i = 0; i < nn; ++i) {
    for (int c = 0; c < d; ++c) x_scratch[c] = x[c] - m.nodes(i, c) * inv_j;
    b.eval(t, x_scratch, u, v, f_scratch);
    for (int o = 0; o < k; ++o) {
      const double f = f_scratch[o];
      double* row = out + o * d;
      for (int c = 0; c < d; ++c) row[c] += m.grad_weights(i, c) * f;
    }
  }
  // The kernel scaling contributes one factor of j:
  //   d/dx int rho_j(x - y) phi(y) dy = j * sum_i gw_i phi(x - s_i / j).
  for (int o = 0; o < k * d; ++o) out[o] *= fa.j;
}

Mat fredholm_grad(const FredholmApprox& fa, double t, const Vec& x, int u, int v) {
  if (x.size() != fa.base->dim_state)
    throw ShapeMismatch("fredholm_grad: state dimension mismatch");
  const int k = fa.base->dim_out, d = fa.base->dim_state;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(k, d);
  Vec xs(d), fs(k);
  fredholm_grad_into(fa, t, x.data(), u, v, out.data(), xs.data(), fs.data());
  return out;
}

bool increments_non_cauchy(const std::vector<double>& increments, double slack) {
  for (size_t i = 1; i < increments.size(); ++i)
    if (increments[i] > increments[i - 1] + slack) return true;
  return false;
}

RelaxedDerivative relaxed_derivative(const LipschitzField& base, const Mollifier& m,
                                     const std::vector<int>& j_seq,
                                     const std::function<Vec(double)>& eta,
                                     double t0, double t1, int n_steps,
                                     int ctrl_u, int ctrl_v) {
  if (j_seq.empty()) throw DomainError("relaxed_derivative: empty j sequence");
  RelaxedDerivative rd;
  const double dt = (t1 - t0) / n_steps;
  for (int j : j_seq) {
    FredholmApprox fa{&base, &m, j};
    Mat phi = Mat::Zero(base.dim_out, base.dim_state);
    // trapezoid rule along the path
    for (int k = 0; k <= n_steps; ++k) {
      const double t = t0 + k * dt;
      const double w = (k == 0 || k == n_steps) ? 0.5 * dt : dt;
      phi += w * fredholm_grad(fa, t, eta(t), ctrl_u, ctrl_v);
    }
    if (!rd.sequence.empty()) {
      rd.increments.push_back((phi - rd.sequence.back()).cwiseAbs().maxCoeff());
    }
    rd.sequence.push_back(phi);
  }
  rd.limit = rd.sequence.back();
  rd.non_convergence = increments_non_cauchy(rd.increments);
  return rd;
}

} // namespace advoc::mollify
