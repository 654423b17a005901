#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <vector>

#include "advoc/errors.hpp"

namespace advoc::mollify {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// A vector-valued map (t, x, control indices) -> R^k that is Lipschitz in x
// with a declared constant, defined on a working box `lo..hi` plus a collar
// of width `collar` in every coordinate.
struct LipschitzField {
  // eval writes the k outputs into `out` (preallocated by the caller).
  // ctrl_u / ctrl_v are grid indices; fields that ignore them may do so.
  std::function<void(double t, const double* x, int ctrl_u, int ctrl_v, double* out)> eval;
  int dim_state = 0;       // d
  int dim_out = 0;         // k
  double lipschitz_const = 0.0; // L in the state variable
  double bound = 0.0;      // pointwise bound sup |eval|
  Vec lo, hi;              // working box
  double collar = 0.0;     // eval stays valid within distance `collar` of the box

  Vec value(double t, const Vec& x, int u = 0, int v = 0) const {
    Vec out(dim_out);
    eval(t, x.data(), u, v, out.data());
    return out;
  }
};

// Normalized bump kernel exp(-1/(1-|x|^2)) / normalization, together with a
// fixed tensor-product Gauss-Legendre rule on the unit cube masked to the
// unit ball. value_weights integrate against the kernel (they sum to 1
// exactly); grad_weights integrate against the kernel gradient and are
// renormalized so that affine functions are differentiated exactly.
struct Mollifier {
  int dim = 0;
  double normalization = 0.0;      // quadrature of the raw bump over the ball
  Mat nodes;                       // (#nodes x dim), all strictly inside the ball
  Vec value_weights;               // w_i * rho(s_i), sum = 1
  Mat grad_weights;                // (#nodes x dim), corrected w_i * grad rho(s_i)
  int nodes_per_axis = 0;
};

// Raw (unnormalized) bump value at x, zero outside the open unit ball.
double bump(const Vec& x);

// Normalized kernel value rho(x) = bump(x) / normalization.
double kernel_value(const Vec& x, const Mollifier& m);

// Build the kernel and its quadrature rule for dimension dim (1..3).
// nodes_per_axis <= 0 selects the per-dimension default (48 / 40 / 24).
Mollifier make_mollifier(int dim, int nodes_per_axis = 0);

// The smoothed field at index j: value is the convolution of base against the
// kernel scaled to support radius 1/j; grad differentiates the kernel.
struct FredholmApprox {
  const LipschitzField* base = nullptr;
  const Mollifier* mollifier = nullptr;
  int j = 0;
};

// Convolution value; throws DomainError if the 1/j ball around x leaves the
// base field's collared domain.
Vec fredholm_value(const FredholmApprox& fa, double t, const Vec& x, int u = 0, int v = 0);

// In-place variant for hot loops: writes k values into out (size dim_out),
// using scratch of size dim_state for the shifted node. No allocation.
void fredholm_value_into(const FredholmApprox& fa, double t, const double* x,
                         int u, int v, double* out, double* x_scratch,
                         double* f_scratch);

// Jacobian (k x d) of the smoothed field at x.
Mat fredholm_grad(const FredholmApprox& fa, double t, const Vec& x, int u = 0, int v = 0);

// In-place variant: writes the k x d Jacobian in row-major order into out.
void fredholm_grad_into(const FredholmApprox& fa, double t, const double* x,
                        int u, int v, double* out, double* x_scratch,
                        double* f_scratch);

// Integral of the smoothed derivative along a path, for a sequence of indices
// j. Returns the largest-j matrix as the limit surrogate plus the full
// sequence and the Cauchy increments between consecutive entries.
struct RelaxedDerivative {
  Mat limit;                    // Phi for the largest j
  std::vector<Mat> sequence;    // Phi^j per requested j
  std::vector<double> increments; // sup-norm of consecutive differences
  bool non_convergence = false; // increments failed to decrease (advisory)
};

RelaxedDerivative relaxed_derivative(const LipschitzField& base, const Mollifier& m,
                                     const std::vector<int>& j_seq,
                                     const std::function<Vec(double)>& eta,
                                     double t0, double t1, int n_steps,
                                     int ctrl_u = 0, int ctrl_v = 0);

// Shared rule for diagnosing a non-decreasing increment sequence; increments
// must not grow after the first entry (small absolute slack for noise).
bool increments_non_cauchy(const std::vector<double>& increments, double slack = 1e-9);

} // namespace advoc::mollify
