#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

namespace advoc::quadrature {

struct Rule1D {
  Eigen::VectorXd nodes;   // on [-1, 1]
  Eigen::VectorXd weights; // sum to 2
};

// Gauss-Legendre nodes/weights on [-1,1], computed by Newton iteration on the
// Legendre recurrence. Accurate to machine precision for n up to a few hundred.
Rule1D gauss_legendre(int n);

// Composite Simpson on [a,b] with n subintervals (n rounded up to even).
double simpson(const std::function<double(double)>& f, double a, double b, int n);

// Adaptive Simpson to absolute tolerance tol (used by test oracles and for
// integrating the H2 bound profiles).
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-12, int max_depth = 40);

} // namespace advoc::quadrature
