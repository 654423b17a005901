#pragma once

#include <stdexcept>
#include <string>

namespace advoc {

// Input left the declared state domain (or a mollification ball would).
class DomainError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Array dimensions of two arguments disagree.
class ShapeMismatch : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// dt * L > 0.5: the explicit integrator is outside its stability guard.
class StepCountTooSmall : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Iterative solve hit its iteration cap; the best iterate is still returned
// by the caller with a flagged status.
class MaxIterations : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// No admissible equality-constraint shift keeps the incumbent feasible.
class InfeasibleStart : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// NonConvergence is deliberately not an exception: sequence diagnostics carry
// a non_convergence flag instead (it is advisory, never fatal).

} // namespace advoc
