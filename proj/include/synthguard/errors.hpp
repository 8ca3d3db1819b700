#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace synthguard {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad inputs: malformed files, unknown variables, out-of-domain cells,
// inconsistent configuration. CLI exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

struct CorrelationDiagnostic {
  std::string a, b;
  double correlation = 0.0;
};

// Covariance matrix of the distance variables is too close to singular to
// invert safely. Carries the diagnostics needed to pick variables to drop.
class NearSingularError : public Error {
 public:
  NearSingularError(std::string message, double determinant, double rcond,
                    std::vector<CorrelationDiagnostic> pairs)
      : Error(std::move(message)),
        determinant(determinant),
        rcond(rcond),
        top_correlations(std::move(pairs)) {}

  double determinant;
  double rcond;
  std::vector<CorrelationDiagnostic> top_correlations;
};

// Resynthesis loop ran out of rounds before reaching the target row count.
class TargetNotReachedError : public Error {
 public:
  TargetNotReachedError(std::string message, std::size_t target,
                        std::size_t accepted, std::vector<double> rates)
      : Error(std::move(message)),
        target(target),
        accepted(accepted),
        per_round_acceptance(std::move(rates)) {}

  std::size_t target;
  std::size_t accepted;
  std::vector<double> per_round_acceptance;
};

// ECAP denominator vanished; both raw probabilities are reported so the
// caller can see which regime caused it.
class EcapIndeterminateError : public Error {
 public:
  EcapIndeterminateError(std::string message, double p_outside_i1,
                         double p_noise_outside_i2)
      : Error(std::move(message)),
        p_outside_i1(p_outside_i1),
        p_noise_outside_i2(p_noise_outside_i2) {}

  double p_outside_i1;
  double p_noise_outside_i2;
};

// No grid sigma brought the worst-case ECAP under the target.
class CalibrationError : public Error {
 public:
  CalibrationError(std::string message, double best_sigma,
                   double best_max_ecap)
      : Error(std::move(message)),
        best_sigma(best_sigma),
        best_max_ecap(best_max_ecap) {}

  double best_sigma;
  double best_max_ecap;
};

// Permutation null for the standardized pMSE ratio degenerated to zero.
class DegenerateNullError : public Error {
 public:
  DegenerateNullError(std::string message, double observed_pmse)
      : Error(std::move(message)), observed_pmse(observed_pmse) {}

  double observed_pmse;
};

}  // namespace synthguard
