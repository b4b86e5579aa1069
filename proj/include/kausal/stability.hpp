#pragma once

#include <complex>
#include <vector>

#include "kausal/dynamics.hpp"
#include "kausal/matrix.hpp"

namespace kausal {

// Oscillatory regimes split by the sign of Re(lambda); a real spectrum is
// labelled non_oscillatory regardless of that sign.
enum class Regime { dissipative, critical, diverging, non_oscillatory };

std::string to_string(Regime regime);

struct StabilityResult {
  double mu = 0.0;
  Eig2x2 eigenvalues;
  Regime regime = Regime::non_oscillatory;
  double period = 0.0;  // 2*pi/|Im lambda| when oscillatory, else 0
};

// Jacobian of the linearized (epsilon = 0) recharge oscillator at the
// origin, state order [T, h]: [[-r, -mu*alpha*b0], [gamma, gamma*mu*b0 - c]].
Matrix enso_jacobian(const EnsoParams& params, double mu);

StabilityResult classify(const EnsoParams& params, double mu, double re_tol = 1e-9);

// Bisection on Re(lambda)(mu) until the bracket shrinks below 1e-6; throws
// when the range does not straddle the critical coupling.
double find_critical_mu(const EnsoParams& params, double mu_lo, double mu_hi);

std::vector<StabilityResult> bifurcation_scan(const EnsoParams& params,
                                              const std::vector<double>& mu_values);

}  // namespace kausal
