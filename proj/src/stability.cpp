#include "kausal/stability.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kausal {

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::dissipative: return "dissipative";
    case Regime::critical: return "critical";
    case Regime::diverging: return "diverging";
    case Regime::non_oscillatory: return "non_oscillatory";
  }
  return "unknown";
}

Matrix enso_jacobian(const EnsoParams& p, double mu) {
  Matrix j(2, 2);
  j(0, 0) = -p.r;
  j(0, 1) = -mu * p.alpha * p.b0;
  j(1, 0) = p.gamma;
  j(1, 1) = p.gamma * mu * p.b0 - p.c;
  return j;
}

StabilityResult classify(const EnsoParams& params, double mu, double re_tol) {
  StabilityResult out;
  out.mu = mu;
  out.eigenvalues = eig2x2(enso_jacobian(params, mu));
  const double re = out.eigenvalues.first.real();
  const double im = out.eigenvalues.first.imag();
  if (im == 0.0) {
    out.regime = Regime::non_oscillatory;
    out.period = 0.0;
  } else {
    out.period = 2.0 * std::numbers::pi / std::abs(im);
    if (re < -re_tol)
      out.regime = Regime::dissipative;
    else if (re > re_tol)
      out.regime = Regime::diverging;
    else
      out.regime = Regime::critical;
  }
  return out;
}

double find_critical_mu(const EnsoParams& params, double mu_lo, double mu_hi) {
  if (!(mu_hi > mu_lo)) throw std::invalid_argument("find_critical_mu: empty range");
  auto re_lambda = [&](double mu) {
    return eig2x2(enso_jacobian(params, mu)).first.real();
  };
  double f_lo = re_lambda(mu_lo);
  double f_hi = re_lambda(mu_hi);
  if (f_lo == 0.0) return mu_lo;
  if (f_hi == 0.0) return mu_hi;
  if (f_lo * f_hi > 0.0)
    throw std::invalid_argument("find_critical_mu: Re(lambda) does not change sign over [" +
                                std::to_string(mu_lo) + ", " + std::to_string(mu_hi) + "]");
  while (mu_hi - mu_lo > 1e-6) {
    const double mid = 0.5 * (mu_lo + mu_hi);
    const double f_mid = re_lambda(mid);
    if (f_mid == 0.0) return mid;
    if (f_lo * f_mid < 0.0) {
      mu_hi = mid;
    } else {
      mu_lo = mid;
      f_lo = f_mid;
    }
  }
  return 0.5 * (mu_lo + mu_hi);
}

std::vector<StabilityResult> bifurcation_scan(const EnsoParams& params,
                                              const std::vector<double>& mu_values) {
  if (mu_values.empty()) throw std::invalid_argument("bifurcation_scan: no mu values");
  std::vector<StabilityResult> out;
  out.reserve(mu_values.size());
  for (double mu : mu_values) out.push_back(classify(params, mu));
  return out;
}

}  // namespace kausal
