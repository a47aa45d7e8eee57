#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tdlab/errors.hpp"

namespace tdlab {

// Step-size regime for the inverse-linear schedule gamma_n = c0 c / (c + n):
// the scale must satisfy c0 < mu (1 - beta) / (2 (1 + beta)^2) and the
// product mu (1 - beta) c0 c must exceed 1.
struct AdmissibilityReport {
  double c0_limit = 0.0;
  double product = 0.0;
  bool scale_ok = false;
  bool product_ok = false;
  bool admissible = false;
  std::string diagnostic;
};

inline AdmissibilityReport check_td_admissible(double mu, double discount, double c0, double c) {
  if (!(mu > 0.0)) throw InvalidParameter("mu must be positive");
  if (!(discount > 0.0 && discount < 1.0)) throw InvalidParameter("discount must lie in (0,1)");
  if (!(c0 > 0.0)) throw InvalidParameter("step scale c0 must be positive");
  if (!(c > 0.0)) throw InvalidParameter("step offset c must be positive");
  AdmissibilityReport rep;
  rep.c0_limit = mu * (1.0 - discount) / (2.0 * (1.0 + discount) * (1.0 + discount));
  rep.product = mu * (1.0 - discount) * c0 * c;
  rep.scale_ok = c0 < rep.c0_limit;
  rep.product_ok = rep.product > 1.0;
  rep.admissible = rep.scale_ok && rep.product_ok;
  std::ostringstream os;
  os << "c0 < mu(1-beta)/(2(1+beta)^2): " << c0 << (rep.scale_ok ? " < " : " >= ")
     << rep.c0_limit << (rep.scale_ok ? " holds" : " fails") << "; "
     << "mu(1-beta)c0c > 1: " << rep.product << (rep.product_ok ? " > 1 holds" : " <= 1 fails");
  rep.diagnostic = os.str();
  return rep;
}

namespace detail {

// Sum_{k>=1} k^{-s} for s > 1, via partial sums plus the midpoint of the
// integral tail brackets; the reported value has absolute error <= 1e-10.
inline double inverse_power_series(double s) {
  if (!(s > 1.0)) throw InvalidParameter("series exponent must exceed 1");
  double sum = 0.0;
  double upper = 0.0;
  double lower = 0.0;
  for (long k = 1;; ++k) {
    sum += std::pow(static_cast<double>(k), -s);
    lower = std::pow(static_cast<double>(k + 1), 1.0 - s) / (s - 1.0);
    upper = std::pow(static_cast<double>(k), 1.0 - s) / (s - 1.0);
    if ((upper - lower) / 2.0 < 1e-10) break;
    if (k >= 50'000'000L) {
      throw MaxIterExceeded("series tail shrinks too slowly at exponent " + std::to_string(s));
    }
  }
  return sum + (upper + lower) / 2.0;
}

// Sum_{k>=1} exp(-coef ((k + c)^{1-alpha} - (c + n0)^{1-alpha})), truncated
// once a term drops below 1e-14.
inline double restart_decay_series(double coef, double c, double alpha, double n0) {
  if (!(coef > 0.0)) throw DenominatorNonPositive("decay coefficient must be positive");
  const double base = std::pow(c + n0, 1.0 - alpha);
  double sum = 0.0;
  for (long k = 1;; ++k) {
    const double term =
        std::exp(-coef * (std::pow(static_cast<double>(k) + c, 1.0 - alpha) - base));
    sum += term;
    if (term < 1e-14) break;
    if (k >= 50'000'000L) {
      throw MaxIterExceeded("restart series did not reach its truncation threshold");
    }
  }
  return sum;
}

}  // namespace detail

enum class BoundKind { Expectation, HighProbability };

// The quadratic-growth constant shared by the finite-time bounds:
// 6 d B(s0) ((|theta_0| + d + |theta*|) / (1 - beta))^2.
inline double quadratic_growth_constant(double dim, double b_mix, double theta0_norm,
                                        double theta_star_norm, double discount) {
  const double scale = (theta0_norm + dim + theta_star_norm) / (1.0 - discount);
  return 6.0 * dim * b_mix * scale * scale;
}

// Closed-form constants of the three error bounds. A single instance carries
// the family it was built for; evaluating a bound from another family throws.
struct TheoremConstants {
  enum class Family { None, StepInverseLinear, StepInversePower, Centered };
  Family family = Family::None;

  // shared inputs
  double mu = 0.0;
  double discount = 0.0;
  double dim = 0.0;
  double delta = 0.0;

  // inverse-linear steps (expectation and high-probability forms)
  double c0 = 0.0;
  double c = 0.0;
  double b_mix = 0.0;    // mixing-sum bound at the start state
  double b_prime = 0.0;  // uniform mixing-sum bound, used by the delta terms
  double theta0_norm = 0.0;
  double theta_star_norm = 0.0;
  double dist0 = 0.0;  // bound on || theta_0 - theta* ||
  double c_big = 0.0;
  double c_big_alt = 0.0;  // looser variant of the same constant
  double exponent = 0.0;   // mu (1 - beta) c0 c - 1

  // inverse-power steps with iterate averaging
  double alpha = 0.0;
  double n0 = 0.0;
  double c_prime = 0.0;
  double c_dprime = 0.0;
  double c_tprime = 0.0;
  double e0 = 0.0;        // c0 c^alpha (c + n0)^{1-alpha}
  double g_growth = 0.0;  // (1 + d e0) exp((1 + beta) e0)

  // centered constant-step epochs
  double gamma = 0.0;
  double m_epoch = 0.0;
  double h = 0.0;
  double rho = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double decay = 0.0;  // max(c1, rho^M)

  void require(Family f, const char* what) const {
    if (family != f) {
      throw InvalidParameter(std::string("constants were not built for the ") + what +
                             " bound");
    }
  }

  double k1(double n) const {
    require(Family::StepInverseLinear, "inverse-linear step");
    const double t1 = c * (dist0 + c_big) / std::pow(n + c, exponent);
    const double t2 = ((1.0 + theta_star_norm) * c0 * c0 * c * c + c_big * c0 * c) / exponent;
    return std::sqrt(t1 + t2);
  }

  double k2(double n) const {
    require(Family::StepInverseLinear, "inverse-linear step");
    const double t = c0 * c * b_prime *
                     std::sqrt(2.0 * (2.0 + c0 * c) * (1.0 + discount * (3.0 - discount)) *
                               std::log(1.0 / delta)) /
                     std::sqrt(exponent);
    return t + k1(n);
  }

  double k1_ia(double n) const {
    require(Family::StepInversePower, "averaged inverse-power step");
    if (!(n > 0.0)) return std::numeric_limits<double>::infinity();
    const double ca = std::pow(c, alpha);
    const double t1 = (g_growth + theta_star_norm + c_big) * c_dprime /
                      std::pow(n + c, (1.0 - alpha) / 2.0);
    const double t2 = n0 * (g_growth + theta_star_norm) / std::pow(n, 1.0 - alpha / 2.0);
    const double t3 = ca * c0 *
                      (1.0 + std::sqrt(theta_star_norm) + std::sqrt(c_big / (ca * c0))) *
                      std::pow(mu * (1.0 - discount) * c0 * ca / (1.0 - alpha),
                               -(alpha + 2.0 * alpha * alpha) / (2.0 * (1.0 - alpha)));
    return t1 + t2 + t3;
  }

  double k2_ia(double n) const {
    require(Family::StepInversePower, "averaged inverse-power step");
    if (!(n > n0)) return std::numeric_limits<double>::infinity();
    const double t = 4.0 * std::sqrt((1.0 + c_prime) * b_prime) / (mu * (1.0 - discount)) *
                     c_tprime / std::pow(n, (1.0 - alpha) / 2.0);
    return t + k1_ia(n - n0);
  }
};

inline TheoremConstants theorem1_constants(double mu, double discount, double c0, double c,
                                           double dim, double b_mix, double theta0_norm,
                                           double theta_star_norm, double delta,
                                           double b_prime = -1.0, double dist0 = -1.0) {
  const AdmissibilityReport adm = check_td_admissible(mu, discount, c0, c);
  if (!adm.admissible) throw InadmissibleStepSize(adm.diagnostic);
  if (!(dim >= 1.0)) throw InvalidParameter("feature dimension must be at least 1");
  if (!(b_mix >= 0.0)) throw InvalidParameter("mixing bound must be nonnegative");
  if (!(theta0_norm >= 0.0) || !(theta_star_norm >= 0.0)) {
    throw InvalidParameter("norms must be nonnegative");
  }
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidParameter("confidence level must lie in (0,1)");

  TheoremConstants k;
  k.family = TheoremConstants::Family::StepInverseLinear;
  k.mu = mu;
  k.discount = discount;
  k.dim = dim;
  k.delta = delta;
  k.c0 = c0;
  k.c = c;
  k.b_mix = b_mix;
  k.b_prime = b_prime >= 0.0 ? b_prime : b_mix;
  k.theta0_norm = theta0_norm;
  k.theta_star_norm = theta_star_norm;
  k.dist0 = dist0 >= 0.0 ? dist0 : theta0_norm + theta_star_norm;
  const double scale = (theta0_norm + dim + theta_star_norm) / (1.0 - discount);
  k.c_big = quadratic_growth_constant(dim, b_mix, theta0_norm, theta_star_norm, discount);
  k.c_big_alt = 2.0 * (2.0 + discount) * (dim + 4.0) * b_mix * scale * scale;
  k.exponent = mu * (1.0 - discount) * c0 * c - 1.0;
  return k;
}

inline TheoremConstants theorem2_constants(double mu, double discount, double c0, double c,
                                           double alpha, double dim, double b_mix,
                                           double theta_star_norm, double c_big, double delta,
                                           double b_prime = -1.0) {
  if (!(mu > 0.0)) throw InvalidParameter("mu must be positive");
  if (!(discount > 0.0 && discount < 1.0)) throw InvalidParameter("discount must lie in (0,1)");
  if (!(c0 > 0.0)) throw InvalidParameter("step scale c0 must be positive");
  if (!(c > 0.0)) throw InvalidParameter("step offset c must be positive");
  if (!(alpha > 0.5 && alpha < 1.0)) {
    throw AlphaOutOfRange("decay exponent alpha must lie in (1/2, 1), got " +
                          std::to_string(alpha));
  }
  if (!(dim >= 1.0)) throw InvalidParameter("feature dimension must be at least 1");
  if (!(b_mix >= 0.0)) throw InvalidParameter("mixing bound must be nonnegative");
  if (!(theta_star_norm >= 0.0)) throw InvalidParameter("norms must be nonnegative");
  if (!(c_big >= 0.0)) throw InvalidParameter("the quadratic-growth constant must be nonnegative");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidParameter("confidence level must lie in (0,1)");

  TheoremConstants k;
  k.family = TheoremConstants::Family::StepInversePower;
  k.mu = mu;
  k.discount = discount;
  k.dim = dim;
  k.delta = delta;
  k.c0 = c0;
  k.c = c;
  k.alpha = alpha;
  k.b_mix = b_mix;
  k.b_prime = b_prime >= 0.0 ? b_prime : b_mix;
  k.theta_star_norm = theta_star_norm;
  k.c_big = c_big;

  const double ca = std::pow(c, alpha);
  const double one_plus = (1.0 + discount) * (1.0 + discount);
  k.n0 = std::pow(c * mu * (1.0 - discount) / (2.0 * c0 * one_plus), -1.0 / alpha);
  k.c_dprime = detail::inverse_power_series(2.0 * alpha);
  const double inner = 4.0 * alpha / (mu * (1.0 - discount) * c0 * ca) +
                       std::pow(2.0, alpha) / alpha;
  k.c_prime = std::sqrt(std::pow(3.0, alpha) + inner * inner);
  const double coef = mu * ca * (1.0 - discount) * c0 / (2.0 * (1.0 - alpha));
  k.c_tprime = detail::restart_decay_series(coef, c, alpha, k.n0);
  k.e0 = c0 * ca * std::pow(c + k.n0, 1.0 - alpha);
  k.g_growth = (1.0 + dim * k.e0) * std::exp((1.0 + discount) * k.e0);
  return k;
}

inline TheoremConstants theorem3_constants(double mu, double discount, double gamma,
                                           double m_epoch, double dim, double h, double rho) {
  if (!(mu > 0.0)) throw InvalidParameter("mu must be positive");
  if (!(discount > 0.0 && discount < 1.0)) throw InvalidParameter("discount must lie in (0,1)");
  if (!(gamma > 0.0)) throw InvalidParameter("step size must be positive");
  if (!(m_epoch >= 1.0)) throw InvalidParameter("epoch length must be at least 1");
  if (!(dim >= 1.0)) throw InvalidParameter("feature dimension must be at least 1");
  if (!(h > 0.0)) throw InvalidParameter("projection radius must be positive");
  if (!(rho >= 0.0 && rho < 1.0)) throw InvalidParameter("decay rate must lie in [0, 1)");

  const double den = (1.0 - discount) - dim * dim * gamma / 2.0;
  if (!(den > 0.0)) {
    std::ostringstream os;
    os << "(1-beta) - d^2 gamma / 2 = " << den << " must be positive; reduce the step size";
    throw DenominatorNonPositive(os.str());
  }
  TheoremConstants k;
  k.family = TheoremConstants::Family::Centered;
  k.mu = mu;
  k.discount = discount;
  k.dim = dim;
  k.gamma = gamma;
  k.m_epoch = m_epoch;
  k.h = h;
  k.rho = rho;
  k.c1 = (1.0 / (2.0 * mu * gamma * m_epoch) + gamma * dim * dim / 2.0) / den;
  k.c2 = gamma / (m_epoch * den);
  k.decay = std::max(k.c1, std::pow(rho, m_epoch));
  return k;
}

// Evaluates the error bound as a function of the iteration index:
// K1(n)/sqrt(n+c) for inverse-linear steps, K1_IA(n)/(n+c)^{alpha/2} for the
// averaged variant, with K2/K2_IA substituted for the high-probability form.
inline std::vector<std::pair<double, double>> bound_curve(
    const TheoremConstants& k, const std::vector<double>& n_grid,
    BoundKind kind = BoundKind::Expectation) {
  std::vector<std::pair<double, double>> out;
  out.reserve(n_grid.size());
  for (double n : n_grid) {
    if (!(n >= 1.0)) throw InvalidParameter("bound curves are defined for n >= 1");
    double v = 0.0;
    switch (k.family) {
      case TheoremConstants::Family::StepInverseLinear:
        v = (kind == BoundKind::Expectation ? k.k1(n) : k.k2(n)) / std::sqrt(n + k.c);
        break;
      case TheoremConstants::Family::StepInversePower:
        v = (kind == BoundKind::Expectation ? k.k1_ia(n) : k.k2_ia(n)) /
            std::pow(n + k.c, k.alpha / 2.0);
        break;
      case TheoremConstants::Family::Centered:
      case TheoremConstants::Family::None:
      default:
        throw InvalidParameter("no iteration-indexed curve for this constant family");
    }
    out.emplace_back(n, v);
  }
  return out;
}

}  // namespace tdlab
