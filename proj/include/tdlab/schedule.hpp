#pragma once

#include <cmath>
#include <string>

#include "tdlab/errors.hpp"

namespace tdlab {

// Step-size sequence gamma_n, n = 0, 1, 2, ...
//
//   inverse_linear: gamma_n = c0 * c / (c + n)
//   inverse_power:  gamma_n = c0 * (c / (c + n))^alpha, alpha in (1/2, 1)
//   constant:       gamma_n = gamma
struct StepSchedule {
  enum class Kind { InverseLinear, InversePower, Constant };

  Kind kind = Kind::Constant;
  double c0 = 0.0;
  double c = 0.0;
  double alpha = 0.0;
  double value = 0.0;  // constant schedules only

  static StepSchedule inverse_linear(double c0, double c) {
    if (!(c0 > 0.0) || !std::isfinite(c0)) throw InvalidParameter("step scale c0 must be positive");
    if (!(c > 0.0) || !std::isfinite(c)) throw InvalidParameter("step offset c must be positive");
    StepSchedule s;
    s.kind = Kind::InverseLinear;
    s.c0 = c0;
    s.c = c;
    return s;
  }

  static StepSchedule inverse_power(double c0, double c, double alpha) {
    if (!(c0 > 0.0) || !std::isfinite(c0)) throw InvalidParameter("step scale c0 must be positive");
    if (!(c > 0.0) || !std::isfinite(c)) throw InvalidParameter("step offset c must be positive");
    if (!(alpha > 0.5 && alpha < 1.0)) {
      throw AlphaOutOfRange("decay exponent alpha must lie in (1/2, 1), got " +
                            std::to_string(alpha));
    }
    StepSchedule s;
    s.kind = Kind::InversePower;
    s.c0 = c0;
    s.c = c;
    s.alpha = alpha;
    return s;
  }

  static StepSchedule constant(double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
      throw InvalidParameter("constant step size must be positive");
    }
    StepSchedule s;
    s.kind = Kind::Constant;
    s.value = gamma;
    return s;
  }

  double gamma(long n) const {
    switch (kind) {
      case Kind::InverseLinear:
        return c0 * c / (c + static_cast<double>(n));
      case Kind::InversePower:
        return c0 * std::pow(c / (c + static_cast<double>(n)), alpha);
      case Kind::Constant:
      default:
        return value;
    }
  }
};

}  // namespace tdlab
