#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "tdlab/errors.hpp"
#include "tdlab/mrp.hpp"

namespace tdlab {

// Geometric ergodicity estimates for a chain:
//   |P^t(s,.) - psi|_inf <= c_geo * rho^t,
// plus per-start-state bounds b_state(s) on the observability sums
//   sum_t || E[r(s_t) phi(s_t) | s_0 = s] - E_psi[r phi] ||
// and the Frobenius analogues for phi(s_t) phi(s_{t+m})' at lags m in {0,1}.
// b_state takes the largest of the three quantities, partial sums plus a
// geometric tail bound for the neglected horizon.
struct MixingProfile {
  double rho = 0.0;               // second-largest eigenvalue modulus of P
  double c_geo = 0.0;             // prefactor of the geometric decay
  Eigen::VectorXd b_state;        // per-start-state bound (tail included)
  Eigen::VectorXd partial_state;  // partial-sum component of b_state
  double b_uniform = 0.0;         // max_s b_state(s)
  double tail_bound = 0.0;        // largest tail added to any partial sum
  int truncation = 0;
};

namespace detail {

// Entries below this magnitude are round-off, not signal; they are skipped
// when fitting the decay prefactor.
constexpr double kMixingNoiseFloor = 1e-10;

// Least-squares fit of log |P^t - 1 psi'|_inf against t. Fallback for
// transition matrices whose eigendecomposition is unreliable.
inline double fitted_decay_rate(const Eigen::MatrixXd& p,
                                const Eigen::VectorXd& psi, int horizon) {
  const int S = static_cast<int>(p.rows());
  Eigen::MatrixXd pt = Eigen::MatrixXd::Identity(S, S);
  std::vector<double> ts, logs;
  for (int t = 0; t <= horizon; ++t) {
    const double num =
        (pt - Eigen::VectorXd::Ones(S) * psi.transpose()).cwiseAbs().maxCoeff();
    if (t > 0 && num >= kMixingNoiseFloor) {
      ts.push_back(static_cast<double>(t));
      logs.push_back(std::log(num));
    }
    pt = pt * p;
  }
  if (ts.size() < 2) return 0.0;
  double mt = 0.0, ml = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    mt += ts[i];
    ml += logs[i];
  }
  mt /= static_cast<double>(ts.size());
  ml /= static_cast<double>(ts.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    num += (ts[i] - mt) * (logs[i] - ml);
    den += (ts[i] - mt) * (ts[i] - mt);
  }
  return den > 0.0 ? std::min(std::exp(num / den), 1.0) : 0.0;
}

// Second-largest eigenvalue modulus; falls back to decay fitting when the
// spectrum cannot be trusted (solver failure, or no unit Perron root).
inline double spectral_decay_rate(const Eigen::MatrixXd& p,
                                  const Eigen::VectorXd& psi, int horizon) {
  if (p.rows() == 1) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(p, /*computeEigenvectors=*/false);
  if (es.info() == Eigen::Success) {
    std::vector<double> moduli(p.rows());
    for (int i = 0; i < p.rows(); ++i) moduli[i] = std::abs(es.eigenvalues()(i));
    std::sort(moduli.begin(), moduli.end(), std::greater<>());
    if (std::abs(moduli[0] - 1.0) <= 1e-8) {
      return std::max(moduli[1], 0.0);
    }
  }
  return fitted_decay_rate(p, psi, horizon);
}

}  // namespace detail

// Computes the mixing profile using exact conditional expectations (powers
// of P). The optional weight multiplies the term at lag t; by default all
// terms count equally. The tail beyond the truncation horizon is bounded by
// c_geo * rho^T / (1 - rho) times the total magnitude of the summands; the
// call fails if that tail is not below tolerance times every partial sum.
inline MixingProfile mixing_profile(
    const MarkovRewardProcess& mrp, const Eigen::MatrixXd& phi, int truncation,
    double tolerance, const std::function<double(int)>& weight = {}) {
  if (truncation < 1) {
    throw TruncationTooSmall("truncation horizon must be at least 1");
  }
  if (!(tolerance > 0.0)) throw InvalidParameter("mixing tolerance must be positive");
  const int S = mrp.n_states();
  if (phi.rows() != S) {
    std::ostringstream os;
    os << "feature matrix has " << phi.rows() << " rows for " << S << " states";
    throw DimensionMismatch(os.str());
  }
  const int d = static_cast<int>(phi.cols());
  const Eigen::VectorXd psi = stationary_distribution(mrp).probabilities;

  const double rho = detail::spectral_decay_rate(mrp.transition, psi, truncation);
  if (rho >= 1.0 - 1e-12) {
    throw TruncationTooSmall("chain does not mix geometrically (decay rate >= 1)");
  }

  // Summand tables: rows are r(s) phi(s)' and flattened phi(s) (P^m phi)(s)'.
  Eigen::MatrixXd table_r(S, d);
  for (int s = 0; s < S; ++s) table_r.row(s) = mrp.reward(s) * phi.row(s);
  const Eigen::MatrixXd lag1 = mrp.transition * phi;
  Eigen::MatrixXd table_m0(S, d * d), table_m1(S, d * d);
  for (int s = 0; s < S; ++s) {
    const Eigen::MatrixXd outer0 = phi.row(s).transpose() * phi.row(s);
    const Eigen::MatrixXd outer1 = phi.row(s).transpose() * lag1.row(s);
    table_m0.row(s) = Eigen::Map<const Eigen::RowVectorXd>(outer0.data(), d * d);
    table_m1.row(s) = Eigen::Map<const Eigen::RowVectorXd>(outer1.data(), d * d);
  }
  const Eigen::RowVectorXd stat_r = psi.transpose() * table_r;
  const Eigen::RowVectorXd stat_m0 = psi.transpose() * table_m0;
  const Eigen::RowVectorXd stat_m1 = psi.transpose() * table_m1;

  Eigen::MatrixXd pt = Eigen::MatrixXd::Identity(S, S);
  Eigen::MatrixXd part(S, 3);
  part.setZero();
  double c_geo = 0.0;
  for (int t = 0; t <= truncation; ++t) {
    const double w = weight ? weight(t) : 1.0;
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw InvalidParameter("mixing weight must be finite and non-negative");
    }
    const double rho_t = std::pow(rho, t);
    const Eigen::MatrixXd cond_r = pt * table_r;
    const Eigen::MatrixXd cond_m0 = pt * table_m0;
    const Eigen::MatrixXd cond_m1 = pt * table_m1;
    for (int s = 0; s < S; ++s) {
      const double num = (pt.row(s) - psi.transpose()).cwiseAbs().maxCoeff();
      if (num >= detail::kMixingNoiseFloor && rho_t > 0.0) {
        c_geo = std::max(c_geo, num / rho_t);
      }
      part(s, 0) += w * (cond_r.row(s) - stat_r).norm();
      part(s, 1) += w * (cond_m0.row(s) - stat_m0).norm();
      part(s, 2) += w * (cond_m1.row(s) - stat_m1).norm();
    }
    if (t < truncation) pt = pt * mrp.transition;
  }

  // Magnitudes of the summand tables bound each neglected term.
  Eigen::Vector3d mag(table_r.rowwise().norm().sum(),
                      table_m0.rowwise().norm().sum(),
                      table_m1.rowwise().norm().sum());
  Eigen::Vector3d tail;
  for (int q = 0; q < 3; ++q) {
    if (!weight) {
      tail(q) = c_geo * std::pow(rho, truncation) / (1.0 - rho) * mag(q);
    } else {
      // Weighted tails are accumulated numerically until they stop moving.
      double acc = 0.0;
      double geo = std::pow(rho, truncation + 1);
      for (int t = truncation + 1; t <= truncation + 1000000; ++t) {
        const double term = weight(t) * c_geo * geo * mag(q);
        acc += term;
        geo *= rho;
        if (term < 1e-16 * (1.0 + acc)) break;
        if (t == truncation + 1000000) {
          throw TruncationTooSmall("weighted tail did not converge within 1e6 extra terms");
        }
      }
      tail(q) = acc;
    }
  }

  static const char* kQuantity[3] = {"reward-feature", "feature outer-product (lag 0)",
                                     "feature outer-product (lag 1)"};
  MixingProfile out;
  out.rho = rho;
  out.c_geo = c_geo;
  out.truncation = truncation;
  out.b_state.resize(S);
  out.partial_state.resize(S);
  for (int s = 0; s < S; ++s) {
    double best = 0.0, best_part = 0.0;
    for (int q = 0; q < 3; ++q) {
      if (tail(q) > tolerance * part(s, q)) {
        std::ostringstream os;
        os << "tail bound " << tail(q) << " for the " << kQuantity[q]
           << " sum at state " << s << " exceeds tolerance * partial sum ("
           << tolerance * part(s, q) << "); increase the truncation horizon";
        throw TruncationTooSmall(os.str());
      }
      best = std::max(best, part(s, q) + tail(q));
      best_part = std::max(best_part, part(s, q));
    }
    out.b_state(s) = best;
    out.partial_state(s) = best_part;
  }
  out.b_uniform = out.b_state.maxCoeff();
  out.tail_bound = tail.maxCoeff();
  return out;
}

// Tabular variant: one indicator feature per state.
inline MixingProfile mixing_profile(const MarkovRewardProcess& mrp,
                                    int truncation, double tolerance) {
  const int S = mrp.n_states();
  return mixing_profile(mrp, Eigen::MatrixXd::Identity(S, S), truncation,
                        tolerance);
}

}  // namespace tdlab
