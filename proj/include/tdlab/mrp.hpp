#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "tdlab/errors.hpp"
#include "tdlab/rng.hpp"

namespace tdlab {

// Finite Markov chain with a per-state reward and a discount factor.
struct MarkovRewardProcess {
  Eigen::MatrixXd transition;  // row-stochastic, S x S
  Eigen::VectorXd reward;      // one entry per state
  double discount = 0.0;       // in (0, 1)

  int n_states() const { return static_cast<int>(transition.rows()); }

  // Throws SpecError naming the first violated requirement. With
  // strict_rewards set, additionally enforces |reward| <= 1.
  void validate(bool strict_rewards = false) const {
    if (transition.rows() != transition.cols()) {
      std::ostringstream os;
      os << "transition matrix must be square (got " << transition.rows()
         << "x" << transition.cols() << ")";
      throw SpecError(os.str());
    }
    if (transition.rows() < 1) throw SpecError("chain must have at least one state");
    if (reward.size() != transition.rows()) {
      std::ostringstream os;
      os << "reward vector has " << reward.size() << " entries for "
         << transition.rows() << " states";
      throw SpecError(os.str());
    }
    const int S = n_states();
    for (int i = 0; i < S; ++i) {
      for (int j = 0; j < S; ++j) {
        const double p = transition(i, j);
        if (!std::isfinite(p) || p < 0.0) {
          std::ostringstream os;
          os << "transition entry (" << i << "," << j << ") = " << p
             << " must be a finite non-negative probability";
          throw SpecError(os.str());
        }
      }
      const double row_sum = transition.row(i).sum();
      if (std::abs(row_sum - 1.0) > 1e-12) {
        std::ostringstream os;
        os << "transition row " << i << " sums to " << row_sum
           << " (must be 1 within 1e-12)";
        throw SpecError(os.str());
      }
    }
    if (!(discount > 0.0 && discount < 1.0)) {
      std::ostringstream os;
      os << "discount must lie strictly inside (0,1) (got " << discount << ")";
      throw SpecError(os.str());
    }
    for (int i = 0; i < S; ++i) {
      if (!std::isfinite(reward(i))) {
        std::ostringstream os;
        os << "reward at state " << i << " is not finite";
        throw SpecError(os.str());
      }
    }
    if (strict_rewards) {
      for (int i = 0; i < S; ++i) {
        if (std::abs(reward(i)) > 1.0) {
          std::ostringstream os;
          os << "strict mode: |reward| at state " << i << " is "
             << std::abs(reward(i)) << " (must be <= 1)";
          throw AssumptionViolated(os.str());
        }
      }
    }
  }
};

namespace detail {

// Breadth-first reachability over the support of P (forward or transposed).
inline std::vector<bool> reachable_from(const Eigen::MatrixXd& p, int source,
                                        bool transpose) {
  const int S = static_cast<int>(p.rows());
  std::vector<bool> seen(S, false);
  std::vector<int> queue{source};
  seen[source] = true;
  while (!queue.empty()) {
    const int v = queue.back();
    queue.pop_back();
    for (int w = 0; w < S; ++w) {
      const double edge = transpose ? p(w, v) : p(v, w);
      if (edge > 0.0 && !seen[w]) {
        seen[w] = true;
        queue.push_back(w);
      }
    }
  }
  return seen;
}

inline bool is_irreducible(const Eigen::MatrixXd& p) {
  const auto fwd = reachable_from(p, 0, false);
  const auto bwd = reachable_from(p, 0, true);
  for (std::size_t i = 0; i < fwd.size(); ++i) {
    if (!fwd[i] || !bwd[i]) return false;
  }
  return true;
}

}  // namespace detail

// Stationary distribution together with the balance residual of the
// computed solution.
struct StationaryDistribution {
  Eigen::VectorXd probabilities;  // strictly positive, sums to one
  double residual = 0.0;          // || psi' P - psi' ||_inf
};

// Solves psi' P = psi', sum(psi) = 1 directly: the last balance equation is
// replaced by the normalization constraint (it is linearly dependent on the
// others for a stochastic matrix). Requires an irreducible chain.
inline StationaryDistribution stationary_distribution(
    const MarkovRewardProcess& mrp) {
  mrp.validate();
  const int S = mrp.n_states();
  if (!detail::is_irreducible(mrp.transition)) {
    throw NotIrreducible("chain is not irreducible: some state pair is not mutually reachable");
  }
  Eigen::MatrixXd m =
      mrp.transition.transpose() - Eigen::MatrixXd::Identity(S, S);
  m.row(S - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(S);
  rhs(S - 1) = 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  if (!lu.isInvertible()) {
    throw SolverFailure("stationary distribution: balance system is numerically singular");
  }
  Eigen::VectorXd psi = lu.solve(rhs);
  if (psi.minCoeff() < -1e-12) {
    throw SolverFailure("stationary distribution: solution has negative mass");
  }
  psi = psi.cwiseMax(0.0);
  psi /= psi.sum();
  if (psi.minCoeff() <= 0.0) {
    throw SolverFailure("stationary distribution: zero mass on a state of an irreducible chain");
  }
  const double residual =
      (mrp.transition.transpose() * psi - psi).cwiseAbs().maxCoeff();
  if (residual > 1e-10) {
    throw SolverFailure("stationary distribution: balance residual " +
                        std::to_string(residual) + " exceeds 1e-10");
  }
  return {psi, residual};
}

// A sampled state path; states.front() is the start state.
struct Trajectory {
  std::vector<int> states;
  std::uint64_t seed = 0;
};

// Incremental chain sampler. Rows are converted to cumulative form once and
// each step consumes exactly one uniform draw (inverse-CDF lookup), which
// keeps paths reproducible for a given seed.
class TrajectorySampler {
 public:
  TrajectorySampler(const MarkovRewardProcess& mrp, int start_state,
                    std::uint64_t seed)
      : n_(mrp.n_states()), state_(start_state), rng_(seed) {
    if (start_state < 0 || start_state >= n_) {
      throw InvalidParameter("start state " + std::to_string(start_state) +
                             " outside [0," + std::to_string(n_ - 1) + "]");
    }
    cumulative_.resize(n_, n_);
    for (int i = 0; i < n_; ++i) {
      double acc = 0.0;
      for (int j = 0; j < n_; ++j) {
        acc += mrp.transition(i, j);
        cumulative_(i, j) = acc;
      }
      cumulative_(i, n_ - 1) = 1.0;  // guard against round-off shortfall
    }
  }

  int current() const { return state_; }

  int step() {
    const double u = rng_.uniform01();
    const double* row = cumulative_.data() + static_cast<std::ptrdiff_t>(state_) * n_;
    const int next = static_cast<int>(std::upper_bound(row, row + n_, u) - row);
    state_ = next < n_ ? next : n_ - 1;
    return state_;
  }

 private:
  int n_;
  int state_;
  SplitMix64 rng_;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
      cumulative_;
};

inline Trajectory sample_trajectory(const MarkovRewardProcess& mrp,
                                    int start_state, long length,
                                    std::uint64_t seed) {
  if (length < 0) throw InvalidParameter("trajectory length must be >= 0");
  TrajectorySampler sampler(mrp, start_state, seed);
  Trajectory out;
  out.seed = seed;
  out.states.reserve(static_cast<std::size_t>(length) + 1);
  out.states.push_back(start_state);
  for (long t = 0; t < length; ++t) out.states.push_back(sampler.step());
  return out;
}

// Random chain with dense positive rows (each row is a flat Dirichlet draw,
// built from normalized exponentials) and uniform [0,1] rewards. Dense rows
// make the chain irreducible and aperiodic by construction.
inline MarkovRewardProcess random_mrp(int n_states, std::uint64_t seed,
                                      double discount = 0.9) {
  if (n_states < 2) throw InvalidParameter("random chain needs at least 2 states");
  SplitMix64 g_rows(derive_seed(seed, 1));
  SplitMix64 g_rewards(derive_seed(seed, 2));
  MarkovRewardProcess mrp;
  mrp.transition.resize(n_states, n_states);
  mrp.reward.resize(n_states);
  mrp.discount = discount;
  for (int i = 0; i < n_states; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < n_states; ++j) {
      const double e = g_rows.exponential();
      mrp.transition(i, j) = e;
      row_sum += e;
    }
    mrp.transition.row(i) /= row_sum;
  }
  for (int i = 0; i < n_states; ++i) mrp.reward(i) = g_rewards.uniform01();
  mrp.validate();
  return mrp;
}

}  // namespace tdlab
