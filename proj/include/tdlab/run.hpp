#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "tdlab/algo.hpp"
#include "tdlab/errors.hpp"
#include "tdlab/features.hpp"
#include "tdlab/geometry.hpp"
#include "tdlab/mrp.hpp"
#include "tdlab/rng.hpp"
#include "tdlab/schedule.hpp"

namespace tdlab {

enum class Algorithm { Td0, Td0Averaged, Ctd };

// Column label used in CSV output.
inline const char* algorithm_label(Algorithm a) {
  switch (a) {
    case Algorithm::Td0:
      return "td0";
    case Algorithm::Td0Averaged:
      return "td0avg";
    case Algorithm::Ctd:
    default:
      return "ctd";
  }
}

// Block name used in JSON specs.
inline const char* algorithm_spec_name(Algorithm a) {
  switch (a) {
    case Algorithm::Td0:
      return "td0";
    case Algorithm::Td0Averaged:
      return "td0_avg";
    case Algorithm::Ctd:
    default:
      return "ctd";
  }
}

struct AlgorithmConfig {
  Algorithm kind = Algorithm::Td0;
  StepSchedule schedule;  // used by the plain and averaged variants
  CtdConfig ctd;          // used by the centered variant
  bool override_admissibility = false;
};

struct CheckpointRow {
  long iteration = 0;
  double theta_error = 0.0;       // || theta - theta* ||_2
  double value_error = 0.0;       // || Phi (theta - theta*) ||_Psi
  double normalized_error = 0.0;  // value_error / || Phi theta* ||_Psi
};

struct RunResult {
  std::vector<CheckpointRow> rows;
  // Centered runs: squared weighted value error of the iterate each epoch
  // restarts from, beginning with the starting point itself.
  std::vector<double> anchor_value_sq;
  bool diverged = false;
  long diverged_at = -1;
};

// Roughly `per_decade` logarithmically spaced iteration indices per factor
// of ten, deduplicated, always ending at n_iterations.
inline std::vector<long> geometric_checkpoints(long n_iterations, int per_decade = 20) {
  if (n_iterations < 1) throw InvalidParameter("iteration count must be at least 1");
  if (per_decade < 1) throw InvalidParameter("checkpoint density must be at least 1");
  std::vector<long> out;
  for (int k = 0;; ++k) {
    const double v = std::pow(10.0, static_cast<double>(k) / per_decade);
    if (v > static_cast<double>(n_iterations)) break;
    const long iv = std::lround(v);
    if (iv >= 1 && (out.empty() || iv > out.back())) out.push_back(iv);
  }
  if (out.empty() || out.back() != n_iterations) out.push_back(n_iterations);
  return out;
}

// Simulates one trajectory of the configured estimator and records errors at
// the requested checkpoints. Three independent random streams are derived
// from the seed: transitions, epoch anchor draws, and stored-sample redraws,
// so runs of different algorithms on the same seed share the trajectory.
inline RunResult run_estimator(const AlgorithmConfig& config, const MarkovRewardProcess& mrp,
                               const FeatureMap& features, const ProjectedSystem& system,
                               const Eigen::VectorXd& theta0, int start_state, long n_iterations,
                               std::uint64_t seed, const std::vector<long>& checkpoints,
                               bool throw_on_divergence = false) {
  if (theta0.size() != features.dim()) {
    throw DimensionMismatch("starting point has length " + std::to_string(theta0.size()) +
                            ", feature dimension is " + std::to_string(features.dim()));
  }
  if (n_iterations < 1) throw InvalidParameter("iteration count must be at least 1");
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (checkpoints[i] < 1 || checkpoints[i] > n_iterations ||
        (i > 0 && checkpoints[i] <= checkpoints[i - 1])) {
      throw InvalidParameter("checkpoints must be strictly increasing within [1, n_iterations]");
    }
  }

  TrajectorySampler sampler(mrp, start_state, derive_seed(seed, 1));
  const std::uint64_t anchor_seed = derive_seed(seed, 2);

  std::optional<TdState> td;
  std::optional<CtdState> ctd;
  if (config.kind == Algorithm::Ctd) {
    ctd.emplace(config.ctd, theta0, derive_seed(seed, 3));
  } else {
    td.emplace(theta0);
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  RunResult result;
  result.rows.reserve(checkpoints.size());

  auto reported = [&]() -> const Eigen::VectorXd& {
    if (config.kind == Algorithm::Ctd) return ctd->theta;
    if (config.kind == Algorithm::Td0Averaged) return td->theta_average;
    return td->theta;
  };
  auto value_sq = [&](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd e = theta - system.theta_star;
    return e.dot(system.feature_gram * e);
  };

  if (ctd) result.anchor_value_sq.push_back(value_sq(ctd->theta));

  std::size_t cp = 0;
  for (long n = 1; n <= n_iterations; ++n) {
    if (ctd && ctd->epoch_full()) {
      ctd_epoch_transition(*ctd, mrp, features, derive_seed(anchor_seed, ctd->epoch_index));
      result.anchor_value_sq.push_back(value_sq(ctd->anchor));
    }
    const int s = sampler.current();
    const int s_next = sampler.step();
    if (ctd) {
      ctd_step(*ctd, mrp, features, s, s_next);
    } else {
      td_step(*td, mrp, features, config.schedule, s, s_next);
    }
    if (cp < checkpoints.size() && n == checkpoints[cp]) {
      const Eigen::VectorXd& theta = reported();
      CheckpointRow row;
      row.iteration = n;
      const Eigen::VectorXd e = theta - system.theta_star;
      row.theta_error = e.norm();
      row.value_error = std::sqrt(std::max(0.0, e.dot(system.feature_gram * e)));
      row.normalized_error = system.value_psi_norm > 0.0 ? row.value_error / system.value_psi_norm
                                                         : row.value_error;
      // A run counts as diverged when the iterate leaves the finite range or
      // grows so large that its recorded quadratic error overflows.
      if (!theta.allFinite() || !std::isfinite(row.theta_error) ||
          !std::isfinite(row.value_error)) {
        result.diverged = true;
        result.diverged_at = n;
        if (throw_on_divergence) {
          throw NonFiniteIterate("iterate left the finite range by iteration " +
                                 std::to_string(n));
        }
        for (; cp < checkpoints.size(); ++cp) {
          result.rows.push_back({checkpoints[cp], nan, nan, nan});
        }
        break;
      }
      result.rows.push_back(row);
      ++cp;
    }
  }
  return result;
}

}  // namespace tdlab
