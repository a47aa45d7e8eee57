#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "tdlab/errors.hpp"
#include "tdlab/features.hpp"
#include "tdlab/mrp.hpp"
#include "tdlab/rng.hpp"
#include "tdlab/schedule.hpp"

namespace tdlab {

// Sampled fixed-point increment at parameter theta for the observed
// transition (s, s_next):
//   f(theta) = (r(s) + discount * theta'phi(s_next) - theta'phi(s)) * phi(s)
inline Eigen::VectorXd td_increment(const MarkovRewardProcess& mrp, const FeatureMap& features,
                                    const Eigen::VectorXd& theta, int s, int s_next) {
  const Eigen::MatrixXd& phi = features.matrix();
  const double td_error = mrp.reward(s) + mrp.discount * phi.row(s_next).dot(theta) -
                          phi.row(s).dot(theta);
  return td_error * phi.row(s).transpose();
}

// Scales a vector back onto the ball of the given radius when it lies outside.
inline void project_ball(Eigen::VectorXd& v, double radius) {
  const double norm = v.norm();
  if (norm > radius) v *= radius / norm;
}

// State of a plain stochastic-approximation run, with a running iterate
// average maintained alongside. The average covers theta_1 .. theta_n and
// excludes the starting point; before the first step it simply mirrors it.
struct TdState {
  Eigen::VectorXd theta;
  Eigen::VectorXd theta_average;
  long n = 0;

  explicit TdState(Eigen::VectorXd theta0)
      : theta(std::move(theta0)), theta_average(theta), n(0) {}
};

inline void td_step(TdState& state, const MarkovRewardProcess& mrp, const FeatureMap& features,
                    const StepSchedule& schedule, int s, int s_next) {
  state.theta += schedule.gamma(state.n) * td_increment(mrp, features, state.theta, s, s_next);
  ++state.n;
  state.theta_average += (state.theta - state.theta_average) / static_cast<double>(state.n);
}

struct CtdConfig {
  double gamma = 0.0;       // constant step size
  int epoch_length = 0;     // samples per epoch
  double radius = 0.0;      // iterates are kept inside this ball
  bool resample_stored = false;  // draw update samples from the stored epoch

  void validate() const {
    if (!(gamma > 0.0)) throw InvalidParameter("centered update needs a positive step size");
    if (epoch_length < 1) throw InvalidParameter("epoch length must be at least 1");
    if (!(radius > 0.0)) throw InvalidParameter("projection radius must be positive");
  }
};

// Default projection radius: comfortably larger than the norm any solution
// of a problem with bounded rewards can attain.
inline double default_ctd_radius(double mu, double discount, double reward_sup) {
  return 2.0 * (1.0 + reward_sup) / (mu * (1.0 - discount));
}

// Epoch-structured centered estimator. Within each epoch the iterate and the
// observed transition are buffered before every update. Epoch 0 runs the
// plain update; later epochs subtract the increment evaluated at an anchor
// point and add back its buffered average, which removes most of the noise
// once the anchor is close to the solution. At an epoch boundary the anchor
// is redrawn uniformly from the buffered iterates and the run restarts there.
struct CtdState {
  CtdConfig config;
  Eigen::VectorXd theta;
  Eigen::VectorXd anchor;
  Eigen::VectorXd f_hat;
  long n = 0;
  int epoch_index = 0;
  int fill = 0;
  Eigen::MatrixXd epoch_thetas;
  std::vector<std::pair<int, int>> epoch_samples;
  Eigen::MatrixXd prev_thetas;
  std::vector<std::pair<int, int>> prev_samples;
  SplitMix64 resample_rng;

  CtdState(CtdConfig cfg, Eigen::VectorXd theta0, std::uint64_t resample_seed)
      : config(cfg), theta(std::move(theta0)), resample_rng(resample_seed) {
    config.validate();
    anchor = Eigen::VectorXd::Zero(theta.size());
    f_hat = Eigen::VectorXd::Zero(theta.size());
    epoch_thetas.resize(theta.size(), config.epoch_length);
    epoch_samples.resize(static_cast<std::size_t>(config.epoch_length));
  }

  bool epoch_full() const { return fill == config.epoch_length; }
};

inline void ctd_step(CtdState& state, const MarkovRewardProcess& mrp, const FeatureMap& features,
                     int s, int s_next) {
  if (state.epoch_full()) {
    throw RuntimeFailure("epoch buffer is full; advance the epoch before stepping");
  }
  if (state.config.resample_stored && state.epoch_index >= 1) {
    const int j = state.resample_rng.uniform_int(state.config.epoch_length);
    std::tie(s, s_next) = state.prev_samples[static_cast<std::size_t>(j)];
  }
  state.epoch_thetas.col(state.fill) = state.theta;
  state.epoch_samples[static_cast<std::size_t>(state.fill)] = {s, s_next};

  Eigen::VectorXd g = td_increment(mrp, features, state.theta, s, s_next);
  if (state.epoch_index >= 1) {
    g += state.f_hat - td_increment(mrp, features, state.anchor, s, s_next);
  }
  state.theta += state.config.gamma * g;
  project_ball(state.theta, state.config.radius);
  ++state.fill;
  ++state.n;
}

// Finishes an epoch: redraws the anchor uniformly from the buffered iterates,
// recomputes the centering average at the new anchor from the buffered
// transitions, and restarts the iterate at the anchor.
inline void ctd_epoch_transition(CtdState& state, const MarkovRewardProcess& mrp,
                                 const FeatureMap& features, std::uint64_t seed) {
  if (!state.epoch_full()) {
    throw EpochBufferIncomplete("epoch buffer holds " + std::to_string(state.fill) + " of " +
                                std::to_string(state.config.epoch_length) + " samples");
  }
  SplitMix64 rng(seed);
  const int j = rng.uniform_int(state.config.epoch_length);
  state.anchor = state.epoch_thetas.col(j);

  state.f_hat.setZero();
  for (const auto& [s, s_next] : state.epoch_samples) {
    state.f_hat += td_increment(mrp, features, state.anchor, s, s_next);
  }
  state.f_hat /= static_cast<double>(state.config.epoch_length);

  state.theta = state.anchor;
  std::swap(state.prev_thetas, state.epoch_thetas);
  std::swap(state.prev_samples, state.epoch_samples);
  if (state.epoch_thetas.cols() != state.config.epoch_length) {
    state.epoch_thetas.resize(state.theta.size(), state.config.epoch_length);
    state.epoch_samples.resize(static_cast<std::size_t>(state.config.epoch_length));
  }
  state.fill = 0;
  ++state.epoch_index;
}

}  // namespace tdlab
