// Acceptance gate: exercises the full stack end to end and prints one
// PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "tdlab/tdlab.hpp"

namespace {

using namespace tdlab;

std::pair<MarkovRewardProcess, FeatureMap> random_instance(int n_states, int dim,
                                                           std::uint64_t seed) {
  MarkovRewardProcess mrp = random_mrp(n_states, seed, 0.9);
  SplitMix64 g(derive_seed(seed, 17));
  Eigen::MatrixXd phi(n_states, dim);
  for (int i = 0; i < n_states; ++i) {
    for (int j = 0; j < dim; ++j) phi(i, j) = g.uniform01();
  }
  return {std::move(mrp), FeatureMap(std::move(phi))};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double fitted_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - mx) * (y[i] - my);
    den += (x[i] - mx) * (x[i] - mx);
  }
  return num / den;
}

ExperimentSpec example1_run_spec(AlgorithmConfig algo, long n_iterations, int n_runs) {
  ExperimentSpec spec;
  spec.problem = ExperimentSpec::ProblemKind::Example1;
  spec.algorithms = {std::move(algo)};
  spec.n_iterations = n_iterations;
  spec.n_runs = n_runs;
  spec.master_seed = 12345;
  return spec;
}

// Median normalized error per checkpoint across the per-run matrix.
std::vector<double> median_curve(const AlgorithmTrace& at) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < at.per_run.rows(); ++i) {
    std::vector<double> col(static_cast<std::size_t>(at.per_run.cols()));
    for (Eigen::Index r = 0; r < at.per_run.cols(); ++r) {
      col[static_cast<std::size_t>(r)] = at.per_run(i, r);
    }
    out.push_back(median(std::move(col)));
  }
  return out;
}

// ---- criteria ----

// 1. The direct solve matches fixed-point iteration everywhere, and the
//    two-state instance reproduces its closed-form solution.
bool criterion_exact_solver(std::string& detail) {
  const ExperimentSpec e1spec = [] {
    ExperimentSpec s;
    s.problem = ExperimentSpec::ProblemKind::Example1;
    return s;
  }();
  const Problem p = build_problem(e1spec);
  double worst = std::abs(p.system.theta_star(0) - 6.183745583038871);
  double worst_resid = p.system.fixed_point_residual;
  if (std::abs(p.system.mu - 35.0 / 11.0) > 1e-12 * (35.0 / 11.0)) return false;

  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto [mrp, features] = random_instance(10, 3, seed);
    const Eigen::VectorXd psi = stationary_distribution(mrp).probabilities;
    const ProjectedSystem sys = build_system(mrp, features, psi);
    worst_resid = std::max(worst_resid, sys.fixed_point_residual);
    const Eigen::VectorXd via_iteration = projected_value_iteration(mrp, features, psi);
    worst = std::max(worst, (via_iteration - sys.theta_star).cwiseAbs().maxCoeff());
  }
  std::ostringstream os;
  os << "largest disagreement " << worst << " (limit 1e-8), largest residual " << worst_resid
     << " (limit 1e-9)";
  detail = os.str();
  return worst <= 1e-8 && worst_resid <= 1e-9;
}

// 2. Averaging the sampled update over the stationary chain law reproduces
//    b - A theta.
bool criterion_mean_update(std::string& detail) {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto [mrp, features] = random_instance(8, 3, seed);
    const Eigen::VectorXd psi = stationary_distribution(mrp).probabilities;
    const ProjectedSystem sys = build_system(mrp, features, psi);
    SplitMix64 g(derive_seed(seed, 23));
    for (int k = 0; k < 5; ++k) {
      Eigen::VectorXd theta(3);
      for (int i = 0; i < 3; ++i) theta(i) = 10.0 * g.uniform01() - 5.0;
      Eigen::VectorXd expect = Eigen::VectorXd::Zero(3);
      for (int s = 0; s < mrp.n_states(); ++s) {
        for (int t = 0; t < mrp.n_states(); ++t) {
          expect += psi(s) * mrp.transition(s, t) * td_increment(mrp, features, theta, s, t);
        }
      }
      const Eigen::VectorXd direct = sys.b_vector - sys.a_matrix * theta;
      const double err = (expect - direct).cwiseAbs().maxCoeff() /
                         (1.0 + direct.cwiseAbs().maxCoeff());
      worst = std::max(worst, err);
    }
  }
  std::ostringstream os;
  os << "largest relative deviation " << worst;
  detail = os.str();
  return worst <= 1e-10;
}

// 3. The inverse-linear schedule converges on the two-state instance: small
//    median final error, and the mean parameter error decays at a clear
//    power-law rate over the last two decades.
bool criterion_td0_convergence(std::string& detail) {
  AlgorithmConfig td0;
  td0.kind = Algorithm::Td0;
  td0.schedule = StepSchedule::inverse_linear(0.04, 100.0);
  const ExperimentSpec spec = example1_run_spec(td0, 100000, 50);
  const RunTrace trace = run_experiment(spec, 1, /*keep_per_run=*/true);
  const AlgorithmTrace& at = trace.algorithms[0];
  if (at.n_diverged != 0) return false;

  const std::vector<double> med = median_curve(at);
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < trace.iterations.size(); ++i) {
    if (trace.iterations[i] < 1000) continue;
    lx.push_back(std::log(static_cast<double>(trace.iterations[i])));
    ly.push_back(std::log(at.mean_theta[i]));
  }
  const double slope = fitted_slope(lx, ly);
  std::ostringstream os;
  os << "median final error " << med.back() << " (limit 0.05), mean-error decay slope "
     << slope << " (limit -0.35)";
  detail = os.str();
  return med.back() < 0.05 && slope <= -0.35;
}

// 4. The expectation bound dominates the measured mean parameter error at
//    every checkpoint, using the mixing bound computed from the chain.
bool criterion_expectation_bound(std::string& detail) {
  AlgorithmConfig td0;
  td0.kind = Algorithm::Td0;
  td0.schedule = StepSchedule::inverse_linear(0.04, 100.0);
  const ExperimentSpec spec = example1_run_spec(td0, 100000, 200);
  const Problem problem = build_problem(spec);
  const RunTrace trace = run_experiment(spec, problem);
  const AlgorithmTrace& at = trace.algorithms[0];
  if (at.n_diverged != 0) return false;

  const MixingProfile prof = mixing_profile(problem.mrp, problem.features.matrix(), 200, 1e-6);
  const TheoremConstants k =
      theorem1_constants(problem.system.mu, problem.mrp.discount, 0.04, 100.0,
                         problem.features.dim(), prof.b_state(spec.start_state), 0.0,
                         problem.system.theta_star.norm(), spec.delta, prof.b_uniform);
  double worst_ratio = 0.0;
  for (std::size_t i = 0; i < trace.iterations.size(); ++i) {
    const double n = static_cast<double>(trace.iterations[i]);
    const double bound = k.k1(n) / std::sqrt(n + k.c);
    worst_ratio = std::max(worst_ratio, at.mean_theta[i] / bound);
  }
  std::ostringstream os;
  os << "largest measured/bound ratio " << worst_ratio << " over "
     << trace.iterations.size() << " checkpoints (limit 1)";
  detail = os.str();
  return worst_ratio <= 1.0;
}

// 5. Iterate averaging over the inverse-power schedule converges as well.
bool criterion_averaged_convergence(std::string& detail) {
  AlgorithmConfig avg;
  avg.kind = Algorithm::Td0Averaged;
  avg.schedule = StepSchedule::inverse_power(0.25, 100.0, 0.75);
  const ExperimentSpec spec = example1_run_spec(avg, 100000, 50);
  const RunTrace trace = run_experiment(spec);
  const AlgorithmTrace& at = trace.algorithms[0];
  if (at.n_diverged != 0) return false;

  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < trace.iterations.size(); ++i) {
    if (trace.iterations[i] < 1000) continue;
    lx.push_back(std::log(static_cast<double>(trace.iterations[i])));
    ly.push_back(std::log(at.mean[i]));
  }
  const double slope = fitted_slope(lx, ly);
  std::ostringstream os;
  os << "mean final error " << at.mean.back() << " (limit 0.05), decay slope " << slope
     << " (limit -0.3)";
  detail = os.str();
  return at.mean.back() < 0.05 && slope <= -0.3;
}

// 6. Centered epochs contract the restart error at least as fast as the
//    guaranteed per-epoch factor, with slack for sampling noise.
bool criterion_centered_epoch_decay(std::string& detail) {
  AlgorithmConfig ctd;
  ctd.kind = Algorithm::Ctd;
  ctd.ctd.gamma = 0.02;
  ctd.ctd.epoch_length = 100;
  ExperimentSpec spec = example1_run_spec(ctd, 2000, 50);
  spec.checkpoint_kind = ExperimentSpec::CheckpointKind::List;
  spec.checkpoint_list = {2000};
  const Problem problem = build_problem(spec);
  const RunTrace trace = run_experiment(spec, problem);
  const AlgorithmTrace& at = trace.algorithms[0];
  if (at.n_diverged != 0) return false;
  if (at.mean_anchor_sq.size() != 20) return false;

  const MixingProfile prof = mixing_profile(problem.mrp, problem.features.matrix(), 200, 1e-6);
  const double radius = default_ctd_radius(problem.system.mu, problem.mrp.discount,
                                           problem.mrp.reward.cwiseAbs().maxCoeff());
  const TheoremConstants k = theorem3_constants(problem.system.mu, problem.mrp.discount,
                                                ctd.ctd.gamma, ctd.ctd.epoch_length,
                                                problem.features.dim(), radius, prof.rho);

  std::vector<double> m, lv;
  for (std::size_t i = 0; i < at.mean_anchor_sq.size(); ++i) {
    m.push_back(static_cast<double>(i));
    lv.push_back(std::log(at.mean_anchor_sq[i]));
  }
  const double ratio = std::exp(fitted_slope(m, lv));
  const double first = at.mean_anchor_sq.front();
  const double last = at.mean_anchor_sq.back();
  const double final_norm = at.mean.back();  // normalized value error at n=2000
  std::ostringstream os;
  os << "fitted per-epoch factor " << ratio << " (guarantee " << k.decay
     << " + 0.15 slack), restart error " << first << " -> " << last
     << ", mean final normalized error " << final_norm << " (limit 0.05)";
  detail = os.str();
  return ratio < 1.0 && ratio <= k.decay + 0.15 && last <= first && final_norm <= 0.05;
}

// 7. On the larger random instance, centering reduces the run-to-run spread
//    of the final error relative to the plain schedule.
bool criterion_variance_reduction(std::string& detail) {
  const ExperimentSpec spec = default_example2_spec(100, 3, 7);
  const RunTrace trace = run_experiment(spec);
  const AlgorithmTrace* td0 = nullptr;
  const AlgorithmTrace* ctd = nullptr;
  for (const auto& at : trace.algorithms) {
    if (at.kind == Algorithm::Td0) td0 = &at;
    if (at.kind == Algorithm::Ctd) ctd = &at;
  }
  if (td0 == nullptr || ctd == nullptr) return false;
  if (td0->n_diverged != 0 || ctd->n_diverged != 0) return false;
  const double std_td0 = td0->dev.back();
  const double std_ctd = ctd->dev.back();
  std::ostringstream os;
  os << "final-error spread: plain " << std_td0 << ", centered " << std_ctd << " over "
     << spec.n_runs << " runs of " << spec.n_iterations << " iterations";
  detail = os.str();
  return std_ctd <= std_td0;
}

// 8. Bit-for-bit reproducibility: the written trace is a pure function of
//    the spec, regardless of threading.
bool criterion_reproducibility(std::string& detail) {
  ExperimentSpec spec;
  spec.problem = ExperimentSpec::ProblemKind::Example1;
  spec.n_iterations = 2000;
  spec.n_runs = 5;
  spec.checkpoint_kind = ExperimentSpec::CheckpointKind::List;
  spec.checkpoint_list = {1, 10, 100, 1000, 2000};
  AlgorithmConfig td0;
  td0.kind = Algorithm::Td0;
  td0.schedule = StepSchedule::inverse_linear(0.04, 100.0);
  AlgorithmConfig avg;
  avg.kind = Algorithm::Td0Averaged;
  avg.schedule = StepSchedule::inverse_power(0.25, 100.0, 0.75);
  AlgorithmConfig ctd;
  ctd.kind = Algorithm::Ctd;
  ctd.ctd.gamma = 0.02;
  ctd.ctd.epoch_length = 100;
  spec.algorithms = {td0, avg, ctd};

  const Problem problem = build_problem(spec);
  const std::string a = write_trace_csv(spec, run_experiment(spec, problem, 1));
  const std::string b = write_trace_csv(spec, run_experiment(spec, problem, 1));
  const std::string c = write_trace_csv(spec, run_experiment(spec, problem, 3));
  detail = a == b && a == c ? "serial twice and 3-thread traces are byte-identical"
                            : "traces differ between invocations";
  return a == b && a == c;
}

// 9. Structural invariants of the geometry and the estimators.
bool criterion_invariants(std::string& detail) {
  std::vector<std::string> failures;

  // Weighted projection is idempotent.
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto [mrp, features] = random_instance(8, 3, seed);
    const Eigen::VectorXd psi = stationary_distribution(mrp).probabilities;
    SplitMix64 g(derive_seed(seed, 31));
    for (int k = 0; k < 3; ++k) {
      Eigen::VectorXd v(8);
      for (int i = 0; i < 8; ++i) v(i) = 4.0 * g.uniform01() - 2.0;
      const Eigen::VectorXd once = project(v, features, psi);
      if ((project(once, features, psi) - once).cwiseAbs().maxCoeff() > 1e-10) {
        failures.push_back("projection idempotence");
      }
    }
  }

  // The transition operator never expands the stationary-weighted norm.
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const MarkovRewardProcess mrp = random_mrp(7, seed);
    const Eigen::VectorXd psi = stationary_distribution(mrp).probabilities;
    SplitMix64 g(derive_seed(seed, 37));
    for (int k = 0; k < 5; ++k) {
      Eigen::VectorXd v(7);
      for (int i = 0; i < 7; ++i) v(i) = 6.0 * g.uniform01() - 3.0;
      if (psi_norm(mrp.transition * v, psi) > psi_norm(v, psi) + 1e-12) {
        failures.push_back("transition non-expansiveness");
      }
    }
  }

  // Coercivity of the update matrix with the guaranteed margin.
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto [mrp, features] = random_instance(8, 3, seed);
    const Eigen::VectorXd psi = stationary_distribution(mrp).probabilities;
    const ProjectedSystem sys = build_system(mrp, features, psi);
    const double margin = (1.0 - mrp.discount) * sys.mu;
    SplitMix64 g(derive_seed(seed, 41));
    for (int k = 0; k < 10; ++k) {
      Eigen::VectorXd x(3);
      for (int i = 0; i < 3; ++i) x(i) = 2.0 * g.uniform01() - 1.0;
      if (x.dot(sys.a_matrix * x) < margin * x.squaredNorm() - 1e-10 * (1.0 + x.squaredNorm())) {
        failures.push_back("coercivity");
      }
    }
  }

  // The running iterate average is the exact arithmetic mean.
  {
    const auto [mrp, features] = random_instance(6, 3, 4);
    TdState state(Eigen::VectorXd::Zero(3));
    const StepSchedule sched = StepSchedule::inverse_power(0.3, 50.0, 0.8);
    TrajectorySampler sampler(mrp, 0, 99);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(3);
    for (int n = 1; n <= 200; ++n) {
      const int s = sampler.current();
      const int s_next = sampler.step();
      td_step(state, mrp, features, sched, s, s_next);
      sum += state.theta;
      if ((state.theta_average - sum / n).cwiseAbs().maxCoeff() > 1e-12) {
        failures.push_back("averaging identity");
        break;
      }
    }
  }

  // Centered iterates never leave the projection ball.
  {
    const auto [mrp, features] = build_example1();
    CtdConfig cfg;
    cfg.gamma = 0.5;
    cfg.epoch_length = 10;
    cfg.radius = 0.01;
    CtdState state(cfg, Eigen::VectorXd::Zero(1), 3);
    TrajectorySampler sampler(mrp, 0, 17);
    for (int i = 0; i < 500; ++i) {
      if (state.epoch_full()) ctd_epoch_transition(state, mrp, features, derive_seed(4, i));
      const int s = sampler.current();
      const int s_next = sampler.step();
      ctd_step(state, mrp, features, s, s_next);
      if (state.theta.norm() > cfg.radius + 1e-15) {
        failures.push_back("projection ball containment");
        break;
      }
    }
  }

  // Differences of sampled updates are linear in the iterate difference.
  {
    const auto [mrp, features] = random_instance(5, 3, 12);
    const Eigen::MatrixXd& phi = features.matrix();
    SplitMix64 g(77);
    for (int k = 0; k < 5; ++k) {
      Eigen::VectorXd a(3), b(3);
      for (int i = 0; i < 3; ++i) {
        a(i) = 10.0 * g.uniform01() - 5.0;
        b(i) = 10.0 * g.uniform01() - 5.0;
      }
      for (int s = 0; s < 5; ++s) {
        for (int t = 0; t < 5; ++t) {
          const Eigen::VectorXd lhs =
              td_increment(mrp, features, a, s, t) - td_increment(mrp, features, b, s, t);
          const double coeff = (mrp.discount * phi.row(t) - phi.row(s)).dot(a - b);
          const Eigen::VectorXd rhs = coeff * phi.row(s).transpose();
          if ((lhs - rhs).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + rhs.cwiseAbs().maxCoeff())) {
            failures.push_back("update bilinearity");
          }
        }
      }
    }
  }

  if (failures.empty()) {
    detail = "idempotence, non-expansiveness, coercivity, averaging, ball containment, "
             "bilinearity all hold";
    return true;
  }
  std::ostringstream os;
  os << failures.size() << " violations, first: " << failures.front();
  detail = os.str();
  return false;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    bool (*fn)(std::string&);
  };
  const std::vector<Criterion> criteria = {
      {"exact solver matches fixed-point iteration (tol 1e-8)", criterion_exact_solver},
      {"stationary mean of sampled updates is b - A theta (tol 1e-10)", criterion_mean_update},
      {"inverse-linear schedule converges on the two-state instance", criterion_td0_convergence},
      {"expectation bound dominates the measured mean error", criterion_expectation_bound},
      {"iterate averaging converges on the two-state instance", criterion_averaged_convergence},
      {"centered epochs contract the restart error", criterion_centered_epoch_decay},
      {"centering shrinks run-to-run spread on the random instance",
       criterion_variance_reduction},
      {"traces are byte-identical across reruns and threading", criterion_reproducibility},
      {"structural invariants hold across random instances", criterion_invariants},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = criteria[i].fn(detail);
    } catch (const std::exception& ex) {
      detail = std::string("exception: ") + ex.what();
      ok = false;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s  %zu. %s [%.2fs]%s%s\n", ok ? "PASS" : "FAIL", i + 1, criteria[i].name,
                secs, detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failed;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
