#pragma once

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "tdlab/bounds.hpp"
#include "tdlab/errors.hpp"
#include "tdlab/experiment.hpp"
#include "tdlab/io.hpp"
#include "tdlab/mixing.hpp"

namespace tdlab {

namespace cli_detail {

// Relative output paths land in $TDLAB_OUT_DIR when it is set.
inline std::string resolve_output(const std::string& path) {
  if (path.empty() || path.front() == '/') return path;
  const char* dir = std::getenv("TDLAB_OUT_DIR");
  if (dir == nullptr || *dir == '\0') return path;
  std::string d(dir);
  if (d.back() != '/') d += '/';
  return d + path;
}

// Sets one key in the raw spec JSON. Dotted paths descend into nested
// objects; a leading algorithm name (td0, td0_avg, ctd) addresses the
// matching entry of the algorithms array. Values parse as JSON when
// possible and fall back to plain strings.
inline void apply_override(Json& spec, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw SpecError("override '" + kv + "' must look like key=value");
  }
  const std::string path = kv.substr(0, eq);
  const std::string text = kv.substr(eq + 1);
  Json value = Json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = text;

  std::vector<std::string> parts;
  std::size_t pos = 0;
  for (;;) {
    const auto dot = path.find('.', pos);
    parts.push_back(path.substr(pos, dot == std::string::npos ? dot : dot - pos));
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  if (parts.front() == "td0" || parts.front() == "td0_avg" || parts.front() == "ctd") {
    if (parts.size() != 2) {
      throw SpecError("algorithm overrides use <name>.<key>=value, got '" + path + "'");
    }
    if (!spec.contains("algorithms") || !spec["algorithms"].is_array()) {
      throw SpecError("spec has no algorithms array to override");
    }
    for (auto& a : spec["algorithms"]) {
      if (a.is_object() && a.contains("name") && a["name"] == parts.front()) {
        a[parts.back()] = value;
        return;
      }
    }
    throw SpecError("no algorithm block named '" + parts.front() + "' to override");
  }
  Json* node = &spec;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    Json& child = (*node)[parts[i]];
    if (!child.is_object()) child = Json::object();
    node = &child;
  }
  (*node)[parts.back()] = value;
}

inline Json load_spec_json(const std::string& path, const std::vector<std::string>& overrides) {
  Json raw = load_json_file(path);
  for (const auto& kv : overrides) apply_override(raw, kv);
  return raw;
}

inline void emit(const Json& j, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    const std::string resolved = resolve_output(out_path);
    save_text_file(resolved, j.dump(2) + "\n");
    std::cerr << "wrote " << resolved << "\n";
  }
}

inline Json solve_report(const Problem& p) {
  Json j;
  j["mu"] = p.system.mu;
  j["theta_star"] = vector_to_json(p.system.theta_star);
  j["value_exact"] = vector_to_json(p.system.value_exact);
  j["a_matrix"] = matrix_to_json(p.system.a_matrix);
  j["b_vector"] = vector_to_json(p.system.b_vector);
  j["feature_gram"] = matrix_to_json(p.system.feature_gram);
  j["stationary"] = vector_to_json(p.psi);
  j["value_psi_norm"] = p.system.value_psi_norm;
  j["fixed_point_residual"] = p.system.fixed_point_residual;
  j["discount"] = p.mrp.discount;
  if (!p.warnings.empty()) j["warnings"] = p.warnings;
  return j;
}

inline Json mixing_report(const Problem& p, const MixingSettings& ms) {
  const MixingProfile prof =
      mixing_profile(p.mrp, p.features.matrix(), ms.truncation, ms.tolerance);
  Json j;
  j["rho"] = prof.rho;
  j["c_geo"] = prof.c_geo;
  j["b_state"] = vector_to_json(prof.b_state);
  j["partial_state"] = vector_to_json(prof.partial_state);
  j["b_uniform"] = prof.b_uniform;
  j["tail_bound"] = prof.tail_bound;
  j["truncation"] = prof.truncation;
  return j;
}

inline Json bounds_report(const ExperimentSpec& spec, const Problem& problem,
                          std::vector<double> grid) {
  if (grid.empty()) {
    for (double n = 1.0; n <= static_cast<double>(spec.n_iterations); n *= 10.0) {
      grid.push_back(n);
    }
    if (grid.empty() || grid.back() != static_cast<double>(spec.n_iterations)) {
      grid.push_back(static_cast<double>(spec.n_iterations));
    }
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 1.0) || (i > 0 && grid[i] <= grid[i - 1])) {
      throw InvalidParameter("evaluation points must be strictly increasing and >= 1");
    }
  }

  const MixingProfile prof = mixing_profile(problem.mrp, problem.features.matrix(),
                                            spec.mixing.truncation, spec.mixing.tolerance);
  const double mu = problem.system.mu;
  const double beta = problem.mrp.discount;
  const double dim = problem.features.dim();
  const double b_mix = prof.b_state(spec.start_state);
  const double b_prime = prof.b_uniform;
  const double theta_star_norm = problem.system.theta_star.norm();
  const double theta0_norm = spec.theta0.size() != 0 ? spec.theta0.norm() : 0.0;

  auto curve_values = [&](const TheoremConstants& k, BoundKind kind) {
    Json arr = Json::array();
    for (const auto& [n, v] : bound_curve(k, grid, kind)) {
      (void)n;
      arr.push_back(v);
    }
    return arr;
  };

  Json j;
  j["problem"] = problem_token(spec);
  j["mu"] = mu;
  j["discount"] = beta;
  j["dim"] = dim;
  j["delta"] = spec.delta;
  j["start_state"] = spec.start_state;
  j["theta_star_norm"] = theta_star_norm;
  j["theta0_norm"] = theta0_norm;
  j["mixing"] = Json{{"rho", prof.rho},
                     {"c_geo", prof.c_geo},
                     {"b_start", b_mix},
                     {"b_uniform", b_prime},
                     {"truncation", prof.truncation}};
  j["n"] = grid;

  Json algos = Json::array();
  for (const auto& raw_cfg : spec.algorithms) {
    const AlgorithmConfig cfg = resolve_algorithm(raw_cfg, problem);
    Json a;
    a["name"] = algorithm_spec_name(cfg.kind);
    if (cfg.kind == Algorithm::Ctd) {
      a["gamma"] = cfg.ctd.gamma;
      a["epoch_length"] = cfg.ctd.epoch_length;
      a["radius"] = cfg.ctd.radius;
      try {
        const TheoremConstants k = theorem3_constants(mu, beta, cfg.ctd.gamma,
                                                      cfg.ctd.epoch_length, dim, cfg.ctd.radius,
                                                      prof.rho);
        a["c1"] = k.c1;
        a["c2"] = k.c2;
        a["decay"] = k.decay;
        a["admissible"] = k.c1 < 1.0;
      } catch (const ValidationError& ex) {
        a["error"] = std::string(ex.what());
        a["admissible"] = false;
      }
      algos.push_back(a);
      continue;
    }
    switch (cfg.schedule.kind) {
      case StepSchedule::Kind::InverseLinear: {
        a["c0"] = cfg.schedule.c0;
        a["c"] = cfg.schedule.c;
        const AdmissibilityReport rep =
            check_td_admissible(mu, beta, cfg.schedule.c0, cfg.schedule.c);
        a["admissibility"] = Json{{"c0_limit", rep.c0_limit},
                                  {"product", rep.product},
                                  {"scale_ok", rep.scale_ok},
                                  {"product_ok", rep.product_ok},
                                  {"admissible", rep.admissible},
                                  {"diagnostic", rep.diagnostic}};
        if (rep.admissible) {
          const TheoremConstants k =
              theorem1_constants(mu, beta, cfg.schedule.c0, cfg.schedule.c, dim, b_mix,
                                 theta0_norm, theta_star_norm, spec.delta, b_prime);
          a["c_big"] = k.c_big;
          a["c_big_alt"] = k.c_big_alt;
          a["exponent"] = k.exponent;
          Json k1 = Json::array(), k2 = Json::array();
          for (double n : grid) {
            k1.push_back(k.k1(n));
            k2.push_back(k.k2(n));
          }
          a["k1"] = k1;
          a["k2"] = k2;
          a["bound_mean"] = curve_values(k, BoundKind::Expectation);
          a["bound_high_probability"] = curve_values(k, BoundKind::HighProbability);
        }
        break;
      }
      case StepSchedule::Kind::InversePower: {
        a["c0"] = cfg.schedule.c0;
        a["c"] = cfg.schedule.c;
        a["alpha"] = cfg.schedule.alpha;
        const double c_big = quadratic_growth_constant(dim, b_mix, theta0_norm,
                                                       theta_star_norm, beta);
        const TheoremConstants k =
            theorem2_constants(mu, beta, cfg.schedule.c0, cfg.schedule.c, cfg.schedule.alpha,
                               dim, b_mix, theta_star_norm, c_big, spec.delta, b_prime);
        a["n0"] = k.n0;
        a["c_prime"] = k.c_prime;
        a["c_dprime"] = k.c_dprime;
        a["c_tprime"] = k.c_tprime;
        a["e0"] = k.e0;
        a["g_growth"] = k.g_growth;
        a["c_big"] = k.c_big;
        Json k1 = Json::array(), k2 = Json::array();
        for (double n : grid) {
          k1.push_back(k.k1_ia(n));
          k2.push_back(k.k2_ia(n));
        }
        a["k1_ia"] = k1;
        a["k2_ia"] = k2;
        a["bound_mean"] = curve_values(k, BoundKind::Expectation);
        a["bound_high_probability"] = curve_values(k, BoundKind::HighProbability);
        break;
      }
      case StepSchedule::Kind::Constant:
        a["gamma"] = cfg.schedule.value;
        a["note"] = "constant-step runs have no closed-form finite-time constants here";
        break;
    }
    algos.push_back(a);
  }
  j["algorithms"] = algos;
  return j;
}

inline std::string runs_dump_path(const std::string& out_path, const std::string& label) {
  const auto dot = out_path.rfind('.');
  if (dot == std::string::npos || out_path.find('/', dot) != std::string::npos) {
    return out_path + ".runs." + label + ".csv";
  }
  return out_path.substr(0, dot) + ".runs." + label + out_path.substr(dot);
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv) {
  static const std::vector<std::string> kSubcommands = {"solve", "run", "bounds", "mixing",
                                                        "gen"};
  if (argc >= 2) {
    const std::string first = argv[1];
    if (!first.empty() && first.front() != '-' &&
        std::find(kSubcommands.begin(), kSubcommands.end(), first) == kSubcommands.end()) {
      std::string best;
      int best_d = 1 << 20;
      for (const auto& s : kSubcommands) {
        const int d = detail::edit_distance(first, s);
        if (d < best_d) {
          best_d = d;
          best = s;
        }
      }
      std::cerr << "error: unknown subcommand '" << first << "'";
      if (best_d <= 3) std::cerr << "; did you mean '" << best << "'?";
      std::cerr << "\n";
      return 1;
    }
  }

  CLI::App app{"policy evaluation lab: linear-feature value estimation on Markov reward chains"};
  app.require_subcommand(1);

  std::string spec_path, out_path;
  std::vector<std::string> overrides;
  int threads = 1;
  bool dump_runs = false;
  std::vector<double> at_values;
  std::string gen_which;

  auto add_common = [&](CLI::App* sub, bool with_spec = true) {
    if (with_spec) sub->add_option("spec", spec_path, "path to a JSON spec file")->required();
    sub->add_option("-o,--output", out_path, "output path (default: stdout or spec default)");
    sub->add_option("--override", overrides, "spec override key=value; repeatable");
  };

  CLI::App* solve = app.add_subcommand("solve", "solve the projected system exactly");
  add_common(solve);
  CLI::App* run = app.add_subcommand("run", "run the configured estimators and write a CSV trace");
  add_common(run);
  run->add_option("--threads", threads, "worker threads for independent runs")
      ->check(CLI::PositiveNumber);
  run->add_flag("--dump-runs", dump_runs, "also write per-run CSV dumps");
  CLI::App* bounds = app.add_subcommand("bounds", "report bound constants and admissibility");
  add_common(bounds);
  bounds->add_option("--at", at_values, "iteration indices for bound evaluation")
      ->delimiter(',');
  CLI::App* mixing = app.add_subcommand("mixing", "report the chain's mixing profile");
  add_common(mixing);
  CLI::App* gen = app.add_subcommand("gen", "write a ready-to-run spec file");
  gen->add_option("which", gen_which, "example1 or example2")
      ->required()
      ->check(CLI::IsMember({"example1", "example2"}));
  gen->add_option("-o,--output", out_path, "output path (default: <which>.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) {
      const ExperimentSpec spec =
          gen_which == "example1" ? default_example1_spec() : default_example2_spec();
      const std::string path =
          cli_detail::resolve_output(out_path.empty() ? gen_which + ".json" : out_path);
      save_text_file(path, experiment_spec_to_json(spec).dump(2) + "\n");
      std::cerr << "wrote " << path << "\n";
      return 0;
    }

    const Json raw = cli_detail::load_spec_json(spec_path, overrides);
    const ExperimentSpec spec = parse_experiment_spec(raw);
    const Problem problem = build_problem(spec);
    for (const auto& w : problem.warnings) std::cerr << "warning: " << w << "\n";

    if (solve->parsed()) {
      cli_detail::emit(cli_detail::solve_report(problem), out_path);
      return 0;
    }
    if (mixing->parsed()) {
      cli_detail::emit(cli_detail::mixing_report(problem, spec.mixing), out_path);
      return 0;
    }
    if (bounds->parsed()) {
      cli_detail::emit(cli_detail::bounds_report(spec, problem, at_values), out_path);
      return 0;
    }

    // run
    const RunTrace trace = run_experiment(spec, problem, threads, dump_runs);
    std::string target = out_path.empty() ? spec.output_path : out_path;
    if (target.empty()) target = problem_token(spec) + "_trace.csv";
    target = cli_detail::resolve_output(target);
    save_text_file(target, write_trace_csv(spec, trace));
    std::cerr << "wrote " << target << "\n";
    if (dump_runs) {
      for (const auto& at : trace.algorithms) {
        const std::string rp = cli_detail::runs_dump_path(target, at.label);
        save_text_file(rp, write_runs_csv(trace, at));
        std::cerr << "wrote " << rp << "\n";
      }
    }
    for (const auto& at : trace.algorithms) {
      if (at.n_diverged == at.n_runs) {
        std::cerr << "error: every " << at.label << " run left the finite range\n";
        return 2;
      }
      if (at.n_diverged > 0) {
        std::cerr << "warning: " << at.n_diverged << " of " << at.n_runs << " " << at.label
                  << " runs left the finite range (excluded from the aggregates)\n";
      }
    }
    return 0;
  } catch (const ValidationError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  } catch (const RuntimeFailure& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
}

inline int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> full;
  full.reserve(args.size() + 1);
  full.emplace_back("tdlab");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const auto& s : full) argv.push_back(s.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace tdlab
