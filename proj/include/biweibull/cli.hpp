#pragma once

// Command-line surface: fit, simulate, moments, verify.
//
// Every command is deterministic given its flags and seed.  Machine
// reports are JSON (written to --out or stdout); humans get an aligned
// table unless --json-only.  Exit codes: 0 success/convergence, 1 input
// error, 2 non-convergence or failed verification.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "biweibull/data.hpp"
#include "biweibull/estimation.hpp"
#include "biweibull/model.hpp"
#include "biweibull/moments.hpp"
#include "biweibull/simulation.hpp"
#include "biweibull/version.hpp"

namespace biweibull::cli {

namespace detail {

// FNV-1a 64-bit over raw bytes; reports embed it so reruns are auditable.
inline std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string("fnv1a64:") + buf;
}

inline model::ModelParams parse_params_list(const std::string& csv) {
  std::array<double, 5> v{};
  std::size_t n = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= csv.size(); ++i) {
    if (i == csv.size() || csv[i] == ',') {
      if (n == 5) throw CLI::ValidationError("params", "expected 5 comma-separated values");
      const std::string field = csv.substr(start, i - start);
      try {
        std::size_t used = 0;
        v[n] = std::stod(field, &used);
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw CLI::ValidationError("params", "cannot parse '" + field + "' as a number");
      }
      ++n;
      start = i + 1;
    }
  }
  if (n != 5) throw CLI::ValidationError("params", "expected 5 comma-separated values");
  model::ModelParams p{v[0], v[1], v[2], v[3], v[4]};
  p.validate();  // invalid_argument surfaces as an input error (exit 1)
  return p;
}

inline nlohmann::json params_json(const model::ModelParams& p) {
  return {{"alpha", p.alpha},
          {"lambda1", p.lambda1},
          {"gamma1", p.gamma1},
          {"lambda2", p.lambda2},
          {"gamma2", p.gamma2}};
}

inline nlohmann::json counts_json(const likelihood::CategoryCounts& c) {
  return {{"p", c.p}, {"q", c.q}, {"r", c.r}, {"censored", c.censored}};
}

inline nlohmann::json fit_result_json(const estimation::FitResult& r) {
  nlohmann::json j{{"estimate", params_json(r.estimate)},
                   {"loglik", r.loglik},
                   {"converged", r.converged},
                   {"n_iter", r.n_iter},
                   {"hessian_ok", r.hessian_ok},
                   {"grad_max_norm", r.grad_max_norm},
                   {"flat", r.flat},
                   {"alpha_at_boundary", r.alpha_at_boundary}};
  if (r.std_errors) {
    const auto& se = *r.std_errors;
    j["std_errors"] = {{"alpha", se[0]},
                       {"lambda1", se[1]},
                       {"gamma1", se[2]},
                       {"lambda2", se[3]},
                       {"gamma2", se[4]}};
  } else {
    j["std_errors"] = nullptr;
  }
  j["independence_fit"] =
      r.independence_fit ? fit_result_json(*r.independence_fit) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json base_report(const std::vector<std::string>& args,
                                  const std::string& digest) {
  return {{"command", args}, {"input_digest", digest}, {"version", BIWEIBULL_VERSION}};
}

// JSON goes to --out when given, otherwise to the console stream.
inline bool emit_json(const nlohmann::json& j, const std::string& out_path, std::ostream& out,
                      std::ostream& err) {
  if (out_path.empty()) {
    out << j.dump(2) << "\n";
    return true;
  }
  std::ofstream f(out_path, std::ios::binary);
  if (!f) {
    err << "error: cannot open '" << out_path << "' for writing\n";
    return false;
  }
  f << j.dump(2) << "\n";
  return true;
}

inline void print_params_table(std::ostream& out, const model::ModelParams& p,
                               const std::optional<std::array<double, 5>>& se,
                               const std::array<bool, 5>& flat) {
  const char* names[5] = {"alpha", "lambda1", "gamma1", "lambda2", "gamma2"};
  const double vals[5] = {p.alpha, p.lambda1, p.gamma1, p.lambda2, p.gamma2};
  char line[128];
  out << "  parameter    estimate      std.error\n";
  for (int i = 0; i < 5; ++i) {
    if (se) {
      std::snprintf(line, sizeof(line), "  %-12s %-13.6g %-13.6g%s\n", names[i], vals[i],
                    (*se)[i], flat[i] ? "  (flat: not identified by the data)" : "");
    } else {
      std::snprintf(line, sizeof(line), "  %-12s %-13.6g %-13s%s\n", names[i], vals[i], "-",
                    flat[i] ? "  (flat: not identified by the data)" : "");
    }
    out << line;
  }
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

inline int cmd_fit(const std::vector<std::string>& args, const std::string& data_path,
                   const std::string& out_path, const std::string& init_str, int restarts,
                   std::uint64_t seed, bool json_only, std::ostream& out, std::ostream& err) {
  Timer timer;

  std::ifstream fin(data_path, std::ios::binary);
  if (!fin) {
    err << "error: cannot open '" << data_path << "'\n";
    return 1;
  }
  std::ostringstream raw;
  raw << fin.rdbuf();
  const std::string bytes = raw.str();

  std::istringstream stream(bytes);
  auto subjects = data::parse_csv(stream);
  auto classified = data::classify(subjects);

  estimation::FitConfig cfg;
  cfg.restarts = restarts;
  cfg.seed = seed;
  if (!init_str.empty()) cfg.init = parse_params_list(init_str);
  const auto result = estimation::fit(classified.dataset, cfg);

  nlohmann::json report = base_report(args, fnv1a64_hex(bytes));
  report["counts"] = counts_json(classified.dataset.counts());
  report["cleaning"] = classified.report.to_json();
  report["fit"] = fit_result_json(result);
  report["wall_ms"] = timer.ms();

  if (!json_only) {
    out << "fit: " << classified.dataset.size() << " records (p=" << classified.dataset.counts().p
        << " q=" << classified.dataset.counts().q << " r=" << classified.dataset.counts().r
        << " censored=" << classified.dataset.counts().censored << "), "
        << classified.report.dropped.size() << " dropped\n";
    print_params_table(out, result.estimate, result.std_errors, result.flat);
    out << "  loglik " << result.loglik << ", " << (result.converged ? "converged" : "NOT converged")
        << " (grad max-norm " << result.grad_max_norm << "), iterations " << result.n_iter << "\n";
    if (result.alpha_at_boundary && result.independence_fit) {
      out << "  alpha at the independence boundary; refit with alpha = 1:\n";
      print_params_table(out, result.independence_fit->estimate,
                         result.independence_fit->std_errors, result.independence_fit->flat);
      out << "  loglik " << result.independence_fit->loglik << "\n";
    }
  }
  if (!emit_json(report, out_path, out, err)) return 1;
  return result.converged ? 0 : 2;
}

inline int cmd_simulate(const std::string& params_str, std::size_t n, double end_time,
                        std::uint64_t seed, const std::string& out_path, std::ostream& out,
                        std::ostream& err) {
  const auto p = parse_params_list(params_str);
  simulation::StudyDesign design{n, end_time, std::nullopt};
  simulation::Rng rng(seed);
  const auto dataset = simulation::generate_dataset(p, design, rng);
  if (out_path.empty()) {
    data::write_csv(dataset, out);
    return 0;
  }
  std::ofstream f(out_path, std::ios::binary);
  if (!f) {
    err << "error: cannot open '" << out_path << "' for writing\n";
    return 1;
  }
  data::write_csv(dataset, f);
  return 0;
}

inline int cmd_moments(const std::vector<std::string>& args, const std::string& params_str,
                       const std::string& out_path, bool json_only, std::ostream& out,
                       std::ostream& err) {
  Timer timer;
  const auto p = parse_params_list(params_str);
  const auto report = moments::moments_report(p);

  nlohmann::json j = base_report(args, fnv1a64_hex(params_str));
  j["params"] = params_json(p);
  j["moments"] = {{"mean_x", report.mean_x},
                  {"mean_y", report.mean_y},
                  {"var_x", report.var_x},
                  {"var_y", report.var_y},
                  {"corr_xy", report.corr_xy}};
  j["wall_ms"] = timer.ms();

  if (!json_only) {
    char line[128];
    std::snprintf(line, sizeof(line), "  E(X)  %-14.6f Var(X) %-16.4f\n", report.mean_x,
                  report.var_x);
    out << line;
    std::snprintf(line, sizeof(line), "  E(Y)  %-14.6f Var(Y) %-16.4f\n", report.mean_y,
                  report.var_y);
    out << line;
    std::snprintf(line, sizeof(line), "  Corr(X, Y) %.6f\n", report.corr_xy);
    out << line;
  }
  if (!emit_json(j, out_path, out, err)) return 1;
  return 0;
}

inline int cmd_verify(const std::vector<std::string>& args, const std::string& params_str,
                      double t, std::size_t draws, std::uint64_t seed,
                      const std::string& out_path, bool json_only, std::ostream& out,
                      std::ostream& err) {
  Timer timer;
  const auto p = parse_params_list(params_str);

  const double quad = model::tail_prob(t, p);
  const double dquad = model::tail_prob_double_integral(t, p);
  simulation::Rng rng(seed);
  const auto mc = simulation::mc_tail_prob(t, p, draws, rng);

  std::vector<std::string> notes;
  if (draws < 10000) {
    notes.push_back("insufficient draws for a reliable 3-sigma check (need at least 10000)");
  }
  const double quad_diff = std::abs(quad - dquad);
  const bool quad_ok = quad_diff <= 1e-6;
  const double mc_diff = std::abs(quad - mc.estimate);
  const bool mc_ok = mc_diff <= 3.0 * std::max(mc.std_error, 1e-300);
  const bool pass = quad_ok && mc_ok;

  nlohmann::json j = base_report(args, fnv1a64_hex(params_str));
  j["t"] = t;
  j["draws"] = draws;
  j["tail_prob_quadrature"] = quad;
  j["tail_prob_double_quadrature"] = dquad;
  j["tail_prob_mc"] = mc.estimate;
  j["mc_std_error"] = mc.std_error;
  j["quadrature_agreement"] = quad_ok;
  j["mc_within_3sigma"] = mc_ok;
  j["pass"] = pass;
  j["notes"] = notes;
  j["wall_ms"] = timer.ms();

  if (!json_only) {
    char line[160];
    out << "tail probability Pr(" << t << " < X < Y):\n";
    std::snprintf(line, sizeof(line), "  single quadrature  %.9f\n", quad);
    out << line;
    std::snprintf(line, sizeof(line), "  double quadrature  %.9f   |diff| %.3g (tol 1e-6)  %s\n",
                  dquad, quad_diff, quad_ok ? "PASS" : "FAIL");
    out << line;
    std::snprintf(line, sizeof(line), "  monte carlo        %.9f +- %.3g  |diff| %.3g (3 sigma)  %s\n",
                  mc.estimate, mc.std_error, mc_diff, mc_ok ? "PASS" : "FAIL");
    out << line;
    for (const auto& n : notes) out << "  note: " << n << "\n";
    out << (pass ? "PASS" : "FAIL") << "\n";
  }
  if (!emit_json(j, out_path, out, err)) return 1;
  return pass ? 0 : 2;
}

}  // namespace detail

// Run the CLI on the given arguments (program name excluded).  All console
// output goes to the supplied streams, so tests can drive this in-process.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"bivariate Weibull survival model with a terminating event: "
               "fitting, simulation, moments, verification"};
  app.set_version_flag("--version", BIWEIBULL_VERSION);
  app.require_subcommand(1);

  std::string data_path, out_path, init_str, params_str;
  int restarts = 5;
  std::uint64_t seed = 20140615;
  std::size_t n_subjects = 0;
  double end_time = 0.0;
  double t_check = 100.0;
  std::size_t draws = 1000000;
  bool json_only = false;

  auto* fit = app.add_subcommand("fit", "fit the model to a CSV dataset");
  fit->add_option("--data", data_path, "input CSV (id,wait_time,survival_time,transplant,dead)")
      ->required();
  fit->add_option("--out", out_path, "write the JSON report here (default: stdout)");
  fit->add_option("--init", init_str, "starting point alpha,lambda1,gamma1,lambda2,gamma2");
  fit->add_option("--restarts", restarts, "jittered restarts beyond the first")
      ->check(CLI::NonNegativeNumber);
  fit->add_option("--seed", seed, "seed for the restart jitter");
  fit->add_flag("--json-only", json_only, "suppress the human-readable table");

  auto* sim = app.add_subcommand("simulate", "generate a synthetic study dataset as CSV");
  sim->add_option("--params", params_str, "alpha,lambda1,gamma1,lambda2,gamma2")->required();
  sim->add_option("--n", n_subjects, "number of subjects")->required();
  sim->add_option("--end-time", end_time, "study end time in days")->required();
  sim->add_option("--seed", seed, "RNG seed");
  sim->add_option("--out", out_path, "write the CSV here (default: stdout)");

  auto* mom = app.add_subcommand("moments", "means, variances, and correlation of (X, Y)");
  mom->add_option("--params", params_str, "alpha,lambda1,gamma1,lambda2,gamma2")->required();
  mom->add_option("--out", out_path, "write the JSON report here (default: stdout)");
  mom->add_flag("--json-only", json_only, "suppress the human-readable table");

  auto* ver = app.add_subcommand("verify",
                                 "cross-check the tail probability: quadrature vs direct "
                                 "double integral vs Monte Carlo");
  ver->add_option("--params", params_str, "alpha,lambda1,gamma1,lambda2,gamma2")->required();
  ver->add_option("--t", t_check, "time point of Pr(t < X < Y)");
  ver->add_option("--draws", draws, "Monte-Carlo sample size");
  ver->add_option("--seed", seed, "RNG seed");
  ver->add_option("--out", out_path, "write the JSON report here (default: stdout)");
  ver->add_flag("--json-only", json_only, "suppress the human-readable table");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("biweibull");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(fit)) {
      return detail::cmd_fit(args, data_path, out_path, init_str, restarts, seed, json_only, out,
                             err);
    }
    if (app.got_subcommand(sim)) {
      return detail::cmd_simulate(params_str, n_subjects, end_time, seed, out_path, out, err);
    }
    if (app.got_subcommand(mom)) {
      return detail::cmd_moments(args, params_str, out_path, json_only, out, err);
    }
    return detail::cmd_verify(args, params_str, t_check, draws, seed, out_path, json_only, out,
                              err);
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

inline int run(int argc, char** argv) {
  return run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}

}  // namespace biweibull::cli
