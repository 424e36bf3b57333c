#pragma once

// Command runner behind the `mixedcurv` executable. Kept in a header so the
// test suite can drive it in-process.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mixedcurv/report.hpp"
#include "mixedcurv/variational.hpp"

namespace mixedcurv::cli {

enum Exit : int { kPass = 0, kToleranceFailure = 1, kParseError = 2, kNumericalFault = 3 };

struct Options {
  std::string command;
  std::string scenario;
  int grid = 0;
  int threads = 1;
  bool ordered_reduce = false;
  bool dump_fields = false;
  std::string out_dir;
  std::string mode;
  bool quiet = false;
};

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> c = {"check-identities", "check-variations", "el-residual", "einstein",
                                             "mu-solve",         "optimize",         "action"};
  return c;
}

inline const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> b = {"flat_product", "multiwarped_diagonal", "nonintegrable_heisenberg",
                                             "block_conformal", "warp2d"};
  return b;
}

// A path to a JSON file, or the bare name of a built-in scenario.
inline Scenario resolve_scenario(const std::string& arg) {
  if (std::filesystem::exists(arg)) return load_scenario(arg);
  for (const auto& b : builtin_names())
    if (arg == b) return builtin_scenario(b);
  throw ParseError("cannot open scenario file '" + arg + "'");
}

inline std::string join(const std::vector<double>& v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt("%.12g", v[i]);
  return s + ")";
}
inline std::string join(const std::vector<int>& v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s + ")";
}

inline void echo_scenario(RunReport& rep, const Scenario& sc) {
  rep.echo.push_back({"scenario", sc.name});
  rep.echo.push_back({"family", sc.family.name});
  rep.echo.push_back({"n", std::to_string(sc.chart.n)});
  rep.echo.push_back({"dims", join(sc.family.split.dims)});
  rep.echo.push_back({"grid", join(sc.chart.grid_res)});
  std::string th = "(";
  for (std::size_t m = 0; m < sc.theta.size(); ++m)
    th += (m ? ", " : "") + sc.family.param_names[m] + "=" + fmt("%.12g", sc.theta[m]);
  rep.echo.push_back({"theta", th + ")"});
  rep.echo.push_back({"seed", std::to_string(sc.seed)});
  const auto& a = sc.action;
  rep.echo.push_back({"action", std::string(a.perturbed ? "perturbed" : "mixed-only") + " Lambda=" + fmt("%.12g", a.Lambda) +
                                    " coupling=" + fmt("%.12g", a.coupling) + " epsilon=" + fmt("%.12g", a.epsilon) +
                                    " L=" + fmt("%.12g", a.L_matter) + (a.Theta ? " Theta=field" : " Theta=0")});
}

// Tolerance key and default for an identity check name.
inline std::pair<std::string, double> identity_tolerance(const std::string& name) {
  if (name == "E-PW3-k - sum E-PW") return {"identity.pw_sum", 1e-10};
  if (name == "E-PW3-k") return {"identity.pw3", 1e-7};
  if (name.rfind("E-PW[", 0) == 0) return {"identity.pw", 1e-7};
  if (name.rfind("E-genRicN", 0) == 0) return {"identity.genric", 1e-9};
  if (name.rfind("S_mix", 0) == 0) return {"identity.smix", 1e-9};
  return {"identity.trace", 1e-9};
}

inline void run_check_identities(const Scenario& sc, RunReport& rep, const ExecPolicy& pol, bool dump) {
  const auto r = identity_suite(sc, pol);
  for (std::size_t c = 0; c < r.names.size(); ++c) {
    const auto [key, def] = identity_tolerance(r.names[c]);
    const auto [m, where] = field_max(r.fields[c], sc.chart);
    rep.gate(r.names[c], m, key, def, where);
    rep.line(r.names[c] + ": max " + sci(m) + ", L2 " + sci(r.summary[c].l2));
    if (dump) rep.field(r.names[c], r.fields[c]);
  }
  const double rel = r.integral_norm > 0.0 ? std::abs(r.integral) / r.integral_norm : std::abs(r.integral);
  rep.gate("integral formula |int| / int|.|", rel, "identity.integral", 1e-6);
  rep.line("integral " + sci(r.integral) + ", L1 normalizer " + sci(r.integral_norm));
  rep.line("S_mix range [" + sci(r.min_S_mix) + ", " + sci(r.max_S_mix) + "]");
  for (const auto& [name, v] : r.tensor_max) rep.note("max |" + name + "|", v);
}

inline std::vector<std::vector<double>> family_directions(const Scenario& sc) {
  if (!sc.directions.empty()) return sc.directions;
  std::vector<std::vector<double>> d;
  for (std::size_t m = 0; m < sc.family.num_params(); ++m) {
    std::vector<double> e(sc.family.num_params(), 0.0);
    e[m] = 1.0;
    d.push_back(e);
  }
  return d;
}

inline void gate_first_variation(RunReport& rep, const std::string& label, const FirstVariationReport& fv) {
  const double diff = std::abs(fv.lhs - fv.rhs);
  const double abs_tol = rep.tol("first_variation.absolute", 1e-10);
  if (diff <= abs_tol)
    rep.gate("first variation |lhs - rhs| " + label, diff, "first_variation.absolute", 1e-10).note =
        "both sides below the absolute floor";
  else
    rep.gate("first variation relative error " + label, fv.rel_error, "first_variation.relative", 1e-4);
  rep.gate("divergence-term shift " + label, fv.divergence_shift, "first_variation.divergence", 1e-6);
  rep.line("first variation " + label + ": FD " + exact(fv.lhs) + ", pairing " + exact(fv.rhs) +
           ", pairing with unmodified coefficient " + exact(fv.rhs_unmodified) + ", int Div " + sci(fv.divergence_integral));
}

inline void run_check_variations(const Scenario& sc, RunReport& rep, const ExecPolicy& pol, bool dump) {
  const auto dirs = family_directions(sc);
  for (std::size_t d = 0; d < dirs.size(); ++d) {
    const std::string label = "[dir " + std::to_string(d + 1) + "]";
    rep.line("direction " + std::to_string(d + 1) + " = " + join(dirs[d]));
    const auto blocks = variation_blocks(sc.family, dirs[d]);
    if (blocks.size() == 1) {
      const auto suite = variation_suite(sc, dirs[d], 1e-3, pol);
      for (const auto& c : suite.checks) {
        std::vector<double> diff(c.lhs.size());
        for (std::size_t p = 0; p < diff.size(); ++p) diff[p] = c.lhs[p] - c.rhs[p];
        const auto where = field_max(diff, sc.chart).second;
        rep.gate(c.name + " " + label, c.rel_error, "variation.relative", 1e-5, where);
        if (!c.oracle_ok) rep.note("oracle fault (Richardson gap) " + c.name + " " + label, c.richardson_gap);
        if (dump) rep.field(c.name + " " + label, std::move(diff));
      }
    } else {
      rep.line("direction " + std::to_string(d + 1) + " is not a D_j-variation (moves " +
               std::to_string(blocks.size()) + " blocks); formula suite skipped");
    }
    const double f1 = frame_evolution_check(sc, dirs[d], 1e-3, pol);
    const double f2 = frame_evolution_check(sc, dirs[d], 5e-4, pol);
    rep.note("frame evolution dt=1e-3 " + label, f1);
    rep.note("frame evolution dt=5e-4 " + label, f2);
    if (f1 > 1e-13)
      rep.gate("frame evolution order ratio " + label, f1 / f2, "frame_evolution.ratio_min", 3.0, {},
               Check::Bound::at_least);
    gate_first_variation(rep, label, first_variation_identity(sc, dirs[d], 1e-3, pol));
  }
  const auto rnd = random_directions(sc, sc.random_directions);
  for (std::size_t d = 0; d < rnd.size(); ++d) {
    const std::string label = "[random " + std::to_string(d + 1) + "]";
    rep.line("random direction " + std::to_string(d + 1) + " = " + join(rnd[d]));
    gate_first_variation(rep, label, first_variation_identity(sc, rnd[d], 1e-3, pol));
  }
}

inline ELMode parse_mode(const std::string& m) {
  if (m == "free") return ELMode::free;
  if (m == "volume_preserving" || m == "volume-preserving") return ELMode::volume_preserving;
  throw ParseError("mode must be free or volume_preserving, got '" + m + "'");
}

inline void report_el(const Scenario& sc, const ELResidualReport& r, RunReport& rep, bool dump) {
  for (int j = 0; j < r.k; ++j) {
    const auto J = static_cast<std::size_t>(j);
    const std::string tag = "[" + std::to_string(j + 1) + "]";
    rep.gate("EL residual " + tag, r.residual_max[J], "el.residual", 1e-7, field_max(r.residual_field[J], sc.chart).second);
    rep.gate("assembly discrepancy " + tag, r.discrepancy_max[J], "el.discrepancy", 1e-8,
             field_max(r.discrepancy_field[J], sc.chart).second);
    rep.note("EL residual, unmodified rhs " + tag, r.unmodified_residual_max[J]);
    rep.note("lambda " + tag, r.lambda[J]);
    rep.note("lambda spread " + tag, r.lambda_spread[J]);
    rep.line("EL " + tag + ": residual L2 " + sci(r.residual_l2[J]) + ", lambda " + sci(r.lambda[J]) + ", spread " +
             sci(r.lambda_spread[J]) + (r.mode == ELMode::volume_preserving ? " (fitted)" : " (free mode, lambda = 0)"));
    if (dump) {
      rep.field("EL residual " + tag, r.residual_field[J]);
      rep.field("assembly discrepancy " + tag, r.discrepancy_field[J]);
      rep.field("rhs scalar " + tag, r.rhs_field[J]);
    }
  }
}

inline void run_einstein(const Scenario& sc, RunReport& rep, ELMode mode, const ExecPolicy& pol, bool dump) {
  const auto r = assemble_einstein(sc, sc.action, mode, pol);
  report_el(sc, r, rep, dump);
  rep.gate("Einstein residual", r.einstein_max, "einstein.residual", 1e-7, field_max(r.einstein_field, sc.chart).second);
  rep.gate("mu-system residual", r.mu_system_residual, "mu.system", 1e-12);
  for (int j = 0; j < r.k; ++j) {
    const auto J = static_cast<std::size_t>(j);
    rep.note("mu spread [" + std::to_string(j + 1) + "]", r.mu_spread[J],
             r.mu_spread[J] < 1e-9 ? "constant on the grid" : "not constant on the grid");
    if (dump) rep.field("mu [" + std::to_string(j + 1) + "]", r.mu[J]);
  }
  if (r.k == 2 && sc.chart.n > 2) {
    rep.gate("mu vs k=2 closed forms", r.mu_example_diff, "mu.example", 1e-9);
    rep.note("mu vs k=2 closed forms, labels exchanged", r.mu_example_swapped_diff);
    rep.note("S_D vs k=2 closed form", r.SD_example_diff);
    rep.note("mu from unmodified rhs vs k=2 closed forms", r.mu_example_diff_unmodified_rhs);
  }
  if (dump) rep.field("Einstein residual", r.einstein_field);
}

inline nlohmann::ordered_json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file '" + path + "'");
  try {
    nlohmann::ordered_json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
}

inline void run_mu_solve(const nlohmann::ordered_json& root, RunReport& rep) {
  int n = 0;
  std::vector<int> dims;
  std::vector<double> a;
  try {
    const auto& j = root.contains("mu") ? root.at("mu") : root;
    dims = j.at("dims").get<std::vector<int>>();
    n = j.contains("n") ? j.at("n").get<int>() : 0;
    if (!j.contains("n"))
      for (int d : dims) n += d;
    a = j.contains("a") ? j.at("a").get<std::vector<double>>() : std::vector<double>(dims.size(), 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("mu-solve input: ") + e.what());
  }
  rep.echo.push_back({"n", std::to_string(n)});
  rep.echo.push_back({"dims", join(dims)});
  rep.echo.push_back({"a", join(a)});
  MuSolution s;
  try {
    s = mu_solve(n, dims, a);
  } catch (const UnsupportedDimension&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
  rep.line("mu = " + join(s.mu));
  rep.line("closed form = " + join(s.closed_form));
  rep.line("det A = " + fmt("%.12g", s.det));
  rep.line("2^(k-1) (2-n) = " + fmt("%.12g", s.det_formula));
  double cf = 0.0;
  for (std::size_t i = 0; i < s.mu.size(); ++i) cf = std::max(cf, std::abs(s.mu[i] - s.closed_form[i]));
  rep.gate("det A vs 2^(k-1)(2-n) (relative)", std::abs(s.det - s.det_formula) / std::max(1.0, std::abs(s.det_formula)),
           "mu.det", 1e-9);
  rep.gate("closed form vs linear solve", cf, "mu.closed_form", 1e-12);
  rep.gate("linear system residual", s.system_residual, "mu.system", 1e-12);
}

inline void run_optimize(const Scenario& sc, RunReport& rep, const ExecPolicy& pol) {
  const auto& o = sc.optimize;
  rep.echo.push_back({"optimizer", "grad_tol=" + fmt("%.3g", o.grad_tol) + " max_evals=" + std::to_string(o.max_evals) +
                                       " fd_step=" + fmt("%.3g", o.fd_step) +
                                       (o.volume_constraint ? " volume penalty=" + fmt("%.3g", o.penalty) : "")});
  const auto res = optimize(sc, sc.action, o, pol);
  rep.line("theta* = " + join(res.theta));
  rep.line("J(theta*) = " + exact(res.value) + ", method " + res.method + ", " + std::to_string(res.iterations) +
           " iterations, " + std::to_string(res.evaluations) + " evaluations" + (res.converged ? "" : " (not converged)"));
  rep.gate("gradient norm at theta*", res.grad_norm, "optimize.grad", o.grad_tol);
  rep.gate("gradient norm at theta*, half FD step", res.grad_norm_recheck, "optimize.grad", o.grad_tol);
  rep.gate("objective evaluations", res.evaluations, "optimize.max_evals", o.max_evals);

  Scenario at = sc;
  at.theta = res.theta;
  const auto el = el_residual(at, parse_mode(sc.el_mode), pol);
  for (int j = 0; j < el.k; ++j) {
    const auto J = static_cast<std::size_t>(j);
    rep.note("EL residual at theta* [" + std::to_string(j + 1) + "]", el.residual_max[J]);
    rep.note("assembly discrepancy at theta* [" + std::to_string(j + 1) + "]", el.discrepancy_max[J]);
  }
  const auto dirs = random_directions(at, std::max(1, sc.random_directions));
  for (std::size_t d = 0; d < dirs.size(); ++d) {
    const auto fv = first_variation_identity(at, dirs[d], 1e-3, pol);
    rep.gate("first variation FD at theta* [random " + std::to_string(d + 1) + "]", std::abs(fv.lhs), "optimize.fv_lhs",
             1e-5);
  }
}

inline void run_action(const Scenario& sc, RunReport& rep, const ExecPolicy& pol) {
  const auto a = action_value(sc, pol);
  rep.note("action", a.value);
  rep.note("int S_mix dvol", a.total_mixed);
  rep.note("int S dvol", a.total_scalar);
  rep.note("volume", a.volume);
}

inline std::string output_dir(const Options& o) {
  if (!o.out_dir.empty()) return o.out_dir;
  if (const char* e = std::getenv("MIXEDCURV_OUT"); e && *e) return e;
  return "mixedcurv-out";
}

inline void write_outputs(const Options& o, const std::string& stem, const RunReport& rep, const PeriodicChart* chart) {
  const std::filesystem::path dir = output_dir(o);
  std::filesystem::create_directories(dir);
  const std::string base = stem + "." + o.command;
  {
    std::ofstream f(dir / (base + ".txt"));
    rep.write_text(f);
  }
  {
    std::ofstream f(dir / (base + ".csv"));
    rep.write_csv(f, chart ? chart->n : 0);
  }
  if (o.dump_fields && chart) {
    std::ofstream f(dir / (base + ".fields.csv"));
    rep.write_fields_csv(f, *chart);
  }
}

inline void print_failures(const RunReport& rep, std::ostream& err) {
  for (const auto& c : rep.checks)
    if (!c.pass()) {
      err << "mixedcurv: tolerance failure in check '" << c.name << "': " << sci(c.value)
          << (c.bound == Check::Bound::at_most ? " > " : " < ") << sci(c.tol) << " (" << c.tol_key << ")";
      if (!c.where.empty()) err << " at grid point " << RunReport::point_string(c.where);
      err << "\n";
    }
}

// Executes one command; returns the process exit code.
inline int run(const Options& o, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const Stopwatch sw;
    ExecPolicy pol{std::max(1, o.threads), o.ordered_reduce};
    if (o.command == "mu-solve") {
      const auto j = read_json(o.scenario);
      std::map<std::string, double> tols;
      if (j.contains("tolerances"))
        for (const auto& [k, v] : j.at("tolerances").items()) tols[k] = v.get<double>();
      RunReport rep(o.command, &tols);
      run_mu_solve(j, rep);
      rep.seconds = sw.seconds();
      if (!o.quiet) rep.write_text(out);
      write_outputs(o, j.value("name", std::string("mu")), rep, nullptr);
      print_failures(rep, err);
      return rep.all_pass() ? kPass : kToleranceFailure;
    }

    Scenario sc = resolve_scenario(o.scenario);
    if (o.grid > 0) {
      if (o.grid < 4) throw ParseError("--grid must be >= 4");
      sc.chart = sc.chart.with_resolution(o.grid);
    }
    RunReport rep(o.command, &sc.tolerances);
    echo_scenario(rep, sc);
    const std::string mode = o.mode.empty() ? sc.el_mode : o.mode;
    if (o.command == "check-identities") run_check_identities(sc, rep, pol, o.dump_fields);
    else if (o.command == "check-variations") run_check_variations(sc, rep, pol, o.dump_fields);
    else if (o.command == "el-residual") {
      rep.echo.push_back({"mode", mode});
      report_el(sc, el_residual(sc, parse_mode(mode), pol), rep, o.dump_fields);
    } else if (o.command == "einstein") {
      rep.echo.push_back({"mode", mode});
      run_einstein(sc, rep, parse_mode(mode), pol, o.dump_fields);
    } else if (o.command == "optimize") run_optimize(sc, rep, pol);
    else if (o.command == "action") run_action(sc, rep, pol);
    else throw ParseError("unknown command '" + o.command + "'");
    rep.seconds = sw.seconds();
    if (!o.quiet) rep.write_text(out);
    write_outputs(o, sc.name, rep, &sc.chart);
    print_failures(rep, err);
    return rep.all_pass() ? kPass : kToleranceFailure;
  } catch (const ParseError& e) {
    err << "mixedcurv: parse error: " << e.what() << "\n";
    return kParseError;
  } catch (const UnsupportedDimension& e) {
    err << "mixedcurv: unsupported input: " << e.what() << "\n";
    return kParseError;
  } catch (const NumericalFault& e) {
    err << "mixedcurv: numerical fault: " << e.what() << "\n";
    return kNumericalFault;
  } catch (const std::invalid_argument& e) {
    err << "mixedcurv: invalid input: " << e.what() << "\n";
    return kParseError;
  } catch (const std::exception& e) {
    err << "mixedcurv: numerical fault: " << e.what() << "\n";
    return kNumericalFault;
  }
}

// Full argv entry point.
inline int main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"mixedcurv: mixed scalar curvature of almost multi-product structures"};
  Options o;
  app.add_option("command", o.command, "check-identities | check-variations | el-residual | einstein | mu-solve | optimize | action")
      ->required()
      ->check(CLI::IsMember(commands()));
  app.add_option("scenario", o.scenario, "scenario JSON file (or a built-in scenario name)")->required();
  app.add_option("--grid", o.grid, "override the grid resolution on every axis");
  app.add_option("--threads", o.threads, "worker threads for grid evaluation")->check(CLI::PositiveNumber);
  app.add_flag("--ordered-reduce", o.ordered_reduce, "sum grid values in grid order");
  app.add_flag("--dump-fields", o.dump_fields, "write per-point residual fields as CSV");
  app.add_option("--out", o.out_dir, "output directory (default: $MIXEDCURV_OUT or ./mixedcurv-out)");
  app.add_option("--mode", o.mode, "el-residual/einstein mode: free | volume_preserving");
  app.add_flag("--quiet", o.quiet, "do not print the report to stdout");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kParseError;
  }
  return run(o, out, err);
}

}  // namespace mixedcurv::cli
