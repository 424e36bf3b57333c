#pragma once

// Scenarios: chart + splitting + metric family + action settings, either
// from the built-in library or from JSON files.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixedcurv/chart.hpp"
#include "mixedcurv/expr.hpp"
#include "mixedcurv/metric.hpp"

namespace mixedcurv {

struct ActionConfig {
  double Lambda = 0.0;
  double coupling = 1.0;
  double epsilon = 0.0;
  double L_matter = 0.0;
  bool perturbed = false;
  // Optional energy-momentum field, frame-free coordinate components Theta_{mu nu}.
  std::optional<std::vector<std::vector<Expr>>> Theta;

  void validate() const {
    if (!(coupling > 0.0)) throw std::invalid_argument("action coupling must be positive");
  }
};

struct OptimizeOptions {
  double grad_tol = 1e-6;
  int max_evals = 200;
  double fd_step = 1e-4;
  bool volume_constraint = false;
  double penalty = 100.0;  // weight of log(Vol / Vol_0)^2
};

struct Scenario {
  std::string name;
  PeriodicChart chart;
  MetricFamily family;
  std::vector<double> theta;                    // evaluation point in parameter space
  std::vector<std::vector<double>> directions;  // parameter directions for variation checks
  ActionConfig action;
  std::map<std::string, double> tolerances;
  std::uint64_t seed = 20240601;
  int random_directions = 5;  // extra random family directions for the first-variation check
  std::string el_mode = "free";
  OptimizeOptions optimize;

  double tol(const std::string& key, double fallback) const {
    auto it = tolerances.find(key);
    return it == tolerances.end() ? fallback : it->second;
  }
  MetricField field() const { return MetricField(chart, family, theta); }
  MetricField field(const std::vector<double>& th) const { return MetricField(chart, family, th); }

  void validate() const {
    chart.validate();
    family.validate();
    action.validate();
    if (chart.n != family.n()) throw std::invalid_argument("chart and metric family dimensions differ");
    if (theta.size() != family.num_params()) throw std::invalid_argument("theta has wrong number of entries");
    for (const auto& d : directions)
      if (d.size() != family.num_params()) throw std::invalid_argument("variation direction has wrong number of entries");
  }
};

namespace detail {

inline Expr E(const std::string& s, const std::vector<std::string>& params) { return Expr::parse(s, params); }

inline std::vector<std::vector<std::vector<Expr>>> parse_blocks(const std::vector<std::vector<std::vector<std::string>>>& src,
                                                               const std::vector<std::string>& params) {
  std::vector<std::vector<std::vector<Expr>>> out;
  for (const auto& blk : src) {
    std::vector<std::vector<Expr>> b;
    for (const auto& row : blk) {
      std::vector<Expr> r;
      for (const auto& s : row) r.push_back(E(s, params));
      b.push_back(std::move(r));
    }
    out.push_back(std::move(b));
  }
  return out;
}

inline SplittingFrame parse_seeds(const std::vector<int>& dims, const std::vector<std::vector<std::string>>& seeds) {
  SplittingFrame s;
  s.dims = dims;
  for (const auto& v : seeds) {
    std::vector<Expr> r;
    for (const auto& c : v) r.push_back(E(c, {}));
    s.seeds.push_back(std::move(r));
  }
  return s;
}

}  // namespace detail

// flat_product: coordinate splitting of T^n, G_i = exp(2 p_i) I.
inline MetricFamily flat_product_family(const std::vector<int>& dims) {
  MetricFamily f;
  f.name = "flat_product";
  f.split = SplittingFrame::coordinate(dims);
  for (std::size_t i = 0; i < dims.size(); ++i) f.param_names.push_back("p" + std::to_string(i + 1));
  f.theta0.assign(dims.size(), 0.0);
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const auto d = static_cast<std::size_t>(dims[i]);
    std::vector<std::vector<Expr>> G(d, std::vector<Expr>(d));
    for (std::size_t a = 0; a < d; ++a) G[a][a] = detail::E("exp(2*" + f.param_names[i] + ")", f.param_names);
    f.blocks.push_back(std::move(G));
  }
  return f;
}

// multiwarped_diagonal on T^3, dims (1,2):
//   g = e^{2a cos(y+z)} dx^2 + (c + s sin x)^2 [D2 block with perturbations b1,b2,b3]
// At theta0 (s=1, c=2, a=b=0) this is dx^2 + (2 + sin x)^2 (dy^2 + dz^2).
inline MetricFamily multiwarped_family() {
  MetricFamily f;
  f.name = "multiwarped_diagonal";
  f.split = SplittingFrame::coordinate({1, 2});
  f.param_names = {"s", "c", "a", "b1", "b2", "b3"};
  f.theta0 = {1.0, 2.0, 0.0, 0.0, 0.0, 0.0};
  f.blocks = detail::parse_blocks(
      {{{"exp(2*a*cos(y+z))"}},
       {{"(c + s*sin(x))^2*exp(2*b1*cos(y))", "(c + s*sin(x))^2*b2*sin(x+z)"},
        {"(c + s*sin(x))^2*b2*sin(x+z)", "(c + s*sin(x))^2*exp(2*b3*sin(y-z))"}}},
      f.param_names);
  return f;
}

// nonintegrable_heisenberg on T^3: seeds dx, dy + cos(x) dz, dz; dims (1,1,1).
inline MetricFamily heisenberg_family() {
  MetricFamily f;
  f.name = "nonintegrable_heisenberg";
  f.split = detail::parse_seeds({1, 1, 1}, {{"1", "0", "0"}, {"0", "1", "cos(x)"}, {"0", "0", "1"}});
  f.param_names = {"p1", "p2", "p3"};
  f.theta0 = {0.3, 0.2, 0.25};
  f.blocks = detail::parse_blocks(
      {{{"exp(2*p1*sin(y+z))"}}, {{"exp(2*p2*cos(x-z))"}}, {{"exp(2*p3*sin(x)*cos(y))"}}}, f.param_names);
  return f;
}

// block_conformal on T^3: seeds {dx, dy + cos(x) dz}, {dz}; G_i = exp(2 q_i) G_i^0(x).
inline MetricFamily block_conformal_family() {
  MetricFamily f;
  f.name = "block_conformal";
  f.split = detail::parse_seeds({2, 1}, {{"1", "0", "0"}, {"0", "1", "cos(x)"}, {"0", "0", "1"}});
  f.param_names = {"q1", "q2"};
  f.theta0 = {0.0, 0.0};
  f.blocks = detail::parse_blocks(
      {{{"exp(2*q1)*(1.5 + 0.5*sin(z))", "exp(2*q1)*0.3*cos(x)"},
        {"exp(2*q1)*0.3*cos(x)", "exp(2*q1)*(1.2 + 0.4*cos(y))"}},
       {{"exp(2*q2)*(1 + 0.5*sin(x+y))"}}},
      f.param_names);
  return f;
}

// One-parameter warp on T^2: dx^2 + (1 + th sin x)^2 dy^2.
inline MetricFamily warp2d_family(double th0 = 0.3) {
  MetricFamily f;
  f.name = "warp2d";
  f.split = SplittingFrame::coordinate({1, 1});
  f.param_names = {"th"};
  f.theta0 = {th0};
  f.blocks = detail::parse_blocks({{{"1"}}, {{"(1 + th*sin(x))^2"}}}, f.param_names);
  return f;
}

inline Scenario make_scenario(const std::string& name, MetricFamily fam, int res) {
  Scenario s;
  s.name = name;
  s.chart = PeriodicChart::torus(fam.n(), res);
  s.theta = fam.theta0;
  s.family = std::move(fam);
  return s;
}

inline Scenario builtin_scenario(const std::string& family, int res = 32) {
  if (family == "flat_product") return make_scenario(family, flat_product_family({1, 1, 1}), res);
  if (family == "multiwarped_diagonal") return make_scenario(family, multiwarped_family(), res);
  if (family == "nonintegrable_heisenberg") return make_scenario(family, heisenberg_family(), res);
  if (family == "block_conformal") return make_scenario(family, block_conformal_family(), res);
  if (family == "warp2d") return make_scenario(family, warp2d_family(), res);
  throw ParseError("unknown metric family '" + family + "'");
}

inline std::vector<std::vector<Expr>> parse_matrix(const nlohmann::ordered_json& j, const std::vector<std::string>& params) {
  std::vector<std::vector<Expr>> m;
  for (const auto& row : j) {
    std::vector<Expr> r;
    for (const auto& e : row) r.push_back(e.is_number() ? Expr::constant(e.get<double>()) : Expr::parse(e.get<std::string>(), params));
    m.push_back(std::move(r));
  }
  return m;
}

inline Scenario scenario_from_json(const nlohmann::ordered_json& j) {
  try {
    Scenario s;
    s.name = j.value("name", std::string("scenario"));
    const auto& jm = j.at("metric");
    const std::string fam = jm.at("family").get<std::string>();
    if (fam == "custom") {
      MetricFamily f;
      f.name = jm.value("name", std::string("custom"));
      std::vector<double> th0;
      if (jm.contains("params"))
        for (const auto& [k, v] : jm.at("params").items()) {
          f.param_names.push_back(k);
          th0.push_back(v.get<double>());
        }
      f.theta0 = th0;
      const auto dims = jm.at("dims").get<std::vector<int>>();
      int n = 0;
      for (int d : dims) n += d;
      if (jm.contains("seeds")) {
        f.split.dims = dims;
        for (const auto& v : jm.at("seeds")) {
          std::vector<Expr> r;
          for (const auto& c : v) r.push_back(c.is_number() ? Expr::constant(c.get<double>()) : Expr::parse(c.get<std::string>()));
          f.split.seeds.push_back(std::move(r));
        }
      } else {
        f.split = SplittingFrame::coordinate(dims);
      }
      for (const auto& b : jm.at("blocks")) f.blocks.push_back(parse_matrix(b, f.param_names));
      if (jm.contains("window")) f.window = Expr::parse(jm.at("window").get<std::string>());
      (void)n;
      s.family = std::move(f);
    } else if (fam == "flat_product" && jm.contains("dims")) {
      s.family = flat_product_family(jm.at("dims").get<std::vector<int>>());
    } else {
      s.family = builtin_scenario(fam, 4).family;
    }
    if (jm.contains("theta0")) s.family.theta0 = jm.at("theta0").get<std::vector<double>>();
    s.family.volume_preserving = jm.value("volume_preserving", false);
    s.theta = jm.contains("theta") ? jm.at("theta").get<std::vector<double>>() : s.family.theta0;

    const int n = s.family.n();
    const auto& jc = j.contains("chart") ? j.at("chart") : nlohmann::ordered_json::object();
    s.chart.n = jc.value("n", n);
    s.chart.periods.assign(static_cast<std::size_t>(s.chart.n), 2.0 * std::numbers::pi);
    if (jc.contains("periods")) {
      if (jc.at("periods").is_array()) s.chart.periods = jc.at("periods").get<std::vector<double>>();
      else s.chart.periods.assign(static_cast<std::size_t>(s.chart.n), jc.at("periods").get<double>());
    }
    s.chart.grid_res.assign(static_cast<std::size_t>(s.chart.n), 32);
    if (jc.contains("grid")) {
      if (jc.at("grid").is_array()) s.chart.grid_res = jc.at("grid").get<std::vector<int>>();
      else s.chart.grid_res.assign(static_cast<std::size_t>(s.chart.n), jc.at("grid").get<int>());
    }

    if (j.contains("variation")) {
      const auto& jv = j.at("variation");
      if (jv.contains("directions"))
        for (const auto& d : jv.at("directions")) s.directions.push_back(d.get<std::vector<double>>());
      s.random_directions = jv.value("random_directions", s.random_directions);
      if (s.random_directions < 0) throw ParseError("variation.random_directions must be >= 0");
      if (jv.contains("params"))
        for (const auto& p : jv.at("params")) {
          std::vector<double> d(s.family.num_params(), 0.0);
          bool found = false;
          for (std::size_t m = 0; m < d.size(); ++m)
            if (s.family.param_names[m] == p.get<std::string>()) d[m] = 1.0, found = true;
          if (!found) throw ParseError("unknown variation parameter '" + p.get<std::string>() + "'");
          s.directions.push_back(d);
        }
    }
    if (j.contains("action")) {
      const auto& ja = j.at("action");
      s.action.Lambda = ja.value("Lambda", 0.0);
      s.action.coupling = ja.value("coupling", 1.0);
      s.action.epsilon = ja.value("epsilon", 0.0);
      s.action.L_matter = ja.value("L_matter", 0.0);
      s.action.perturbed = ja.value("mode", std::string("mixed-only")) == "perturbed";
      if (ja.contains("Theta")) s.action.Theta = parse_matrix(ja.at("Theta"), {});
    }
    if (j.contains("optimize")) {
      const auto& jo = j.at("optimize");
      s.optimize.grad_tol = jo.value("grad_tol", s.optimize.grad_tol);
      s.optimize.max_evals = jo.value("max_evals", s.optimize.max_evals);
      s.optimize.fd_step = jo.value("fd_step", s.optimize.fd_step);
      s.optimize.volume_constraint = jo.value("volume_constraint", s.optimize.volume_constraint);
      s.optimize.penalty = jo.value("penalty", s.optimize.penalty);
      if (jo.contains("theta")) s.theta = jo.at("theta").get<std::vector<double>>();
    }
    s.el_mode = j.value("el_mode", s.el_mode);
    if (s.el_mode != "free" && s.el_mode != "volume_preserving") throw ParseError("el_mode must be free or volume_preserving");
    if (j.contains("tolerances"))
      for (const auto& [k, v] : j.at("tolerances").items()) s.tolerances[k] = v.get<double>();
    s.seed = j.value("seed", s.seed);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scenario JSON: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  }
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file '" + path + "'");
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("scenario '" + path + "': " + e.what());
  }
  return scenario_from_json(j);
}

}  // namespace mixedcurv
