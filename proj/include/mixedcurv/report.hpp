#pragma once

// Run reports: gated checks with their tolerances, free-form info lines, a
// scenario echo, and CSV tables. Numbers in CSV use %.17g so reruns with the
// same summation order are byte-identical.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mixedcurv/chart.hpp"

namespace mixedcurv {

inline constexpr const char* kVersion = "0.3.0";

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v == 0.0 ? 0.0 : v);
  return buf;
}
inline std::string sci(double v) { return fmt("%.6e", v); }
inline std::string exact(double v) { return fmt("%.17g", v); }

struct Check {
  enum class Bound { at_most, at_least };
  std::string name;
  double value = 0.0;
  double tol = 0.0;
  std::string tol_key;
  Bound bound = Bound::at_most;
  bool gated = true;
  std::vector<double> where;  // grid point of the worst value, if any
  std::string note;

  // NaN never passes a gate.
  bool pass() const {
    if (!gated) return true;
    return bound == Bound::at_most ? value <= tol : value >= tol;
  }
};

// One residual field sampled on the whole grid.
struct FieldTable {
  std::string check;
  std::vector<double> values;
};

class RunReport {
 public:
  std::string command;
  std::vector<std::pair<std::string, std::string>> echo;
  std::vector<Check> checks;
  std::vector<std::string> info;
  std::vector<FieldTable> fields;
  double seconds = 0.0;

  explicit RunReport(std::string cmd, const std::map<std::string, double>* overrides = nullptr)
      : command(std::move(cmd)), overrides_(overrides) {}

  // Looks up a tolerance (scenario override or default) and records it.
  double tol(const std::string& key, double fallback) {
    double v = fallback;
    if (overrides_) {
      auto it = overrides_->find(key);
      if (it != overrides_->end()) v = it->second;
    }
    used_[key] = v;
    return v;
  }
  const std::map<std::string, double>& tolerances() const { return used_; }

  Check& gate(std::string name, double value, const std::string& key, double fallback,
              std::vector<double> where = {}, Check::Bound bound = Check::Bound::at_most) {
    Check c;
    c.name = std::move(name);
    c.value = value;
    c.tol_key = key;
    c.tol = tol(key, fallback);
    c.bound = bound;
    c.where = std::move(where);
    checks.push_back(std::move(c));
    return checks.back();
  }
  Check& note(std::string name, double value, std::string text = {}, std::vector<double> where = {}) {
    Check c;
    c.name = std::move(name);
    c.value = value;
    c.gated = false;
    c.note = std::move(text);
    c.where = std::move(where);
    checks.push_back(std::move(c));
    return checks.back();
  }
  void line(std::string s) { info.push_back(std::move(s)); }
  void field(std::string check, std::vector<double> values) { fields.push_back({std::move(check), std::move(values)}); }

  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass()) return false;
    return true;
  }
  int failures() const {
    int f = 0;
    for (const auto& c : checks) f += c.pass() ? 0 : 1;
    return f;
  }

  void write_text(std::ostream& os, bool with_timing = true) const {
    os << "mixedcurv " << kVersion << "  command: " << command << "\n";
    for (const auto& [k, v] : echo) os << "  " << k << ": " << v << "\n";
    os << "tolerances:\n";
    for (const auto& [k, v] : used_) os << "  " << k << " = " << sci(v) << "\n";
    os << "checks:\n";
    for (const auto& c : checks) {
      os << "  [" << (c.gated ? (c.pass() ? "PASS" : "FAIL") : "info") << "] " << c.name << " = " << sci(c.value);
      if (c.gated) os << (c.bound == Check::Bound::at_most ? " <= " : " >= ") << sci(c.tol) << " (" << c.tol_key << ")";
      if (!c.where.empty()) os << " at " << point_string(c.where);
      if (!c.note.empty()) os << "  " << c.note;
      os << "\n";
    }
    if (!info.empty()) {
      os << "details:\n";
      for (const auto& s : info) os << "  " << s << "\n";
    }
    os << "result: " << (all_pass() ? "PASS" : "FAIL") << " (" << failures() << " failed of " << gated_count()
       << " gated)\n";
    if (with_timing) os << "time: " << fmt("%.3f", seconds) << " s\n";
  }

  // Summary table: one row per check, coordinates of the worst point (blank if none).
  void write_csv(std::ostream& os, int n) const {
    header(os, n);
    for (const auto& c : checks) {
      for (int i = 0; i < n; ++i) os << (static_cast<std::size_t>(i) < c.where.size() ? exact(c.where[static_cast<std::size_t>(i)]) : "") << ",";
      os << quote(c.name) << "," << exact(c.value) << "\n";
    }
  }

  // Field table: one row per grid point and field.
  void write_fields_csv(std::ostream& os, const PeriodicChart& chart) const {
    header(os, chart.n);
    for (const auto& f : fields)
      for (std::size_t p = 0; p < f.values.size(); ++p) {
        for (double x : chart.point(p)) os << exact(x) << ",";
        os << quote(f.check) << "," << exact(f.values[p]) << "\n";
      }
  }

  static std::string point_string(const std::vector<double>& x) {
    std::string s = "(";
    for (std::size_t i = 0; i < x.size(); ++i) s += (i ? ", " : "") + fmt("%.6g", x[i]);
    return s + ")";
  }

 private:
  const std::map<std::string, double>* overrides_ = nullptr;
  std::map<std::string, double> used_;

  int gated_count() const {
    int g = 0;
    for (const auto& c : checks) g += c.gated ? 1 : 0;
    return g;
  }
  static void header(std::ostream& os, int n) {
    for (int i = 0; i < n; ++i) os << "x" << i + 1 << ",";
    os << "check,residual\n";
  }
  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }
};

// Max |v| over a grid field and the point where it occurs (first one on ties).
inline std::pair<double, std::vector<double>> field_max(const std::vector<double>& v, const PeriodicChart& chart) {
  double m = -1.0;
  std::size_t at = 0;
  for (std::size_t p = 0; p < v.size(); ++p) {
    const double a = std::abs(v[p]);
    if (a > m || std::isnan(a)) {
      m = a;
      at = p;
      if (std::isnan(a)) break;
    }
  }
  if (v.empty()) return {0.0, {}};
  return {m, chart.point(at)};
}

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

}  // namespace mixedcurv
