#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mixedcurv/mixedcurv.hpp"

namespace mctest {

using namespace mixedcurv;

inline Scenario scenario_json(const std::string& text) { return scenario_from_json(nlohmann::ordered_json::parse(text)); }

template <int N>
PointGeometry<N> geom(const Scenario& sc, const std::vector<double>& x, const std::vector<double>* dir = nullptr) {
  const MetricField g = sc.field();
  return point_geometry<N>(x, g, dir);
}

// A few generic points of the standard 2pi box.
inline std::vector<std::vector<double>> sample_points(int n) {
  const double base[][4] = {{0.3, 1.7, 4.1, 2.2}, {2.9, 5.3, 0.7, 1.1}, {4.4, 0.2, 3.3, 5.9}, {5.8, 3.6, 2.4, 0.5}};
  std::vector<std::vector<double>> out;
  for (const auto& b : base) out.emplace_back(b, b + n);
  return out;
}

}  // namespace mctest
