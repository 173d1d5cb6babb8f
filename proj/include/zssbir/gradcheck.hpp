#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace zssbir {

struct GradcheckOptions {
  std::uint64_t seed = 1;
  double step = 1e-4;        // central-difference h
  double tolerance = 1e-4;   // per-coordinate relative error
  // Denominator floor for the relative error, so coordinates whose true
  // gradient is ~0 are judged on absolute error instead.
  double floor = 1e-6;
  double stationarity_tolerance = 1e-6;
  std::size_t perturbations = 100;
  double perturbation_norm = 1e-2;
  // Name of a row whose analytic gradient (or fitted W) is deliberately
  // damaged; used to show the harness can fail.
  std::string corrupt;
};

struct GradcheckRow {
  std::string name;
  std::string description;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::size_t coordinates = 0;
  bool passed = false;
  std::string detail;
};

// Row names in run order.
const std::vector<std::string>& gradcheck_names();

GradcheckRow run_gradcheck_row(std::string_view name, const GradcheckOptions& opts);
std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& opts);

std::string format_gradcheck_table(const std::vector<GradcheckRow>& rows);

}  // namespace zssbir
