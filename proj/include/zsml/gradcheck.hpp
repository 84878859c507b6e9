#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace zsml {

struct GradCheckOptions {
  /// Random shape/value configurations per check.
  std::size_t configs = 20;
  std::uint64_t seed = 0;
  double tolerance = 1e-3;
  /// Central-difference step.
  double step = 1e-6;
  /// Adds a check of an op whose backward rule is deliberately wrong.
  bool inject_fault = false;
};

struct GradCheckRow {
  std::string name;
  std::size_t configs = 0;
  std::size_t coordinates = 0;
  /// Coordinates whose ±step perturbation moved a LeakyReLU input across zero.
  std::size_t skipped = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Compares tape gradients of every op and of the three networks (dropout off)
/// with central differences of an independent double-precision forward pass.
std::vector<GradCheckRow> run_gradcheck(const GradCheckOptions& options = {});

bool all_passed(const std::vector<GradCheckRow>& rows);

/// {"tolerance":..,"passed":..,"checks":[{name,configs,coordinates,skipped,max_rel_error,passed}]}
std::string to_json(const std::vector<GradCheckRow>& rows, double tolerance);

}  // namespace zsml
