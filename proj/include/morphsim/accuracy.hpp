#pragma once

// Point-pair comparison of experiment and simulation: per-pair error,
// accuracy and Student-t confidence intervals on the mean accuracy.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "morphsim/grid_sim.hpp"

namespace morphsim {

struct PointPair {
  std::string label;
  std::string group;
  double experiment_mm = 0.0;
  std::optional<double> simulation_mm;
  /// Point references into a deformed state: a design node id or "member@t" with t in [0, 1].
  std::string point_a;
  std::string point_b;
  /// Error percentage as published alongside the distances, if any.
  std::optional<double> listed_error_percent;
};

/// 100 * |experiment - simulation| / experiment.
double pair_error(double experiment_mm, double simulation_mm);

Vec3 resolve_point(const DeformedState& state, const std::string& ref);

/// Deformed distances of the referenced point pairs (mm).
std::vector<double> measure_state(const DeformedState& state, const std::vector<PointPair>& pairs);

/// Fills simulation_mm of every pair that carries point references.
void measure_pairs(const DeformedState& state, std::vector<PointPair>& pairs);

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
};

/// mean +- t(n-1) * s / sqrt(n) at the given two-sided level.
ConfidenceInterval confidence_interval(const std::vector<double>& values, double level = 0.95);

/// Which error percentage feeds the accuracy statistics.
enum class ErrorBasis { recomputed, listed };
std::string to_string(ErrorBasis basis);
ErrorBasis error_basis_from_string(const std::string& s);

/// Listed and recomputed errors further apart than this (percentage points) are flagged.
inline constexpr double kListedErrorTolerance = 0.01;

struct ReportRow {
  std::string label;
  std::string group;
  double experiment_mm = 0.0;
  double simulation_mm = 0.0;
  double error_percent = 0.0;  // recomputed from the distances
  std::optional<double> listed_error_percent;
  bool flagged = false;  // listed value disagrees with the distances
  double accuracy = 0.0;  // 1 - error/100 on the chosen basis
};

struct AccuracyReport {
  std::vector<ReportRow> rows;
  ErrorBasis basis = ErrorBasis::recomputed;
  double level = 0.95;
  double mean_accuracy = 0.0;
  ConfidenceInterval ci;
  int n = 0;

  std::vector<std::string> flagged_labels() const;
};

/// Pairs must all have simulation distances. An empty group selects every pair.
AccuracyReport build_report(const std::vector<PointPair>& pairs, ErrorBasis basis = ErrorBasis::recomputed,
                            double level = 0.95, const std::string& group = "");

/// Distinct group names in order of first appearance.
std::vector<std::string> pair_groups(const std::vector<PointPair>& pairs);

/// Columns: label, experiment_mm and either simulation_mm or point_a,point_b;
/// optional group and listed_error_percent.
std::vector<PointPair> parse_measurements_text(const std::string& text);
std::vector<PointPair> parse_measurements_csv(const std::filesystem::path& path);

std::string report_to_json(const AccuracyReport& report);
std::string report_to_table(const AccuracyReport& report);

}  // namespace morphsim
