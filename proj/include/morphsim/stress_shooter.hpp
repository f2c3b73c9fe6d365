#pragma once

// Identification of the initial residual stress from triggering measurements
// by shooting on forward simulations of single bending units.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "morphsim/grid_model.hpp"
#include "morphsim/grid_sim.hpp"

namespace morphsim {

struct TriggeringObservation {
  BendingUnitSpec unit;  // geometry and materials; sigma0 ignored
  double measured_end_distance = 0.0;  // mm
  double temperature_c = 80.0;

  double actuator_ratio() const { return unit.actuator_ratio; }
  void validate() const;
};

enum class Coupling { reselect, frozen };
std::string to_string(Coupling c);
Coupling coupling_from_string(const std::string& s);

struct ShooterConfig {
  double tol_mm = 0.5;
  int max_iter = 60;
  /// Trials run the beam solver on a cantilevered unit with gravity instead of the closed-form arc.
  bool high_fidelity = false;
  Coupling coupling = Coupling::reselect;
  /// Start of the search; the frozen unloading curve is taken here. Defaults to the family midpoint.
  std::optional<double> initial_sigma0;
  /// Iteration stops once the bracket is narrower than this (MPa).
  double sigma_tol = 1e-7;
  /// Central-difference step for mismatch slopes with several observations (MPa).
  double fd_step = 1e-5;
  int segments = 16;
  SolverConfig solver;

  void validate() const;
};

struct ShooterTrial {
  double sigma0 = 0.0;
  std::vector<double> distances;  // simulated, one per observation
  double objective = 0.0;         // root function value at sigma0
};

struct ShooterResult {
  double sigma0 = 0.0;
  double residual = 0.0;  // max |mismatch| at sigma0, mm
  int iterations = 0;
  bool converged = false;
  std::vector<ShooterTrial> history;
};

/// Simulated end distance of an observation's unit at sigma0.
double simulate_end_distance(const TriggeringObservation& obs, double sigma0, const MaterialCard& card,
                             const ShooterConfig& config = {});

/// Simulated minus measured end distance (mm).
double mismatch(const TriggeringObservation& obs, double sigma0, const MaterialCard& card,
                const ShooterConfig& config = {});

/// Finds the sigma0 that minimises the squared mismatches over all observations.
/// The card is the actuator material; other materials named by the units come from `others`.
ShooterResult shoot_residual_stress(const std::vector<TriggeringObservation>& obs, const MaterialCard& card,
                                    const ShooterConfig& config = {}, const MaterialSet& others = {});

/// Observation CSV with columns actuator_ratio,distance_mm,temp_c. Each row copies `base` geometry.
std::vector<TriggeringObservation> parse_observations_csv(const std::filesystem::path& path,
                                                          const BendingUnitSpec& base);
std::vector<TriggeringObservation> parse_observations_text(const std::string& text, const BendingUnitSpec& base);

std::string shooter_result_to_json(const ShooterResult& result, const ShooterConfig& config,
                                   const std::string& material);

}  // namespace morphsim
