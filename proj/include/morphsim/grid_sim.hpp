#pragma once

// Geometrically nonlinear statics of the layered beam network and the
// two-stage sequential deformation simulation.
//
// Elements are 3D corotational beams with six degrees of freedom per node.
// Nodal rotations are stored as unit quaternions and updated multiplicatively
// with spatial rotation increments.

#include <Eigen/Geometry>
#include <Eigen/SparseCore>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "morphsim/grid_model.hpp"

namespace morphsim {

inline constexpr int kStateFormatVersion = 1;

enum class StiffnessRegime { instantaneous, long_term };
enum class StageLabel { initial, stage_a, stage_b };

std::string to_string(StiffnessRegime regime);
StiffnessRegime stiffness_regime_from_string(const std::string& s);
std::string to_string(StageLabel label);
StageLabel stage_label_from_string(const std::string& s);

struct SolverConfig {
  int load_steps = 20;
  double newton_tol = 1e-6;
  int max_newton_iter = 30;
  bool line_search = true;
  StiffnessRegime stiffness_regime = StiffnessRegime::instantaneous;
  /// Halvings of a load step allowed before a step failure becomes fatal.
  int max_step_cuts = 8;
  /// Called after each accepted Newton update with (load step, iteration, total potential, residual before the update).
  std::function<void(int, int, double, double)> observer;

  void validate() const;
};

/// Target loading of one static solve; the solver ramps to it from the initial state's levels.
struct LoadCase {
  double eigenstrain_scale = 1.0;
  bool gravity_on = true;
};

struct ElementState {
  std::string member_id;
  int segment_index = 0;
  double eigen_fraction = 0.0;  // released fraction of the eigenstrain
  double axial_force = 0.0;     // N
  double moment_y = 0.0;        // N mm, thickness-direction bending
  double moment_z = 0.0;        // N mm, in-plane bending
  double torque = 0.0;          // N mm

  bool operator==(const ElementState&) const = default;
};

struct DeformedState {
  int format_version = kStateFormatVersion;
  StageLabel stage = StageLabel::initial;
  std::vector<Vec3> positions;
  std::vector<Eigen::Quaterniond> rotations;
  std::vector<std::string> node_ids;  // design node id per mesh node, empty for interior nodes
  std::vector<MemberPath> members;
  std::vector<ElementState> elements;
  double eigen_scale = 0.0;
  double gravity_scale = 0.0;
  /// 0 for instantaneous moduli, 1 for long-term moduli.
  double stiffness_blend = 0.0;
  double residual_norm = 0.0;
  double reference_norm = 0.0;
  int iterations = 0;

  static DeformedState initial(const BeamMesh& mesh);

  int node_by_id(const std::string& id) const;  // -1 if absent
  const MemberPath* member(const std::string& id) const;
  /// Chord between the end nodes of a member.
  double member_end_distance(const std::string& member_id) const;
  /// Position at arc-length fraction t along a member (linear between its nodes).
  Vec3 member_point(const std::string& member_id, double t) const;

  bool operator==(const DeformedState& other) const;
};

DeformedState solve_static(const BeamMesh& mesh, const DeformedState& state0, const LoadCase& loads,
                           const SolverConfig& config);

struct SequentialResult {
  BeamMesh mesh;
  DeformedState stage_a;
  DeformedState stage_b;
};

SequentialResult sequential_simulate(const GridDesign& design, const MaterialSet& cards, const SolverConfig& config,
                                     const MeshConfig& mesh_config = {});

enum class ExportFormat { json, obj_polyline };

std::string state_to_json(const DeformedState& state);
DeformedState state_from_json(const std::string& text);
std::string state_to_obj(const DeformedState& state);
/// Vertices of each member polyline, as written to the OBJ export.
std::vector<std::vector<Vec3>> state_polylines(const DeformedState& state);
void export_state(const DeformedState& state, ExportFormat format, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Lower-level access used by verification tests.

struct SystemEvaluation {
  Eigen::VectorXd internal;  // internal force, all dofs
  Eigen::VectorXd external;  // gravity load, all dofs
  Eigen::SparseMatrix<double> tangent;
  double strain_energy = 0.0;
};

/// Internal forces (and optionally the consistent tangent) at a state for given load levels.
SystemEvaluation evaluate_system(const BeamMesh& mesh, const DeformedState& state, double eigen_scale,
                                 double gravity_scale, double stiffness_blend, bool with_tangent);

/// Applies a dof increment: translations add, rotation vectors left-multiply the nodal rotations.
DeformedState apply_increment(const DeformedState& state, const Eigen::VectorXd& du);

/// Strain energy minus the work of the gravity load.
double total_potential(const BeamMesh& mesh, const DeformedState& state, double eigen_scale, double gravity_scale,
                       double stiffness_blend);

}  // namespace morphsim
