#pragma once

// Grid designs made of bi-layer bending units and joints, and their
// discretization into a layered beam network.

#include <Eigen/Core>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "morphsim/material_card.hpp"
#include "morphsim/section.hpp"

namespace morphsim {

using Vec3 = Eigen::Vector3d;

inline constexpr int kGridFormatVersion = 1;

using MaterialSet = std::map<std::string, MaterialCard>;

/// Card lookup that reports an unresolved reference.
const MaterialCard& find_card(const MaterialSet& cards, const std::string& name);

struct BendingUnitSpec {
  double length = 100.0;  // mm
  double width = 7.2;
  double total_thickness = 4.0;
  double actuator_thickness = 1.0;
  double actuator_ratio = 1.0;
  std::string actuator_material = "PLA";
  std::string constraint_material = "PLA";
  double sigma0 = 0.0;  // MPa
  /// In-plane direction from the actuated end towards the plain end. Zero means node_a -> node_b.
  Vec3 orientation = Vec3::Zero();

  void validate() const;
};

struct JointSpec {
  double width = 7.2;
  double thickness = 4.0;
  std::string material = "PLA";  // constraint material only

  void validate() const;
};

enum class MemberKind { bending_unit, joint };

std::string to_string(MemberKind kind);
MemberKind member_kind_from_string(const std::string& s);

struct DesignNode {
  std::string id;
  Vec3 position = Vec3::Zero();  // mm
  bool fixed = false;
};

struct DesignMember {
  std::string id;
  MemberKind kind = MemberKind::bending_unit;
  std::string node_a;
  std::string node_b;
  BendingUnitSpec unit;  // used when kind == bending_unit
  JointSpec joint;       // used when kind == joint
};

struct GridDesign {
  int format_version = kGridFormatVersion;
  std::string name;
  std::vector<DesignNode> nodes;
  std::vector<DesignMember> members;
  double trigger_temperature_c = 80.0;
  Vec3 gravity{0.0, 0.0, -9.81};  // m/s^2
  /// Design-plane normal; actuator layers sit on this side.
  Vec3 normal{0.0, 0.0, 1.0};

  double delta_t() const { return trigger_temperature_c - kReferenceTemperatureC; }
  int node_index(const std::string& id) const;  // -1 if absent
  double member_length(const DesignMember& m) const;
  std::vector<std::string> material_names() const;

  /// Structural invariants: references, connectivity, boundary conditions.
  void validate() const;
  /// validate() plus every material reference resolving in `cards`.
  void validate(const MaterialSet& cards) const;
};

struct MeshConfig {
  int segments_per_member = 8;
};

struct MeshNode {
  Vec3 position = Vec3::Zero();
  bool fixed = false;
  std::string design_id;  // empty for interior nodes
};

/// Per-layer data the solver needs beyond the section integrator.
struct LayerMaterial {
  std::string material;
  double density = 0.0;          // kg/m^3
  double long_term_ratio = 1.0;  // long-term / instantaneous modulus
  bool actuator = false;
};

struct BeamElement {
  std::string member_id;
  int segment_index = 0;
  int node_a = 0;
  int node_b = 0;
  double length = 0.0;  // reference length, mm
  bool actuated = false;
  /// Section z axis (points at the actuator layer).
  Vec3 up{0.0, 0.0, 1.0};
  LayeredSection section;
  std::vector<LayerMaterial> layer_materials;
  double eigenstrain = 0.0;
  double eigencurvature = 0.0;  // 1/mm, section convention
};

struct MemberPath {
  std::string member_id;
  std::vector<int> nodes;          // mesh node indices from node_a to node_b
  std::vector<double> parameters;  // arc-length fraction of each node along the member
};

struct BeamMesh {
  std::vector<MeshNode> nodes;
  std::vector<BeamElement> elements;
  std::vector<MemberPath> members;
  Vec3 gravity = Vec3::Zero();
  double delta_t = 0.0;
  bool eigenstrains_assigned = false;

  /// Six degrees of freedom per node: translation then rotation.
  static int dof(int node, int component) { return 6 * node + component; }
  int dof_count() const { return 6 * static_cast<int>(nodes.size()); }
  int node_by_design_id(const std::string& id) const;  // -1 if absent
};

/// Splits members into segments with the actuator transition on a segment boundary.
BeamMesh mesh_design(const GridDesign& design, const MeshConfig& config = {});

/// Layer moduli, per-layer eigenstrains and element eigenstrain/eigencurvature.
BeamMesh assign_eigenstrains(BeamMesh mesh, const GridDesign& design, const MaterialSet& cards);

/// Layered section of a bending unit's actuated part: constraint layer below, actuator on top.
/// `release` replaces the actuator card's own release response (frozen material coupling).
LayeredSection actuated_section(const BendingUnitSpec& spec, const MaterialSet& cards, double delta_t,
                                const std::optional<ReleaseResponse>& release = std::nullopt);
/// Uniform constraint section (plain part of a unit).
LayeredSection plain_section(const BendingUnitSpec& spec, const MaterialSet& cards, double delta_t);
LayeredSection joint_section(const JointSpec& spec, const MaterialSet& cards, double delta_t);

/// Axial eigenstrain of the actuator layer: released shrinkage plus thermal strain.
double actuator_eigenstrain(const MaterialCard& actuator, double sigma0, double delta_t);

}  // namespace morphsim
