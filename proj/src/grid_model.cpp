#include "morphsim/grid_model.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "morphsim/error.hpp"

namespace morphsim {

const MaterialCard& find_card(const MaterialSet& cards, const std::string& name) {
  const auto it = cards.find(name);
  if (it == cards.end()) fail(ErrorCode::UnresolvedReference, "unknown material '" + name + "'");
  return it->second;
}

void BendingUnitSpec::validate() const {
  if (!(length > 0.0) || !(width > 0.0) || !(total_thickness > 0.0))
    fail(ErrorCode::InvalidDocument, "bending unit dimensions must be positive");
  if (!(actuator_thickness > 0.0 && actuator_thickness < total_thickness))
    fail(ErrorCode::InvalidDocument, "actuator thickness must lie strictly inside (0, total_thickness)");
  if (!(actuator_ratio >= 0.0 && actuator_ratio <= 1.0))
    fail(ErrorCode::InvalidDocument, "actuator_ratio must lie in [0, 1]");
  if (!(sigma0 >= 0.0)) fail(ErrorCode::InvalidDocument, "sigma0 must be non-negative");
  if (actuator_material.empty() || constraint_material.empty())
    fail(ErrorCode::InvalidDocument, "bending unit needs actuator and constraint materials");
  if (!orientation.allFinite()) fail(ErrorCode::InvalidDocument, "orientation must be finite");
}

void JointSpec::validate() const {
  if (!(width > 0.0) || !(thickness > 0.0)) fail(ErrorCode::InvalidDocument, "joint dimensions must be positive");
  if (material.empty()) fail(ErrorCode::InvalidDocument, "joint needs a constraint material");
}

std::string to_string(MemberKind kind) { return kind == MemberKind::bending_unit ? "bending_unit" : "joint"; }

MemberKind member_kind_from_string(const std::string& s) {
  if (s == "bending_unit") return MemberKind::bending_unit;
  if (s == "joint") return MemberKind::joint;
  fail(ErrorCode::InvalidDocument, "unknown member kind '" + s + "'");
}

int GridDesign::node_index(const std::string& id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

double GridDesign::member_length(const DesignMember& m) const {
  const int a = node_index(m.node_a);
  const int b = node_index(m.node_b);
  if (a < 0 || b < 0) fail(ErrorCode::UnresolvedReference, "member '" + m.id + "' references an unknown node");
  return (nodes[static_cast<std::size_t>(b)].position - nodes[static_cast<std::size_t>(a)].position).norm();
}

std::vector<std::string> GridDesign::material_names() const {
  std::set<std::string> names;
  for (const auto& m : members) {
    if (m.kind == MemberKind::bending_unit) {
      names.insert(m.unit.actuator_material);
      names.insert(m.unit.constraint_material);
    } else {
      names.insert(m.joint.material);
    }
  }
  return {names.begin(), names.end()};
}

void GridDesign::validate() const {
  if (format_version != kGridFormatVersion)
    fail(ErrorCode::UnsupportedVersion, "grid format_version " + std::to_string(format_version));
  if (nodes.empty() || members.empty()) fail(ErrorCode::InvalidDocument, "design needs nodes and members");
  if (!gravity.allFinite() || !normal.allFinite() || normal.norm() < 1e-12)
    fail(ErrorCode::InvalidDocument, "gravity and normal must be finite, normal nonzero");
  std::set<std::string> ids;
  for (const auto& n : nodes) {
    if (n.id.empty() || !ids.insert(n.id).second) fail(ErrorCode::InvalidDocument, "duplicate or empty node id '" + n.id + "'");
    if (!n.position.allFinite()) fail(ErrorCode::InvalidDocument, "node '" + n.id + "' has a non-finite position");
  }
  std::set<std::string> mids;
  const Vec3 nrm = normal.normalized();
  for (const auto& m : members) {
    if (m.id.empty() || !mids.insert(m.id).second) fail(ErrorCode::InvalidDocument, "duplicate or empty member id '" + m.id + "'");
    const int a = node_index(m.node_a);
    const int b = node_index(m.node_b);
    if (a < 0 || b < 0) fail(ErrorCode::UnresolvedReference, "member '" + m.id + "' references an unknown node");
    if (a == b) fail(ErrorCode::InvalidDocument, "member '" + m.id + "' connects a node to itself");
    const double len = member_length(m);
    if (!(len > 0.0)) fail(ErrorCode::InvalidDocument, "member '" + m.id + "' has zero length");
    if (m.kind == MemberKind::bending_unit) {
      m.unit.validate();
      if (std::abs(m.unit.length - len) > 1e-6 * len)
        fail(ErrorCode::InvalidDocument, "member '" + m.id + "' length " + std::to_string(m.unit.length) +
                                             " does not match its node distance " + std::to_string(len));
      if (m.unit.orientation.norm() > 0.0) {
        const Vec3 axis = (nodes[static_cast<std::size_t>(b)].position - nodes[static_cast<std::size_t>(a)].position) / len;
        const Vec3 o = m.unit.orientation.normalized();
        if (std::abs(std::abs(o.dot(axis)) - 1.0) > 1e-6)
          fail(ErrorCode::InvalidDocument, "member '" + m.id + "' orientation is not along its axis");
        if (std::abs(o.dot(nrm)) > 1e-6)
          fail(ErrorCode::InvalidDocument, "member '" + m.id + "' orientation is not in the design plane");
      }
    } else {
      m.joint.validate();
    }
  }

  // connectivity over the node/member graph
  std::vector<int> parent(nodes.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    return x;
  };
  for (const auto& m : members) parent[static_cast<std::size_t>(find(node_index(m.node_a)))] = find(node_index(m.node_b));
  const int root = find(0);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (find(static_cast<int>(i)) != root)
      fail(ErrorCode::DisconnectedGraph, "node '" + nodes[i].id + "' is not connected to node '" + nodes[0].id + "'");

  const bool any_fixed = std::any_of(nodes.begin(), nodes.end(), [](const DesignNode& n) { return n.fixed; });
  if (gravity.norm() > 0.0 && !any_fixed)
    fail(ErrorCode::NoFixedNode, "gravity is on but no node is fixed");
}

void GridDesign::validate(const MaterialSet& cards) const {
  validate();
  for (const auto& name : material_names()) find_card(cards, name);
}

int BeamMesh::node_by_design_id(const std::string& id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].design_id == id) return static_cast<int>(i);
  return -1;
}

namespace {

Vec3 section_up(const Vec3& axis, const Vec3& normal) {
  Vec3 up = normal - normal.dot(axis) * axis;
  if (up.norm() < 1e-9) {
    // member along the normal: any perpendicular direction
    up = axis.unitOrthogonal();
  }
  return up.normalized();
}

// Segment boundaries as fractions of the member length; the first n_act segments are actuated.
std::vector<double> segment_breaks(double ratio, int n, int& n_act) {
  if (ratio <= 0.0) n_act = 0;
  else if (ratio >= 1.0) n_act = n;
  else n_act = std::clamp(static_cast<int>(std::lround(ratio * n)), 1, n - 1);
  std::vector<double> t{0.0};
  for (int k = 1; k <= n_act; ++k) t.push_back(k == n_act && n_act < n ? ratio : ratio * k / n_act);
  for (int k = 1; k <= n - n_act; ++k) t.push_back(ratio + (1.0 - ratio) * k / (n - n_act));
  t.back() = 1.0;
  return t;
}

}  // namespace

BeamMesh mesh_design(const GridDesign& design, const MeshConfig& config) {
  design.validate();
  if (config.segments_per_member < 1) fail(ErrorCode::InvalidArgument, "segments_per_member must be at least 1");
  const int n = config.segments_per_member;
  BeamMesh mesh;
  mesh.gravity = design.gravity;
  mesh.delta_t = design.delta_t();
  for (const auto& dn : design.nodes) mesh.nodes.push_back({dn.position, dn.fixed, dn.id});
  const Vec3 normal = design.normal.normalized();

  for (const auto& m : design.members) {
    const int ia = design.node_index(m.node_a);
    const int ib = design.node_index(m.node_b);
    const Vec3 xa = design.nodes[static_cast<std::size_t>(ia)].position;
    const Vec3 xb = design.nodes[static_cast<std::size_t>(ib)].position;
    const double len = (xb - xa).norm();
    const Vec3 axis = (xb - xa) / len;

    int n_act = 0;
    bool reversed = false;
    std::vector<double> t;
    if (m.kind == MemberKind::bending_unit) {
      reversed = m.unit.orientation.norm() > 0.0 && m.unit.orientation.dot(axis) < 0.0;
      t = segment_breaks(m.unit.actuator_ratio, n, n_act);
      if (reversed) {
        std::vector<double> r;
        for (auto it = t.rbegin(); it != t.rend(); ++it) r.push_back(1.0 - *it);
        t = r;
        t.front() = 0.0;
        t.back() = 1.0;
      }
    } else {
      t = segment_breaks(0.0, n, n_act);
    }

    MemberPath path;
    path.member_id = m.id;
    path.nodes.push_back(ia);
    path.parameters.push_back(0.0);
    for (int k = 1; k < n; ++k) {
      mesh.nodes.push_back({xa + t[static_cast<std::size_t>(k)] * (xb - xa), false, {}});
      path.nodes.push_back(static_cast<int>(mesh.nodes.size()) - 1);
      path.parameters.push_back(t[static_cast<std::size_t>(k)]);
    }
    path.nodes.push_back(ib);
    path.parameters.push_back(1.0);

    const Vec3 up = section_up(axis, normal);
    for (int k = 0; k < n; ++k) {
      BeamElement e;
      e.member_id = m.id;
      e.segment_index = k;
      e.node_a = path.nodes[static_cast<std::size_t>(k)];
      e.node_b = path.nodes[static_cast<std::size_t>(k + 1)];
      e.length = (t[static_cast<std::size_t>(k + 1)] - t[static_cast<std::size_t>(k)]) * len;
      e.actuated = reversed ? k >= n - n_act : k < n_act;
      e.up = up;
      mesh.elements.push_back(std::move(e));
    }
    mesh.members.push_back(std::move(path));
  }
  return mesh;
}

double actuator_eigenstrain(const MaterialCard& actuator, double sigma0, double delta_t) {
  return -recoverable_strain(actuator, sigma0) + actuator.alpha_t * delta_t;
}

namespace {

SectionLayer constraint_layer(const MaterialCard& card, double thickness, double width, double delta_t) {
  return {thickness, width, card.marlow.reference_modulus(), card.alpha_t * delta_t, card.poisson};
}

}  // namespace

LayeredSection actuated_section(const BendingUnitSpec& spec, const MaterialSet& cards, double delta_t,
                                const std::optional<ReleaseResponse>& release) {
  const auto& act = find_card(cards, spec.actuator_material);
  const auto& con = find_card(cards, spec.constraint_material);
  const ReleaseResponse r = release ? *release : release_response(act, spec.sigma0);
  LayeredSection s;
  s.layers.push_back(constraint_layer(con, spec.total_thickness - spec.actuator_thickness, spec.width, delta_t));
  s.layers.push_back(
      {spec.actuator_thickness, spec.width, r.modulus, -r.recoverable_strain + act.alpha_t * delta_t, act.poisson});
  return s;
}

LayeredSection plain_section(const BendingUnitSpec& spec, const MaterialSet& cards, double delta_t) {
  LayeredSection s;
  s.layers.push_back(
      constraint_layer(find_card(cards, spec.constraint_material), spec.total_thickness, spec.width, delta_t));
  return s;
}

LayeredSection joint_section(const JointSpec& spec, const MaterialSet& cards, double delta_t) {
  LayeredSection s;
  s.layers.push_back(constraint_layer(find_card(cards, spec.material), spec.thickness, spec.width, delta_t));
  return s;
}

BeamMesh assign_eigenstrains(BeamMesh mesh, const GridDesign& design, const MaterialSet& cards) {
  design.validate(cards);
  const double dt = design.delta_t();
  std::map<std::string, const DesignMember*> by_id;
  for (const auto& m : design.members) by_id[m.id] = &m;

  // sections are shared by all segments of one member part
  std::map<std::pair<std::string, bool>, LayeredSection> cache;
  for (auto& e : mesh.elements) {
    const DesignMember& m = *by_id.at(e.member_id);
    const auto key = std::make_pair(e.member_id, e.actuated);
    auto it = cache.find(key);
    if (it == cache.end()) {
      LayeredSection s;
      if (m.kind == MemberKind::joint) s = joint_section(m.joint, cards, dt);
      else if (e.actuated) s = actuated_section(m.unit, cards, dt);
      else s = plain_section(m.unit, cards, dt);
      it = cache.emplace(key, std::move(s)).first;
    }
    e.section = it->second;
    e.layer_materials.clear();
    if (m.kind == MemberKind::joint) {
      const auto& c = find_card(cards, m.joint.material);
      e.layer_materials.push_back({c.name, c.density, c.long_term_ratio(), false});
    } else {
      const auto& c = find_card(cards, m.unit.constraint_material);
      e.layer_materials.push_back({m.unit.constraint_material, c.density, c.long_term_ratio(), false});
      if (e.actuated) {
        const auto& a = find_card(cards, m.unit.actuator_material);
        e.layer_materials.push_back({m.unit.actuator_material, a.density, a.long_term_ratio(), true});
      }
    }
    const SectionResponse r = section_response(e.section);
    e.eigenstrain = r.eigenstrain;
    e.eigencurvature = r.eigencurvature;
  }
  mesh.delta_t = dt;
  mesh.eigenstrains_assigned = true;
  return mesh;
}

}  // namespace morphsim
