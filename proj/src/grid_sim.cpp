#include "morphsim/grid_sim.hpp"

#include <Eigen/SparseLU>
#include <unsupported/Eigen/AutoDiff>

#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "morphsim/error.hpp"
#include "text_util.hpp"

namespace morphsim {

// ---------------------------------------------------------------------------
// enums and config

std::string to_string(StiffnessRegime regime) {
  return regime == StiffnessRegime::instantaneous ? "instantaneous" : "long_term";
}

StiffnessRegime stiffness_regime_from_string(const std::string& s) {
  if (s == "instantaneous") return StiffnessRegime::instantaneous;
  if (s == "long_term") return StiffnessRegime::long_term;
  fail(ErrorCode::InvalidArgument, "unknown stiffness regime '" + s + "'");
}

std::string to_string(StageLabel label) {
  switch (label) {
    case StageLabel::initial: return "initial";
    case StageLabel::stage_a: return "stage_a";
    case StageLabel::stage_b: return "stage_b";
  }
  return "initial";
}

StageLabel stage_label_from_string(const std::string& s) {
  if (s == "initial") return StageLabel::initial;
  if (s == "stage_a") return StageLabel::stage_a;
  if (s == "stage_b") return StageLabel::stage_b;
  fail(ErrorCode::InvalidDocument, "unknown stage label '" + s + "'");
}

void SolverConfig::validate() const {
  if (load_steps < 1) fail(ErrorCode::InvalidArgument, "load_steps must be at least 1");
  if (!(newton_tol > 0.0 && newton_tol <= 1e-2)) fail(ErrorCode::InvalidArgument, "newton_tol must lie in (0, 1e-2]");
  if (max_newton_iter < 1) fail(ErrorCode::InvalidArgument, "max_newton_iter must be at least 1");
  if (max_step_cuts < 0) fail(ErrorCode::InvalidArgument, "max_step_cuts must be non-negative");
}

// ---------------------------------------------------------------------------
// corotational element

namespace {

using D12 = Eigen::Matrix<double, 12, 1>;
using AD1 = Eigen::AutoDiffScalar<D12>;
using AD2 = Eigen::AutoDiffScalar<Eigen::Matrix<AD1, 12, 1>>;

inline double val(double x) { return x; }
template <class D>
double val(const Eigen::AutoDiffScalar<D>& x) {
  return val(x.value());
}

inline double arctan(double x) { return std::atan(x); }
template <class D>
Eigen::AutoDiffScalar<D> arctan(const Eigen::AutoDiffScalar<D>& x) {
  using V = typename Eigen::AutoDiffScalar<D>::Scalar;
  const V v = x.value();
  const V slope = V(1.0) / (V(1.0) + v * v);
  return Eigen::AutoDiffScalar<D>(arctan(v), x.derivatives() * slope);
}

template <class S>
struct Quat {
  S w, x, y, z;
};

template <class S>
Quat<S> lift(const Eigen::Quaterniond& q) {
  return {S(q.w()), S(q.x()), S(q.y()), S(q.z())};
}

template <class S>
Quat<S> mul(const Quat<S>& a, const Quat<S>& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z, a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x, a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

template <class S>
Quat<S> conj(const Quat<S>& q) {
  return {q.w, -q.x, -q.y, -q.z};
}

template <class S>
Quat<S> normalized(const Quat<S>& q) {
  using std::sqrt;
  const S n = sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
  return {q.w / n, q.x / n, q.y / n, q.z / n};
}

// Quaternion of the rotation vector (v0, v1, v2); series near the identity keeps derivatives finite.
template <class S>
Quat<S> quat_exp(const S& v0, const S& v1, const S& v2) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const S n2 = v0 * v0 + v1 * v1 + v2 * v2;
  S c, s;
  if (val(n2) < 1e-10) {
    c = S(1.0) - n2 / S(8.0) + n2 * n2 / S(384.0);
    s = S(0.5) - n2 / S(48.0) + n2 * n2 / S(3840.0);
  } else {
    const S n = sqrt(n2);
    c = cos(n / S(2.0));
    s = sin(n / S(2.0)) / n;
  }
  return {c, s * v0, s * v1, s * v2};
}

// Rotation vector of a unit quaternion.
template <class S>
std::array<S, 3> quat_log(Quat<S> q) {
  using std::sqrt;
  if (val(q.w) < 0.0) q = {-q.w, -q.x, -q.y, -q.z};
  const S n2 = q.x * q.x + q.y * q.y + q.z * q.z;
  S g;
  if (val(n2) < 1e-12) {
    g = S(2.0) / q.w * (S(1.0) - n2 / (S(3.0) * q.w * q.w));
  } else {
    const S n = sqrt(n2);
    const S ratio = n / q.w;
    g = S(2.0) * arctan(ratio) / n;
  }
  return {g * q.x, g * q.y, g * q.z};
}

template <class S>
std::array<S, 3> rotate_x_axis(const Quat<S>& q) {
  // first column of the rotation matrix
  return {S(1.0) - S(2.0) * (q.y * q.y + q.z * q.z), S(2.0) * (q.x * q.y + q.w * q.z),
          S(2.0) * (q.x * q.z - q.w * q.y)};
}

struct ElementProps {
  double L0 = 0.0;
  double EA = 0.0;
  double EIy = 0.0;
  double EIz = 0.0;
  double GJ = 0.0;
  double eps = 0.0;
  double kappa = 0.0;
  Eigen::Quaterniond frame = Eigen::Quaterniond::Identity();  // reference element triad
};

struct ElementBase {
  Vec3 xa, xb;
  Eigen::Quaterniond qa, qb;
};

template <class S>
struct Kinematics {
  S eps;
  std::array<S, 3> ta;
  std::array<S, 3> tb;
};

template <class S>
Kinematics<S> kinematics(const ElementProps& p, const ElementBase& nb, const Eigen::Matrix<S, 12, 1>& d1,
                         const Eigen::Matrix<S, 12, 1>& d2) {
  using std::sqrt;
  std::array<S, 3> c;
  for (int i = 0; i < 3; ++i) c[i] = S(nb.xb(i) - nb.xa(i)) + (d1(6 + i) + d2(6 + i)) - (d1(i) + d2(i));
  const S l = sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
  const std::array<S, 3> e{c[0] / l, c[1] / l, c[2] / l};

  const Quat<S> qa = mul(mul(quat_exp(d1(3), d1(4), d1(5)), quat_exp(d2(3), d2(4), d2(5))), lift<S>(nb.qa));
  const Quat<S> qb = mul(mul(quat_exp(d1(9), d1(10), d1(11)), quat_exp(d2(9), d2(10), d2(11))), lift<S>(nb.qb));
  const Quat<S> e0 = lift<S>(p.frame);
  const Quat<S> ta = mul(qa, e0);
  const Quat<S> tb = mul(qb, e0);
  const Quat<S> qm = normalized(Quat<S>{qa.w + qb.w, qa.x + qb.x, qa.y + qb.y, qa.z + qb.z});
  const Quat<S> tm = mul(qm, e0);

  // smallest rotation carrying the mean triad's axis onto the chord
  const auto t1 = rotate_x_axis(tm);
  const S dot = t1[0] * e[0] + t1[1] * e[1] + t1[2] * e[2];
  const Quat<S> qmin = normalized(Quat<S>{S(1.0) + dot, t1[1] * e[2] - t1[2] * e[1], t1[2] * e[0] - t1[0] * e[2],
                                          t1[0] * e[1] - t1[1] * e[0]});
  const Quat<S> er = conj(mul(qmin, tm));

  Kinematics<S> k;
  k.ta = quat_log(mul(er, ta));
  k.tb = quat_log(mul(er, tb));
  const S L0(p.L0);
  // shallow-arch correction: a circular arc through the end rotations has zero axial strain
  const auto& a = k.ta;
  const auto& b = k.tb;
  const S bow = (S(2.0) * a[1] * a[1] - a[1] * b[1] + S(2.0) * b[1] * b[1] + S(2.0) * a[2] * a[2] - a[2] * b[2] +
                 S(2.0) * b[2] * b[2]) /
                S(30.0);
  k.eps = (l - L0) / L0 + bow;
  return k;
}

template <class S>
S element_energy(const ElementProps& p, const Kinematics<S>& k, double eigen_scale) {
  const S ea = k.eps - S(eigen_scale * p.eps);
  const double half_turn = 0.5 * eigen_scale * p.kappa * p.L0;
  const S pa = k.ta[1] + S(half_turn);
  const S pb = k.tb[1] - S(half_turn);
  const S& za = k.ta[2];
  const S& zb = k.tb[2];
  const S tw = k.tb[0] - k.ta[0];
  return S(0.5 * p.EA * p.L0) * ea * ea + S(2.0 * p.EIy / p.L0) * (pa * pa + pa * pb + pb * pb) +
         S(2.0 * p.EIz / p.L0) * (za * za + za * zb + zb * zb) + S(0.5 * p.GJ / p.L0) * tw * tw;
}

ElementBase element_base(const DeformedState& s, const BeamElement& e) {
  ElementBase b{s.positions[static_cast<std::size_t>(e.node_a)], s.positions[static_cast<std::size_t>(e.node_b)],
                s.rotations[static_cast<std::size_t>(e.node_a)], s.rotations[static_cast<std::size_t>(e.node_b)]};
  if (b.qa.coeffs().dot(b.qb.coeffs()) < 0.0) b.qb.coeffs() = -b.qb.coeffs();
  return b;
}

std::vector<ElementProps> element_props(const BeamMesh& mesh, double blend) {
  if (!mesh.eigenstrains_assigned) fail(ErrorCode::InvalidArgument, "mesh has no section data; assign eigenstrains first");
  std::vector<ElementProps> props;
  props.reserve(mesh.elements.size());
  for (const auto& e : mesh.elements) {
    LayeredSection s = e.section;
    for (std::size_t i = 0; i < s.layers.size(); ++i) {
      const double ratio = i < e.layer_materials.size() ? e.layer_materials[i].long_term_ratio : 1.0;
      s.layers[i].modulus *= 1.0 + blend * (ratio - 1.0);
    }
    const SectionStiffness k = section_stiffness(s);
    ElementProps p;
    p.L0 = e.length;
    p.EA = k.axial;
    p.EIy = k.bending;
    p.EIz = k.lateral_bending;
    p.GJ = k.torsion;
    p.eps = e.eigenstrain;
    p.kappa = e.eigencurvature;
    const Vec3 x1 = (mesh.nodes[static_cast<std::size_t>(e.node_b)].position -
                     mesh.nodes[static_cast<std::size_t>(e.node_a)].position)
                        .normalized();
    const Vec3 x3 = e.up;
    Eigen::Matrix3d frame;
    frame.col(0) = x1;
    frame.col(1) = x3.cross(x1);
    frame.col(2) = x3;
    p.frame = Eigen::Quaterniond(frame).normalized();
    props.push_back(p);
  }
  return props;
}

Eigen::VectorXd gravity_load(const BeamMesh& mesh, double gravity_scale) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(mesh.dof_count());
  if (gravity_scale == 0.0 || mesh.gravity.norm() == 0.0) return f;
  for (const auto& e : mesh.elements) {
    double mass_per_length = 0.0;  // kg/m^3 * mm^2 -> scaled below
    for (std::size_t i = 0; i < e.section.layers.size(); ++i) {
      const auto& l = e.section.layers[i];
      const double rho = i < e.layer_materials.size() ? e.layer_materials[i].density : 0.0;
      mass_per_length += rho * l.thickness * l.width;
    }
    // kg/m^3 * mm^2 * m/s^2 = 1e-9 N/mm
    const Vec3 q = 1e-9 * mass_per_length * gravity_scale * mesh.gravity;
    for (int node : {e.node_a, e.node_b})
      for (int i = 0; i < 3; ++i) f(BeamMesh::dof(node, i)) += 0.5 * e.length * q(i);
  }
  return f;
}

}  // namespace

// ---------------------------------------------------------------------------
// system evaluation

SystemEvaluation evaluate_system(const BeamMesh& mesh, const DeformedState& state, double eigen_scale,
                                 double gravity_scale, double stiffness_blend, bool with_tangent) {
  const auto props = element_props(mesh, stiffness_blend);
  SystemEvaluation ev;
  const int n = mesh.dof_count();
  ev.internal = Eigen::VectorXd::Zero(n);
  ev.external = gravity_load(mesh, gravity_scale);
  std::vector<Eigen::Triplet<double>> trip;
  if (with_tangent) trip.reserve(mesh.elements.size() * 144);

  for (std::size_t k = 0; k < mesh.elements.size(); ++k) {
    const auto& e = mesh.elements[k];
    const ElementBase base = element_base(state, e);
    const int dofs[2] = {e.node_a, e.node_b};
    if (with_tangent) {
      Eigen::Matrix<AD2, 12, 1> d1, d2;
      for (int i = 0; i < 12; ++i) {
        d1(i) = AD2(AD1(0.0), 12, i);
        d2(i) = AD2(AD1(0.0, 12, i));
      }
      const AD2 u = element_energy(props[k], kinematics(props[k], base, d1, d2), eigen_scale);
      ev.strain_energy += u.value().value();
      for (int i = 0; i < 12; ++i) {
        const int gi = BeamMesh::dof(dofs[i / 6], i % 6);
        const AD1& gi_val = u.derivatives()(i);
        ev.internal(gi) += gi_val.value();
        for (int j = 0; j < 12; ++j) {
          const double kij = gi_val.derivatives()(j);
          if (kij != 0.0) trip.emplace_back(gi, BeamMesh::dof(dofs[j / 6], j % 6), kij);
        }
      }
    } else {
      Eigen::Matrix<AD1, 12, 1> d1, d2;
      for (int i = 0; i < 12; ++i) {
        d1(i) = AD1(0.0, 12, i);
        d2(i) = AD1(0.0);
      }
      const AD1 u = element_energy(props[k], kinematics(props[k], base, d1, d2), eigen_scale);
      ev.strain_energy += u.value();
      for (int i = 0; i < 12; ++i) ev.internal(BeamMesh::dof(dofs[i / 6], i % 6)) += u.derivatives()(i);
    }
  }
  if (with_tangent) {
    ev.tangent.resize(n, n);
    ev.tangent.setFromTriplets(trip.begin(), trip.end());
  }
  return ev;
}

namespace {

double strain_energy_only(const BeamMesh& mesh, const std::vector<ElementProps>& props, const DeformedState& state,
                          double eigen_scale) {
  const Eigen::Matrix<double, 12, 1> zero = Eigen::Matrix<double, 12, 1>::Zero();
  double u = 0.0;
  for (std::size_t k = 0; k < mesh.elements.size(); ++k)
    u += element_energy(props[k], kinematics(props[k], element_base(state, mesh.elements[k]), zero, zero), eigen_scale);
  return u;
}

double potential_with(const BeamMesh& mesh, const std::vector<ElementProps>& props, const DeformedState& state,
                      const Eigen::VectorXd& f_ext, double eigen_scale) {
  double work = 0.0;
  for (std::size_t i = 0; i < state.positions.size(); ++i) {
    const Vec3 u = state.positions[i] - mesh.nodes[i].position;
    for (int c = 0; c < 3; ++c) work += f_ext(BeamMesh::dof(static_cast<int>(i), c)) * u(c);
  }
  return strain_energy_only(mesh, props, state, eigen_scale) - work;
}

void fill_element_states(const BeamMesh& mesh, DeformedState& state) {
  const auto props = element_props(mesh, state.stiffness_blend);
  const Eigen::Matrix<double, 12, 1> zero = Eigen::Matrix<double, 12, 1>::Zero();
  state.elements.clear();
  for (std::size_t k = 0; k < mesh.elements.size(); ++k) {
    const auto& e = mesh.elements[k];
    const auto& p = props[k];
    const auto kin = kinematics(p, element_base(state, e), zero, zero);
    const double half_turn = 0.5 * state.eigen_scale * p.kappa * p.L0;
    ElementState es;
    es.member_id = e.member_id;
    es.segment_index = e.segment_index;
    es.eigen_fraction = state.eigen_scale;
    es.axial_force = p.EA * (kin.eps - state.eigen_scale * p.eps);
    es.moment_y = p.EIy * ((kin.tb[1] - half_turn) - (kin.ta[1] + half_turn)) / p.L0;
    es.moment_z = p.EIz * (kin.tb[2] - kin.ta[2]) / p.L0;
    es.torque = p.GJ * (kin.tb[0] - kin.ta[0]) / p.L0;
    state.elements.push_back(es);
  }
}

}  // namespace

double total_potential(const BeamMesh& mesh, const DeformedState& state, double eigen_scale, double gravity_scale,
                       double stiffness_blend) {
  return potential_with(mesh, element_props(mesh, stiffness_blend), state, gravity_load(mesh, gravity_scale),
                        eigen_scale);
}

DeformedState apply_increment(const DeformedState& state, const Eigen::VectorXd& du) {
  DeformedState out = state;
  for (std::size_t i = 0; i < out.positions.size(); ++i) {
    const int n = static_cast<int>(i);
    for (int c = 0; c < 3; ++c) out.positions[i](c) += du(BeamMesh::dof(n, c));
    const Quat<double> dq = quat_exp(du(BeamMesh::dof(n, 3)), du(BeamMesh::dof(n, 4)), du(BeamMesh::dof(n, 5)));
    const Eigen::Quaterniond r(dq.w, dq.x, dq.y, dq.z);
    out.rotations[i] = (r * out.rotations[i]).normalized();
  }
  return out;
}

// ---------------------------------------------------------------------------
// DeformedState

DeformedState DeformedState::initial(const BeamMesh& mesh) {
  DeformedState s;
  s.stage = StageLabel::initial;
  for (const auto& n : mesh.nodes) {
    s.positions.push_back(n.position);
    s.rotations.push_back(Eigen::Quaterniond::Identity());
    s.node_ids.push_back(n.design_id);
  }
  s.members = mesh.members;
  for (const auto& e : mesh.elements) {
    ElementState es;
    es.member_id = e.member_id;
    es.segment_index = e.segment_index;
    s.elements.push_back(es);
  }
  return s;
}

int DeformedState::node_by_id(const std::string& id) const {
  if (id.empty()) return -1;
  for (std::size_t i = 0; i < node_ids.size(); ++i)
    if (node_ids[i] == id) return static_cast<int>(i);
  return -1;
}

const MemberPath* DeformedState::member(const std::string& id) const {
  for (const auto& m : members)
    if (m.member_id == id) return &m;
  return nullptr;
}

double DeformedState::member_end_distance(const std::string& member_id) const {
  const MemberPath* m = member(member_id);
  if (m == nullptr) fail(ErrorCode::UnresolvedReference, "unknown member '" + member_id + "'");
  return (positions[static_cast<std::size_t>(m->nodes.back())] - positions[static_cast<std::size_t>(m->nodes.front())])
      .norm();
}

Vec3 DeformedState::member_point(const std::string& member_id, double t) const {
  const MemberPath* m = member(member_id);
  if (m == nullptr) fail(ErrorCode::UnresolvedReference, "unknown member '" + member_id + "'");
  if (!(t >= 0.0 && t <= 1.0)) fail(ErrorCode::UnresolvedReference, "member parameter outside [0, 1]");
  for (std::size_t k = 1; k < m->nodes.size(); ++k) {
    if (t <= m->parameters[k]) {
      const double t0 = m->parameters[k - 1];
      const double t1 = m->parameters[k];
      const Vec3& a = positions[static_cast<std::size_t>(m->nodes[k - 1])];
      const Vec3& b = positions[static_cast<std::size_t>(m->nodes[k])];
      if (t == t1) return b;
      if (t == t0) return a;
      return a + (t - t0) / (t1 - t0) * (b - a);
    }
  }
  return positions[static_cast<std::size_t>(m->nodes.back())];
}

bool DeformedState::operator==(const DeformedState& o) const {
  if (format_version != o.format_version || stage != o.stage || positions.size() != o.positions.size() ||
      rotations.size() != o.rotations.size())
    return false;
  for (std::size_t i = 0; i < positions.size(); ++i)
    if (positions[i] != o.positions[i] || rotations[i].coeffs() != o.rotations[i].coeffs()) return false;
  if (node_ids != o.node_ids || elements != o.elements || members.size() != o.members.size()) return false;
  for (std::size_t i = 0; i < members.size(); ++i)
    if (members[i].member_id != o.members[i].member_id || members[i].nodes != o.members[i].nodes ||
        members[i].parameters != o.members[i].parameters)
      return false;
  return eigen_scale == o.eigen_scale && gravity_scale == o.gravity_scale && stiffness_blend == o.stiffness_blend &&
         residual_norm == o.residual_norm && reference_norm == o.reference_norm && iterations == o.iterations;
}

// ---------------------------------------------------------------------------
// Newton solver

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

// Increment taking state a to state b under apply_increment.
Eigen::VectorXd state_difference(const DeformedState& a, const DeformedState& b) {
  Eigen::VectorXd du(6 * static_cast<Eigen::Index>(a.positions.size()));
  for (std::size_t i = 0; i < a.positions.size(); ++i) {
    const int n = static_cast<int>(i);
    const Eigen::AngleAxisd rot(b.rotations[i] * a.rotations[i].conjugate());
    const Vec3 w = rot.angle() * rot.axis();
    for (int c = 0; c < 3; ++c) {
      du(BeamMesh::dof(n, c)) = b.positions[i](c) - a.positions[i](c);
      du(BeamMesh::dof(n, 3 + c)) = w(c);
    }
  }
  return du;
}

struct Levels {
  double eigen = 0.0;
  double gravity = 0.0;
  double blend = 0.0;
};

Levels interpolate(const Levels& a, const Levels& b, double t) {
  return {a.eigen + t * (b.eigen - a.eigen), a.gravity + t * (b.gravity - a.gravity),
          a.blend + t * (b.blend - a.blend)};
}

class NewtonSolver {
public:
  NewtonSolver(const BeamMesh& mesh, const SolverConfig& config) : mesh_(mesh), config_(config) {
    free_.assign(static_cast<std::size_t>(mesh.dof_count()), -1);
    bool any_fixed = false;
    for (const auto& n : mesh.nodes) any_fixed = any_fixed || n.fixed;
    int next = 0;
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
      // a design with no support is pinned at its first node
      const bool fixed = mesh.nodes[i].fixed || (!any_fixed && i == 0);
      for (int c = 0; c < 6; ++c)
        if (!fixed) free_[static_cast<std::size_t>(BeamMesh::dof(static_cast<int>(i), c))] = next++;
    }
    n_free_ = next;
  }

  Eigen::VectorXd restrict(const Eigen::VectorXd& full) const {
    Eigen::VectorXd r(n_free_);
    for (std::size_t i = 0; i < free_.size(); ++i)
      if (free_[i] >= 0) r(free_[i]) = full(static_cast<Eigen::Index>(i));
    return r;
  }

  Eigen::VectorXd expand(const Eigen::VectorXd& reduced) const {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(free_.size()));
    for (std::size_t i = 0; i < free_.size(); ++i)
      if (free_[i] >= 0) full(static_cast<Eigen::Index>(i)) = reduced(free_[i]);
    return full;
  }

  Eigen::SparseMatrix<double> restrict(const Eigen::SparseMatrix<double>& K) const {
    std::vector<Eigen::Triplet<double>> trip;
    for (int c = 0; c < K.outerSize(); ++c)
      for (Eigen::SparseMatrix<double>::InnerIterator it(K, c); it; ++it) {
        const int r = free_[static_cast<std::size_t>(it.row())];
        const int cc = free_[static_cast<std::size_t>(it.col())];
        if (r >= 0 && cc >= 0) trip.emplace_back(r, cc, it.value());
      }
    Eigen::SparseMatrix<double> out(n_free_, n_free_);
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
  }

  double residual_norm(const DeformedState& s, const Levels& lv) const {
    const auto ev = evaluate_system(mesh_, s, lv.eigen, lv.gravity, lv.blend, false);
    return restrict(ev.internal - ev.external).norm();
  }

  // Newton iterations at fixed load levels. Returns false on failure.
  bool solve_step(DeformedState& s, const Levels& lv, double tol_abs, int step, std::string& why) {
    const auto props = element_props(mesh_, lv.blend);
    for (int it = 0; it <= config_.max_newton_iter; ++it) {
      const auto ev = evaluate_system(mesh_, s, lv.eigen, lv.gravity, lv.blend, true);
      const Eigen::VectorXd r = restrict(ev.internal - ev.external);
      const double rn = r.norm();
      if (!std::isfinite(rn)) {
        why = "non-finite residual";
        return false;
      }
      last_residual_ = rn;
      if (rn <= tol_abs) {
        iterations_ += it;
        return true;
      }
      if (it == config_.max_newton_iter) break;

      const Eigen::SparseMatrix<double> K = restrict(ev.tangent);
      Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
      lu.analyzePattern(K);
      lu.factorize(K);
      if (lu.info() != Eigen::Success) {
        why = "singular tangent at step " + std::to_string(step);
        singular_ = true;
        return false;
      }
      const Eigen::VectorXd dx = lu.solve(-r);
      if (lu.info() != Eigen::Success || !dx.allFinite()) {
        why = "singular tangent at step " + std::to_string(step);
        singular_ = true;
        return false;
      }
      const Eigen::VectorXd du = expand(dx);

      if (!config_.line_search) {
        s = apply_increment(s, du);
        if (config_.observer) config_.observer(step, it + 1, potential_with(mesh_, props, s, ev.external, lv.eigen), rn);
        continue;
      }
      if (r.dot(dx) >= 0.0) {
        why = "tangent not positive along the Newton step at step " + std::to_string(step);
        return false;
      }
      const Eigen::VectorXd f_ext = ev.external;
      const double p0 = potential_with(mesh_, props, s, f_ext, lv.eigen);
      double alpha = 1.0;
      DeformedState best = apply_increment(s, du);
      double best_p = potential_with(mesh_, props, best, f_ext, lv.eigen);
      const double slack = 1e-11 * (std::abs(p0) + ev.strain_energy) + 1e-300;
      for (int cut = 0; cut < 12 && !(best_p <= p0 + slack); ++cut) {
        alpha *= 0.5;
        DeformedState trial = apply_increment(s, alpha * du);
        const double pt = potential_with(mesh_, props, trial, f_ext, lv.eigen);
        if (pt < best_p) {
          best = std::move(trial);
          best_p = pt;
        }
      }
      s = std::move(best);
      if (config_.observer) config_.observer(step, it + 1, best_p, rn);
    }
    why = "no convergence at step " + std::to_string(step) + " after " + std::to_string(config_.max_newton_iter) +
          " iterations, residual " + sci(last_residual_) + " > " + sci(tol_abs);
    return false;
  }

  int iterations_ = 0;
  double last_residual_ = 0.0;
  bool singular_ = false;

private:
  const BeamMesh& mesh_;
  const SolverConfig& config_;
  std::vector<int> free_;
  int n_free_ = 0;
};

}  // namespace

DeformedState solve_static(const BeamMesh& mesh, const DeformedState& state0, const LoadCase& loads,
                           const SolverConfig& config) {
  config.validate();
  if (state0.positions.size() != mesh.nodes.size() || state0.rotations.size() != mesh.nodes.size())
    fail(ErrorCode::InvalidArgument, "state does not match the mesh");
  if (!(loads.eigenstrain_scale >= 0.0 && loads.eigenstrain_scale <= 1.0))
    fail(ErrorCode::InvalidArgument, "eigenstrain_scale must lie in [0, 1]");

  const Levels start{state0.eigen_scale, state0.gravity_scale, state0.stiffness_blend};
  const Levels target{loads.eigenstrain_scale, loads.gravity_on ? 1.0 : 0.0,
                      config.stiffness_regime == StiffnessRegime::long_term ? 1.0 : 0.0};

  NewtonSolver solver(mesh, config);
  const DeformedState reference = DeformedState::initial(mesh);
  const double ext_norm = solver.restrict(gravity_load(mesh, target.gravity)).norm();
  // Difference against the unloaded reference so that roundoff in the initial geometry cancels.
  const auto eig = evaluate_system(mesh, reference, target.eigen, 0.0, target.blend, false);
  const auto bare = evaluate_system(mesh, reference, 0.0, 0.0, target.blend, false);
  const double eig_norm = solver.restrict(eig.internal - bare.internal).norm();
  double ref = ext_norm > 0.0 ? ext_norm : eig_norm;

  DeformedState s = state0;
  s.eigen_scale = target.eigen;
  s.gravity_scale = target.gravity;
  s.stiffness_blend = target.blend;
  if (ref == 0.0) {
    const double r0 = solver.residual_norm(s, target);
    if (r0 == 0.0) {
      s.residual_norm = 0.0;
      s.reference_norm = 0.0;
      s.iterations = 0;
      fill_element_states(mesh, s);
      return s;
    }
    ref = 1.0;
  }
  const double tol_abs = config.newton_tol * ref;

  s = state0;
  double t = 0.0;
  const double base_dt = 1.0 / config.load_steps;
  double dt = base_dt;
  int step = 0;
  // Each step starts from the better (lower potential) of the last solution and its secant extrapolation.
  Eigen::VectorXd last_increment;
  double last_dt = 0.0;
  while (t < 1.0 - 1e-15) {
    const double t_next = std::min(1.0, t + dt);
    const Levels lv = interpolate(start, target, t_next);
    DeformedState trial = s;
    if (last_increment.size() > 0) {
      DeformedState predicted = apply_increment(s, ((t_next - t) / last_dt) * last_increment);
      if (total_potential(mesh, predicted, lv.eigen, lv.gravity, lv.blend) <
          total_potential(mesh, s, lv.eigen, lv.gravity, lv.blend))
        trial = std::move(predicted);
    }
    std::string why;
    ++step;
    if (solver.solve_step(trial, lv, tol_abs, step, why)) {
      last_increment = state_difference(s, trial);
      last_dt = t_next - t;
      s = std::move(trial);
      t = t_next;
      dt = std::min(base_dt, 2.0 * dt);
      continue;
    }
    if (dt < base_dt / std::pow(2.0, config.max_step_cuts) * 1.5) {
      if (solver.singular_) fail(ErrorCode::SingularStiffness, why);
      fail(ErrorCode::NonConvergence, why);
    }
    solver.singular_ = false;
    last_increment.resize(0);
    dt *= 0.5;
  }
  s.eigen_scale = target.eigen;
  s.gravity_scale = target.gravity;
  s.stiffness_blend = target.blend;
  s.residual_norm = solver.residual_norm(s, target);
  s.reference_norm = ref;
  s.iterations = solver.iterations_;
  if (!(s.residual_norm <= tol_abs))
    fail(ErrorCode::NonConvergence, "final residual " + sci(s.residual_norm) + " exceeds tolerance " + sci(tol_abs));
  fill_element_states(mesh, s);
  return s;
}

namespace {

std::string bare_message(const Error& e) {
  const std::string w = e.what();
  const std::string prefix = std::string(to_string(e.code())) + ": ";
  return w.rfind(prefix, 0) == 0 ? w.substr(prefix.size()) : w;
}

}  // namespace

SequentialResult sequential_simulate(const GridDesign& design, const MaterialSet& cards, const SolverConfig& config,
                                     const MeshConfig& mesh_config) {
  SequentialResult out;
  out.mesh = assign_eigenstrains(mesh_design(design, mesh_config), design, cards);
  const bool gravity = design.gravity.norm() > 0.0;

  SolverConfig a = config;
  a.stiffness_regime = StiffnessRegime::instantaneous;
  try {
    out.stage_a = solve_static(out.mesh, DeformedState::initial(out.mesh), {1.0, gravity}, a);
  } catch (const Error& e) {
    throw Error(e.code(), "stage A: " + bare_message(e));
  }
  out.stage_a.stage = StageLabel::stage_a;

  SolverConfig b = config;
  b.stiffness_regime = StiffnessRegime::long_term;
  try {
    out.stage_b = solve_static(out.mesh, out.stage_a, {1.0, gravity}, b);
  } catch (const Error& e) {
    throw Error(e.code(), "stage B: " + bare_message(e));
  }
  out.stage_b.stage = StageLabel::stage_b;
  return out;
}

// ---------------------------------------------------------------------------
// export

std::string state_to_json(const DeformedState& s) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["format_version"] = s.format_version;
  j["kind"] = "deformed_state";
  j["stage"] = to_string(s.stage);
  j["eigen_scale"] = s.eigen_scale;
  j["gravity_scale"] = s.gravity_scale;
  j["stiffness_blend"] = s.stiffness_blend;
  j["residual_norm"] = s.residual_norm;
  j["reference_norm"] = s.reference_norm;
  j["iterations"] = s.iterations;
  ordered_json nodes = ordered_json::array();
  for (std::size_t i = 0; i < s.positions.size(); ++i) {
    const auto& p = s.positions[i];
    const auto& q = s.rotations[i];
    nodes.push_back({{"id", s.node_ids[i]},
                     {"position", {p.x(), p.y(), p.z()}},
                     {"rotation", {q.w(), q.x(), q.y(), q.z()}}});
  }
  j["nodes"] = nodes;
  ordered_json members = ordered_json::array();
  for (const auto& m : s.members)
    members.push_back({{"id", m.member_id}, {"nodes", m.nodes}, {"parameters", m.parameters}});
  j["members"] = members;
  ordered_json elements = ordered_json::array();
  for (const auto& e : s.elements)
    elements.push_back({{"member", e.member_id},
                        {"segment", e.segment_index},
                        {"eigen_fraction", e.eigen_fraction},
                        {"axial_force_n", e.axial_force},
                        {"moment_y_nmm", e.moment_y},
                        {"moment_z_nmm", e.moment_z},
                        {"torque_nmm", e.torque}});
  j["elements"] = elements;
  return j.dump(2) + "\n";
}

DeformedState state_from_json(const std::string& text) {
  DeformedState s;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("kind").get<std::string>() != "deformed_state")
      fail(ErrorCode::InvalidDocument, "document kind is not deformed_state");
    s.format_version = j.at("format_version").get<int>();
    if (s.format_version != kStateFormatVersion)
      fail(ErrorCode::UnsupportedVersion, "state format_version " + std::to_string(s.format_version));
    s.stage = stage_label_from_string(j.at("stage").get<std::string>());
    s.eigen_scale = j.at("eigen_scale").get<double>();
    s.gravity_scale = j.at("gravity_scale").get<double>();
    s.stiffness_blend = j.at("stiffness_blend").get<double>();
    s.residual_norm = j.at("residual_norm").get<double>();
    s.reference_norm = j.at("reference_norm").get<double>();
    s.iterations = j.at("iterations").get<int>();
    for (const auto& n : j.at("nodes")) {
      const auto p = n.at("position").get<std::vector<double>>();
      const auto q = n.at("rotation").get<std::vector<double>>();
      if (p.size() != 3 || q.size() != 4) fail(ErrorCode::InvalidDocument, "bad node entry");
      s.node_ids.push_back(n.at("id").get<std::string>());
      s.positions.emplace_back(p[0], p[1], p[2]);
      s.rotations.emplace_back(q[0], q[1], q[2], q[3]);
    }
    for (const auto& m : j.at("members")) {
      MemberPath path;
      path.member_id = m.at("id").get<std::string>();
      path.nodes = m.at("nodes").get<std::vector<int>>();
      path.parameters = m.at("parameters").get<std::vector<double>>();
      for (int n : path.nodes)
        if (n < 0 || n >= static_cast<int>(s.positions.size()))
          fail(ErrorCode::InvalidDocument, "member '" + path.member_id + "' references a missing node");
      s.members.push_back(std::move(path));
    }
    for (const auto& e : j.at("elements")) {
      ElementState es;
      es.member_id = e.at("member").get<std::string>();
      es.segment_index = e.at("segment").get<int>();
      es.eigen_fraction = e.at("eigen_fraction").get<double>();
      es.axial_force = e.at("axial_force_n").get<double>();
      es.moment_y = e.at("moment_y_nmm").get<double>();
      es.moment_z = e.at("moment_z_nmm").get<double>();
      es.torque = e.at("torque_nmm").get<double>();
      s.elements.push_back(es);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidDocument, std::string("malformed state document: ") + e.what());
  }
  return s;
}

std::vector<std::vector<Vec3>> state_polylines(const DeformedState& s) {
  std::vector<std::vector<Vec3>> lines;
  for (const auto& m : s.members) {
    std::vector<Vec3> line;
    for (int n : m.nodes) line.push_back(s.positions[static_cast<std::size_t>(n)]);
    lines.push_back(std::move(line));
  }
  return lines;
}

std::string state_to_obj(const DeformedState& s) {
  std::ostringstream out;
  out << "# morphsim " << to_string(s.stage) << "\n";
  for (const auto& p : s.positions)
    out << "v " << detail::format_double(p.x()) << ' ' << detail::format_double(p.y()) << ' '
        << detail::format_double(p.z()) << '\n';
  for (const auto& m : s.members) {
    out << "o " << m.member_id << "\nl";
    for (int n : m.nodes) out << ' ' << n + 1;
    out << '\n';
  }
  return out.str();
}

void export_state(const DeformedState& state, ExportFormat format, const std::filesystem::path& path) {
  detail::write_file(path, format == ExportFormat::json ? state_to_json(state) : state_to_obj(state));
}

}  // namespace morphsim
