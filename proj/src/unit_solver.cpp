#include "morphsim/unit_solver.hpp"

#include <cmath>

#include "morphsim/error.hpp"

namespace morphsim {

namespace {

// sin(u)/u and (1 - cos(u))/u with series near zero
double sinc(double u) {
  if (std::abs(u) < 1e-4) return 1.0 - u * u / 6.0;
  return std::sin(u) / u;
}

double cosc(double u) {
  if (std::abs(u) < 1e-4) return u / 2.0 - u * u * u / 24.0;
  return (1.0 - std::cos(u)) / u;
}

}  // namespace

void advance_arc(const UnitArc& arc, Vec3& position, Vec3& tangent, Vec3& up) {
  const double turn = -arc.curvature * arc.arc_length;  // towards +up
  const double s = arc.arc_length;
  position += s * (sinc(turn) * tangent + cosc(turn) * up);
  const Vec3 t = std::cos(turn) * tangent + std::sin(turn) * up;
  const Vec3 u = std::cos(turn) * up - std::sin(turn) * tangent;
  tangent = t;
  up = u;
}

double UnitShape::total_length() const {
  double s = 0.0;
  for (const auto& a : arcs) s += a.arc_length;
  return s;
}

Vec3 UnitShape::end_point() const {
  Vec3 p = start, t = tangent, u = up;
  for (const auto& a : arcs) advance_arc(a, p, t, u);
  return p;
}

std::vector<Vec3> UnitShape::polyline(int per_arc) const {
  std::vector<Vec3> pts{start};
  Vec3 p = start, t = tangent, u = up;
  for (const auto& a : arcs) {
    const UnitArc piece{a.arc_length / per_arc, a.curvature};
    for (int k = 0; k < per_arc; ++k) {
      advance_arc(piece, p, t, u);
      pts.push_back(p);
    }
  }
  return pts;
}

UnitShape unit_shape(const BendingUnitSpec& spec, const MaterialSet& cards, double trigger_temperature_c,
                     const std::optional<ReleaseResponse>& release) {
  spec.validate();
  const double dt = trigger_temperature_c - kReferenceTemperatureC;
  UnitShape shape;
  const double act_len = spec.actuator_ratio * spec.length;
  const double plain_len = spec.length - act_len;
  if (act_len > 0.0) {
    const SectionResponse r = section_response(actuated_section(spec, cards, dt, release));
    const double stretch = 1.0 + r.eigenstrain;
    shape.arcs.push_back({act_len * stretch, r.eigencurvature / stretch});
  }
  if (plain_len > 0.0) {
    const SectionResponse r = section_response(plain_section(spec, cards, dt));
    shape.arcs.push_back({plain_len * (1.0 + r.eigenstrain), 0.0});
  }
  return shape;
}

double end_distance(const UnitShape& shape) { return (shape.end_point() - shape.start).norm(); }

}  // namespace morphsim
