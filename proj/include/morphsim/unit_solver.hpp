#pragma once

// Closed-form triggered shape of a single bending unit.
//
// The actuated part becomes a circular arc at the section eigencurvature, the
// plain part stays straight. Shapes live in the unit's own x-z plane: the unit
// starts at the origin heading along +x with the actuator layer on the +z side.

#include <optional>
#include <vector>

#include "morphsim/grid_model.hpp"
#include "morphsim/section.hpp"

namespace morphsim {

struct UnitArc {
  double arc_length = 0.0;  // mm, deformed
  /// Geometric curvature of the centroid line (1/mm). Same sign convention as the
  /// section eigencurvature: negative turns the tangent towards +z.
  double curvature = 0.0;
};

struct UnitShape {
  std::vector<UnitArc> arcs;
  Vec3 start = Vec3::Zero();
  Vec3 tangent{1.0, 0.0, 0.0};
  Vec3 up{0.0, 0.0, 1.0};

  double total_length() const;
  /// End point of the last arc.
  Vec3 end_point() const;
  /// Points along the centroid line, `per_arc` intervals per arc.
  std::vector<Vec3> polyline(int per_arc = 64) const;
};

/// Moves a frame (position, tangent, up) along one arc.
void advance_arc(const UnitArc& arc, Vec3& position, Vec3& tangent, Vec3& up);

UnitShape unit_shape(const BendingUnitSpec& spec, const MaterialSet& cards, double trigger_temperature_c = 80.0,
                     const std::optional<ReleaseResponse>& release = std::nullopt);

/// Chord between the first arc's start and the last arc's end.
double end_distance(const UnitShape& shape);

}  // namespace morphsim
