#pragma once

// Layered cross-section integration for bi-layer bending units.
//
// Layers are stacked bottom to top along the section z axis. Within a layer
// the stress is E * (eps + z * kappa - eigenstrain), so a positive curvature
// lengthens the top fibres.

#include <vector>

namespace morphsim {

struct SectionLayer {
  double thickness = 0.0;  // mm
  double width = 0.0;      // mm
  double modulus = 0.0;    // MPa
  double eigenstrain = 0.0;
  double poisson = 0.3;
};

struct LayeredSection {
  std::vector<SectionLayer> layers;

  double total_thickness() const;
  void validate() const;
};

struct SectionStiffness {
  double axial = 0.0;            // EA, N
  double bending = 0.0;          // EI about the modulus-weighted centroid, thickness direction, N mm^2
  double lateral_bending = 0.0;  // EI for bending in the width direction, N mm^2
  double torsion = 0.0;          // GJ, N mm^2
  double centroid_z = 0.0;       // from the bottom face, mm
};

SectionStiffness section_stiffness(const LayeredSection& section);

struct SectionResponse {
  /// Free-section strain at the modulus-weighted centroid.
  double eigenstrain = 0.0;
  /// Free-section curvature; negative when the top layer shrinks more.
  double eigencurvature = 0.0;
  double axial_stiffness = 0.0;
  double bending_stiffness = 0.0;
  double centroid_z = 0.0;
};

/// Strain and curvature that make the axial force and bending moment vanish.
SectionResponse section_response(const LayeredSection& section);

/// Axial force and bending moment (about the centroid) at a given centroid strain and curvature.
struct SectionResultants {
  double axial_force = 0.0;
  double moment = 0.0;
};
SectionResultants section_resultants(const LayeredSection& section, double strain, double curvature);

}  // namespace morphsim
