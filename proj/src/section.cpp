#include "morphsim/section.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "morphsim/error.hpp"

namespace morphsim {

namespace {

struct Moments {
  double a = 0.0;  // sum E w t
  double s = 0.0;  // first moment about the bottom face
  double i = 0.0;  // second moment about the bottom face
  double na = 0.0;  // sum E w t eps*
  double ns = 0.0;  // sum E w (first moment) eps*
};

Moments integrate(const LayeredSection& section) {
  Moments m;
  double z = 0.0;
  for (const auto& l : section.layers) {
    const double z1 = z + l.thickness;
    const double ew = l.modulus * l.width;
    const double a = ew * (z1 - z);
    const double s = ew * (z1 * z1 - z * z) / 2.0;
    m.a += a;
    m.s += s;
    m.i += ew * (z1 * z1 * z1 - z * z * z) / 3.0;
    m.na += a * l.eigenstrain;
    m.ns += s * l.eigenstrain;
    z = z1;
  }
  return m;
}

// Saint-Venant torsion constant of a solid b x h rectangle.
double rectangle_torsion(double b, double h) {
  if (h > b) std::swap(b, h);
  const double r = h / b;
  return b * h * h * h * (1.0 / 3.0 - 0.21 * r * (1.0 - std::pow(r, 4) / 12.0));
}

}  // namespace

double LayeredSection::total_thickness() const {
  double t = 0.0;
  for (const auto& l : layers) t += l.thickness;
  return t;
}

void LayeredSection::validate() const {
  if (layers.empty()) fail(ErrorCode::InvalidArgument, "section has no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    if (!(l.thickness > 0.0) || !(l.width > 0.0))
      fail(ErrorCode::InvalidArgument, "layer " + std::to_string(k) + " needs positive thickness and width");
    if (!(l.modulus > 0.0)) fail(ErrorCode::InvalidArgument, "layer " + std::to_string(k) + " needs positive modulus");
    if (!std::isfinite(l.eigenstrain)) fail(ErrorCode::InvalidArgument, "non-finite layer eigenstrain");
  }
}

SectionStiffness section_stiffness(const LayeredSection& section) {
  section.validate();
  const Moments m = integrate(section);
  SectionStiffness k;
  k.axial = m.a;
  k.centroid_z = m.s / m.a;
  k.bending = m.i - m.s * m.s / m.a;
  double shear_t = 0.0;
  double width = 0.0;
  for (const auto& l : section.layers) {
    k.lateral_bending += l.modulus * l.thickness * l.width * l.width * l.width / 12.0;
    shear_t += l.modulus / (2.0 * (1.0 + l.poisson)) * l.thickness;
    width = std::max(width, l.width);
  }
  const double h = section.total_thickness();
  k.torsion = shear_t / h * rectangle_torsion(width, h);
  return k;
}

SectionResponse section_response(const LayeredSection& section) {
  section.validate();
  const Moments m = integrate(section);
  Eigen::Matrix2d K;
  K << m.a, m.s, m.s, m.i;
  const Eigen::Vector2d rhs(m.na, m.ns);
  Eigen::Vector2d sol;
  if (section.layers.size() == 1) {
    sol << section.layers[0].eigenstrain, 0.0;
  } else {
    sol = K.fullPivLu().solve(rhs);
  }
  SectionResponse r;
  r.centroid_z = m.s / m.a;
  r.eigencurvature = sol(1);
  r.eigenstrain = sol(0) + r.centroid_z * sol(1);
  r.axial_stiffness = m.a;
  r.bending_stiffness = m.i - m.s * m.s / m.a;
  return r;
}

SectionResultants section_resultants(const LayeredSection& section, double strain, double curvature) {
  const Moments m = integrate(section);
  const double zc = m.s / m.a;
  const double eps_bottom = strain - zc * curvature;
  SectionResultants r;
  r.axial_force = m.a * eps_bottom + m.s * curvature - m.na;
  const double moment_bottom = m.s * eps_bottom + m.i * curvature - m.ns;
  r.moment = moment_bottom - zc * r.axial_force;
  return r;
}

}  // namespace morphsim
