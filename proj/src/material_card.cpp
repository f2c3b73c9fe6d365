#include "morphsim/material_card.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "morphsim/error.hpp"
#include "nnls.hpp"

namespace morphsim {

namespace {

constexpr double kExtrapolationLimit = 1.2;
constexpr double kSigmaMatchTolerance = 1e-6;
constexpr double kOnLoadingTolerance = 0.005;
constexpr double kSecantStressFraction = 0.2;

double lerp(double x0, double y0, double x1, double y1, double x) {
  if (x1 == x0) return y0;
  return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
}

// Strain on a curve with monotone stress at the given stress, linear between
// points and linear extrapolation beyond either end.
double strain_at_stress_on(const DmaCurve& curve, double stress) {
  const auto& p = curve.points;
  if (p.size() == 1) return p.front().strain;
  // orient so that stress increases with index
  std::vector<CurvePoint> pts(p.begin(), p.end());
  if (pts.front().stress > pts.back().stress) std::reverse(pts.begin(), pts.end());
  auto it = std::lower_bound(pts.begin(), pts.end(), stress,
                             [](const CurvePoint& a, double s) { return a.stress < s; });
  std::size_t hi = static_cast<std::size_t>(it - pts.begin());
  if (hi == 0) hi = 1;
  if (hi >= pts.size()) hi = pts.size() - 1;
  const auto& a = pts[hi - 1];
  const auto& b = pts[hi];
  return lerp(a.stress, a.strain, b.stress, b.strain, stress);
}

}  // namespace

std::string to_string(Interpolation interp) {
  return interp == Interpolation::linear ? "linear" : "monotone_cubic";
}

Interpolation interpolation_from_string(const std::string& s) {
  if (s == "linear") return Interpolation::linear;
  if (s == "monotone_cubic") return Interpolation::monotone_cubic;
  fail(ErrorCode::InvalidArgument, "unknown interpolation '" + s + "'");
}

std::string to_string(UnloadingMode mode) {
  return mode == UnloadingMode::tabular ? "tabular" : "ogden_roxburgh";
}

UnloadingMode unloading_mode_from_string(const std::string& s) {
  if (s == "tabular") return UnloadingMode::tabular;
  if (s == "ogden_roxburgh") return UnloadingMode::ogden_roxburgh;
  fail(ErrorCode::InvalidArgument, "unknown unloading mode '" + s + "'");
}

// ---------------------------------------------------------------- MarlowCurve

MarlowCurve::MarlowCurve(DmaCurve loading, Interpolation interpolation)
    : loading_(std::move(loading)), interpolation_(interpolation) {
  auto& p = loading_.points;
  if (p.size() < 2) fail(ErrorCode::TooFewPoints, "Marlow curve needs at least two points");
  if (p.front().strain != 0.0 || p.front().stress != 0.0)
    fail(ErrorCode::InvalidArgument, "Marlow loading curve must start at (0, 0)");
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (!(p[i].strain > p[i - 1].strain) || !(p[i].stress > p[i - 1].stress))
      fail(ErrorCode::InvalidArgument, "Marlow loading curve must be strictly increasing at row " +
                                           std::to_string(i));
  }
  loading_.kind = CurveKind::loading;

  const std::size_t n = p.size();
  if (interpolation_ == Interpolation::monotone_cubic) {
    std::vector<double> d(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i)
      d[i] = (p[i + 1].stress - p[i].stress) / (p[i + 1].strain - p[i].strain);
    slopes_.assign(n, 0.0);
    slopes_[0] = d[0];
    slopes_[n - 1] = d[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) {
      // weighted harmonic mean keeps the interpolant monotone
      const double h0 = p[i].strain - p[i - 1].strain;
      const double h1 = p[i + 1].strain - p[i].strain;
      const double w1 = 2.0 * h1 + h0;
      const double w2 = h1 + 2.0 * h0;
      slopes_[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
    }
  }

  cumulative_energy_.assign(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double h = p[i + 1].strain - p[i].strain;
    double seg = 0.5 * h * (p[i].stress + p[i + 1].stress);
    if (interpolation_ == Interpolation::monotone_cubic) seg += h * h * (slopes_[i] - slopes_[i + 1]) / 12.0;
    cumulative_energy_[i + 1] = cumulative_energy_[i] + seg;
  }
}

double MarlowCurve::segment_value(std::size_t i, double strain) const {
  const auto& a = loading_.points[i];
  const auto& b = loading_.points[i + 1];
  if (interpolation_ == Interpolation::linear) return lerp(a.strain, a.stress, b.strain, b.stress, strain);
  const double h = b.strain - a.strain;
  const double t = (strain - a.strain) / h;
  const double t2 = t * t;
  const double t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * a.stress + (t3 - 2 * t2 + t) * h * slopes_[i] +
         (-2 * t3 + 3 * t2) * b.stress + (t3 - t2) * h * slopes_[i + 1];
}

double MarlowCurve::stress(double strain) const {
  if (empty()) fail(ErrorCode::InvalidArgument, "empty Marlow curve");
  if (strain < 0.0) fail(ErrorCode::NegativeStrain, "negative strain " + std::to_string(strain));
  const auto& p = loading_.points;
  const double emax = p.back().strain;
  if (strain > kExtrapolationLimit * emax * (1.0 + 1e-12))
    fail(ErrorCode::StrainOutOfRange, "strain " + std::to_string(strain) + " beyond 1.2x the table");
  if (strain >= emax) {
    const auto& a = p[p.size() - 2];
    const auto& b = p.back();
    if (strain == emax) return b.stress;
    return b.stress + (b.stress - a.stress) / (b.strain - a.strain) * (strain - b.strain);
  }
  auto it = std::upper_bound(p.begin(), p.end(), strain,
                             [](double s, const CurvePoint& q) { return s < q.strain; });
  const std::size_t i = static_cast<std::size_t>(it - p.begin()) - 1;
  if (strain == p[i].strain) return p[i].stress;
  return segment_value(i, strain);
}

double MarlowCurve::strain_energy(double strain) const {
  if (strain < 0.0) fail(ErrorCode::NegativeStrain, "negative strain " + std::to_string(strain));
  const auto& p = loading_.points;
  if (strain >= p.back().strain) {
    const double s = stress(strain);
    return cumulative_energy_.back() + 0.5 * (p.back().stress + s) * (strain - p.back().strain);
  }
  auto it = std::upper_bound(p.begin(), p.end(), strain,
                             [](double s, const CurvePoint& q) { return s < q.strain; });
  const std::size_t i = static_cast<std::size_t>(it - p.begin()) - 1;
  const double x0 = p[i].strain;
  const double h = strain - x0;
  if (h == 0.0) return cumulative_energy_[i];
  if (interpolation_ == Interpolation::linear)
    return cumulative_energy_[i] + 0.5 * h * (p[i].stress + segment_value(i, strain));
  // three-point Gauss-Legendre is exact for the cubic segment
  static const double nodes[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
  static const double weights[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  double acc = 0.0;
  for (int k = 0; k < 3; ++k) acc += weights[k] * segment_value(i, x0 + 0.5 * h * (nodes[k] + 1.0));
  return cumulative_energy_[i] + 0.5 * h * acc;
}

double MarlowCurve::strain_at_stress(double target) const {
  if (empty()) fail(ErrorCode::InvalidArgument, "empty Marlow curve");
  if (target < 0.0) fail(ErrorCode::InvalidArgument, "negative stress " + std::to_string(target));
  const auto& p = loading_.points;
  if (target >= p.back().stress) {
    const auto& a = p[p.size() - 2];
    const auto& b = p.back();
    const double e = b.strain + (target - b.stress) * (b.strain - a.strain) / (b.stress - a.stress);
    if (e > kExtrapolationLimit * b.strain * (1.0 + 1e-12))
      fail(ErrorCode::StrainOutOfRange, "stress " + std::to_string(target) + " beyond the extrapolated table");
    return e;
  }
  auto it = std::upper_bound(p.begin(), p.end(), target,
                             [](double s, const CurvePoint& q) { return s < q.stress; });
  const std::size_t i = static_cast<std::size_t>(it - p.begin()) - 1;
  if (target == p[i].stress) return p[i].strain;
  if (interpolation_ == Interpolation::linear)
    return lerp(p[i].stress, p[i].strain, p[i + 1].stress, p[i + 1].strain, target);
  double lo = p[i].strain;
  double hi = p[i + 1].strain;
  for (int k = 0; k < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++k) {
    const double mid = 0.5 * (lo + hi);
    (segment_value(i, mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double MarlowCurve::reference_modulus() const {
  const double s = kSecantStressFraction * max_stress();
  return s / strain_at_stress(s);
}

double eval_uniaxial_stress(const MarlowCurve& marlow, double strain) { return marlow.stress(strain); }

// ------------------------------------------------------------ UnloadingFamily

double anchor_strain_of(const DmaCurve& unloading) {
  const auto& p = unloading.points;
  if (p.empty()) fail(ErrorCode::TooFewPoints, "empty unloading curve");
  if (p.back().stress == 0.0 || p.size() == 1) return p.back().strain;
  const auto& a = p[p.size() - 2];
  const auto& b = p.back();
  return lerp(a.stress, a.strain, b.stress, b.strain, 0.0);
}

UnloadingFamily UnloadingFamily::from_curves(std::vector<std::pair<double, DmaCurve>> curves) {
  UnloadingFamily family;
  for (auto& [sigma0, curve] : curves) {
    if (!(sigma0 > 0.0)) fail(ErrorCode::InvalidArgument, "unloading sigma0 must be positive");
    curve.kind = CurveKind::unloading;
    curve.validate();
    UnloadingMember m;
    m.sigma0 = sigma0;
    m.anchor_strain = anchor_strain_of(curve);
    m.curve = std::move(curve);
    family.members.push_back(std::move(m));
  }
  std::sort(family.members.begin(), family.members.end(),
            [](const UnloadingMember& a, const UnloadingMember& b) { return a.sigma0 < b.sigma0; });
  return family;
}

void UnloadingFamily::validate(const MarlowCurve* marlow) const {
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto& m = members[i];
    if (m.curve.size() < 2) fail(ErrorCode::TooFewPoints, "unloading member needs at least two points");
    m.curve.validate();
    if (i > 0 && !(m.sigma0 > members[i - 1].sigma0))
      fail(ErrorCode::InvalidArgument, "unloading members must be sorted by sigma0 without duplicates");
    if (std::abs(m.anchor_strain - anchor_strain_of(m.curve)) > 1e-12)
      fail(ErrorCode::InvalidArgument, "member anchor strain does not match its curve");
    if (i > 0 && !(m.anchor_strain > members[i - 1].anchor_strain))
      fail(ErrorCode::NonMonotoneAnchors, "anchor strains must increase with sigma0");
    if (marlow != nullptr && !marlow->empty()) {
      const auto& first = m.curve.front();
      const double on_curve = marlow->stress(first.strain);
      if (std::abs(on_curve - first.stress) > kOnLoadingTolerance * first.stress)
        fail(ErrorCode::InvalidArgument, "unloading member sigma0=" + std::to_string(m.sigma0) +
                                             " does not start on the loading curve");
    }
  }
}

double PlasticityTable::plastic_strain_at(double stress) const {
  if (stress <= 0.0 || rows.empty()) return 0.0;
  double s0 = 0.0, e0 = 0.0;
  for (const auto& r : rows) {
    if (stress <= r.yield_stress) return lerp(s0, e0, r.yield_stress, r.plastic_strain, stress);
    s0 = r.yield_stress;
    e0 = r.plastic_strain;
  }
  // beyond the last anchor: continue the last segment
  const double sp = rows.size() > 1 ? rows[rows.size() - 2].yield_stress : 0.0;
  const double ep = rows.size() > 1 ? rows[rows.size() - 2].plastic_strain : 0.0;
  return lerp(sp, ep, rows.back().yield_stress, rows.back().plastic_strain, stress);
}

void PlasticityTable::validate() const {
  double s = 0.0, e = 0.0;
  for (const auto& r : rows) {
    if (!(r.yield_stress > s)) fail(ErrorCode::InvalidArgument, "plasticity stresses must increase");
    if (!(r.plastic_strain > e)) fail(ErrorCode::NonMonotoneAnchors, "plastic strains must increase");
    s = r.yield_stress;
    e = r.plastic_strain;
  }
}

// ---------------------------------------------------------------- PronySeries

double PronySeries::instantaneous_modulus() const {
  double e = e_infinity;
  for (const auto& t : terms) e += t.modulus;
  return e;
}

double PronySeries::long_term_ratio() const {
  const double e0 = instantaneous_modulus();
  return e0 > 0.0 ? e_infinity / e0 : 1.0;
}

double PronySeries::storage(double freq_hz) const {
  const double w = 2.0 * std::numbers::pi * freq_hz;
  double e = e_infinity;
  for (const auto& t : terms) {
    const double wt2 = w * w * t.tau * t.tau;
    e += t.modulus * wt2 / (1.0 + wt2);
  }
  return e;
}

double PronySeries::loss(double freq_hz) const {
  const double w = 2.0 * std::numbers::pi * freq_hz;
  double e = 0.0;
  for (const auto& t : terms) {
    const double wt = w * t.tau;
    e += t.modulus * wt / (1.0 + wt * wt);
  }
  return e;
}

void PronySeries::validate() const {
  if (!(e_infinity >= 0.0)) fail(ErrorCode::InvalidArgument, "e_infinity must be non-negative");
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (!(terms[i].modulus >= 0.0)) fail(ErrorCode::InvalidArgument, "Prony moduli must be non-negative");
    if (!(terms[i].tau > 0.0)) fail(ErrorCode::InvalidArgument, "Prony taus must be positive");
    if (i > 0 && !(terms[i].tau > terms[i - 1].tau))
      fail(ErrorCode::InvalidArgument, "Prony taus must be strictly increasing");
  }
}

// --------------------------------------------------------------- MaterialCard

void MaterialCard::validate() const {
  if (!(poisson > 0.0 && poisson < 0.5)) fail(ErrorCode::InvalidArgument, "poisson must lie in (0, 0.5)");
  if (!(alpha_t > 0.0)) fail(ErrorCode::InvalidArgument, "alpha_t must be positive");
  if (!(density > 0.0)) fail(ErrorCode::InvalidArgument, "density must be positive");
  if (marlow.empty()) fail(ErrorCode::InvalidArgument, "material card '" + name + "' has no loading curve");
  if (viscoelastic_enabled && !prony) fail(ErrorCode::InvalidArgument, "viscoelastic card without Prony series");
  if (prony) prony->validate();
  if (plasticity) plasticity->validate();
  if (damage) {
    if (!(damage->r > 1.0) || damage->m < 0.0 || damage->beta < 0.0)
      fail(ErrorCode::InvalidArgument, "damage parameters out of range");
  }
  unloading.validate(&marlow);
}

double MaterialCard::long_term_ratio() const {
  if (viscoelastic_enabled && prony) return prony->long_term_ratio();
  return 1.0;
}

// ------------------------------------------------------------------ unloading

DmaCurve select_unloading_curve(const UnloadingFamily& family, double sigma0) {
  if (family.empty()) fail(ErrorCode::OutOfCalibrationRange, "unloading family is empty");
  const auto& ms = family.members;
  for (const auto& m : ms)
    if (std::abs(m.sigma0 - sigma0) <= kSigmaMatchTolerance) return m.curve;
  if (sigma0 < ms.front().sigma0 || sigma0 > ms.back().sigma0)
    fail(ErrorCode::OutOfCalibrationRange, "sigma0=" + std::to_string(sigma0) + " outside [" +
                                               std::to_string(ms.front().sigma0) + ", " +
                                               std::to_string(ms.back().sigma0) + "]");
  std::size_t hi = 1;
  while (ms[hi].sigma0 < sigma0) ++hi;
  const auto& a = ms[hi - 1];
  const auto& b = ms[hi];
  const double t = (sigma0 - a.sigma0) / (b.sigma0 - a.sigma0);

  // both curves as strain(u) with u = stress / peak stress of the member, so
  // the blend reduces to either member at the ends of the interval
  auto fractions = [](const UnloadingMember& m) {
    std::vector<double> u;
    for (const auto& p : m.curve.points) u.push_back(p.stress / m.curve.front().stress);
    return u;
  };
  std::vector<double> grid = fractions(a);
  const auto ub = fractions(b);
  grid.insert(grid.end(), ub.begin(), ub.end());
  grid.push_back(1.0);
  grid.push_back(0.0);
  std::sort(grid.begin(), grid.end(), std::greater<>());
  grid.erase(std::unique(grid.begin(), grid.end(), [](double x, double y) { return std::abs(x - y) < 1e-12; }),
             grid.end());

  auto strain_of = [](const UnloadingMember& m, double u) {
    return strain_at_stress_on(m.curve, u * m.curve.front().stress);
  };
  const double peak = (1.0 - t) * a.curve.front().stress + t * b.curve.front().stress;
  DmaCurve out;
  out.kind = CurveKind::unloading;
  out.temperature_c = a.curve.temperature_c;
  out.sample_id = "interpolated";
  for (double u : grid) {
    const double e = (1.0 - t) * strain_of(a, u) + t * strain_of(b, u);
    out.points.push_back({e, u * peak});
  }
  out.points.back().stress = 0.0;
  return out;
}

DmaCurve select_unloading_curve(const MaterialCard& card, double sigma0) {
  if (card.unloading.mode == UnloadingMode::tabular) return select_unloading_curve(card.unloading, sigma0);
  if (!card.damage) fail(ErrorCode::InvalidArgument, "ogden_roxburgh mode requires damage parameters");
  if (!(sigma0 > 0.0)) fail(ErrorCode::OutOfCalibrationRange, "sigma0 must be positive");
  const double peak = card.marlow.strain_at_stress(sigma0);
  const double anchor = card.plasticity ? card.plasticity->plastic_strain_at(sigma0) : 0.0;
  if (!(anchor < peak)) fail(ErrorCode::OutOfCalibrationRange, "anchor strain beyond peak strain");
  constexpr int kSamples = 41;
  DmaCurve out;
  out.kind = CurveKind::unloading;
  out.sample_id = "ogden_roxburgh";
  for (int k = 0; k < kSamples; ++k) {
    const double e = peak + (anchor - peak) * k / (kSamples - 1);
    const double s = k == kSamples - 1 ? 0.0 : eval_damaged_stress(card.marlow, *card.damage, peak, anchor, e);
    out.points.push_back({e, s});
  }
  return out;
}

double recoverable_strain(const MaterialCard& card, double sigma0) {
  if (sigma0 < 0.0) fail(ErrorCode::InvalidArgument, "sigma0 must be non-negative");
  if (sigma0 == 0.0) return 0.0;
  const DmaCurve curve = select_unloading_curve(card, sigma0);
  return curve.front().strain - anchor_strain_of(curve);
}

double released_secant_modulus(const DmaCurve& unloading) {
  if (unloading.size() < 2) fail(ErrorCode::TooFewPoints, "unloading curve needs two points");
  const double target = kSecantStressFraction * unloading.front().stress;
  const double de = strain_at_stress_on(unloading, target) - anchor_strain_of(unloading);
  if (!(de > 0.0) || !(target > 0.0)) fail(ErrorCode::SingularSystem, "degenerate unloading tail");
  return target / de;
}

double released_modulus(const MaterialCard& card, double sigma0) {
  if (sigma0 <= 0.0) return card.marlow.reference_modulus();
  return released_secant_modulus(select_unloading_curve(card, sigma0));
}

ReleaseResponse release_response(const MaterialCard& card, double sigma0) {
  if (sigma0 <= 0.0) return {0.0, card.marlow.reference_modulus()};
  const DmaCurve curve = select_unloading_curve(card, sigma0);
  return {curve.front().strain - anchor_strain_of(curve), released_secant_modulus(curve)};
}

ReleaseResponse release_response_frozen(const DmaCurve& frozen_unloading, double sigma0) {
  const double modulus = released_secant_modulus(frozen_unloading);
  if (sigma0 <= 0.0) return {0.0, modulus};
  const double e = strain_at_stress_on(frozen_unloading, sigma0) - anchor_strain_of(frozen_unloading);
  return {std::max(e, 0.0), modulus};
}

// --------------------------------------------------------------------- damage

double damage_factor(const DamageParams& params, double w, double w_max) {
  const double denom = params.m + params.beta * w_max;
  if (!(denom > 0.0)) return 1.0;
  return 1.0 - std::erf((w_max - w) / denom) / params.r;
}

// The unloading branch is mapped onto the loading curve so that it starts at
// the peak and reaches zero stress at the plastic anchor.
double eval_damaged_stress(const MarlowCurve& marlow, const DamageParams& params, double peak_strain,
                           double anchor_strain, double strain) {
  if (!(peak_strain > anchor_strain)) fail(ErrorCode::InvalidArgument, "peak strain must exceed anchor strain");
  const double mapped = std::clamp(peak_strain * (strain - anchor_strain) / (peak_strain - anchor_strain), 0.0,
                                   peak_strain);
  const double w = marlow.strain_energy(mapped);
  const double wm = marlow.strain_energy(peak_strain);
  return damage_factor(params, w, wm) * marlow.stress(mapped);
}

namespace {

struct DamageSample {
  double peak;
  double anchor;
  double strain;
  double stress;
};

struct DamageResidual {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  const MarlowCurve* marlow = nullptr;
  const std::vector<DamageSample>* samples = nullptr;

  int inputs() const { return 3; }
  int values() const { return static_cast<int>(samples->size()); }

  // r stays strictly above 1 even when the fit drives it to the full-damage limit
  static DamageParams decode(const Eigen::VectorXd& x) {
    return {1.0 + 1e-9 + std::exp(x(0)), std::exp(x(1)), std::exp(x(2))};
  }

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
    const DamageParams p = decode(x);
    for (std::size_t i = 0; i < samples->size(); ++i) {
      const auto& s = (*samples)[i];
      f(static_cast<Eigen::Index>(i)) = eval_damaged_stress(*marlow, p, s.peak, s.anchor, s.strain) - s.stress;
    }
    return 0;
  }
};

double rms(const Eigen::VectorXd& f) { return std::sqrt(f.squaredNorm() / static_cast<double>(f.size())); }

}  // namespace

DamageFit fit_damage_params(const MarlowCurve& marlow, const UnloadingFamily& family) {
  if (family.members.size() < 2)
    fail(ErrorCode::DegenerateFamily, "damage fit needs at least two unloading curves");
  std::vector<DamageSample> samples;
  double w_max = 0.0;
  for (const auto& m : family.members) {
    const double peak = m.curve.front().strain;
    w_max = std::max(w_max, marlow.strain_energy(peak));
    for (const auto& p : m.curve.points) samples.push_back({peak, m.anchor_strain, p.strain, p.stress});
  }

  DamageResidual functor;
  functor.marlow = &marlow;
  functor.samples = &samples;
  Eigen::NumericalDiff<DamageResidual, Eigen::Central> numdiff(functor);

  auto encode = [](double r, double m, double beta) {
    Eigen::VectorXd x(3);
    x << std::log(r - 1.0), std::log(m), std::log(beta);
    return x;
  };
  Eigen::VectorXd f(static_cast<Eigen::Index>(samples.size()));

  const Eigen::VectorXd x_initial = encode(1.5, w_max, 0.5);
  functor(x_initial, f);
  const double initial_rms = rms(f);

  double best_rms = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x = x_initial;
  for (double r : {1.5, 3.0, 10.0}) {
    for (double mf : {0.1, 1.0, 10.0}) {
      for (double beta : {0.05, 0.5}) {
        Eigen::VectorXd x = encode(r, mf * w_max, beta);
        Eigen::LevenbergMarquardt<Eigen::NumericalDiff<DamageResidual, Eigen::Central>> lm(numdiff);
        lm.parameters.ftol = 1e-15;
        lm.parameters.xtol = 1e-15;
        lm.parameters.maxfev = 4000;
        lm.minimize(x);
        if (!x.allFinite()) continue;
        functor(x, f);
        const double e = rms(f);
        if (std::isfinite(e) && e < best_rms) {
          best_rms = e;
          best_x = x;
        }
      }
    }
  }
  if (!(best_rms <= 0.9 * initial_rms) && best_rms > 1e-12)
    fail(ErrorCode::FitDivergence, "damage fit did not reduce the residual (" + std::to_string(best_rms) +
                                       " vs initial " + std::to_string(initial_rms) + ")");
  DamageFit fit;
  fit.params = DamageResidual::decode(best_x);
  fit.rms_mpa = best_rms;
  fit.initial_rms_mpa = initial_rms;
  fit.n_points = samples.size();
  return fit;
}

PlasticityTable extract_plasticity_table(const UnloadingFamily& family, const MarlowCurve& /*marlow*/) {
  if (family.empty()) fail(ErrorCode::DegenerateFamily, "plasticity table needs at least one unloading curve");
  PlasticityTable table;
  for (const auto& m : family.members) table.rows.push_back({m.sigma0, m.anchor_strain});
  std::sort(table.rows.begin(), table.rows.end(),
            [](const PlasticityRow& a, const PlasticityRow& b) { return a.yield_stress < b.yield_stress; });
  for (std::size_t i = 1; i < table.rows.size(); ++i) {
    if (!(table.rows[i].plastic_strain > table.rows[i - 1].plastic_strain))
      fail(ErrorCode::NonMonotoneAnchors, "anchor strain does not increase with sigma0 at row " + std::to_string(i));
  }
  return table;
}

// ---------------------------------------------------------------------- Prony

namespace {

struct PronyProblem {
  std::vector<double> omega;
  std::vector<double> storage;
  std::vector<double> loss;

  Eigen::MatrixXd design(const std::vector<double>& taus) const {
    const Eigen::Index rows = static_cast<Eigen::Index>(2 * omega.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(taus.size() + 1));
    for (std::size_t r = 0; r < omega.size(); ++r) {
      const auto ri = static_cast<Eigen::Index>(r);
      const auto li = static_cast<Eigen::Index>(r + omega.size());
      A(ri, 0) = 1.0 / storage[r];
      for (std::size_t k = 0; k < taus.size(); ++k) {
        const double wt = omega[r] * taus[k];
        const auto c = static_cast<Eigen::Index>(k + 1);
        A(ri, c) = wt * wt / (1.0 + wt * wt) / storage[r];
        A(li, c) = wt / (1.0 + wt * wt) / loss[r];
      }
    }
    return A;
  }

  Eigen::VectorXd rhs() const { return Eigen::VectorXd::Ones(static_cast<Eigen::Index>(2 * omega.size())); }

  double objective(const std::vector<double>& taus, Eigen::VectorXd* coef = nullptr) const {
    const Eigen::MatrixXd A = design(taus);
    const Eigen::VectorXd b = rhs();
    const Eigen::VectorXd x = detail::nnls(A, b);
    if (coef != nullptr) *coef = x;
    return (A * x - b).squaredNorm();
  }
};

// Minimizes f over [lo, hi] by a coarse scan followed by golden-section search.
template <class F>
double minimize_scalar(F&& f, double lo, double hi, double& best_value) {
  constexpr int kScan = 12;
  double best_u = lo;
  best_value = std::numeric_limits<double>::infinity();
  std::vector<double> us(kScan + 1);
  for (int i = 0; i <= kScan; ++i) {
    us[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / kScan;
    const double v = f(us[static_cast<std::size_t>(i)]);
    if (v < best_value) {
      best_value = v;
      best_u = us[static_cast<std::size_t>(i)];
    }
  }
  double a = std::max(lo, best_u - (hi - lo) / kScan);
  double b = std::min(hi, best_u + (hi - lo) / kScan);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a);
  double d = a + g * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < 60 && b - a > 1e-10; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  const double u = fc < fd ? c : d;
  const double fu = std::min(fc, fd);
  if (fu < best_value) {
    best_value = fu;
    best_u = u;
  }
  return best_u;
}

}  // namespace

PronySeries fit_prony(const FrequencySweep& sweep, int n_terms, const PronyFitOptions& options) {
  if (n_terms < 1) fail(ErrorCode::InvalidArgument, "n_terms must be at least 1");
  if (sweep.rows.size() < static_cast<std::size_t>(2 * n_terms))
    fail(ErrorCode::InsufficientData, "Prony fit with " + std::to_string(n_terms) + " terms needs at least " +
                                          std::to_string(2 * n_terms) + " rows");
  PronyProblem prob;
  double fmin = std::numeric_limits<double>::infinity();
  double fmax = 0.0;
  for (const auto& r : sweep.rows) {
    if (!(r.freq_hz > 0.0) || !(r.storage_mpa > 0.0) || !(r.loss_mpa > 0.0))
      fail(ErrorCode::InvalidArgument, "Prony fit needs positive frequency, storage and loss");
    prob.omega.push_back(2.0 * std::numbers::pi * r.freq_hz);
    prob.storage.push_back(r.storage_mpa);
    prob.loss.push_back(r.loss_mpa);
    fmin = std::min(fmin, r.freq_hz);
    fmax = std::max(fmax, r.freq_hz);
  }
  const double tau_min = 1.0 / (2.0 * std::numbers::pi * fmax);
  const double tau_max = 1.0 / (2.0 * std::numbers::pi * fmin);

  std::vector<double> taus(static_cast<std::size_t>(n_terms));
  if (n_terms == 1) {
    taus[0] = std::sqrt(tau_min * tau_max);
  } else {
    for (int k = 0; k < n_terms; ++k)
      taus[static_cast<std::size_t>(k)] =
          std::exp(std::log(tau_min) + (std::log(tau_max) - std::log(tau_min)) * k / (n_terms - 1));
  }

  double current = prob.objective(taus);
  if (options.refine) {
    const double margin = 1e-3;  // keeps neighbouring taus distinct
    for (std::size_t k = 0; k < taus.size(); ++k) {
      const double lo = k == 0 ? std::log(tau_min / options.outer_tau_factor) : std::log(taus[k - 1]) + margin;
      const double hi =
          k + 1 == taus.size() ? std::log(tau_max * options.outer_tau_factor) : std::log(taus[k + 1]) - margin;
      if (!(hi > lo)) continue;
      std::vector<double> trial = taus;
      double value = 0.0;
      const double u = minimize_scalar(
          [&](double lu) {
            trial[k] = std::exp(lu);
            return prob.objective(trial);
          },
          lo, hi, value);
      if (value < current) {
        taus[k] = std::exp(u);
        current = value;
      }
    }
  }

  Eigen::VectorXd coef;
  prob.objective(taus, &coef);
  PronySeries series;
  series.e_infinity = coef(0);
  for (std::size_t k = 0; k < taus.size(); ++k) series.terms.push_back({coef(static_cast<Eigen::Index>(k + 1)), taus[k]});

  double se = 0.0, sl = 0.0;
  for (const auto& r : sweep.rows) {
    se += std::pow((series.storage(r.freq_hz) - r.storage_mpa) / r.storage_mpa, 2);
    sl += std::pow((series.loss(r.freq_hz) - r.loss_mpa) / r.loss_mpa, 2);
  }
  const double n = static_cast<double>(sweep.rows.size());
  series.rms_storage = std::sqrt(se / n);
  series.rms_loss = std::sqrt(sl / n);
  return series;
}

bool check_viscoelastic_dominance(const FrequencySweep& sweep) {
  if (sweep.rows.empty()) fail(ErrorCode::InsufficientData, "empty frequency sweep");
  return sweep.max_tan_delta() >= 1.0;
}

// ---------------------------------------------------------------- calibration

MaterialCard calibrate_material(const CalibrationInputs& inputs) {
  MaterialCard card;
  card.name = inputs.name;
  inputs.main_loading.validate_main_loading();
  card.marlow = MarlowCurve(inputs.main_loading, inputs.interpolation);
  card.alpha_t = inputs.constants.alpha_t;
  card.poisson = inputs.constants.poisson;
  card.density = inputs.constants.density;

  if (!inputs.unloading.empty()) {
    card.unloading = UnloadingFamily::from_curves(inputs.unloading);
    card.unloading.validate(&card.marlow);
    card.plasticity = extract_plasticity_table(card.unloading, card.marlow);
    if (inputs.fit_damage && card.unloading.members.size() >= 2) {
      const DamageFit fit = fit_damage_params(card.marlow, card.unloading);
      card.damage = fit.params;
      card.damage_rms_mpa = fit.rms_mpa;
    }
  }
  if (inputs.sweep) {
    card.viscoelastic_enabled = check_viscoelastic_dominance(*inputs.sweep);
    if (inputs.sweep->rows.size() >= static_cast<std::size_t>(2 * inputs.prony_terms))
      card.prony = fit_prony(*inputs.sweep, inputs.prony_terms);
    else if (card.viscoelastic_enabled)
      fail(ErrorCode::InsufficientData, "viscoelastic material needs enough sweep rows for the Prony fit");
  }
  card.validate();
  return card;
}

MaterialCard linear_fallback_card(const std::string& name, double modulus_mpa, double max_strain,
                                  const MaterialDefaults& constants) {
  if (!(modulus_mpa > 0.0) || !(max_strain > 0.0))
    fail(ErrorCode::InvalidArgument, "fallback card needs positive modulus and strain range");
  DmaCurve curve;
  curve.kind = CurveKind::loading;
  curve.sample_id = name + "-linear";
  constexpr int kRows = 11;
  for (int i = 0; i < kRows; ++i) {
    const double e = max_strain * i / (kRows - 1);
    curve.points.push_back({e, modulus_mpa * e});
  }
  MaterialCard card;
  card.name = name;
  card.marlow = MarlowCurve(std::move(curve));
  card.alpha_t = constants.alpha_t;
  card.poisson = constants.poisson;
  card.density = constants.density;
  card.validate();
  return card;
}

}  // namespace morphsim
