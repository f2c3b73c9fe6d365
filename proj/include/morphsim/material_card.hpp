#pragma once

// Constitutive description of one printed block material, calibrated from DMA
// data: tabular hyperelastic loading response, residual-stress dependent
// unloading family, optional Mullins damage law, plasticity anchors, Prony
// series and thermal/elastic constants.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "morphsim/dma_ingest.hpp"

namespace morphsim {

/// Reference temperature for thermal strain (room temperature), degrees C.
inline constexpr double kReferenceTemperatureC = 20.0;

enum class Interpolation { linear, monotone_cubic };

std::string to_string(Interpolation interp);
Interpolation interpolation_from_string(const std::string& s);

/// Uniaxial response of a first-invariant (Marlow) potential, given by its main loading curve.
class MarlowCurve {
public:
  MarlowCurve() = default;
  /// Requires a loading curve starting at (0, 0) with strictly increasing stress.
  explicit MarlowCurve(DmaCurve loading, Interpolation interpolation = Interpolation::linear);

  const DmaCurve& loading() const { return loading_; }
  Interpolation interpolation() const { return interpolation_; }
  bool empty() const { return loading_.points.empty(); }

  double max_strain() const { return loading_.points.back().strain; }
  double max_stress() const { return loading_.points.back().stress; }

  /// Interpolated inside the table, linear extrapolation from the last segment up to 1.2x the last strain.
  double stress(double strain) const;
  /// Strain energy density: integral of stress over strain from 0 (MPa).
  double strain_energy(double strain) const;
  /// Inverse of stress() on the tabulated range (and the extrapolated range).
  double strain_at_stress(double stress) const;
  /// Secant modulus from the origin to 20% of the peak tabulated stress.
  double reference_modulus() const;

private:
  double segment_value(std::size_t i, double strain) const;

  DmaCurve loading_;
  Interpolation interpolation_ = Interpolation::linear;
  std::vector<double> slopes_;  // Fritsch-Carlson tangents for monotone_cubic
  std::vector<double> cumulative_energy_;
};

double eval_uniaxial_stress(const MarlowCurve& marlow, double strain);

enum class UnloadingMode { tabular, ogden_roxburgh };

std::string to_string(UnloadingMode mode);
UnloadingMode unloading_mode_from_string(const std::string& s);

struct UnloadingMember {
  double sigma0 = 0.0;  // MPa, nominal initial residual stress
  DmaCurve curve;       // kind unloading, ends at zero stress
  double anchor_strain = 0.0;
};

struct UnloadingFamily {
  std::vector<UnloadingMember> members;
  UnloadingMode mode = UnloadingMode::tabular;

  bool empty() const { return members.empty(); }
  double min_sigma0() const { return members.front().sigma0; }
  double max_sigma0() const { return members.back().sigma0; }

  /// Builds members from (sigma0, curve) pairs, sorted by sigma0, anchor taken at zero stress.
  static UnloadingFamily from_curves(std::vector<std::pair<double, DmaCurve>> curves);

  /// Checks ordering, anchors and (when given) that members start on the loading curve.
  void validate(const MarlowCurve* marlow = nullptr) const;
};

/// Zero-stress intercept of an unloading curve (linear extrapolation if it stops short of zero).
double anchor_strain_of(const DmaCurve& unloading);

struct DamageParams {
  double r = 2.0;
  double m = 0.05;  // MPa
  double beta = 0.1;
};

struct DamageFit {
  DamageParams params;
  double rms_mpa = 0.0;
  double initial_rms_mpa = 0.0;
  std::size_t n_points = 0;
};

struct PlasticityRow {
  double yield_stress = 0.0;  // MPa
  double plastic_strain = 0.0;

  bool operator==(const PlasticityRow&) const = default;
};

/// Isotropic hardening table; an implied (0, 0) row precedes the stored rows.
struct PlasticityTable {
  std::vector<PlasticityRow> rows;

  double plastic_strain_at(double stress) const;
  void validate() const;
};

struct PronyTerm {
  double modulus = 0.0;  // MPa
  double tau = 0.0;      // s
};

struct PronySeries {
  std::vector<PronyTerm> terms;
  double e_infinity = 0.0;
  double rms_storage = 0.0;  // relative RMS misfit of the fit that produced it
  double rms_loss = 0.0;

  double instantaneous_modulus() const;
  /// e_infinity / instantaneous modulus.
  double long_term_ratio() const;
  double storage(double freq_hz) const;
  double loss(double freq_hz) const;
  void validate() const;
};

struct MaterialCard {
  std::string name;
  MarlowCurve marlow;
  UnloadingFamily unloading;
  std::optional<DamageParams> damage;
  std::optional<double> damage_rms_mpa;
  std::optional<PlasticityTable> plasticity;
  std::optional<PronySeries> prony;
  double alpha_t = 0.0;  // 1/degC
  double poisson = 0.3;
  double density = 1240.0;  // kg/m^3
  bool viscoelastic_enabled = false;

  void validate() const;
  /// Long-term to instantaneous stiffness ratio; 1 unless viscoelasticity is enabled.
  double long_term_ratio() const;
};

struct MaterialDefaults {
  double alpha_t;
  double poisson;
  double density;
};

inline constexpr MaterialDefaults kPlaDefaults{9.17e-4, 0.419, 1240.0};
inline constexpr MaterialDefaults kCfplaDefaults{9.97e-5, 0.359, 1240.0};

/// Tabular unloading: exact member on a sigma0 match, otherwise blend of the two
/// bracketing members re-parameterized on stress / sigma0.
DmaCurve select_unloading_curve(const UnloadingFamily& family, double sigma0);
/// Dispatches on the family mode; ogden_roxburgh synthesizes the curve from the damage law.
DmaCurve select_unloading_curve(const MaterialCard& card, double sigma0);

/// Strain released when the stress drops from sigma0 to zero: start of the
/// selected unloading curve minus its anchor. Zero for sigma0 == 0.
double recoverable_strain(const MaterialCard& card, double sigma0);

/// Secant modulus of an unloading curve over its final 20% stress range.
double released_secant_modulus(const DmaCurve& unloading);

/// Linearized modulus of a layer whose residual stress sigma0 has been released.
double released_modulus(const MaterialCard& card, double sigma0);

/// Released strain and modulus of one trial of the residual-stress search.
struct ReleaseResponse {
  double recoverable_strain = 0.0;
  double modulus = 0.0;
};

/// Re-selects the unloading curve for sigma0 (material follows the stress).
ReleaseResponse release_response(const MaterialCard& card, double sigma0);
/// Keeps a fixed unloading curve and releases only along it, from stress sigma0.
ReleaseResponse release_response_frozen(const DmaCurve& frozen_unloading, double sigma0);

/// Mullins-softened unloading stress at `strain` for a branch from peak_strain to anchor_strain.
double eval_damaged_stress(const MarlowCurve& marlow, const DamageParams& params, double peak_strain,
                           double anchor_strain, double strain);
/// Damage factor eta for current energy w and cycle-peak energy w_max.
double damage_factor(const DamageParams& params, double w, double w_max);

DamageFit fit_damage_params(const MarlowCurve& marlow, const UnloadingFamily& family);

PlasticityTable extract_plasticity_table(const UnloadingFamily& family, const MarlowCurve& marlow);

struct PronyFitOptions {
  /// One coordinate pass over log(tau) after the fixed-grid solve.
  bool refine = true;
  /// How far the outermost relaxation times may move beyond the tested span.
  double outer_tau_factor = 10.0;
};

PronySeries fit_prony(const FrequencySweep& sweep, int n_terms, const PronyFitOptions& options = {});

/// True when tan(delta) reaches 1 somewhere in the sweep (viscous behavior dominates).
bool check_viscoelastic_dominance(const FrequencySweep& sweep);

struct CalibrationInputs {
  std::string name;
  DmaCurve main_loading;
  Interpolation interpolation = Interpolation::linear;
  std::vector<std::pair<double, DmaCurve>> unloading;
  std::optional<FrequencySweep> sweep;
  int prony_terms = 8;
  bool fit_damage = true;
  MaterialDefaults constants = kPlaDefaults;
};

/// Full calibration: Marlow curve, unloading family, plasticity anchors,
/// damage fit (with at least two members), Prony fit and the viscoelastic switch.
MaterialCard calibrate_material(const CalibrationInputs& inputs);

/// Pure hyperelastic card with a linear loading table up to max_strain.
MaterialCard linear_fallback_card(const std::string& name, double modulus_mpa, double max_strain,
                                  const MaterialDefaults& constants);

}  // namespace morphsim
