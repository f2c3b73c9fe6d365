#pragma once

// Parsing, smoothing and cycle segmentation of DMA test data.
//
// Units are fixed: strain dimensionless, stress and moduli MPa, frequency Hz,
// temperature degrees C. Nothing here converts units.

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace morphsim {

struct CurvePoint {
  double strain = 0.0;
  double stress = 0.0;  // MPa

  bool operator==(const CurvePoint&) const = default;
};

enum class CurveKind { loading, unloading, mixed };

std::string to_string(CurveKind kind);
CurveKind curve_kind_from_string(const std::string& s);

/// Engineering stress-strain series from a tensile test.
struct DmaCurve {
  std::vector<CurvePoint> points;
  CurveKind kind = CurveKind::mixed;
  double temperature_c = 80.0;
  std::string sample_id;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  const CurvePoint& front() const { return points.front(); }
  const CurvePoint& back() const { return points.back(); }

  std::vector<double> strains() const;
  std::vector<double> stresses() const;
  double peak_stress() const;

  /// Strictly increasing strain -> loading, strictly decreasing -> unloading, otherwise mixed.
  static CurveKind infer_kind(const std::vector<CurvePoint>& points);

  /// Checks monotonicity for loading/unloading kinds and non-negative stresses.
  void validate() const;
  /// validate() plus the (0, 0) origin required of a main loading curve.
  void validate_main_loading() const;
};

struct FrequencyRow {
  double freq_hz = 0.0;
  double storage_mpa = 0.0;
  double loss_mpa = 0.0;
  double tan_delta = 0.0;
  double pre_strain = 0.0;

  bool operator==(const FrequencyRow&) const = default;
};

/// Storage/loss modulus versus frequency at a fixed pre-strain.
struct FrequencySweep {
  std::vector<FrequencyRow> rows;
  std::string material_label;

  double max_tan_delta() const;
  void validate() const;
};

struct Cycle {
  DmaCurve loading;
  DmaCurve unloading;
};

struct CycleSet {
  std::vector<Cycle> cycles;
  std::vector<double> peak_stresses;
  /// Monotone runs that could not be paired (a leading unloading run or a
  /// trailing loading run). Kept so that no raw point is lost.
  std::vector<DmaCurve> unpaired;
};

enum class CsvSchema { stress_strain, frequency_sweep };

CsvSchema csv_schema_from_string(const std::string& s);

DmaCurve parse_stress_strain_csv(const std::filesystem::path& path);
FrequencySweep parse_frequency_sweep_csv(const std::filesystem::path& path);
std::variant<DmaCurve, FrequencySweep> parse_dma_csv(const std::filesystem::path& path, CsvSchema schema);

DmaCurve parse_stress_strain_text(const std::string& text, const std::string& sample_id = {});
FrequencySweep parse_frequency_sweep_text(const std::string& text, const std::string& label = {});

std::string to_csv(const DmaCurve& curve);
std::string to_csv(const FrequencySweep& sweep);
void write_csv(const DmaCurve& curve, const std::filesystem::path& path);
void write_csv(const FrequencySweep& sweep, const std::filesystem::path& path);

struct SmootherConfig {
  /// Penalty weight. Empty selects it by generalized cross-validation.
  std::optional<double> lambda;
  int penalty_order = 2;
  /// One knot every `knot_stride` data abscissae.
  int knot_stride = 3;
};

struct SmoothingResult {
  DmaCurve curve;
  double lambda = 0.0;
  double gcv = 0.0;
  double effective_dof = 0.0;
};

/// Penalized cubic B-spline smoothing of the stress ordinates.
SmoothingResult smooth_pspline_detailed(const DmaCurve& curve, const SmootherConfig& config);
DmaCurve smooth_pspline(const DmaCurve& curve, const SmootherConfig& config);

/// Fraction of the running peak stress a reversal must exceed to count.
inline constexpr double kReversalThreshold = 0.005;
/// Allowed drop of a reloading branch below the prior envelope, as a fraction of peak stress.
inline constexpr double kEnvelopeOverlapTolerance = 0.05;

CycleSet segment_cycles(const DmaCurve& raw);
DmaCurve extract_main_loading_curve(const CycleSet& cycles);

}  // namespace morphsim
