#include "morphsim/dma_ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/Splines>

#include "morphsim/error.hpp"
#include "text_util.hpp"

namespace morphsim {

std::string to_string(CurveKind kind) {
  switch (kind) {
    case CurveKind::loading: return "loading";
    case CurveKind::unloading: return "unloading";
    case CurveKind::mixed: return "mixed";
  }
  return "mixed";
}

CurveKind curve_kind_from_string(const std::string& s) {
  if (s == "loading") return CurveKind::loading;
  if (s == "unloading") return CurveKind::unloading;
  if (s == "mixed") return CurveKind::mixed;
  fail(ErrorCode::InvalidArgument, "unknown curve kind '" + s + "'");
}

CsvSchema csv_schema_from_string(const std::string& s) {
  if (s == "stress_strain") return CsvSchema::stress_strain;
  if (s == "frequency_sweep") return CsvSchema::frequency_sweep;
  fail(ErrorCode::InvalidArgument, "unknown CSV schema '" + s + "'");
}

std::vector<double> DmaCurve::strains() const {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.strain);
  return out;
}

std::vector<double> DmaCurve::stresses() const {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.stress);
  return out;
}

double DmaCurve::peak_stress() const {
  double peak = 0.0;
  for (const auto& p : points) peak = std::max(peak, p.stress);
  return peak;
}

CurveKind DmaCurve::infer_kind(const std::vector<CurvePoint>& points) {
  if (points.size() < 2) return CurveKind::loading;
  bool up = true, down = true;
  for (std::size_t i = 1; i < points.size(); ++i) {
    up = up && points[i].strain > points[i - 1].strain;
    down = down && points[i].strain < points[i - 1].strain;
  }
  if (up) return CurveKind::loading;
  if (down) return CurveKind::unloading;
  return CurveKind::mixed;
}

void DmaCurve::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!std::isfinite(p.strain) || !std::isfinite(p.stress))
      fail(ErrorCode::InvalidArgument, "non-finite value at point " + std::to_string(i));
    if (p.stress < 0.0)
      fail(ErrorCode::InvalidArgument, "negative stress at point " + std::to_string(i));
    if (i == 0) continue;
    if (kind == CurveKind::loading && !(p.strain > points[i - 1].strain))
      fail(ErrorCode::InvalidArgument, "loading curve strain not strictly increasing at point " + std::to_string(i));
    if (kind == CurveKind::unloading && !(p.strain < points[i - 1].strain))
      fail(ErrorCode::InvalidArgument, "unloading curve strain not strictly decreasing at point " + std::to_string(i));
  }
}

void DmaCurve::validate_main_loading() const {
  if (kind != CurveKind::loading) fail(ErrorCode::InvalidArgument, "main loading curve must be of kind loading");
  if (points.size() < 2) fail(ErrorCode::TooFewPoints, "main loading curve needs at least 2 points");
  validate();
  if (std::abs(points.front().strain) > 1e-9 || std::abs(points.front().stress) > 1e-9)
    fail(ErrorCode::InvalidArgument, "main loading curve must start at (0, 0)");
}

double FrequencySweep::max_tan_delta() const {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, r.tan_delta);
  return m;
}

void FrequencySweep::validate() const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (!(r.freq_hz > 0.0)) fail(ErrorCode::InvalidArgument, "frequency must be positive at row " + std::to_string(i));
    if (i > 0 && !(r.freq_hz > rows[i - 1].freq_hz))
      fail(ErrorCode::InvalidArgument, "frequencies not strictly increasing at row " + std::to_string(i));
    if (r.storage_mpa > 0.0) {
      const double ratio = r.loss_mpa / r.storage_mpa;
      if (std::abs(ratio - r.tan_delta) > 1e-3 * std::max(std::abs(r.tan_delta), 1e-12) &&
          std::abs(ratio - r.tan_delta) > 1e-12)
        fail(ErrorCode::InvalidArgument, "tan_delta inconsistent with loss/storage at row " + std::to_string(i));
    }
    if (i > 0 && r.pre_strain != rows[0].pre_strain)
      fail(ErrorCode::InvalidArgument, "pre_strain varies across rows (row " + std::to_string(i) + ")");
  }
}

// ---------------------------------------------------------------------------
// CSV

namespace {

const std::vector<std::string> kStressStrainHeader = {"strain", "stress_mpa"};
const std::vector<std::string> kSweepHeader = {"freq_hz", "storage_mpa", "loss_mpa", "tan_delta", "pre_strain"};


}  // namespace

DmaCurve parse_stress_strain_text(const std::string& text, const std::string& sample_id) {
  const auto rows = detail::parse_numeric_table(text, kStressStrainHeader);
  DmaCurve curve;
  curve.sample_id = sample_id;
  curve.points.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i][1] < 0.0) fail(ErrorCode::MalformedRow, "row " + std::to_string(i) + ": negative stress");
    curve.points.push_back({rows[i][0], rows[i][1]});
  }
  curve.kind = DmaCurve::infer_kind(curve.points);
  return curve;
}

FrequencySweep parse_frequency_sweep_text(const std::string& text, const std::string& label) {
  const auto rows = detail::parse_numeric_table(text, kSweepHeader);
  FrequencySweep sweep;
  sweep.material_label = label;
  for (const auto& r : rows) sweep.rows.push_back({r[0], r[1], r[2], r[3], r[4]});
  return sweep;
}

DmaCurve parse_stress_strain_csv(const std::filesystem::path& path) {
  return parse_stress_strain_text(detail::read_file(path), path.stem().string());
}

FrequencySweep parse_frequency_sweep_csv(const std::filesystem::path& path) {
  return parse_frequency_sweep_text(detail::read_file(path), path.stem().string());
}

std::variant<DmaCurve, FrequencySweep> parse_dma_csv(const std::filesystem::path& path, CsvSchema schema) {
  if (schema == CsvSchema::stress_strain) return parse_stress_strain_csv(path);
  return parse_frequency_sweep_csv(path);
}

std::string to_csv(const DmaCurve& curve) {
  std::string out = "strain,stress_mpa\n";
  for (const auto& p : curve.points) out += detail::format_double(p.strain) + "," + detail::format_double(p.stress) + "\n";
  return out;
}

std::string to_csv(const FrequencySweep& sweep) {
  std::string out = "freq_hz,storage_mpa,loss_mpa,tan_delta,pre_strain\n";
  for (const auto& r : sweep.rows)
    out += detail::format_double(r.freq_hz) + "," + detail::format_double(r.storage_mpa) + "," +
           detail::format_double(r.loss_mpa) + "," + detail::format_double(r.tan_delta) + "," +
           detail::format_double(r.pre_strain) + "\n";
  return out;
}

void write_csv(const DmaCurve& curve, const std::filesystem::path& path) { detail::write_file(path, to_csv(curve)); }
void write_csv(const FrequencySweep& sweep, const std::filesystem::path& path) { detail::write_file(path, to_csv(sweep)); }

// ---------------------------------------------------------------------------
// P-spline smoothing

namespace {

using SplineBasis = Eigen::Spline<double, 1, 3>;

struct PenalizedFit {
  Eigen::VectorXd fitted;
  double rss = 0.0;
  double trace_hat = 0.0;
};

class PSplineProblem {
public:
  PSplineProblem(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& w,
                 int knot_stride, int penalty_order)
      : y_(Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()))),
        w_(Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()))) {
    const auto n = static_cast<Eigen::Index>(x.size());
    // breakpoints at every knot_stride-th abscissa, always including both ends
    std::vector<double> breaks;
    for (std::size_t i = 0; i < x.size(); i += static_cast<std::size_t>(knot_stride)) breaks.push_back(x[i]);
    if (breaks.back() != x.back()) breaks.push_back(x.back());
    constexpr int degree = 3;
    knots_.resize(static_cast<Eigen::Index>(breaks.size() + 2 * degree));
    Eigen::Index k = 0;
    for (int i = 0; i < degree; ++i) knots_(k++) = breaks.front();
    for (double b : breaks) knots_(k++) = b;
    for (int i = 0; i < degree; ++i) knots_(k++) = breaks.back();
    const Eigen::Index nbasis = static_cast<Eigen::Index>(breaks.size()) + degree - 1;

    basis_ = Eigen::MatrixXd::Zero(n, nbasis);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double u = x[static_cast<std::size_t>(i)];
      const auto span = SplineBasis::Span(u, degree, knots_);
      const auto values = SplineBasis::BasisFunctions(u, degree, knots_);
      for (int j = 0; j <= degree; ++j) basis_(i, span - degree + j) = values(j);
    }

    Eigen::MatrixXd diff = Eigen::MatrixXd::Identity(nbasis, nbasis);
    for (int d = 0; d < penalty_order && diff.rows() > 1; ++d)
      diff = (diff.bottomRows(diff.rows() - 1) - diff.topRows(diff.rows() - 1)).eval();
    penalty_ = diff.transpose() * diff;
    gram_ = basis_.transpose() * w_.asDiagonal() * basis_;
    rhs_ = basis_.transpose() * (w_.array() * y_.array()).matrix();
  }

  double penalty_scale() const {
    const double tp = penalty_.trace();
    return tp > 0.0 ? gram_.trace() / tp : 1.0;
  }

  PenalizedFit solve(double lambda, bool need_trace) const {
    Eigen::VectorXd coef;
    Eigen::MatrixXd system = gram_ + lambda * penalty_;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(system);
    const double dmax = ldlt.vectorD().cwiseAbs().maxCoeff();
    const double dmin = ldlt.vectorD().cwiseAbs().minCoeff();
    const bool well_posed = ldlt.info() == Eigen::Success && dmin > 1e-13 * dmax;
    PenalizedFit fit;
    if (well_posed) {
      coef = ldlt.solve(rhs_);
      if (need_trace) fit.trace_hat = ldlt.solve(gram_).trace();
    } else {
      // zero penalty with more basis functions than data: minimum-norm interpolant
      const Eigen::VectorXd sw = w_.cwiseSqrt();
      Eigen::MatrixXd a(basis_.rows() + penalty_.rows(), basis_.cols());
      a << sw.asDiagonal() * basis_, std::sqrt(std::max(lambda, 0.0)) * penalty_;
      Eigen::VectorXd b = Eigen::VectorXd::Zero(a.rows());
      b.head(basis_.rows()) = sw.cwiseProduct(y_);
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
      coef = cod.solve(b);
      if (need_trace) fit.trace_hat = static_cast<double>(std::min(cod.rank(), basis_.rows()));
    }
    fit.fitted = basis_ * coef;
    fit.rss = (w_.array() * (fit.fitted - y_).array().square()).sum();
    return fit;
  }

  double gcv(const PenalizedFit& fit) const {
    const double n = static_cast<double>(y_.size());
    const double denom = n - fit.trace_hat;
    if (denom <= 1e-12) return std::numeric_limits<double>::infinity();
    return n * fit.rss / (denom * denom);
  }

private:
  Eigen::VectorXd y_;
  Eigen::VectorXd w_;
  SplineBasis::KnotVectorType knots_;
  Eigen::MatrixXd basis_;
  Eigen::MatrixXd penalty_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd rhs_;
};

}  // namespace

SmoothingResult smooth_pspline_detailed(const DmaCurve& curve, const SmootherConfig& config) {
  if (curve.size() < 10) fail(ErrorCode::TooFewPoints, "smoothing needs at least 10 points");
  if (config.lambda && !(*config.lambda >= 0.0)) fail(ErrorCode::InvalidArgument, "lambda must be >= 0");
  if (config.penalty_order < 1) fail(ErrorCode::InvalidArgument, "penalty_order must be >= 1");
  if (config.knot_stride < 1) fail(ErrorCode::InvalidArgument, "knot_stride must be >= 1");

  const std::size_t n = curve.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return curve.points[a].strain < curve.points[b].strain; });
  std::vector<double> x(n), y(n), w(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = curve.points[order[i]].strain;
    y[i] = curve.points[order[i]].stress;
    if (i > 0 && !(x[i] > x[i - 1]))
      fail(ErrorCode::SingularSystem, "duplicate strain abscissa " + detail::format_double(x[i]));
  }
  // a loading curve keeps its physical origin
  const bool pin_origin = curve.kind == CurveKind::loading && std::abs(curve.front().strain) <= 1e-9 &&
                          std::abs(curve.front().stress) <= 1e-9;
  if (pin_origin) w[0] = 1e8;

  const PSplineProblem problem(x, y, w, config.knot_stride, config.penalty_order);

  double lambda = 0.0;
  PenalizedFit best;
  if (config.lambda) {
    lambda = *config.lambda;
    best = problem.solve(lambda, true);
  } else {
    const double scale = problem.penalty_scale();
    auto score = [&](double log10_lambda) { return problem.gcv(problem.solve(scale * std::pow(10.0, log10_lambda), true)); };
    double best_log = -10.0, best_score = std::numeric_limits<double>::infinity();
    for (double lg = -10.0; lg <= 6.0 + 1e-9; lg += 0.25) {
      const double s = score(lg);
      if (s < best_score) best_score = s, best_log = lg;
    }
    // golden-section refinement around the best grid point
    double a = best_log - 0.25, b = best_log + 0.25;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = score(c), fd = score(d);
    for (int it = 0; it < 40; ++it) {
      if (fc < fd) {
        b = d, d = c, fd = fc;
        c = b - g * (b - a), fc = score(c);
      } else {
        a = c, c = d, fc = fd;
        d = a + g * (b - a), fd = score(d);
      }
    }
    const double refined = fc < fd ? c : d;
    if (std::min(fc, fd) < best_score) best_log = refined;
    lambda = scale * std::pow(10.0, best_log);
    best = problem.solve(lambda, true);
  }

  SmoothingResult result;
  result.curve = curve;
  for (std::size_t i = 0; i < n; ++i) result.curve.points[order[i]].stress = best.fitted(static_cast<Eigen::Index>(i));
  if (pin_origin) result.curve.points[order[0]].stress = 0.0;
  result.lambda = lambda;
  result.gcv = problem.gcv(best);
  result.effective_dof = best.trace_hat;
  return result;
}

DmaCurve smooth_pspline(const DmaCurve& curve, const SmootherConfig& config) {
  return smooth_pspline_detailed(curve, config).curve;
}

// ---------------------------------------------------------------------------
// Cycle segmentation

CycleSet segment_cycles(const DmaCurve& raw) {
  const auto& pts = raw.points;
  if (pts.size() < 2) fail(ErrorCode::NoCyclesFound, "fewer than two points");

  // split indices into maximal monotone runs; a reversal is confirmed once the
  // stress has moved away from the run extremum by more than the jitter threshold
  struct Run {
    std::size_t begin, end;  // [begin, end)
    bool up;
  };
  std::vector<Run> runs;
  std::size_t run_begin = 0;
  bool up = true;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].strain != pts[0].strain) {
      up = pts[i].strain > pts[0].strain;
      break;
    }
  }
  std::size_t extremum = 0;
  double running_peak = pts[0].stress;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    running_peak = std::max(running_peak, pts[i].stress);
    const double threshold = kReversalThreshold * running_peak;
    if (up) {
      if (pts[i].strain >= pts[extremum].strain) extremum = i;
      else if (pts[extremum].stress - pts[i].stress > threshold) {
        runs.push_back({run_begin, extremum + 1, true});
        run_begin = extremum + 1;
        up = false;
        extremum = i;
        for (std::size_t j = run_begin; j <= i; ++j)
          if (pts[j].strain <= pts[extremum].strain) extremum = j;
      }
    } else {
      if (pts[i].strain <= pts[extremum].strain) extremum = i;
      else if (pts[i].stress - pts[extremum].stress > threshold) {
        runs.push_back({run_begin, extremum + 1, false});
        run_begin = extremum + 1;
        up = true;
        extremum = i;
        for (std::size_t j = run_begin; j <= i; ++j)
          if (pts[j].strain >= pts[extremum].strain) extremum = j;
      }
    }
  }
  runs.push_back({run_begin, pts.size(), up});

  auto make_curve = [&](const Run& r, std::size_t index) {
    DmaCurve c;
    c.points.assign(pts.begin() + static_cast<std::ptrdiff_t>(r.begin), pts.begin() + static_cast<std::ptrdiff_t>(r.end));
    c.kind = r.up ? CurveKind::loading : CurveKind::unloading;
    c.temperature_c = raw.temperature_c;
    c.sample_id = raw.sample_id + (r.up ? "/load" : "/unload") + std::to_string(index);
    return c;
  };

  CycleSet set;
  std::size_t i = 0;
  std::size_t cycle_index = 0;
  while (i < runs.size()) {
    if (runs[i].up && i + 1 < runs.size() && !runs[i + 1].up) {
      Cycle cycle{make_curve(runs[i], cycle_index), make_curve(runs[i + 1], cycle_index)};
      set.peak_stresses.push_back(cycle.loading.peak_stress());
      set.cycles.push_back(std::move(cycle));
      ++cycle_index;
      i += 2;
    } else {
      set.unpaired.push_back(make_curve(runs[i], cycle_index));
      ++i;
    }
  }
  if (set.cycles.empty()) fail(ErrorCode::NoCyclesFound, "no loading run followed by an unloading run");
  return set;
}

DmaCurve extract_main_loading_curve(const CycleSet& set) {
  if (set.cycles.empty()) fail(ErrorCode::NoCyclesFound, "cycle set is empty");
  double overall_peak = 0.0;
  for (const auto& c : set.cycles) overall_peak = std::max(overall_peak, c.loading.peak_stress());

  DmaCurve envelope;
  envelope.kind = CurveKind::loading;
  envelope.temperature_c = set.cycles.front().loading.temperature_c;
  envelope.sample_id = set.cycles.front().loading.sample_id + "/envelope";

  double prior_peak_strain = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < set.cycles.size(); ++k) {
    const auto& loading = set.cycles[k].loading.points;
    bool first_in_portion = true;
    for (const auto& p : loading) {
      if (!(p.strain > prior_peak_strain)) continue;
      if (!envelope.points.empty()) {
        const auto& last = envelope.points.back();
        if (first_in_portion && k > 0 && p.stress < last.stress - kEnvelopeOverlapTolerance * overall_peak)
          fail(ErrorCode::OverlapInconsistency, "cycle " + std::to_string(k) + " rejoins the envelope " +
                                                    detail::format_double(last.stress - p.stress) +
                                                    " MPa below the prior peak");
        first_in_portion = false;
        // drop jitter and the short stretch where reloading has not yet rejoined
        if (!(p.strain > last.strain) || p.stress < last.stress) continue;
      }
      first_in_portion = false;
      envelope.points.push_back(p);
    }
    for (const auto& p : loading) prior_peak_strain = std::max(prior_peak_strain, p.strain);
  }
  if (!envelope.points.empty() && std::abs(envelope.points.front().strain) <= 1e-9)
    envelope.points.front() = {0.0, 0.0};
  else
    envelope.points.insert(envelope.points.begin(), CurvePoint{0.0, 0.0});
  envelope.validate_main_loading();
  return envelope;
}

}  // namespace morphsim
