#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

#include "morphsim/dma_ingest.hpp"
#include "morphsim/error.hpp"
#include "test_support.hpp"

using namespace morphsim;
using namespace morphsim::test;

namespace {


// Independent least-squares polynomial on scaled abscissae.
std::vector<double> poly_fit(const std::vector<double>& x, const std::vector<double>& y, int degree) {
  const double xmax = *std::max_element(x.begin(), x.end());
  Eigen::MatrixXd V(static_cast<Eigen::Index>(x.size()), degree + 1);
  Eigen::VectorXd b(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    double t = 1.0;
    for (int k = 0; k <= degree; ++k) {
      V(static_cast<Eigen::Index>(i), k) = t;
      t *= x[i] / xmax;
    }
    b(static_cast<Eigen::Index>(i)) = y[i];
  }
  const Eigen::VectorXd c = V.colPivHouseholderQr().solve(b);
  const Eigen::VectorXd fit = V * c;
  return {fit.data(), fit.data() + fit.size()};
}

double interp(const DmaCurve& c, double strain) {
  const auto& p = c.points;
  if (strain <= p.front().strain) return p.front().stress;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (strain <= p[i].strain) {
      const double t = (strain - p[i - 1].strain) / (p[i].strain - p[i - 1].strain);
      return p[i - 1].stress + t * (p[i].stress - p[i - 1].stress);
    }
  }
  return p.back().stress;
}

double master(double e) { return 1.2 * e - 1.5 * e * e + 2.0 * e * e * e; }

}  // namespace

TEST(DmaParse, TableS1LoadingCurve) {
  const auto v = parse_dma_csv(data_path("fixtures/table_s1_loading.csv"), CsvSchema::stress_strain);
  const auto& c = std::get<DmaCurve>(v);
  ASSERT_EQ(c.size(), 30u);
  EXPECT_EQ(c.back().strain, 0.232);
  EXPECT_EQ(c.back().stress, 0.204067);
  EXPECT_EQ(c.kind, CurveKind::loading);
  EXPECT_NO_THROW(c.validate_main_loading());
}

TEST(DmaParse, TableS3PlaFirstRow) {
  const auto v = parse_dma_csv(data_path("fixtures/table_s3_pla.csv"), CsvSchema::frequency_sweep);
  const auto& s = std::get<FrequencySweep>(v);
  ASSERT_FALSE(s.rows.empty());
  EXPECT_EQ(s.rows.front(), (FrequencyRow{0.01, 2.49694, 0.620318, 0.248431, 0.0095}));
  EXPECT_NO_THROW(s.validate());
}

TEST(DmaParse, SweepTanDeltaConsistentWithinTolerance) {
  for (const char* f : {"fixtures/table_s3_pla.csv", "fixtures/table_s3_cfpla.csv"}) {
    const auto s = parse_frequency_sweep_csv(data_path(f));
    for (const auto& r : s.rows) EXPECT_NEAR(r.loss_mpa / r.storage_mpa, r.tan_delta, 1e-3 * r.tan_delta);
  }
}

TEST(DmaParse, HeaderOnlyIsEmptyFile) {
  EXPECT_EQ(error_code_of([] { parse_stress_strain_text("strain,stress_mpa\n"); }), ErrorCode::EmptyFile);
  EXPECT_EQ(error_code_of([] { parse_stress_strain_text(""); }), ErrorCode::EmptyFile);
}

TEST(DmaParse, MalformedRowCarriesIndex) {
  try {
    parse_stress_strain_text("strain,stress_mpa\n0,0\n0.1,abc\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedRow);
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
  }
}

TEST(DmaParse, SchemaMismatch) {
  EXPECT_EQ(error_code_of([] { parse_stress_strain_text("strain,stress\n0,0\n"); }), ErrorCode::SchemaMismatch);
  EXPECT_EQ(error_code_of([] { parse_stress_strain_text("strain,stress_mpa\n0,0,1\n"); }),
            ErrorCode::SchemaMismatch);
  EXPECT_EQ(error_code_of([] { parse_frequency_sweep_text("strain,stress_mpa\n0,0\n"); }),
            ErrorCode::SchemaMismatch);
}

TEST(DmaParse, CrlfAndBomAccepted) {
  const auto c = parse_stress_strain_text("\xEF\xBB\xBFstrain,stress_mpa\r\n0,0\r\n0.1,0.2\r\n");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.back().stress, 0.2);
}

TEST(DmaParse, RoundTripIsBitIdentical) {
  const auto c = table_s1();
  const auto again = parse_stress_strain_text(to_csv(c));
  ASSERT_EQ(again.points, c.points);

  const auto s = parse_frequency_sweep_csv(data_path("fixtures/table_s3_cfpla.csv"));
  EXPECT_EQ(parse_frequency_sweep_text(to_csv(s)).rows, s.rows);

  DmaCurve odd;
  odd.points = {{0.0, 0.0}, {0.1 + 0.2, 1.0 / 3.0}, {1e-300, 5e-324}};
  EXPECT_EQ(parse_stress_strain_text(to_csv(odd)).points, odd.points);
}

TEST(DmaSmooth, ZeroPenaltyFullKnotsInterpolates) {
  const auto c = table_s1();
  SmootherConfig cfg;
  cfg.lambda = 0.0;
  cfg.knot_stride = 1;
  const auto s = smooth_pspline(c, cfg);
  ASSERT_EQ(s.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(s.points[i].strain, c.points[i].strain);
    EXPECT_NEAR(s.points[i].stress, c.points[i].stress, 1e-9);
  }
  const auto twice = smooth_pspline(s, cfg);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(twice.points[i].stress, s.points[i].stress, 1e-9);
}

TEST(DmaSmooth, TableS1DefaultConfigStaysCloseAndAgreesWithPolynomialOracle) {
  const auto c = table_s1();
  const auto r = smooth_pspline_detailed(c, SmootherConfig{});
  const auto oracle = poly_fit(c.strains(), c.stresses(), 7);
  double dev = 0.0, oracle_dev = 0.0, gap = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    dev = std::max(dev, std::abs(r.curve.points[i].stress - c.points[i].stress));
    oracle_dev = std::max(oracle_dev, std::abs(oracle[i] - c.points[i].stress));
    gap = std::max(gap, std::abs(r.curve.points[i].stress - oracle[i]));
  }
  EXPECT_LT(dev, 0.005);
  EXPECT_LT(oracle_dev, 0.005);
  EXPECT_LT(gap, 0.005);
  EXPECT_GT(r.lambda, 0.0);
  const double peak = c.peak_stress();
  EXPECT_NEAR(r.curve.front().stress, c.front().stress, 0.02 * peak);
  EXPECT_NEAR(r.curve.back().stress, c.back().stress, 0.02 * peak);
}

TEST(DmaSmooth, NoisyCubicIsDenoised) {
  std::mt19937 rng(20240611u);
  std::uniform_real_distribution<double> noise(-0.01, 0.01);
  DmaCurve c;
  std::vector<double> clean;
  for (int i = 0; i < 80; ++i) {
    const double e = 0.3 * i / 79.0;
    const double s = 0.5 * e + 2.0 * e * e - 3.0 * e * e * e;
    clean.push_back(s);
    c.points.push_back({e, std::max(0.0, s + noise(rng))});
  }
  c.kind = CurveKind::loading;
  const auto sm = smooth_pspline(c, SmootherConfig{});
  double raw_rms = 0.0, sm_rms = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    raw_rms += std::pow(c.points[i].stress - clean[i], 2);
    sm_rms += std::pow(sm.points[i].stress - clean[i], 2);
  }
  EXPECT_LT(sm_rms, raw_rms);
}

TEST(DmaSmooth, RejectsShortAndDuplicateInput) {
  DmaCurve small;
  for (int i = 0; i < 5; ++i) small.points.push_back({0.01 * i, 0.01 * i});
  EXPECT_EQ(error_code_of([&] { smooth_pspline(small, {}); }), ErrorCode::TooFewPoints);
  DmaCurve dup;
  for (int i = 0; i < 12; ++i) dup.points.push_back({0.01 * (i / 2), 0.01 * i});
  EXPECT_EQ(error_code_of([&] { smooth_pspline(dup, {}); }), ErrorCode::SingularSystem);
  SmootherConfig neg;
  neg.lambda = -1.0;
  EXPECT_EQ(error_code_of([&] { smooth_pspline(table_s1(), neg); }), ErrorCode::InvalidArgument);
}

TEST(DmaCycles, MonotoneInputHasNoCycles) {
  EXPECT_EQ(error_code_of([] { segment_cycles(table_s1()); }), ErrorCode::NoCyclesFound);
}

TEST(DmaCycles, TriangleWaveWithFourPeaks) {
  const double peaks[4] = {0.05, 0.10, 0.15, 0.20};
  DmaCurve raw;
  raw.kind = CurveKind::mixed;
  for (double pk : peaks) {
    for (int i = 0; i <= 10; ++i) raw.points.push_back({pk * i / 10.0, pk * i / 10.0});
    for (int i = 9; i >= 0; --i) raw.points.push_back({pk * i / 10.0, pk * i / 10.0});
  }
  const auto set = segment_cycles(raw);
  ASSERT_EQ(set.cycles.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(set.peak_stresses[k], peaks[k]);
  EXPECT_TRUE(std::is_sorted(set.peak_stresses.begin(), set.peak_stresses.end()));

  // concatenating the runs gives back the raw multiset
  std::vector<CurvePoint> joined;
  for (const auto& c : set.cycles) {
    joined.insert(joined.end(), c.loading.points.begin(), c.loading.points.end());
    joined.insert(joined.end(), c.unloading.points.begin(), c.unloading.points.end());
  }
  for (const auto& u : set.unpaired) joined.insert(joined.end(), u.points.begin(), u.points.end());
  auto key = [](const CurvePoint& a, const CurvePoint& b) {
    return std::tie(a.strain, a.stress) < std::tie(b.strain, b.stress);
  };
  auto expected = raw.points;
  std::sort(joined.begin(), joined.end(), key);
  std::sort(expected.begin(), expected.end(), key);
  EXPECT_EQ(joined, expected);
}

TEST(DmaCycles, LoadingThenTableS2Unloading) {
  DmaCurve raw = table_s1();
  const auto un = fixture_curve("table_s2_unloading_0203.csv");
  raw.points.insert(raw.points.end(), un.points.begin(), un.points.end());
  raw.kind = CurveKind::mixed;
  const auto set = segment_cycles(raw);
  ASSERT_EQ(set.cycles.size(), 1u);
  EXPECT_EQ(set.cycles[0].unloading.front().strain, 0.231577);
  const double end = set.cycles[0].loading.back().strain;
  EXPECT_LT(std::abs(set.cycles[0].unloading.front().strain - end), 0.01);
}

TEST(DmaEnvelope, SingleCycleReturnsItsLoading) {
  DmaCurve raw = table_s1();
  const auto un = fixture_curve("table_s2_unloading_0203.csv");
  raw.points.insert(raw.points.end(), un.points.begin(), un.points.end());
  const auto env = extract_main_loading_curve(segment_cycles(raw));
  EXPECT_EQ(env.points, table_s1().points);
}

TEST(DmaEnvelope, RecoversMasterCurveFromSoftenedCycles) {
  const double peaks[4] = {0.05, 0.10, 0.15, 0.20};
  const double anchors[4] = {0.01, 0.025, 0.045, 0.07};
  DmaCurve raw;
  std::vector<CurvePoint> master_pts;
  double prev_peak = 0.0, prev_anchor = 0.0;
  for (int k = 0; k < 4; ++k) {
    if (k > 0) {
      // softened reloading up to the previous peak
      for (int i = 1; i <= 8; ++i) {
        const double t = i / 8.0;
        const double e = prev_anchor + t * (prev_peak - prev_anchor);
        raw.points.push_back({e, master(prev_peak) * t * t});
      }
    }
    for (int i = 1; i <= 10; ++i) {
      const double e = prev_peak + (peaks[k] - prev_peak) * i / 10.0;
      raw.points.push_back({e, master(e)});
      master_pts.push_back({e, master(e)});
    }
    for (int i = 1; i <= 8; ++i) {
      const double t = 1.0 - i / 8.0;
      const double e = anchors[k] + t * (peaks[k] - anchors[k]);
      raw.points.push_back({e, master(peaks[k]) * t * t});
    }
    prev_peak = peaks[k];
    prev_anchor = anchors[k];
  }
  raw.points.insert(raw.points.begin(), CurvePoint{0.0, 0.0});
  const auto set = segment_cycles(raw);
  ASSERT_EQ(set.cycles.size(), 4u);
  const auto env = extract_main_loading_curve(set);
  ASSERT_EQ(env.size(), master_pts.size() + 1);
  for (std::size_t i = 0; i < master_pts.size(); ++i) {
    EXPECT_NEAR(env.points[i + 1].strain, master_pts[i].strain, 1e-6);
    EXPECT_NEAR(env.points[i + 1].stress, master_pts[i].stress, 1e-6);
  }
}

TEST(DmaEnvelope, FourCyclePlaTestMatchesLoadingTable) {
  const auto raw = fixture_curve("pla_4cycle_reconstructed.csv");
  const auto set = segment_cycles(raw);
  ASSERT_EQ(set.cycles.size(), 4u);
  const auto env = extract_main_loading_curve(set);
  for (std::size_t i = 1; i < env.size(); ++i) {
    EXPECT_GE(env.points[i].strain, env.points[i - 1].strain);
    EXPECT_GE(env.points[i].stress, env.points[i - 1].stress);
  }
  const auto s1 = table_s1();
  for (const auto& p : s1.points) {
    if (p.strain > env.back().strain) continue;
    EXPECT_NEAR(interp(env, p.strain), p.stress, 0.002) << "strain " << p.strain;
  }
}

TEST(DmaEnvelope, MullinsViolatingReloadIsRejected) {
  DmaCurve raw;
  for (int i = 0; i <= 10; ++i) raw.points.push_back({0.01 * i, 0.1 * i});
  for (int i = 9; i >= 0; --i) raw.points.push_back({0.005 + 0.0095 * i, 0.1 * i});
  // reload that continues far below the prior envelope
  for (int i = 1; i <= 15; ++i) raw.points.push_back({0.005 + 0.01 * i, 0.02 * i});
  for (int i = 14; i >= 0; --i) raw.points.push_back({0.01 + 0.01 * i, 0.02 * i});
  const auto set = segment_cycles(raw);
  ASSERT_EQ(set.cycles.size(), 2u);
  EXPECT_EQ(error_code_of([&] { extract_main_loading_curve(set); }), ErrorCode::OverlapInconsistency);
}
