#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "morphsim/error.hpp"
#include "morphsim/material_card.hpp"
#include "test_support.hpp"

using namespace morphsim;
using namespace morphsim::test;

namespace {

FrequencySweep synthetic_sweep(double e_inf, double e1, double tau1) {
  const auto ref = parse_frequency_sweep_csv(data_path("fixtures/table_s3_pla.csv"));
  FrequencySweep s;
  for (const auto& r : ref.rows) {
    const double w = 2.0 * std::numbers::pi * r.freq_hz;
    const double wt = w * tau1;
    const double storage = e_inf + e1 * wt * wt / (1.0 + wt * wt);
    const double loss = e1 * wt / (1.0 + wt * wt);
    s.rows.push_back({r.freq_hz, storage, loss, loss / storage, r.pre_strain});
  }
  return s;
}

}  // namespace

TEST(Marlow, ExactAtKnotsAndPaperRows) {
  const MarlowCurve m(table_s1());
  EXPECT_EQ(eval_uniaxial_stress(m, 0.0), 0.0);
  EXPECT_EQ(eval_uniaxial_stress(m, 0.232), 0.204067);
  EXPECT_EQ(eval_uniaxial_stress(m, 0.0845246), 0.115441);
  for (auto interp : {Interpolation::linear, Interpolation::monotone_cubic}) {
    const MarlowCurve mc(table_s1(), interp);
    for (const auto& p : table_s1().points) EXPECT_EQ(mc.stress(p.strain), p.stress);
  }
}

TEST(Marlow, MonotoneContinuousAndExtrapolated) {
  for (auto interp : {Interpolation::linear, Interpolation::monotone_cubic}) {
    const MarlowCurve m(table_s1(), interp);
    double prev = -1.0;
    for (int i = 0; i <= 2000; ++i) {
      const double e = 1.2 * 0.232 * i / 2000.0;
      const double s = m.stress(e);
      EXPECT_GE(s, prev);
      if (i > 0) EXPECT_LT(s - prev, 0.01);
      prev = s;
    }
    const double slope = (0.204067 - 0.200807) / (0.232 - 0.223725);
    EXPECT_NEAR(m.stress(0.25), 0.204067 + slope * (0.25 - 0.232), 1e-12);
  }
  const MarlowCurve m(table_s1());
  EXPECT_EQ(error_code_of([&] { m.stress(-0.01); }), ErrorCode::NegativeStrain);
  EXPECT_EQ(error_code_of([&] { m.stress(0.3); }), ErrorCode::StrainOutOfRange);
}

TEST(Marlow, EnergyMatchesQuadratureAndInverse) {
  for (auto interp : {Interpolation::linear, Interpolation::monotone_cubic}) {
    const MarlowCurve m(table_s1(), interp);
    // fine midpoint rule as an independent integral
    const double e_end = 0.2;
    const int n = 200000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += m.stress((i + 0.5) * e_end / n) * e_end / n;
    EXPECT_NEAR(m.strain_energy(e_end), acc, 1e-9);
    for (double s : {0.01, 0.1, 0.2}) EXPECT_NEAR(m.stress(m.strain_at_stress(s)), s, 1e-12);
  }
}

TEST(Marlow, RejectsBadLoadingCurve) {
  DmaCurve c;
  c.points = {{0.0, 0.0}, {0.1, 0.2}, {0.2, 0.2}};
  EXPECT_EQ(error_code_of([&] { MarlowCurve m(c); }), ErrorCode::InvalidArgument);
  c.points = {{0.01, 0.0}, {0.1, 0.2}};
  EXPECT_EQ(error_code_of([&] { MarlowCurve m(c); }), ErrorCode::InvalidArgument);
}

TEST(Unloading, FamilyIsSortedAndOnLoadingCurve) {
  const auto fam = UnloadingFamily::from_curves(table_s2());
  ASSERT_EQ(fam.members.size(), 4u);
  EXPECT_EQ(fam.min_sigma0(), 0.079);
  EXPECT_EQ(fam.max_sigma0(), 0.203);
  const MarlowCurve m(table_s1());
  EXPECT_NO_THROW(fam.validate(&m));
}

TEST(Unloading, ExactMembersReturned) {
  const auto fam = UnloadingFamily::from_curves(table_s2());
  const auto c = select_unloading_curve(fam, 0.203);
  EXPECT_EQ(c.points, fixture_curve("table_s2_unloading_0203.csv").points);
  EXPECT_EQ(c.back().strain, 0.055328);
  EXPECT_EQ(c.back().stress, 0.0);
  const auto c4 = select_unloading_curve(fam, 0.079 + 5e-7);
  EXPECT_EQ(anchor_strain_of(c4), 0.004998);
  EXPECT_EQ(error_code_of([&] { select_unloading_curve(fam, 0.30); }), ErrorCode::OutOfCalibrationRange);
  EXPECT_EQ(error_code_of([&] { select_unloading_curve(fam, 0.05); }), ErrorCode::OutOfCalibrationRange);
}

TEST(Unloading, InterpolatedCurveIsValidAndBetweenMembers) {
  const auto fam = UnloadingFamily::from_curves(table_s2());
  for (double s0 : {0.1, 0.15, 0.19}) {
    const auto c = select_unloading_curve(fam, s0);
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.kind, CurveKind::unloading);
    EXPECT_NEAR(c.front().stress, s0, 0.01 * s0);
    EXPECT_EQ(c.back().stress, 0.0);
  }
}

TEST(Unloading, RecoverableStrainExamples) {
  const auto card = pla_card();
  EXPECT_NEAR(recoverable_strain(card, 0.203), 0.176249, 1e-12);
  EXPECT_NEAR(recoverable_strain(card, 0.079), 0.044454, 1e-12);
  EXPECT_EQ(recoverable_strain(card, 0.0), 0.0);
  EXPECT_EQ(error_code_of([&] { recoverable_strain(card, 0.25); }), ErrorCode::OutOfCalibrationRange);
}

TEST(Unloading, RecoverableStrainMonotoneOverSpan) {
  const auto card = pla_card();
  double prev = 0.0;
  for (int i = 0; i <= 200; ++i) {
    const double s0 = 0.079 + (0.203 - 0.079) * i / 200.0;
    const double r = recoverable_strain(card, s0);
    EXPECT_GE(r, prev - 1e-15) << s0;
    prev = r;
  }
}

TEST(Unloading, AnchorOfSelectedCurveMatchesPlasticityTable) {
  const auto card = pla_card();
  for (int i = 0; i <= 50; ++i) {
    const double s0 = 0.079 + (0.203 - 0.079) * i / 50.0;
    EXPECT_NEAR(anchor_strain_of(select_unloading_curve(card, s0)), card.plasticity->plastic_strain_at(s0), 1e-9);
  }
}

TEST(Unloading, ReleasedModulusAndFrozenCoupling) {
  const auto card = pla_card();
  const double e_ref = card.marlow.reference_modulus();
  EXPECT_GT(e_ref, 0.0);
  EXPECT_EQ(released_modulus(card, 0.0), e_ref);
  for (double s0 : {0.079, 0.132, 0.203}) EXPECT_GT(released_modulus(card, s0), 0.0);

  const auto curve = select_unloading_curve(card, 0.203);
  const auto frozen = release_response_frozen(curve, curve.front().stress);
  EXPECT_NEAR(frozen.recoverable_strain, recoverable_strain(card, 0.203), 1e-6);
  const auto lower = release_response_frozen(curve, 0.132);
  EXPECT_LT(lower.recoverable_strain, frozen.recoverable_strain);
  EXPECT_NE(lower.recoverable_strain, release_response(card, 0.132).recoverable_strain);
}

TEST(Plasticity, AnchorRowsFromTableS2) {
  const MarlowCurve m(table_s1());
  const auto t = extract_plasticity_table(UnloadingFamily::from_curves(table_s2()), m);
  const std::vector<PlasticityRow> expected = {
      {0.079, 0.004998}, {0.132, 0.015219}, {0.170, 0.03359}, {0.203, 0.055328}};
  EXPECT_EQ(t.rows, expected);
}

TEST(Plasticity, SingleMemberAndShuffledOrder) {
  const MarlowCurve m(table_s1());
  const auto one = extract_plasticity_table(
      UnloadingFamily::from_curves({{0.203, fixture_curve("table_s2_unloading_0203.csv")}}), m);
  ASSERT_EQ(one.rows.size(), 1u);
  EXPECT_EQ(one.rows[0], (PlasticityRow{0.203, 0.055328}));

  auto fam = UnloadingFamily::from_curves(table_s2());
  auto shuffled = fam;
  std::swap(shuffled.members[0], shuffled.members[3]);
  std::swap(shuffled.members[1], shuffled.members[2]);
  EXPECT_EQ(extract_plasticity_table(shuffled, m).rows, extract_plasticity_table(fam, m).rows);
}

TEST(Plasticity, NonMonotoneAnchorsRejected) {
  const MarlowCurve m(table_s1());
  auto fam = UnloadingFamily::from_curves(table_s2());
  fam.members[1].anchor_strain = 0.001;
  EXPECT_EQ(error_code_of([&] { extract_plasticity_table(fam, m); }), ErrorCode::NonMonotoneAnchors);
}

TEST(Damage, DegenerateFamily) {
  const MarlowCurve m(table_s1());
  const auto fam = UnloadingFamily::from_curves({{0.203, fixture_curve("table_s2_unloading_0203.csv")}});
  EXPECT_EQ(error_code_of([&] { fit_damage_params(m, fam); }), ErrorCode::DegenerateFamily);
}

TEST(Damage, RecoversSyntheticParameters) {
  const MarlowCurve m(table_s1());
  const DamageParams truth{2.0, 0.05, 0.1};
  const auto s2 = UnloadingFamily::from_curves(table_s2());
  std::vector<std::pair<double, DmaCurve>> synthetic;
  for (const auto& mem : s2.members) {
    const double peak = m.strain_at_stress(mem.sigma0);
    DmaCurve c;
    for (int i = 0; i <= 25; ++i) {
      const double e = peak + (mem.anchor_strain - peak) * i / 25.0;
      c.points.push_back({e, i == 25 ? 0.0 : eval_damaged_stress(m, truth, peak, mem.anchor_strain, e)});
    }
    synthetic.emplace_back(mem.sigma0, c);
  }
  const auto fit = fit_damage_params(m, UnloadingFamily::from_curves(synthetic));
  EXPECT_NEAR(fit.params.r, truth.r, 0.02 * truth.r);
  EXPECT_NEAR(fit.params.m, truth.m, 0.02 * truth.m);
  EXPECT_NEAR(fit.params.beta, truth.beta, 0.02 * truth.beta);
  EXPECT_LT(fit.rms_mpa, 1e-6);
}

TEST(Damage, TableS2FitResidual) {
  const MarlowCurve m(table_s1());
  const auto fam = UnloadingFamily::from_curves(table_s2());
  const auto fit = fit_damage_params(m, fam);
  // independent residual evaluation
  double ss = 0.0;
  std::size_t n = 0;
  for (const auto& mem : fam.members) {
    for (const auto& p : mem.curve.points) {
      const double s = eval_damaged_stress(m, fit.params, mem.curve.front().strain, mem.anchor_strain, p.strain);
      ss += (s - p.stress) * (s - p.stress);
      ++n;
    }
  }
  EXPECT_NEAR(std::sqrt(ss / n), fit.rms_mpa, 1e-12);
  EXPECT_LT(fit.rms_mpa, 0.01);
  EXPECT_GT(fit.params.r, 1.0);
}

TEST(Damage, FactorLimits) {
  const DamageParams p{2.0, 0.05, 0.1};
  EXPECT_EQ(damage_factor(p, 0.03, 0.03), 1.0);
  EXPECT_NEAR(damage_factor(p, 0.0, 100.0), 0.5, 1e-12);
}

TEST(Prony, SingleTermRecovery) {
  const auto sweep = synthetic_sweep(2.0, 15.0, 0.02);
  const auto p = fit_prony(sweep, 1);
  ASSERT_EQ(p.terms.size(), 1u);
  EXPECT_NEAR(p.e_infinity, 2.0, 0.03 * 2.0);
  EXPECT_NEAR(p.terms[0].modulus, 15.0, 0.03 * 15.0);
  EXPECT_NEAR(p.terms[0].tau, 0.02, 0.03 * 0.02);
}

TEST(Prony, TableS3PlaEightTerms) {
  const auto sweep = parse_frequency_sweep_csv(data_path("fixtures/table_s3_pla.csv"));
  const auto p = fit_prony(sweep, 8);
  EXPECT_NO_THROW(p.validate());
  double se = 0.0, sl = 0.0;
  for (const auto& r : sweep.rows) {
    se += std::pow((p.storage(r.freq_hz) - r.storage_mpa) / r.storage_mpa, 2);
    sl += std::pow((p.loss(r.freq_hz) - r.loss_mpa) / r.loss_mpa, 2);
  }
  EXPECT_LT(std::sqrt(se / sweep.rows.size()), 0.10);
  EXPECT_LT(std::sqrt(sl / sweep.rows.size()), 0.10);
  EXPECT_GE(p.instantaneous_modulus(), p.e_infinity);
  double prev = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const double f = std::pow(10.0, -3.0 + 6.0 * i / 400.0);
    EXPECT_GE(p.storage(f), prev);
    prev = p.storage(f);
  }
}

TEST(Prony, InsufficientData) {
  FrequencySweep s;
  s.rows.push_back({1.0, 2.0, 0.5, 0.25, 0.0095});
  EXPECT_EQ(error_code_of([&] { fit_prony(s, 1); }), ErrorCode::InsufficientData);
}

TEST(Viscoelastic, Dominance) {
  EXPECT_TRUE(check_viscoelastic_dominance(parse_frequency_sweep_csv(data_path("fixtures/table_s3_pla.csv"))));
  const auto cf = parse_frequency_sweep_csv(data_path("fixtures/table_s3_cfpla.csv"));
  EXPECT_FALSE(check_viscoelastic_dominance(cf));
  EXPECT_DOUBLE_EQ(cf.max_tan_delta(), 0.406487);
  FrequencySweep flat;
  for (int i = 1; i <= 4; ++i) flat.rows.push_back({double(i), 3.0, 0.0, 0.0, 0.0095});
  EXPECT_FALSE(check_viscoelastic_dominance(flat));
}

TEST(Card, DefaultsAndCalibration) {
  EXPECT_EQ(kPlaDefaults.alpha_t, 9.17e-4);
  EXPECT_EQ(kPlaDefaults.poisson, 0.419);
  EXPECT_EQ(kCfplaDefaults.alpha_t, 9.97e-5);
  EXPECT_EQ(kCfplaDefaults.poisson, 0.359);

  CalibrationInputs in;
  in.name = "PLA";
  in.main_loading = table_s1();
  in.unloading = table_s2();
  in.sweep = parse_frequency_sweep_csv(data_path("fixtures/table_s3_pla.csv"));
  const auto card = calibrate_material(in);
  EXPECT_TRUE(card.viscoelastic_enabled);
  ASSERT_TRUE(card.prony.has_value());
  ASSERT_TRUE(card.damage.has_value());
  EXPECT_GT(card.long_term_ratio(), 0.0);
  EXPECT_LT(card.long_term_ratio(), 1.0);

  const auto cf = linear_fallback_card("CFPLA", 46.97, 0.03, kCfplaDefaults);
  EXPECT_TRUE(cf.unloading.empty());
  EXPECT_EQ(cf.long_term_ratio(), 1.0);
  EXPECT_NEAR(cf.marlow.stress(0.01), 0.4697, 1e-12);
}

TEST(Card, InvariantViolations) {
  auto card = pla_card();
  card.poisson = 0.5;
  EXPECT_EQ(error_code_of([&] { card.validate(); }), ErrorCode::InvalidArgument);
  card = pla_card();
  card.viscoelastic_enabled = true;
  EXPECT_EQ(error_code_of([&] { card.validate(); }), ErrorCode::InvalidArgument);
}

TEST(UnloadingSelection, ContinuousAcrossMembers) {
  const auto card = pla_card();
  for (const auto& m : card.unloading.members) {
    const auto at = release_response(card, m.sigma0);
    for (double h : {-1e-5, 1e-5}) {
      const double s = m.sigma0 + h;
      if (s < card.unloading.min_sigma0() || s > card.unloading.max_sigma0()) continue;
      const auto near = release_response(card, s);
      EXPECT_NEAR(near.recoverable_strain, at.recoverable_strain, 1e-4) << m.sigma0 << " " << h;
      EXPECT_NEAR(near.modulus, at.modulus, 1e-3 * at.modulus) << m.sigma0 << " " << h;
    }
  }
}
