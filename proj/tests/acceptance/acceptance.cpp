// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "morphsim/accuracy.hpp"
#include "morphsim/error.hpp"
#include "morphsim/grid_sim.hpp"
#include "morphsim/stress_shooter.hpp"
#include "morphsim/unit_solver.hpp"
#include "morphsim/workbench.hpp"

using namespace morphsim;
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

fs::path data_path(const std::string& rel) { return fs::path(MORPHSIM_DATA_DIR) / rel; }

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Collects failed sub-checks of one criterion.
struct Outcome {
  std::vector<std::string> failures;
  std::string summary;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void near(double actual, double expected, double tol, const std::string& what) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s: %.9g vs %.9g (tol %.3g)", what.c_str(), actual, expected, tol);
    expect(std::isfinite(actual) && std::abs(actual - expected) <= tol, buf);
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

DmaCurve fixture_curve(const std::string& name) { return parse_stress_strain_csv(data_path("fixtures/" + name)); }

std::vector<std::pair<double, DmaCurve>> unloading_family() {
  return {{0.079, fixture_curve("table_s2_unloading_0079.csv")},
          {0.132, fixture_curve("table_s2_unloading_0132.csv")},
          {0.170, fixture_curve("table_s2_unloading_0170.csv")},
          {0.203, fixture_curve("table_s2_unloading_0203.csv")}};
}

MaterialCard calibrated_pla() {
  CalibrationInputs in;
  in.name = "PLA";
  in.main_loading = fixture_curve("table_s1_loading.csv");
  in.unloading = unloading_family();
  in.sweep = parse_frequency_sweep_csv(data_path("fixtures/table_s3_pla.csv"));
  in.constants = kPlaDefaults;
  return calibrate_material(in);
}

// ------------------------------------------------------------- criteria

Outcome confidence_intervals() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto pairs = parse_measurements_csv(data_path("fixtures/published_point_pairs.csv"));
  const std::map<std::string, std::pair<double, double>> published{{"lamp", {0.968, 0.998}},
                                                                    {"bottle_holder", {0.962, 0.986}},
                                                                    {"shoe", {0.969, 0.988}},
                                                                    {"", {0.972, 0.985}}};
  for (const auto basis : {ErrorBasis::recomputed, ErrorBasis::listed})
    for (const auto& [group, ci] : published) {
      const auto r = build_report(pairs, basis, 0.95, group);
      const std::string tag = (group.empty() ? "pooled" : group) + "/" + to_string(basis);
      o.near(r.ci.low, ci.first, 0.002, tag + " low");
      o.near(r.ci.high, ci.second, 0.002, tag + " high");
      if (basis == ErrorBasis::listed && group.empty())
        o.summary = "pooled " + fmt("(%.4f, %.4f)", r.ci.low, r.ci.high);
    }
  const double dt = seconds_since(t0);
  o.expect(dt < 1.0, "runtime " + std::to_string(dt) + " s");
  o.summary += fmt(", 3 groups and pooled on both bases, %.3f s", dt);
  return o;
}

Outcome error_percentages() {
  Outcome o;
  const auto pairs = parse_measurements_csv(data_path("fixtures/published_point_pairs.csv"));
  int checked = 0;
  for (const auto& p : pairs) {
    if (!p.listed_error_percent || !p.simulation_mm) {
      o.expect(false, p.label + " lacks distances or a listed error");
      continue;
    }
    const double e = pair_error(p.experiment_mm, *p.simulation_mm);
    const bool mismatch = std::abs(e - *p.listed_error_percent) > kListedErrorTolerance;
    if (p.label == "e-g") {
      o.expect(mismatch, "e-g should mismatch its listed value");
      o.near(e, 0.71, 0.01, "e-g recomputed");
      o.near(*p.listed_error_percent, 0.43, 1e-12, "e-g listed");
    } else {
      o.near(e, *p.listed_error_percent, 0.01, p.label);
    }
    ++checked;
  }
  const auto report = build_report(pairs, ErrorBasis::recomputed, 0.95);
  o.expect(report.flagged_labels() == std::vector<std::string>{"e-g"}, "flagged set is not {e-g}");
  o.expect(checked == 25, "expected 25 published pairs, got " + std::to_string(checked));
  o.summary = std::to_string(checked) + " pairs, flagged: e-g";
  return o;
}

Outcome anchor_points() {
  Outcome o;
  const auto card = calibrated_pla();
  const std::vector<PlasticityRow> expected{{0.079, 0.004998}, {0.132, 0.015219}, {0.170, 0.03359}, {0.203, 0.055328}};
  o.expect(card.plasticity.has_value(), "no plasticity table");
  if (card.plasticity) {
    o.expect(card.plasticity->rows.size() == expected.size(), "row count");
    for (std::size_t i = 0; i < std::min(expected.size(), card.plasticity->rows.size()); ++i)
      o.expect(card.plasticity->rows[i] == expected[i], "row " + std::to_string(i) + " differs");
  }
  const double rs = recoverable_strain(card, 0.203);
  o.near(rs, 0.176249, 1e-6, "recoverable_strain(0.203)");
  o.summary = "4 anchor rows exact, recoverable_strain(0.203) = " + fmt("%.7f", rs);
  return o;
}

Outcome viscoelastic_check() {
  Outcome o;
  const auto pla = parse_frequency_sweep_csv(data_path("fixtures/table_s3_pla.csv"));
  const auto cf = parse_frequency_sweep_csv(data_path("fixtures/table_s3_cfpla.csv"));
  o.expect(check_viscoelastic_dominance(pla), "PLA should be viscoelastic-enabled");
  o.expect(pla.max_tan_delta() > 1.0, "PLA tan delta never exceeds 1");
  o.expect(!check_viscoelastic_dominance(cf), "CFPLA should be disabled");
  o.near(cf.max_tan_delta(), 0.406487, 1e-6, "CFPLA max tan delta");
  o.summary = "PLA max tan delta " + fmt("%.4f, CFPLA max tan delta %.6f", pla.max_tan_delta(), cf.max_tan_delta());
  return o;
}

Outcome prony_fit() {
  Outcome o;
  const auto sweep = parse_frequency_sweep_csv(data_path("fixtures/table_s3_pla.csv"));
  const auto p = fit_prony(sweep, 8);
  double se = 0.0, sl = 0.0;
  for (const auto& r : sweep.rows) {
    se += std::pow((p.storage(r.freq_hz) - r.storage_mpa) / r.storage_mpa, 2);
    sl += std::pow((p.loss(r.freq_hz) - r.loss_mpa) / r.loss_mpa, 2);
  }
  se = std::sqrt(se / static_cast<double>(sweep.rows.size()));
  sl = std::sqrt(sl / static_cast<double>(sweep.rows.size()));
  o.expect(p.terms.size() == 8, "term count");
  o.expect(sweep.rows.front().freq_hz <= 0.01 + 1e-12 && sweep.rows.back().freq_hz >= 100.0 - 1e-9,
           "sweep does not span 0.01-100 Hz");
  o.expect(se < 0.10, "storage misfit " + std::to_string(se));
  o.expect(sl < 0.10, "loss misfit " + std::to_string(sl));

  // single-term recovery on the same frequencies
  const double e_inf = 2.0, e1 = 15.0, tau1 = 0.02;
  FrequencySweep synth;
  for (const auto& r : sweep.rows) {
    const double wt = 2.0 * std::numbers::pi * r.freq_hz * tau1;
    const double storage = e_inf + e1 * wt * wt / (1.0 + wt * wt);
    const double loss = e1 * wt / (1.0 + wt * wt);
    synth.rows.push_back({r.freq_hz, storage, loss, loss / storage, r.pre_strain});
  }
  const auto one = fit_prony(synth, 1);
  o.expect(one.terms.size() == 1, "single-term count");
  if (one.terms.size() == 1) {
    o.near(one.e_infinity, e_inf, 0.03 * e_inf, "e_infinity");
    o.near(one.terms[0].modulus, e1, 0.03 * e1, "E1");
    o.near(one.terms[0].tau, tau1, 0.03 * tau1, "tau1");
  }
  o.summary = "relative RMS storage " + fmt("%.4f, loss %.4f", se, sl) + ", single term recovered";
  return o;
}

Outcome shooting() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto card = calibrated_pla();
  auto observe = [&](double ratio, double sigma0) {
    TriggeringObservation obs;
    obs.unit.actuator_ratio = ratio;
    obs.measured_end_distance = simulate_end_distance(obs, sigma0, card);
    return obs;
  };
  int worst_iter = 0;
  for (double s : {0.09, 0.132, 0.18}) {
    const auto r = shoot_residual_stress({observe(1.0, s)}, card);
    o.expect(r.converged, "sigma0 " + std::to_string(s) + " not converged");
    o.near(r.sigma0, s, 1e-3, "recovered sigma0");
    o.expect(r.iterations <= 30, "iterations " + std::to_string(r.iterations));
    worst_iter = std::max(worst_iter, r.iterations);
  }
  const double truth = 0.132;
  std::vector<TriggeringObservation> clean;
  for (double ratio : {0.5, 0.75, 1.0}) clean.push_back(observe(ratio, truth));
  double worst = 0.0;
  for (unsigned seed = 1; seed <= 100; ++seed) {
    std::mt19937 rng(seed);
    auto obs = clean;
    for (auto& ob : obs) ob.measured_end_distance += 0.4 * (static_cast<double>(rng()) / 4294967295.0 - 0.5);
    const auto r = shoot_residual_stress(obs, card);
    o.expect(r.converged, "noisy seed " + std::to_string(seed) + " not converged");
    worst = std::max(worst, std::abs(r.sigma0 - truth));
  }
  o.expect(worst < 0.005, "noisy recovery error " + std::to_string(worst));
  const double dt = seconds_since(t0);
  o.expect(dt < 10.0, "runtime " + std::to_string(dt) + " s");
  o.summary = "max iterations " + std::to_string(worst_iter) + fmt(", noisy worst error %.5f MPa over 100 seeds, %.2f s", worst, dt);
  return o;
}

GridDesign single_unit(const BendingUnitSpec& spec, bool gravity) {
  GridDesign d;
  d.name = "unit";
  d.nodes = {{"A", Vec3::Zero(), true}, {"B", Vec3(spec.length, 0.0, 0.0), false}};
  DesignMember m;
  m.id = "U";
  m.node_a = "A";
  m.node_b = "B";
  m.unit = spec;
  d.members = {m};
  if (!gravity) d.gravity = Vec3::Zero();
  return d;
}

BendingUnitSpec pla_unit(double sigma0, double ratio = 1.0) {
  BendingUnitSpec s;
  s.sigma0 = sigma0;
  s.actuator_ratio = ratio;
  return s;
}

GridDesign small_grid() {
  GridDesign d;
  d.name = "square";
  d.nodes = {{"n0", Vec3(0, 0, 0), true},
             {"n1", Vec3(100, 0, 0), false},
             {"n2", Vec3(106, 0, 0), false},
             {"n3", Vec3(106, 100, 0), false}};
  DesignMember u1;
  u1.id = "u1";
  u1.node_a = "n0";
  u1.node_b = "n1";
  u1.unit = pla_unit(0.132, 0.5);
  DesignMember j;
  j.id = "j1";
  j.kind = MemberKind::joint;
  j.node_a = "n1";
  j.node_b = "n2";
  DesignMember u2;
  u2.id = "u2";
  u2.node_a = "n2";
  u2.node_b = "n3";
  u2.unit = pla_unit(0.079, 1.0);
  d.members = {u1, j, u2};
  return d;
}

Outcome solver_verification() {
  Outcome o;
  const MaterialSet cards{{"PLA", calibrated_pla()}};

  // (a) tangent against central differences of the internal force
  {
    const auto design = single_unit(pla_unit(0.203, 0.75), true);
    const auto mesh = assign_eigenstrains(mesh_design(design, {3}), design, cards);
    std::mt19937 rng(11);
    std::normal_distribution<double> n(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
      Eigen::VectorXd du(mesh.dof_count());
      for (int i = 0; i < du.size(); ++i) du(i) = (i % 6 < 3 ? 2.0 : 0.2) * n(rng);
      const auto s = apply_increment(DeformedState::initial(mesh), du);
      const Eigen::MatrixXd K(evaluate_system(mesh, s, 0.7, 1.0, 0.3, true).tangent);
      Eigen::MatrixXd fd(K.rows(), K.cols());
      const double h = 1e-6;
      for (int j = 0; j < du.size(); ++j) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(du.size());
        e(j) = h;
        fd.col(j) = (evaluate_system(mesh, apply_increment(s, e), 0.7, 1.0, 0.3, false).internal -
                     evaluate_system(mesh, apply_increment(s, -e), 0.7, 1.0, 0.3, false).internal) /
                    (2.0 * h);
      }
      worst = std::max(worst, (K - fd).norm() / K.norm());
    }
    o.expect(worst < 1e-4, "tangent relative error " + std::to_string(worst));
    o.summary = fmt("tangent %.1e", worst);
  }

  // (b) rigid-body invariance
  {
    SolverConfig tight;
    tight.newton_tol = 1e-8;
    const auto design = small_grid();
    const auto base = sequential_simulate(design, cards, tight, {6});
    const Eigen::Matrix3d R = (Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()) *
                               Eigen::AngleAxisd(-1.1, Vec3::UnitX()))
                                  .toRotationMatrix();
    auto rotated = design;
    for (auto& nd : rotated.nodes) nd.position = R * nd.position;
    rotated.gravity = R * rotated.gravity;
    rotated.normal = R * rotated.normal;
    const auto rot = sequential_simulate(rotated, cards, tight, {6});
    double scale = 0.0, worst = 0.0;
    for (const auto& p : base.stage_b.positions) scale = std::max(scale, p.norm());
    for (std::size_t i = 0; i < base.stage_b.positions.size(); ++i) {
      worst = std::max(worst, (rot.stage_b.positions[i] - R * base.stage_b.positions[i]).norm() / scale);
      worst = std::max(worst, (rot.stage_a.positions[i] - R * base.stage_a.positions[i]).norm() / scale);
    }
    o.expect(worst <= 1e-8, "rigid-body relative error " + std::to_string(worst));
    o.summary += fmt(", rigid body %.1e", worst);
  }

  // (c) gravity cantilever against q L^4 / (8 E I)
  {
    const double E = 2000.0;
    MaterialSet stiff{{"Stiff", linear_fallback_card("Stiff", E, 0.03, kPlaDefaults)}};
    BendingUnitSpec spec;
    spec.actuator_ratio = 0.0;
    spec.actuator_material = spec.constraint_material = "Stiff";
    auto design = single_unit(spec, true);
    design.trigger_temperature_c = kReferenceTemperatureC;
    const auto mesh = assign_eigenstrains(mesh_design(design, {32}), design, stiff);
    const auto s = solve_static(mesh, DeformedState::initial(mesh), {1.0, true}, SolverConfig{});
    const double q = 1240.0 * 7.2 * 4.0 * 9.81e-9;
    const double EI = E * 7.2 * 64.0 / 12.0;
    const double expected = q * std::pow(100.0, 4) / (8.0 * EI);
    const double tip = -s.positions[static_cast<std::size_t>(s.node_by_id("B"))].z();
    o.expect(tip < 0.02 * 100.0, "cantilever deflection not small");
    o.near(tip, expected, 0.01 * expected, "cantilever tip");
    o.summary += fmt(", cantilever %.3f%%", 100.0 * std::abs(tip - expected) / expected);
  }

  // (d) single unit against the closed-form arc at 32 segments
  {
    const auto spec = pla_unit(0.203);
    const double oracle = end_distance(unit_shape(spec, cards, 80.0));
    const double d32 = sequential_simulate(single_unit(spec, false), cards, SolverConfig{}, {32}).stage_a.member_end_distance("U");
    o.near(d32, oracle, 0.005 * oracle, "unit vs closed form");
    o.summary += fmt(", arc %.3f%%", 100.0 * std::abs(d32 - oracle) / oracle);
  }

  // regression goldens for the single-unit fixtures
  {
    const auto goldens = Json::parse(read_text(data_path("goldens/unit_end_distances.json")));
    const double tol = goldens.at("tolerance_mm");
    const int segments = goldens.at("segments_per_member");
    for (const auto& g : goldens.at("items")) {
      const std::string name = g.at("design");
      const auto path = data_path("designs/" + name + ".grid.json");
      const auto doc = load_design(path);
      const auto r = sequential_simulate(doc.design, load_design_materials(doc, path.parent_path()), SolverConfig{},
                                         {segments});
      const std::string member = g.at("member");
      o.near(r.stage_a.member_end_distance(member), g.at("stage_a_mm"), tol, name + " stage A golden");
      o.near(r.stage_b.member_end_distance(member), g.at("stage_b_mm"), tol, name + " stage B golden");
    }
    o.summary += ", goldens pinned";
  }
  return o;
}

Outcome sequential_contract() {
  Outcome o;
  const MaterialSet cards{{"PLA", calibrated_pla()}};
  SolverConfig config;
  double worst_gap = 0.0;
  for (const auto& design : {single_unit(pla_unit(0.132), false), [] {
                               auto d = small_grid();
                               d.gravity = Vec3::Zero();
                               return d;
                             }()}) {
    const auto r = sequential_simulate(design, cards, config, {16});
    double scale = 0.0, gap = 0.0;
    for (const auto& p : r.stage_a.positions) scale = std::max(scale, p.norm());
    for (std::size_t i = 0; i < r.stage_a.positions.size(); ++i)
      gap = std::max(gap, (r.stage_b.positions[i] - r.stage_a.positions[i]).norm());
    // both stages converge to the newton tolerance of the same equilibrium
    o.expect(gap <= 1e-5 * scale, design.name + " stage gap " + std::to_string(gap));
    o.expect(r.stage_b.residual_norm <= config.newton_tol * r.stage_b.reference_norm ||
                 r.stage_b.reference_norm == 0.0,
             design.name + " stage B residual");
    worst_gap = std::max(worst_gap, gap);
  }
  double worst_identity = 0.0;
  for (auto design : {single_unit(pla_unit(0.0), false), small_grid()}) {
    for (auto& m : design.members) m.unit.sigma0 = 0.0;
    design.trigger_temperature_c = kReferenceTemperatureC;
    design.gravity = Vec3::Zero();
    const auto r = sequential_simulate(design, cards, config, {8});
    for (std::size_t i = 0; i < r.mesh.nodes.size(); ++i) {
      worst_identity = std::max(worst_identity, (r.stage_a.positions[i] - r.mesh.nodes[i].position).norm());
      worst_identity = std::max(worst_identity, (r.stage_b.positions[i] - r.mesh.nodes[i].position).norm());
    }
  }
  o.expect(worst_identity <= 1e-12, "identity error " + std::to_string(worst_identity));
  o.summary = fmt("no-gravity stage gap %.2e mm, zero-load identity error %.1e mm", worst_gap, worst_identity);
  return o;
}

/// Runs the scripted pipeline in a clean project and returns every produced document by relative path.
std::map<std::string, std::string> pipeline_run(const fs::path& root) {
  using namespace morphsim::workbench;
  fs::remove_all(root);
  auto project = Project::open(root);
  JobService jobs(*project, WorkbenchConfig{});
  auto run = [&](JobKind kind, const Json& inputs) {
    const auto r = jobs.wait(jobs.submit(kind, inputs.dump()).record.id);
    if (r.status != JobStatus::done) fail(ErrorCode::InvalidArgument, "pipeline job failed: " + r.log_excerpt());
    return r;
  };
  auto fx = [](const char* n) { return read_text(data_path(std::string("fixtures/") + n)); };
  run(JobKind::calibrate,
      {{"name", "PLA"},
       {"loading_csv", fx("table_s1_loading.csv")},
       {"unloading",
        {{{"sigma0_mpa", 0.079}, {"csv", fx("table_s2_unloading_0079.csv")}},
         {{"sigma0_mpa", 0.132}, {"csv", fx("table_s2_unloading_0132.csv")}},
         {{"sigma0_mpa", 0.170}, {"csv", fx("table_s2_unloading_0170.csv")}},
         {{"sigma0_mpa", 0.203}, {"csv", fx("table_s2_unloading_0203.csv")}}}},
       {"sweep_csv", fx("table_s3_pla.csv")}});
  project->put_material("CFPLA", read_text(data_path("designs/CFPLA.matcard.json")));
  const auto shot = run(JobKind::shoot, {{"material", "PLA"},
                                         {"observations",
                                          {{{"actuator_ratio", 0.5}, {"distance_mm", 98.8405}},
                                           {{"actuator_ratio", 0.75}, {"distance_mm", 90.6384}},
                                           {{"actuator_ratio", 1.0}, {"distance_mm", 85.7836}}}}});
  auto unit = Json::parse(read_text(data_path("designs/unit_pla.grid.json")));
  unit["members"][0]["unit"]["sigma0_mpa"] = std::stod(shot.outputs.at("sigma0_mpa"));
  project->put_design("unit_pla", unit.dump());
  project->put_design("cross", read_text(data_path("designs/cross.grid.json")));
  const auto sim = run(JobKind::simulate, {{"design", "unit_pla"}});
  run(JobKind::simulate, {{"design", "cross"}});
  run(JobKind::measure,
      {{"state", sim.outputs.at("stage_b")}, {"pairs_csv", read_text(data_path("designs/unit_pla_pairs.csv"))}});

  std::map<std::string, std::string> docs;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).generic_string();
    if (rel.rfind("jobs/", 0) == 0) continue;  // job logs carry wall-clock timestamps
    docs[rel] = read_text(e.path());
  }
  return docs;
}

Outcome determinism() {
  Outcome o;
  const auto base = fs::temp_directory_path() / "morphsim_acceptance";
  const auto a = pipeline_run(base / "run1");
  const auto b = pipeline_run(base / "run2");
  std::size_t results = 0;
  for (const auto& [rel, text] : a) {
    if (rel.rfind("results/", 0) == 0 || rel.rfind("states/", 0) == 0) ++results;
    const auto it = b.find(rel);
    o.expect(it != b.end(), rel + " missing from the second run");
    if (it != b.end()) o.expect(it->second == text, rel + " differs between runs");
  }
  o.expect(a.size() == b.size(), "different document sets");
  o.expect(results >= 6, "pipeline produced " + std::to_string(results) + " result documents");
  fs::remove_all(base);
  o.summary = std::to_string(a.size()) + " documents byte-identical across two clean runs";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"confidence-interval reproduction", confidence_intervals},
      {"error-percentage reproduction", error_percentages},
      {"anchor-point extraction", anchor_points},
      {"viscoelastic dominance check", viscoelastic_check},
      {"prony fit quality", prony_fit},
      {"shooting forward-inverse consistency", shooting},
      {"solver verification", solver_verification},
      {"sequential-simulation contract", sequential_contract},
      {"end-to-end determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.failures.push_back(std::string("exception: ") + e.what());
    }
    if (o.failures.empty()) {
      std::printf("PASS %s: %s\n", name.c_str(), o.summary.c_str());
    } else {
      ++failed;
      std::printf("FAIL %s: %s", name.c_str(), o.failures.front().c_str());
      if (o.failures.size() > 1) std::printf(" (+%zu more)", o.failures.size() - 1);
      std::printf("\n");
      for (std::size_t i = 1; i < o.failures.size(); ++i) std::printf("    %s\n", o.failures[i].c_str());
    }
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
