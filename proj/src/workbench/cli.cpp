#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "morphsim/accuracy.hpp"
#include "morphsim/error.hpp"
#include "morphsim/workbench.hpp"
#include "text_util.hpp"

namespace morphsim::workbench {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config_path;
  WorkbenchConfig config() const {
    return config_path.empty() ? WorkbenchConfig{} : WorkbenchConfig::load(config_path);
  }
};

// ------------------------------------------------------------------- ingest

struct IngestOptions {
  std::string input;
  std::string schema = "stress_strain";
  bool smooth = false;
  bool main_loading = false;
  std::string out;
};

int cmd_ingest(const IngestOptions& o, const CommonOptions& common) {
  const auto config = common.config();
  const auto data = parse_dma_csv(o.input, csv_schema_from_string(o.schema));
  if (const auto* sweep = std::get_if<FrequencySweep>(&data)) {
    if (o.smooth || o.main_loading) fail(ErrorCode::InvalidArgument, "--smooth and --main-loading need stress_strain data");
    write_csv(*sweep, o.out);
    std::printf("%zu frequency rows, max tan delta %.6g, viscoelastic %s\n", sweep->rows.size(), sweep->max_tan_delta(),
                check_viscoelastic_dominance(*sweep) ? "enabled" : "disabled");
    return 0;
  }
  DmaCurve curve = std::get<DmaCurve>(data);
  if (o.smooth) curve = smooth_pspline(curve, config.smoother);
  if (o.main_loading) {
    const auto cycles = segment_cycles(curve);
    std::printf("%zu cycles\n", cycles.cycles.size());
    curve = extract_main_loading_curve(cycles);
  }
  write_csv(curve, o.out);
  std::printf("%zu points written to %s\n", curve.size(), o.out.c_str());
  return 0;
}

// ---------------------------------------------------------------- calibrate

struct CalibrateOptions {
  std::string name;
  std::string loading;
  std::vector<std::string> unloading;  // sigma0=path
  std::string sweep;
  std::string defaults = "pla";
  std::string interpolation = "linear";
  int prony_terms = 8;
  bool no_damage = false;
  double linear_modulus = 0.0;
  double max_strain = 0.03;
  std::string out;
};

MaterialDefaults defaults_named(const std::string& s) {
  if (s == "pla") return kPlaDefaults;
  if (s == "cfpla") return kCfplaDefaults;
  fail(ErrorCode::InvalidArgument, "unknown material defaults '" + s + "' (pla or cfpla)");
}

int cmd_calibrate(const CalibrateOptions& o) {
  MaterialCard card;
  if (o.linear_modulus > 0.0) {
    card = linear_fallback_card(o.name, o.linear_modulus, o.max_strain, defaults_named(o.defaults));
  } else {
    if (o.loading.empty()) fail(ErrorCode::InvalidArgument, "--loading or --linear-modulus is required");
    CalibrationInputs in;
    in.name = o.name;
    in.main_loading = parse_stress_strain_csv(o.loading);
    in.interpolation = interpolation_from_string(o.interpolation);
    for (const auto& spec : o.unloading) {
      const auto eq = spec.find('=');
      const auto s = eq == std::string::npos ? std::nullopt : detail::parse_double(spec.substr(0, eq));
      if (!s) fail(ErrorCode::InvalidArgument, "--unloading expects sigma0=path, got '" + spec + "'");
      in.unloading.emplace_back(*s, parse_stress_strain_csv(spec.substr(eq + 1)));
    }
    if (!o.sweep.empty()) in.sweep = parse_frequency_sweep_csv(o.sweep);
    in.constants = defaults_named(o.defaults);
    in.prony_terms = o.prony_terms;
    in.fit_damage = !o.no_damage;
    card = calibrate_material(in);
  }
  save_material_card(card, o.out);
  std::printf("material %s written to %s\n", card.name.c_str(), o.out.c_str());
  if (card.plasticity)
    for (const auto& r : card.plasticity->rows)
      std::printf("  anchor sigma0=%s plastic_strain=%s\n", detail::format_double(r.yield_stress).c_str(),
                  detail::format_double(r.plastic_strain).c_str());
  std::printf("  viscoelastic %s\n", card.viscoelastic_enabled ? "enabled" : "disabled");
  return 0;
}

// -------------------------------------------------------------------- shoot

struct ShootOptions {
  std::string card;
  std::vector<std::string> other_cards;
  std::string obs;
  double length = 100.0;
  double width = 7.2;
  double thickness = 4.0;
  double actuator_thickness = 1.0;
  std::string constraint_material;
  std::string coupling;
  bool high_fidelity = false;
  double tol_mm = 0.0;
  std::string out;
};

int cmd_shoot(const ShootOptions& o, const CommonOptions& common) {
  auto config = common.config();
  const auto card = load_material_card(o.card);
  MaterialSet others;
  for (const auto& path : o.other_cards) {
    auto c = load_material_card(path);
    others[c.name] = std::move(c);
  }
  BendingUnitSpec base;
  base.length = o.length;
  base.width = o.width;
  base.total_thickness = o.thickness;
  base.actuator_thickness = o.actuator_thickness;
  base.constraint_material = o.constraint_material.empty() ? card.name : o.constraint_material;
  const auto obs = parse_observations_csv(o.obs, base);
  ShooterConfig sc = config.shooter;
  sc.solver = config.solver;
  if (!o.coupling.empty()) sc.coupling = coupling_from_string(o.coupling);
  if (o.high_fidelity) sc.high_fidelity = true;
  if (o.tol_mm > 0.0) sc.tol_mm = o.tol_mm;
  const auto r = shoot_residual_stress(obs, card, sc, others);
  if (!o.out.empty()) detail::write_file(o.out, shooter_result_to_json(r, sc, card.name));
  std::printf("sigma0 = %.6f MPa  residual = %.4g mm  evaluations = %d  %s\n", r.sigma0, r.residual, r.iterations,
              r.converged ? "converged" : "not converged");
  if (!r.converged) {
    std::fprintf(stderr, "MaxIterations: shooting stopped with residual %.4g mm above tolerance %.4g mm\n", r.residual,
                 sc.tol_mm);
    return 2;
  }
  return 0;
}

// ----------------------------------------------------------------- simulate

struct SimulateOptions {
  std::string design;
  std::string out;
  int segments = 0;
  std::string format = "both";
};

int cmd_simulate(const SimulateOptions& o, const CommonOptions& common) {
  const auto config = common.config();
  const auto doc = load_design(o.design);
  const auto cards = load_design_materials(doc, fs::path(o.design).parent_path());
  MeshConfig mesh = config.mesh;
  if (o.segments > 0) mesh.segments_per_member = o.segments;
  if (o.format != "json" && o.format != "obj" && o.format != "both")
    fail(ErrorCode::InvalidArgument, "--format must be json, obj or both");
  const auto r = sequential_simulate(doc.design, cards, config.solver, mesh);
  const fs::path dir(o.out);
  for (const auto* s : {&r.stage_a, &r.stage_b}) {
    const std::string stem = to_string(s->stage);
    if (o.format != "obj") export_state(*s, ExportFormat::json, dir / (stem + ".state.json"));
    if (o.format != "json") export_state(*s, ExportFormat::obj_polyline, dir / (stem + ".state.obj"));
    std::printf("%s: %zu nodes, %d iterations, residual %.3e\n", stem.c_str(), s->positions.size(), s->iterations,
                s->residual_norm);
  }
  for (const auto& m : r.stage_b.members)
    std::printf("  %s end distance %.4f mm\n", m.member_id.c_str(), r.stage_b.member_end_distance(m.member_id));
  return 0;
}

// ---------------------------------------------------------- measure, report

struct ReportOptions {
  std::string state;
  std::string pairs;
  std::string group;
  std::string basis = "recomputed";
  double level = 0.95;
  std::string json_out;
};

void print_report(const AccuracyReport& r, const std::string& title) {
  std::printf("== %s ==\n%s", title.c_str(), report_to_table(r).c_str());
}

int cmd_measure(const ReportOptions& o) {
  const auto state = state_from_json(detail::read_file(o.state));
  auto pairs = parse_measurements_csv(o.pairs);
  measure_pairs(state, pairs);
  const auto report = build_report(pairs, error_basis_from_string(o.basis), o.level, o.group);
  print_report(report, o.group.empty() ? "all pairs" : o.group);
  if (!o.json_out.empty()) detail::write_file(o.json_out, report_to_json(report));
  return 0;
}

int cmd_report(const ReportOptions& o) {
  const auto pairs = parse_measurements_csv(o.pairs);
  const auto basis = error_basis_from_string(o.basis);
  if (!o.group.empty()) {
    const auto r = build_report(pairs, basis, o.level, o.group);
    print_report(r, o.group);
    if (!o.json_out.empty()) detail::write_file(o.json_out, report_to_json(r));
    return 0;
  }
  for (const auto& g : pair_groups(pairs)) print_report(build_report(pairs, basis, o.level, g), g);
  const auto all = build_report(pairs, basis, o.level);
  print_report(all, "pooled");
  if (!o.json_out.empty()) detail::write_file(o.json_out, report_to_json(all));
  return 0;
}

// -------------------------------------------------------------------- serve

struct ServeOptions {
  std::string project;
  std::string host = "127.0.0.1";
  int port = 8080;
  int workers = 0;
};

ApiServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const ServeOptions& o, const CommonOptions& common) {
  auto config = common.config();
  if (o.workers > 0) config.workers = o.workers;
  std::string root = o.project;
  if (root.empty())
    if (const char* env = std::getenv(kProjectEnvVar)) root = env;
  if (root.empty()) fail(ErrorCode::InvalidArgument, std::string("--project or ") + kProjectEnvVar + " is required");
  auto project = Project::open(root);
  JobService jobs(*project, config);
  ApiServer server(*project, jobs);
  const int port = server.bind(o.host, o.port);
  std::printf("serving %s on http://%s:%d\n", project->root().c_str(), o.host.c_str(), port);
  std::fflush(stdout);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.listen();
  g_server = nullptr;
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"morphsim: calibration, residual-stress identification and shape prediction for printed bi-layer grids"};
  app.require_subcommand(1);
  CommonOptions common;
  app.add_option("--config", common.config_path, "JSON file with solver, mesh, smoother and shooter defaults")
      ->check(CLI::ExistingFile);

  IngestOptions ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Parse a DMA CSV file into a canonical curve or sweep");
  c_ingest->add_option("--input", ingest.input, "raw CSV file")->required()->check(CLI::ExistingFile);
  c_ingest->add_option("--schema", ingest.schema, "stress_strain or frequency_sweep");
  c_ingest->add_flag("--smooth", ingest.smooth, "penalized spline smoothing of the stresses");
  c_ingest->add_flag("--main-loading", ingest.main_loading, "segment cycles and keep the main loading envelope");
  c_ingest->add_option("--out", ingest.out, "output CSV")->required();

  CalibrateOptions cal;
  auto* c_cal = app.add_subcommand("calibrate", "Build a material card from loading, unloading and sweep data");
  c_cal->add_option("--name", cal.name, "material name")->required();
  c_cal->add_option("--loading", cal.loading, "main loading curve CSV")->check(CLI::ExistingFile);
  c_cal->add_option("--unloading", cal.unloading, "unloading curve as sigma0=path, repeatable");
  c_cal->add_option("--sweep", cal.sweep, "frequency sweep CSV")->check(CLI::ExistingFile);
  c_cal->add_option("--defaults", cal.defaults, "thermal and elastic constants: pla or cfpla");
  c_cal->add_option("--interpolation", cal.interpolation, "linear or monotone_cubic");
  c_cal->add_option("--prony-terms", cal.prony_terms, "number of Prony terms");
  c_cal->add_flag("--no-damage", cal.no_damage, "skip the damage law fit");
  c_cal->add_option("--linear-modulus", cal.linear_modulus, "build a linear card with this modulus (MPa) instead");
  c_cal->add_option("--max-strain", cal.max_strain, "strain range of a linear card");
  c_cal->add_option("--out", cal.out, "output .matcard.json")->required();

  ShootOptions shoot;
  auto* c_shoot = app.add_subcommand("shoot", "Identify the residual stress from triggering observations");
  c_shoot->add_option("--card", shoot.card, "actuator material card")->required()->check(CLI::ExistingFile);
  c_shoot->add_option("--other-card", shoot.other_cards, "further material cards, repeatable")
      ->check(CLI::ExistingFile);
  c_shoot->add_option("--obs", shoot.obs, "observation CSV")->required()->check(CLI::ExistingFile);
  c_shoot->add_option("--length", shoot.length, "unit length, mm");
  c_shoot->add_option("--width", shoot.width, "unit width, mm");
  c_shoot->add_option("--thickness", shoot.thickness, "total unit thickness, mm");
  c_shoot->add_option("--actuator-thickness", shoot.actuator_thickness, "actuator layer thickness, mm");
  c_shoot->add_option("--constraint-material", shoot.constraint_material, "constraint layer material name");
  c_shoot->add_option("--coupling", shoot.coupling, "reselect or frozen");
  c_shoot->add_flag("--high-fidelity", shoot.high_fidelity, "run the beam solver for every trial");
  c_shoot->add_option("--tol", shoot.tol_mm, "convergence tolerance on the mismatch, mm");
  c_shoot->add_option("--out", shoot.out, "output .shoot.json");

  SimulateOptions sim;
  auto* c_sim = app.add_subcommand("simulate", "Run the two-stage deformation simulation of a design");
  c_sim->add_option("--design", sim.design, "design .grid.json")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--out", sim.out, "output directory")->required();
  c_sim->add_option("--segments", sim.segments, "segments per member");
  c_sim->add_option("--format", sim.format, "json, obj or both");

  ReportOptions measure;
  auto* c_measure = app.add_subcommand("measure", "Measure point pairs on a state and compare with experiment");
  c_measure->add_option("--state", measure.state, "state .state.json")->required()->check(CLI::ExistingFile);
  c_measure->add_option("--pairs", measure.pairs, "measurement CSV with point references")
      ->required()
      ->check(CLI::ExistingFile);
  c_measure->add_option("--group", measure.group, "restrict to one group");
  c_measure->add_option("--basis", measure.basis, "recomputed or listed");
  c_measure->add_option("--level", measure.level, "confidence level");
  c_measure->add_option("--json", measure.json_out, "write the report as JSON");

  ReportOptions report;
  auto* c_report = app.add_subcommand("report", "Accuracy statistics of point pairs with simulation distances");
  c_report->add_option("--pairs", report.pairs, "measurement CSV with simulation_mm")
      ->required()
      ->check(CLI::ExistingFile);
  c_report->add_option("--group", report.group, "restrict to one group");
  c_report->add_option("--basis", report.basis, "recomputed or listed");
  c_report->add_option("--level", report.level, "confidence level");
  c_report->add_option("--json", report.json_out, "write the (pooled or group) report as JSON");

  ServeOptions serve;
  auto* c_serve = app.add_subcommand("serve", "Serve the HTTP JSON API over a project directory");
  c_serve->add_option("--project", serve.project, std::string("project root, default $") + kProjectEnvVar);
  c_serve->add_option("--host", serve.host, "bind address");
  c_serve->add_option("--port", serve.port, "port, 0 picks a free one");
  c_serve->add_option("--workers", serve.workers, "concurrent jobs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (c_ingest->parsed()) return cmd_ingest(ingest, common);
    if (c_cal->parsed()) return cmd_calibrate(cal);
    if (c_shoot->parsed()) return cmd_shoot(shoot, common);
    if (c_sim->parsed()) return cmd_simulate(sim, common);
    if (c_measure->parsed()) return cmd_measure(measure);
    if (c_report->parsed()) return cmd_report(report);
    if (c_serve->parsed()) return cmd_serve(serve, common);
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

}  // namespace morphsim::workbench
