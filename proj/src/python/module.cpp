#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "morphsim/accuracy.hpp"
#include "morphsim/documents.hpp"
#include "morphsim/error.hpp"
#include "morphsim/grid_sim.hpp"
#include "morphsim/stress_shooter.hpp"
#include "morphsim/workbench.hpp"

namespace py = pybind11;
using namespace morphsim;

namespace {

MaterialDefaults defaults_named(const std::string& s) {
  if (s == "pla") return kPlaDefaults;
  if (s == "cfpla") return kCfplaDefaults;
  fail(ErrorCode::InvalidArgument, "unknown material defaults '" + s + "' (pla or cfpla)");
}

std::string calibrate(const std::string& name, const std::filesystem::path& loading,
                      const std::vector<std::pair<double, std::filesystem::path>>& unloading,
                      const std::optional<std::filesystem::path>& sweep, const std::string& defaults) {
  CalibrationInputs in;
  in.name = name;
  in.main_loading = parse_stress_strain_csv(loading);
  for (const auto& [s, path] : unloading) in.unloading.emplace_back(s, parse_stress_strain_csv(path));
  if (sweep) in.sweep = parse_frequency_sweep_csv(*sweep);
  in.constants = defaults_named(defaults);
  return material_card_to_json(calibrate_material(in));
}

std::string linear_card(const std::string& name, double modulus, double max_strain, const std::string& defaults) {
  return material_card_to_json(linear_fallback_card(name, modulus, max_strain, defaults_named(defaults)));
}

std::string shoot(const std::string& card_json, const std::vector<std::tuple<double, double, double>>& observations,
                  const std::string& coupling, bool high_fidelity) {
  const auto card = material_card_from_json(card_json);
  std::vector<TriggeringObservation> obs;
  for (const auto& [ratio, distance, temp] : observations) {
    TriggeringObservation o;
    o.unit.actuator_material = o.unit.constraint_material = card.name;
    o.unit.actuator_ratio = ratio;
    o.measured_end_distance = distance;
    o.temperature_c = temp;
    o.validate();
    obs.push_back(o);
  }
  ShooterConfig config;
  config.coupling = coupling_from_string(coupling);
  config.high_fidelity = high_fidelity;
  return shooter_result_to_json(shoot_residual_stress(obs, card, config), config, card.name);
}

std::pair<std::string, std::string> simulate(const std::filesystem::path& design, int segments) {
  const auto doc = load_design(design);
  const auto cards = load_design_materials(doc, design.parent_path());
  MeshConfig mesh;
  if (segments > 0) mesh.segments_per_member = segments;
  const auto r = sequential_simulate(doc.design, cards, SolverConfig{}, mesh);
  return {state_to_json(r.stage_a), state_to_json(r.stage_b)};
}

std::string report(const std::filesystem::path& pairs_csv, const std::string& basis, double level,
                   const std::string& group, const std::optional<std::string>& state_json) {
  auto pairs = parse_measurements_csv(pairs_csv);
  if (state_json) measure_pairs(state_from_json(*state_json), pairs);
  return report_to_json(build_report(pairs, error_basis_from_string(basis), level, group));
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "morphsim");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  py::gil_scoped_release release;
  return workbench::run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "morphsim core bindings";
  static py::handle error_type = py::exception<Error>(m, "MorphsimError").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.def("pair_error", &pair_error, py::arg("experiment_mm"), py::arg("simulation_mm"),
        "Percent error 100 |e - s| / e.");
  m.def(
      "confidence_interval",
      [](const std::vector<double>& values, double level) {
        const auto ci = confidence_interval(values, level);
        return std::make_pair(ci.low, ci.high);
      },
      py::arg("values"), py::arg("level") = 0.95, "Student-t interval on the mean.");
  m.def("report_json", &report, py::arg("pairs_csv"), py::arg("basis") = "recomputed", py::arg("level") = 0.95,
        py::arg("group") = "", py::arg("state_json") = py::none(), "Accuracy report as JSON text.");
  m.def("calibrate_json", &calibrate, py::arg("name"), py::arg("loading_csv"), py::arg("unloading"),
        py::arg("sweep_csv") = py::none(), py::arg("defaults") = "pla", "Material card JSON from DMA files.");
  m.def("linear_card_json", &linear_card, py::arg("name"), py::arg("modulus_mpa"), py::arg("max_strain") = 0.03,
        py::arg("defaults") = "cfpla");
  m.def(
      "recoverable_strain",
      [](const std::string& card_json, double sigma0) { return recoverable_strain(material_card_from_json(card_json), sigma0); },
      py::arg("card_json"), py::arg("sigma0"));
  m.def(
      "viscoelastic_dominance",
      [](const std::filesystem::path& sweep) { return check_viscoelastic_dominance(parse_frequency_sweep_csv(sweep)); },
      py::arg("sweep_csv"));
  m.def("shoot_json", &shoot, py::arg("card_json"), py::arg("observations"), py::arg("coupling") = "reselect",
        py::arg("high_fidelity") = false, "Residual stress identification; observations are (ratio, distance_mm, temp_c).");
  m.def("simulate_json", &simulate, py::arg("design_path"), py::arg("segments_per_member") = 0,
        py::call_guard<py::gil_scoped_release>(), "Stage A and stage B states as JSON text.");
  m.def(
      "end_distance",
      [](const std::string& state_json, const std::string& member) {
        return state_from_json(state_json).member_end_distance(member);
      },
      py::arg("state_json"), py::arg("member"));
  m.def("run_cli", &run_cli, py::arg("args"), "Run the command line front end and return its exit code.");
}
