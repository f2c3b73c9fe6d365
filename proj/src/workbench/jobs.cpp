#include <chrono>
#include <ctime>

#include "json.hpp"
#include "morphsim/accuracy.hpp"
#include "morphsim/error.hpp"
#include "morphsim/workbench.hpp"
#include "text_util.hpp"

namespace morphsim::workbench {

using Json = nlohmann::json;  // sorted keys give a canonical dump

namespace {

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void log_line(JobRecord& r, const std::string& msg) { r.log.push_back("[" + timestamp() + "] " + msg); }

Json parse_inputs(const std::string& text) {
  try {
    auto j = Json::parse(text);
    if (!j.is_object()) fail(ErrorCode::InvalidDocument, "job inputs must be a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidDocument, std::string("malformed job inputs: ") + e.what());
  }
}

const Json& field(const Json& j, const char* key) {
  if (!j.contains(key)) fail(ErrorCode::InvalidDocument, std::string("job inputs lack '") + key + "'");
  return j.at(key);
}

std::string text_field(const Json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_string()) fail(ErrorCode::InvalidDocument, std::string("job input '") + key + "' must be a string");
  return v.get<std::string>();
}

BendingUnitSpec unit_from(const Json& j) {
  BendingUnitSpec s;
  if (!j.is_object()) return s;
  s.length = j.value("length_mm", s.length);
  s.width = j.value("width_mm", s.width);
  s.total_thickness = j.value("total_thickness_mm", s.total_thickness);
  s.actuator_thickness = j.value("actuator_thickness_mm", s.actuator_thickness);
  s.constraint_material = j.value("constraint_material", s.constraint_material);
  return s;
}

MaterialDefaults defaults_named(const std::string& s) {
  if (s == "pla") return kPlaDefaults;
  if (s == "cfpla") return kCfplaDefaults;
  fail(ErrorCode::InvalidArgument, "unknown material defaults '" + s + "' (pla or cfpla)");
}

}  // namespace

/// Inputs resolved at submission, so that bad references fail before queueing.
struct JobService::Prepared {
  JobKind kind = JobKind::simulate;
  std::string hash;
  // simulate
  GridDesign design;
  MaterialSet cards;
  MeshConfig mesh;
  // shoot
  std::vector<TriggeringObservation> observations;
  std::string material;
  ShooterConfig shooter;
  // calibrate
  CalibrationInputs calibration;
  // measure
  std::string state_text;
  std::vector<PointPair> pairs;
  ErrorBasis basis = ErrorBasis::recomputed;
  double level = 0.95;
};

JobService::JobService(Project& project, WorkbenchConfig config) : project_(project), config_(std::move(config)) {
  config_.validate();
  for (auto r : project_.load_jobs()) {
    if (r.status == JobStatus::queued || r.status == JobStatus::running) {
      r.status = JobStatus::failed;
      r.error_code = "Interrupted";
      log_line(r, "interrupted by a service restart");
      project_.save_job(r);
    }
    if (r.status == JobStatus::done) by_hash_[r.inputs_hash] = r.id;
    jobs_[r.id] = r;
  }
  for (int i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

JobService::~JobService() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  for (auto& t : workers_) t.join();
}

JobService::Submission JobService::submit(JobKind kind, const std::string& inputs_json) {
  const Json in = parse_inputs(inputs_json);
  auto p = std::make_shared<Prepared>();
  p->kind = kind;
  std::string material_text;  // hashed input documents
  try {
    switch (kind) {
      case JobKind::simulate: {
        const std::string name = text_field(in, "design");
        const auto text = project_.design_text(name);
        if (!text) fail(ErrorCode::UnresolvedReference, "no design '" + name + "' in the project");
        p->design = design_from_json(*text).design;
        p->cards = project_.design_materials(p->design);
        p->design.validate(p->cards);
        p->mesh = config_.mesh;
        if (in.contains("segments_per_member")) p->mesh.segments_per_member = in.at("segments_per_member").get<int>();
        if (p->mesh.segments_per_member < 1) fail(ErrorCode::InvalidArgument, "segments_per_member must be at least 1");
        material_text = *text;
        for (const auto& [n, c] : p->cards) material_text += *project_.material_text(n);
        break;
      }
      case JobKind::shoot: {
        p->material = text_field(in, "material");
        const auto card_text = project_.material_text(p->material);
        if (!card_text) fail(ErrorCode::UnresolvedReference, "no material '" + p->material + "' in the project");
        material_text = *card_text;
        const BendingUnitSpec base = unit_from(in.value("unit", Json::object()));
        const auto& rows = field(in, "observations");
        if (!rows.is_array() || rows.empty()) fail(ErrorCode::InvalidDocument, "observations must be a non-empty array");
        for (const auto& r : rows) {
          TriggeringObservation o;
          o.unit = base;
          o.unit.actuator_ratio = r.at("actuator_ratio").get<double>();
          o.measured_end_distance = r.at("distance_mm").get<double>();
          o.temperature_c = r.value("temp_c", 80.0);
          o.validate();
          p->observations.push_back(o);
        }
        p->cards[p->material] = project_.material(p->material);
        if (base.constraint_material != p->material) {
          p->cards[base.constraint_material] = project_.material(base.constraint_material);
          material_text += *project_.material_text(base.constraint_material);
        }
        p->shooter = config_.shooter;
        if (in.contains("coupling")) p->shooter.coupling = coupling_from_string(in.at("coupling").get<std::string>());
        if (in.contains("high_fidelity")) p->shooter.high_fidelity = in.at("high_fidelity").get<bool>();
        p->shooter.solver = config_.solver;
        p->shooter.validate();
        break;
      }
      case JobKind::calibrate: {
        auto& c = p->calibration;
        c.name = text_field(in, "name");
        c.main_loading = parse_stress_strain_text(text_field(in, "loading_csv"), "loading");
        const auto& un = field(in, "unloading");
        if (!un.is_array()) fail(ErrorCode::InvalidDocument, "unloading must be an array");
        for (const auto& u : un)
          c.unloading.emplace_back(u.at("sigma0_mpa").get<double>(),
                                   parse_stress_strain_text(u.at("csv").get<std::string>(), "unloading"));
        if (in.contains("sweep_csv")) c.sweep = parse_frequency_sweep_text(in.at("sweep_csv").get<std::string>(), c.name);
        c.constants = defaults_named(in.value("defaults", std::string("pla")));
        c.prony_terms = in.value("prony_terms", c.prony_terms);
        c.fit_damage = in.value("fit_damage", c.fit_damage);
        break;
      }
      case JobKind::measure: {
        const std::string id = text_field(in, "state");
        const auto text = project_.state_text(id);
        if (!text) fail(ErrorCode::UnresolvedReference, "no state '" + id + "' in the project");
        p->state_text = *text;
        material_text = *text;
        p->pairs = parse_measurements_text(text_field(in, "pairs_csv"));
        p->basis = error_basis_from_string(in.value("basis", std::string("recomputed")));
        p->level = in.value("level", 0.95);
        break;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidDocument, std::string("malformed job inputs: ") + e.what());
  }
  p->hash = sha256_hex(to_string(kind) + "\n" + in.dump() + "\n" + material_text + "\n" + config_.to_json());

  std::lock_guard lock(mutex_);
  if (const auto it = by_hash_.find(p->hash); it != by_hash_.end()) {
    const auto& existing = jobs_.at(it->second);
    if (existing.status != JobStatus::failed) return {existing, true};
  }
  std::string id = "j" + p->hash.substr(0, 16);
  for (int n = 2; jobs_.count(id); ++n) id = "j" + p->hash.substr(0, 16) + "-" + std::to_string(n);
  JobRecord r;
  r.id = id;
  r.kind = kind;
  r.inputs_hash = p->hash;
  r.inputs_json = in.dump();
  log_line(r, "queued");
  jobs_[id] = r;
  by_hash_[p->hash] = id;
  prepared_[id] = p;
  project_.save_job(r);
  queue_.push_back(id);
  queue_cv_.notify_one();
  return {r, false};
}

std::optional<JobRecord> JobService::get(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

std::vector<JobRecord> JobService::list() const {
  std::lock_guard lock(mutex_);
  std::vector<JobRecord> out;
  for (const auto& [id, r] : jobs_) out.push_back(r);
  return out;
}

JobRecord JobService::wait(const std::string& id) const {
  std::unique_lock lock(mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) fail(ErrorCode::UnresolvedReference, "no job '" + id + "'");
  changed_.wait(lock, [&] {
    const auto s = jobs_.at(id).status;
    return s == JobStatus::done || s == JobStatus::failed;
  });
  return jobs_.at(id);
}

void JobService::update(const JobRecord& record) {
  project_.save_job(record);
  {
    std::lock_guard lock(mutex_);
    jobs_[record.id] = record;
  }
  changed_.notify_all();
}

void JobService::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock lock(mutex_);
      queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = queue_.front();
      queue_.pop_front();
    }
    run(id);
  }
}

void JobService::run(const std::string& id) {
  JobRecord r;
  std::shared_ptr<Prepared> p;
  {
    std::lock_guard lock(mutex_);
    r = jobs_.at(id);
    p = prepared_.at(id);
  }
  r.status = JobStatus::running;
  log_line(r, "running");
  update(r);
  try {
    switch (p->kind) {
      case JobKind::simulate: {
        const auto res = sequential_simulate(p->design, p->cards, config_.solver, p->mesh);
        project_.put_state(id + "-stage_a", state_to_json(res.stage_a));
        project_.put_state(id + "-stage_b", state_to_json(res.stage_b));
        r.outputs["stage_a"] = id + "-stage_a";
        r.outputs["stage_b"] = id + "-stage_b";
        log_line(r, "stage A " + std::to_string(res.stage_a.iterations) + " iterations, stage B " +
                        std::to_string(res.stage_b.iterations) + " iterations");
        break;
      }
      case JobKind::shoot: {
        MaterialSet others = p->cards;
        const auto res = shoot_residual_stress(p->observations, p->cards.at(p->material), p->shooter, others);
        const std::string name = id + ".shoot.json";
        project_.put_result(name, shooter_result_to_json(res, p->shooter, p->material));
        r.outputs["result"] = name;
        r.outputs["sigma0_mpa"] = detail::format_double(res.sigma0);
        log_line(r, "sigma0 " + detail::format_double(res.sigma0) + " MPa after " + std::to_string(res.iterations) +
                        " evaluations, residual " + detail::format_double(res.residual) + " mm");
        if (!res.converged) fail(ErrorCode::MaxIterations, "shooting did not reach the tolerance");
        break;
      }
      case JobKind::calibrate: {
        const auto card = calibrate_material(p->calibration);
        project_.put_material(card.name, material_card_to_json(card));
        r.outputs["material"] = card.name;
        log_line(r, "calibrated material '" + card.name + "'");
        break;
      }
      case JobKind::measure: {
        const auto state = state_from_json(p->state_text);
        auto pairs = p->pairs;
        measure_pairs(state, pairs);
        const auto report = build_report(pairs, p->basis, p->level);
        const std::string name = id + ".report.json";
        project_.put_result(name, report_to_json(report));
        r.outputs["report"] = name;
        log_line(r, "mean accuracy " + detail::format_double(report.mean_accuracy));
        break;
      }
    }
    r.status = JobStatus::done;
    log_line(r, "done");
  } catch (const Error& e) {
    r.status = JobStatus::failed;
    r.error_code = std::string(morphsim::to_string(e.code()));
    r.numerical_failure = is_numerical(e.code());
    log_line(r, e.what());
  } catch (const std::exception& e) {
    r.status = JobStatus::failed;
    r.error_code = "Internal";
    r.numerical_failure = true;
    log_line(r, e.what());
  }
  {
    std::lock_guard lock(mutex_);
    prepared_.erase(id);
  }
  update(r);
}

}  // namespace morphsim::workbench
