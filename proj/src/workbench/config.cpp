#include <openssl/evp.h>

#include <set>

#include "json.hpp"
#include "morphsim/error.hpp"
#include "morphsim/workbench.hpp"
#include "text_util.hpp"

namespace morphsim::workbench {

using Json = nlohmann::ordered_json;

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorCode::IoFailure, "SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

namespace {

void only_keys(const Json& j, const std::string& where, const std::set<std::string>& keys) {
  if (!j.is_object()) fail(ErrorCode::InvalidDocument, where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) fail(ErrorCode::InvalidDocument, "unknown config key '" + where + "." + k + "'");
}

template <class T>
void read(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

WorkbenchConfig WorkbenchConfig::from_json(const std::string& text) {
  WorkbenchConfig c;
  try {
    const auto j = Json::parse(text);
    only_keys(j, "config", {"solver", "mesh", "smoother", "shooter", "workers"});
    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      only_keys(s, "solver", {"load_steps", "newton_tol", "max_newton_iter", "line_search", "max_step_cuts"});
      read(s, "load_steps", c.solver.load_steps);
      read(s, "newton_tol", c.solver.newton_tol);
      read(s, "max_newton_iter", c.solver.max_newton_iter);
      read(s, "line_search", c.solver.line_search);
      read(s, "max_step_cuts", c.solver.max_step_cuts);
    }
    if (j.contains("mesh")) {
      only_keys(j.at("mesh"), "mesh", {"segments_per_member"});
      read(j.at("mesh"), "segments_per_member", c.mesh.segments_per_member);
    }
    if (j.contains("smoother")) {
      const auto& s = j.at("smoother");
      only_keys(s, "smoother", {"lambda", "penalty_order", "knot_stride"});
      if (s.contains("lambda") && !s.at("lambda").is_null()) c.smoother.lambda = s.at("lambda").get<double>();
      read(s, "penalty_order", c.smoother.penalty_order);
      read(s, "knot_stride", c.smoother.knot_stride);
    }
    if (j.contains("shooter")) {
      const auto& s = j.at("shooter");
      only_keys(s, "shooter",
                {"tol_mm", "max_iter", "high_fidelity", "coupling", "initial_sigma0", "sigma_tol", "fd_step", "segments"});
      read(s, "tol_mm", c.shooter.tol_mm);
      read(s, "max_iter", c.shooter.max_iter);
      read(s, "high_fidelity", c.shooter.high_fidelity);
      if (s.contains("coupling")) c.shooter.coupling = coupling_from_string(s.at("coupling").get<std::string>());
      if (s.contains("initial_sigma0") && !s.at("initial_sigma0").is_null())
        c.shooter.initial_sigma0 = s.at("initial_sigma0").get<double>();
      read(s, "sigma_tol", c.shooter.sigma_tol);
      read(s, "fd_step", c.shooter.fd_step);
      read(s, "segments", c.shooter.segments);
    }
    read(j, "workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidDocument, std::string("malformed config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorCode::InvalidDocument, std::string("config: ") + e.what());
  }
  return c;
}

WorkbenchConfig WorkbenchConfig::load(const std::filesystem::path& path) { return from_json(detail::read_file(path)); }

void WorkbenchConfig::validate() const {
  solver.validate();
  shooter.validate();
  if (mesh.segments_per_member < 1) fail(ErrorCode::InvalidArgument, "segments_per_member must be at least 1");
  if (smoother.penalty_order < 1 || smoother.knot_stride < 1)
    fail(ErrorCode::InvalidArgument, "smoother penalty_order and knot_stride must be at least 1");
  if (smoother.lambda && !(*smoother.lambda > 0.0)) fail(ErrorCode::InvalidArgument, "smoother lambda must be positive");
  if (workers < 1) fail(ErrorCode::InvalidArgument, "workers must be at least 1");
}

std::string WorkbenchConfig::to_json() const {
  Json j;
  j["solver"] = {{"load_steps", solver.load_steps},
                 {"newton_tol", solver.newton_tol},
                 {"max_newton_iter", solver.max_newton_iter},
                 {"line_search", solver.line_search},
                 {"max_step_cuts", solver.max_step_cuts}};
  j["mesh"] = {{"segments_per_member", mesh.segments_per_member}};
  j["smoother"] = {{"lambda", smoother.lambda ? Json(*smoother.lambda) : Json(nullptr)},
                   {"penalty_order", smoother.penalty_order},
                   {"knot_stride", smoother.knot_stride}};
  j["shooter"] = {{"tol_mm", shooter.tol_mm},
                  {"max_iter", shooter.max_iter},
                  {"high_fidelity", shooter.high_fidelity},
                  {"coupling", to_string(shooter.coupling)},
                  {"initial_sigma0", shooter.initial_sigma0 ? Json(*shooter.initial_sigma0) : Json(nullptr)},
                  {"sigma_tol", shooter.sigma_tol},
                  {"fd_step", shooter.fd_step},
                  {"segments", shooter.segments}};
  j["workers"] = workers;
  return j.dump(2) + "\n";
}

std::string to_string(JobKind kind) {
  switch (kind) {
    case JobKind::calibrate: return "calibrate";
    case JobKind::shoot: return "shoot";
    case JobKind::simulate: return "simulate";
    case JobKind::measure: return "measure";
  }
  return "simulate";
}

JobKind job_kind_from_string(const std::string& s) {
  for (auto k : {JobKind::calibrate, JobKind::shoot, JobKind::simulate, JobKind::measure})
    if (to_string(k) == s) return k;
  fail(ErrorCode::InvalidArgument, "unknown job kind '" + s + "'");
}

std::string to_string(JobStatus status) {
  switch (status) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
  }
  return "queued";
}

JobStatus job_status_from_string(const std::string& s) {
  for (auto k : {JobStatus::queued, JobStatus::running, JobStatus::done, JobStatus::failed})
    if (to_string(k) == s) return k;
  fail(ErrorCode::InvalidDocument, "unknown job status '" + s + "'");
}

std::string JobRecord::to_json() const {
  Json j;
  j["format_version"] = kApiFormatVersion;
  j["kind"] = "job";
  j["id"] = id;
  j["job_kind"] = to_string(kind);
  j["status"] = to_string(status);
  j["inputs_hash"] = inputs_hash;
  j["inputs"] = Json::parse(inputs_json);
  j["outputs"] = outputs;
  j["error_code"] = error_code;
  j["numerical_failure"] = numerical_failure;
  j["log"] = log;
  return j.dump(2) + "\n";
}

JobRecord JobRecord::from_json(const std::string& text) {
  JobRecord r;
  try {
    const auto j = Json::parse(text);
    if (j.at("kind") != "job") fail(ErrorCode::InvalidDocument, "document kind is not job");
    r.id = j.at("id").get<std::string>();
    r.kind = job_kind_from_string(j.at("job_kind").get<std::string>());
    r.status = job_status_from_string(j.at("status").get<std::string>());
    r.inputs_hash = j.at("inputs_hash").get<std::string>();
    r.inputs_json = j.at("inputs").dump();
    r.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    r.error_code = j.at("error_code").get<std::string>();
    r.numerical_failure = j.at("numerical_failure").get<bool>();
    r.log = j.at("log").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidDocument, std::string("malformed job record: ") + e.what());
  }
  return r;
}

std::string JobRecord::log_excerpt(std::size_t lines) const {
  std::string out;
  for (std::size_t i = log.size() > lines ? log.size() - lines : 0; i < log.size(); ++i) out += log[i] + "\n";
  return out;
}

int exit_code_for(ErrorCode code) { return is_numerical(code) ? 2 : 1; }

}  // namespace morphsim::workbench
