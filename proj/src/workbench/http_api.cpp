// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "morphsim/error.hpp"
#include "morphsim/workbench.hpp"
#include "httplib.h"
#include "json.hpp"

namespace morphsim::workbench {

using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, int status, const std::string& body) {
  res.status = status;
  res.set_content(body, kJson);
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                const std::string& log_excerpt = {}) {
  Json j{{"format_version", kApiFormatVersion}, {"kind", "error"}, {"code", code}, {"message", message}};
  if (!log_excerpt.empty()) j["log_excerpt"] = log_excerpt;
  send_json(res, status, j.dump(2) + "\n");
}

int status_for(ErrorCode code) {
  if (code == ErrorCode::VersionConflict) return 409;
  if (is_numerical(code)) return 500;
  return 422;
}

void send_error(httplib::Response& res, const Error& e) {
  send_error(res, status_for(e.code()), std::string(to_string(e.code())), e.what());
}

std::string list_body(const std::string& kind, const std::vector<std::string>& names) {
  Json j{{"format_version", kApiFormatVersion}, {"kind", kind}, {"items", names}};
  return j.dump(2) + "\n";
}

std::optional<std::string> if_match_of(const httplib::Request& req) {
  if (!req.has_header("If-Match")) return std::nullopt;
  return req.get_header_value("If-Match");
}

/// Status code for a job record: failures report their cause.
int job_status_code(const JobRecord& r) {
  if (r.status != JobStatus::failed) return 200;
  return r.numerical_failure ? 500 : 422;
}

std::string mesh_body(const std::string& id, const DeformedState& state) {
  Json lines = Json::array();
  for (const auto& line : state_polylines(state)) {
    Json pts = Json::array();
    for (const auto& p : line) pts.push_back({p.x(), p.y(), p.z()});
    lines.push_back(pts);
  }
  Json members = Json::array();
  for (const auto& m : state.members) members.push_back(m.member_id);
  Json j{{"format_version", kApiFormatVersion},
         {"kind", "state_mesh"},
         {"id", id},
         {"stage", to_string(state.stage)},
         {"members", members},
         {"polylines", lines}};
  return j.dump() + "\n";
}

}  // namespace

struct ApiServer::Impl {
  Project& project;
  JobService& jobs;
  httplib::Server server;

  Impl(Project& p, JobService& j) : project(p), jobs(j) { routes(); }

  template <class Getter>
  void document_routes(const std::string& base, const std::string& list_kind, Getter getter,
                       std::string (Project::*put)(const std::string&, const std::string&,
                                                   const std::optional<std::string>&),
                       std::vector<std::string> (Project::*names)() const) {
    server.Get(base, [this, list_kind, names](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, list_body(list_kind, (project.*names)()));
    });
    server.Get(base + "/([A-Za-z0-9_.-]+)", [this, getter](const httplib::Request& req, httplib::Response& res) {
      const auto text = getter(project, req.matches[1].str());
      if (!text) return send_error(res, 404, "NotFound", "no resource '" + req.matches[1].str() + "'");
      res.set_header("ETag", Project::etag_of(*text));
      send_json(res, 200, *text);
    });
    server.Put(base + "/([A-Za-z0-9_.-]+)", [this, put](const httplib::Request& req, httplib::Response& res) {
      try {
        const std::string etag = (project.*put)(req.matches[1].str(), req.body, if_match_of(req));
        res.set_header("ETag", etag);
        Json j{{"format_version", kApiFormatVersion}, {"kind", "stored"}, {"name", req.matches[1].str()}, {"etag", etag}};
        send_json(res, 200, j.dump(2) + "\n");
      } catch (const Error& e) {
        send_error(res, e);
      }
    });
  }

  void routes() {
    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, Json{{"format_version", kApiFormatVersion}, {"kind", "health"}, {"status", "ok"}}.dump() + "\n");
    });
    document_routes(
        "/materials", "material_list",
        [](const Project& p, const std::string& n) { return p.material_text(n); }, &Project::put_material,
        &Project::material_names);
    document_routes(
        "/designs", "design_list", [](const Project& p, const std::string& n) { return p.design_text(n); },
        &Project::put_design, &Project::design_names);

    server.Post("/jobs", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        Json body;
        try {
          body = Json::parse(req.body);
        } catch (const nlohmann::json::exception& e) {
          fail(ErrorCode::InvalidDocument, std::string("malformed job request: ") + e.what());
        }
        if (!body.is_object() || !body.contains("kind") || !body.at("kind").is_string())
          fail(ErrorCode::InvalidDocument, "job request needs a string 'kind'");
        const JobKind kind = job_kind_from_string(body.at("kind").get<std::string>());
        const std::string inputs = body.contains("inputs") ? body.at("inputs").dump() : "{}";
        const auto sub = jobs.submit(kind, inputs);
        send_json(res, sub.reused ? 200 : 202, sub.record.to_json());
      } catch (const Error& e) {
        send_error(res, e);
      }
    });
    server.Get("/jobs", [this](const httplib::Request&, httplib::Response& res) {
      std::vector<std::string> ids;
      for (const auto& r : jobs.list()) ids.push_back(r.id);
      send_json(res, 200, list_body("job_list", ids));
    });
    server.Get("/jobs/([A-Za-z0-9_-]+)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto r = jobs.get(req.matches[1].str());
      if (!r) return send_error(res, 404, "NotFound", "no job '" + req.matches[1].str() + "'");
      if (r->status == JobStatus::failed) {
        Json j = Json::parse(r->to_json());
        j["log_excerpt"] = r->log_excerpt();
        return send_json(res, job_status_code(*r), j.dump(2) + "\n");
      }
      send_json(res, 200, r->to_json());
    });

    server.Get("/states", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, list_body("state_list", project.state_ids()));
    });
    server.Get("/states/([A-Za-z0-9_.-]+)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto text = project.state_text(req.matches[1].str());
      if (!text) return send_error(res, 404, "NotFound", "no state '" + req.matches[1].str() + "'");
      send_json(res, 200, *text);
    });
    server.Get("/states/([A-Za-z0-9_.-]+)/mesh", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1].str();
      const auto text = project.state_text(id);
      if (!text) return send_error(res, 404, "NotFound", "no state '" + id + "'");
      try {
        send_json(res, 200, mesh_body(id, state_from_json(*text)));
      } catch (const Error& e) {
        send_error(res, 500, std::string(to_string(e.code())), e.what());
      }
    });
    server.Get("/results/([A-Za-z0-9_.-]+)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto text = project.result_text(req.matches[1].str());
      if (!text) return send_error(res, 404, "NotFound", "no result '" + req.matches[1].str() + "'");
      send_json(res, 200, *text);
    });

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.status == 404 && res.body.empty()) send_error(res, 404, "NotFound", "unknown resource");
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string msg = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        msg = e.what();
      } catch (...) {
      }
      send_error(res, 500, "Internal", msg);
    });
  }
};

ApiServer::ApiServer(Project& project, JobService& jobs) : impl_(std::make_unique<Impl>(project, jobs)) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) fail(ErrorCode::IoFailure, "cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) fail(ErrorCode::IoFailure, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void ApiServer::listen() { impl_->server.listen_after_bind(); }

void ApiServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace morphsim::workbench
