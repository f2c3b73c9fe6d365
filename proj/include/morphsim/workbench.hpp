#pragma once

// Project persistence, cached job execution, the HTTP JSON API and the
// command line front end.

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "morphsim/dma_ingest.hpp"
#include "morphsim/documents.hpp"
#include "morphsim/error.hpp"
#include "morphsim/grid_sim.hpp"
#include "morphsim/stress_shooter.hpp"

namespace morphsim::workbench {

inline constexpr int kProjectFormatVersion = 1;
inline constexpr int kApiFormatVersion = 1;

/// Environment variable naming the default project root.
inline constexpr const char* kProjectEnvVar = "MORPHSIM_PROJECT";

std::string sha256_hex(std::string_view data);

/// Solver, mesh, smoother and shooter defaults read from a `--config` JSON file.
struct WorkbenchConfig {
  SolverConfig solver;
  MeshConfig mesh;
  SmootherConfig smoother;
  ShooterConfig shooter;
  int workers = 2;

  /// Unknown keys and out-of-range values raise InvalidDocument.
  static WorkbenchConfig from_json(const std::string& text);
  static WorkbenchConfig load(const std::filesystem::path& path);
  /// Canonical form; part of every job input hash.
  std::string to_json() const;
  void validate() const;
};

enum class JobKind { calibrate, shoot, simulate, measure };
enum class JobStatus { queued, running, done, failed };

std::string to_string(JobKind kind);
JobKind job_kind_from_string(const std::string& s);
std::string to_string(JobStatus status);
JobStatus job_status_from_string(const std::string& s);

struct JobRecord {
  std::string id;
  JobKind kind = JobKind::simulate;
  JobStatus status = JobStatus::queued;
  std::string inputs_hash;
  std::string inputs_json;  // request inputs as submitted
  /// Output name to project resource (state id, material name or result file).
  std::map<std::string, std::string> outputs;
  /// Timestamped progress lines; the only place that carries wall-clock time.
  std::vector<std::string> log;
  std::string error_code;  // empty unless failed
  bool numerical_failure = false;

  std::string to_json() const;
  static JobRecord from_json(const std::string& text);
  /// Last lines of the log.
  std::string log_excerpt(std::size_t lines = 10) const;
};

/// Project directory: a manifest plus materials/, designs/, states/, results/ and jobs/.
/// Manifest writes are serialized; readers get consistent snapshots.
class Project {
public:
  /// Opens an existing project or initializes an empty one. Manifest references must resolve.
  static std::unique_ptr<Project> open(const std::filesystem::path& root);

  const std::filesystem::path& root() const { return root_; }

  std::vector<std::string> material_names() const;
  std::vector<std::string> design_names() const;
  std::vector<std::string> state_ids() const;

  /// Stored document text, absent for unknown names.
  std::optional<std::string> material_text(const std::string& name) const;
  std::optional<std::string> design_text(const std::string& name) const;
  std::optional<std::string> state_text(const std::string& id) const;
  std::optional<std::string> result_text(const std::string& name) const;

  /// Content hash used as ETag.
  static std::string etag_of(const std::string& text) { return "\"" + sha256_hex(text).substr(0, 32) + "\""; }

  MaterialCard material(const std::string& name) const;
  DesignDocument design(const std::string& name) const;
  /// Cards referenced by a stored design.
  MaterialSet design_materials(const GridDesign& design) const;

  /// Validates and stores a card under `name`. A given if_match must equal the current ETag,
  /// else VersionConflict. Returns the new ETag.
  std::string put_material(const std::string& name, const std::string& text,
                           const std::optional<std::string>& if_match = std::nullopt);
  /// Validates a design, including that every material it names exists in the project.
  std::string put_design(const std::string& name, const std::string& text,
                         const std::optional<std::string>& if_match = std::nullopt);
  void put_state(const std::string& id, const std::string& text);
  void put_result(const std::string& name, const std::string& text);

  void save_job(const JobRecord& record);
  std::vector<JobRecord> load_jobs() const;

private:
  explicit Project(std::filesystem::path root) : root_(std::move(root)) {}
  void write_manifest_locked() const;
  std::optional<std::string> read_entry(const std::map<std::string, std::string>& section,
                                        const std::string& key) const;

  std::filesystem::path root_;
  mutable std::mutex mutex_;
  std::map<std::string, std::string> materials_;  // name -> relative path
  std::map<std::string, std::string> designs_;
  std::map<std::string, std::string> states_;
  std::map<std::string, std::string> results_;
};

/// Runs jobs on a bounded worker pool with content-hash caching.
class JobService {
public:
  JobService(Project& project, WorkbenchConfig config);
  ~JobService();
  JobService(const JobService&) = delete;
  JobService& operator=(const JobService&) = delete;

  struct Submission {
    JobRecord record;
    bool reused = false;  // served from the cache or joined an in-flight job
  };

  /// Resolves the inputs and hashes them. A finished or in-flight job with the same hash is
  /// returned as is; otherwise a new job is queued. Invalid inputs throw before queueing.
  Submission submit(JobKind kind, const std::string& inputs_json);
  std::optional<JobRecord> get(const std::string& id) const;
  std::vector<JobRecord> list() const;
  /// Blocks until the job is done or failed.
  JobRecord wait(const std::string& id) const;

  const WorkbenchConfig& config() const { return config_; }

private:
  struct Prepared;
  void worker_loop();
  void run(const std::string& id);
  void update(const JobRecord& record);

  Project& project_;
  WorkbenchConfig config_;
  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::condition_variable queue_cv_;
  std::map<std::string, JobRecord> jobs_;
  std::map<std::string, std::string> by_hash_;  // inputs hash -> latest job id
  std::map<std::string, std::shared_ptr<Prepared>> prepared_;
  std::deque<std::string> queue_;
  std::vector<std::thread> workers_;
  bool stopping_ = false;
};

/// HTTP JSON API over a project and its job service.
class ApiServer {
public:
  ApiServer(Project& project, JobService& jobs);
  ~ApiServer();

  /// Binds to `port` (0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called.
  void listen();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Command line entry point; returns the process exit code (0 ok, 1 input error, 2 numerical failure).
int run_cli(int argc, char** argv);

/// Exit code for a caught error.
int exit_code_for(ErrorCode code);

}  // namespace morphsim::workbench
