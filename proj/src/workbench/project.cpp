#include <algorithm>
#include <cctype>

#include "json.hpp"
#include "morphsim/error.hpp"
#include "morphsim/workbench.hpp"
#include "text_util.hpp"

namespace morphsim::workbench {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kManifest = "project.json";

void check_name(const std::string& name, const std::string& what) {
  const bool ok = !name.empty() && name.size() <= 128 && name.front() != '.' &&
                  std::all_of(name.begin(), name.end(), [](unsigned char c) {
                    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
                  });
  if (!ok) fail(ErrorCode::InvalidArgument, "invalid " + what + " name '" + name + "'");
}

/// Write to a sibling temporary, then rename over the target.
void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  detail::write_file(tmp, text);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::IoFailure, "cannot replace '" + path.string() + "': " + ec.message());
}

void check_if_match(const std::optional<std::string>& current, const std::optional<std::string>& if_match) {
  if (!if_match) return;
  if (!current || Project::etag_of(*current) != *if_match)
    fail(ErrorCode::VersionConflict, "resource changed since " + *if_match);
}

}  // namespace

std::unique_ptr<Project> Project::open(const fs::path& root) {
  std::unique_ptr<Project> p(new Project(fs::absolute(root)));
  for (const char* sub : {"materials", "designs", "states", "results", "jobs"}) {
    std::error_code ec;
    fs::create_directories(p->root_ / sub, ec);
    if (ec) fail(ErrorCode::IoFailure, "cannot create '" + (p->root_ / sub).string() + "'");
  }
  const fs::path manifest = p->root_ / kManifest;
  if (!fs::exists(manifest)) {
    p->write_manifest_locked();
    return p;
  }
  try {
    const auto j = Json::parse(detail::read_file(manifest));
    if (j.at("kind") != "project") fail(ErrorCode::InvalidDocument, "manifest kind is not project");
    const int v = j.at("format_version").get<int>();
    if (v != kProjectFormatVersion) fail(ErrorCode::UnsupportedVersion, "project format_version " + std::to_string(v));
    p->materials_ = j.at("materials").get<std::map<std::string, std::string>>();
    p->designs_ = j.at("designs").get<std::map<std::string, std::string>>();
    p->states_ = j.at("states").get<std::map<std::string, std::string>>();
    p->results_ = j.at("results").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidDocument, std::string("malformed project manifest: ") + e.what());
  }
  for (const auto* section : {&p->materials_, &p->designs_, &p->states_, &p->results_})
    for (const auto& [name, rel] : *section)
      if (!fs::exists(p->root_ / rel))
        fail(ErrorCode::UnresolvedReference, "manifest entry '" + name + "' points to missing '" + rel + "'");
  return p;
}

void Project::write_manifest_locked() const {
  Json j;
  j["format_version"] = kProjectFormatVersion;
  j["kind"] = "project";
  j["materials"] = materials_;
  j["designs"] = designs_;
  j["states"] = states_;
  j["results"] = results_;
  write_atomic(root_ / kManifest, j.dump(2) + "\n");
}

namespace {

std::vector<std::string> keys(const std::map<std::string, std::string>& m) {
  std::vector<std::string> out;
  for (const auto& [k, v] : m) out.push_back(k);
  return out;
}

}  // namespace

std::vector<std::string> Project::material_names() const {
  std::lock_guard lock(mutex_);
  return keys(materials_);
}

std::vector<std::string> Project::design_names() const {
  std::lock_guard lock(mutex_);
  return keys(designs_);
}

std::vector<std::string> Project::state_ids() const {
  std::lock_guard lock(mutex_);
  return keys(states_);
}

std::optional<std::string> Project::read_entry(const std::map<std::string, std::string>& section,
                                               const std::string& key) const {
  const auto it = section.find(key);
  if (it == section.end()) return std::nullopt;
  return detail::read_file(root_ / it->second);
}

std::optional<std::string> Project::material_text(const std::string& name) const {
  std::lock_guard lock(mutex_);
  return read_entry(materials_, name);
}

std::optional<std::string> Project::design_text(const std::string& name) const {
  std::lock_guard lock(mutex_);
  return read_entry(designs_, name);
}

std::optional<std::string> Project::state_text(const std::string& id) const {
  std::lock_guard lock(mutex_);
  return read_entry(states_, id);
}

std::optional<std::string> Project::result_text(const std::string& name) const {
  std::lock_guard lock(mutex_);
  return read_entry(results_, name);
}

MaterialCard Project::material(const std::string& name) const {
  const auto text = material_text(name);
  if (!text) fail(ErrorCode::UnresolvedReference, "no material '" + name + "' in the project");
  return material_card_from_json(*text);
}

DesignDocument Project::design(const std::string& name) const {
  const auto text = design_text(name);
  if (!text) fail(ErrorCode::UnresolvedReference, "no design '" + name + "' in the project");
  return design_from_json(*text);
}

MaterialSet Project::design_materials(const GridDesign& design) const {
  MaterialSet cards;
  for (const auto& name : design.material_names()) cards[name] = material(name);
  return cards;
}

std::string Project::put_material(const std::string& name, const std::string& text,
                                  const std::optional<std::string>& if_match) {
  check_name(name, "material");
  const auto card = material_card_from_json(text);
  if (card.name != name)
    fail(ErrorCode::InvalidDocument, "card names material '" + card.name + "' but was stored as '" + name + "'");
  const std::string canonical = material_card_to_json(card);
  std::lock_guard lock(mutex_);
  check_if_match(read_entry(materials_, name), if_match);
  const std::string rel = "materials/" + material_file_name(name);
  write_atomic(root_ / rel, canonical);
  materials_[name] = rel;
  write_manifest_locked();
  return etag_of(canonical);
}

std::string Project::put_design(const std::string& name, const std::string& text,
                                const std::optional<std::string>& if_match) {
  check_name(name, "design");
  const auto doc = design_from_json(text);
  std::map<std::string, std::string> files;
  for (const auto& m : doc.design.material_names()) {
    if (!material_text(m)) fail(ErrorCode::UnresolvedReference, "design references unknown material '" + m + "'");
    files[m] = "../materials/" + material_file_name(m);
  }
  const std::string canonical = design_to_json(doc.design, files);
  std::lock_guard lock(mutex_);
  check_if_match(read_entry(designs_, name), if_match);
  const std::string rel = "designs/" + name + ".grid.json";
  write_atomic(root_ / rel, canonical);
  designs_[name] = rel;
  write_manifest_locked();
  return etag_of(canonical);
}

void Project::put_state(const std::string& id, const std::string& text) {
  check_name(id, "state");
  std::lock_guard lock(mutex_);
  const std::string rel = "states/" + id + ".state.json";
  write_atomic(root_ / rel, text);
  states_[id] = rel;
  write_manifest_locked();
}

void Project::put_result(const std::string& name, const std::string& text) {
  check_name(name, "result");
  std::lock_guard lock(mutex_);
  const std::string rel = "results/" + name;
  write_atomic(root_ / rel, text);
  results_[name] = rel;
  write_manifest_locked();
}

void Project::save_job(const JobRecord& record) {
  check_name(record.id, "job");
  std::lock_guard lock(mutex_);
  write_atomic(root_ / "jobs" / (record.id + ".json"), record.to_json());
}

std::vector<JobRecord> Project::load_jobs() const {
  std::lock_guard lock(mutex_);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(root_ / "jobs"))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<JobRecord> out;
  for (const auto& f : files) out.push_back(JobRecord::from_json(detail::read_file(f)));
  return out;
}

}  // namespace morphsim::workbench
