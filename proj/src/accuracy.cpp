#include "morphsim/accuracy.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "json.hpp"
#include "morphsim/error.hpp"
#include "text_util.hpp"

namespace morphsim {

double pair_error(double experiment_mm, double simulation_mm) {
  if (!(experiment_mm > 0.0) || !(simulation_mm > 0.0))
    fail(ErrorCode::InvalidArgument, "point-pair distances must be positive");
  return 100.0 * std::abs(experiment_mm - simulation_mm) / experiment_mm;
}

Vec3 resolve_point(const DeformedState& state, const std::string& ref) {
  const auto at = ref.rfind('@');
  if (at == std::string::npos) {
    const int n = state.node_by_id(ref);
    if (n < 0) fail(ErrorCode::UnresolvedReference, "no node '" + ref + "' in the state");
    return state.positions[static_cast<std::size_t>(n)];
  }
  const std::string member = ref.substr(0, at);
  const auto t = detail::parse_double(ref.substr(at + 1));
  if (!t) fail(ErrorCode::UnresolvedReference, "bad member parameter in '" + ref + "'");
  return state.member_point(member, *t);
}

std::vector<double> measure_state(const DeformedState& state, const std::vector<PointPair>& pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.point_a.empty() || p.point_b.empty())
      fail(ErrorCode::UnresolvedReference, "pair '" + p.label + "' has no point references");
    out.push_back((resolve_point(state, p.point_b) - resolve_point(state, p.point_a)).norm());
  }
  return out;
}

void measure_pairs(const DeformedState& state, std::vector<PointPair>& pairs) {
  for (auto& p : pairs)
    if (!p.point_a.empty() || !p.point_b.empty()) p.simulation_mm = measure_state(state, {p}).front();
}

ConfidenceInterval confidence_interval(const std::vector<double>& values, double level) {
  if (values.size() < 2) fail(ErrorCode::TooFewPairs, "a confidence interval needs at least two pairs");
  if (!(level > 0.0 && level < 1.0)) fail(ErrorCode::InvalidArgument, "confidence level must lie in (0, 1)");
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); }))
    return {values.front(), values.front()};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const boost::math::students_t dist(n - 1.0);
  const double t = boost::math::quantile(dist, 0.5 + 0.5 * level);
  const double half = t * sd / std::sqrt(n);
  return {mean - half, mean + half};
}

std::string to_string(ErrorBasis basis) { return basis == ErrorBasis::recomputed ? "recomputed" : "listed"; }

ErrorBasis error_basis_from_string(const std::string& s) {
  if (s == "recomputed") return ErrorBasis::recomputed;
  if (s == "listed") return ErrorBasis::listed;
  fail(ErrorCode::InvalidArgument, "unknown error basis '" + s + "'");
}

std::vector<std::string> AccuracyReport::flagged_labels() const {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (r.flagged) out.push_back(r.label);
  return out;
}

AccuracyReport build_report(const std::vector<PointPair>& pairs, ErrorBasis basis, double level,
                            const std::string& group) {
  AccuracyReport report;
  report.basis = basis;
  report.level = level;
  std::vector<double> acc;
  for (const auto& p : pairs) {
    if (!group.empty() && p.group != group) continue;
    if (!p.simulation_mm) fail(ErrorCode::InvalidArgument, "pair '" + p.label + "' has no simulation distance");
    ReportRow r;
    r.label = p.label;
    r.group = p.group;
    r.experiment_mm = p.experiment_mm;
    r.simulation_mm = *p.simulation_mm;
    r.error_percent = pair_error(p.experiment_mm, *p.simulation_mm);
    r.listed_error_percent = p.listed_error_percent;
    r.flagged = p.listed_error_percent &&
                std::abs(*p.listed_error_percent - r.error_percent) > kListedErrorTolerance;
    const double e = basis == ErrorBasis::listed && p.listed_error_percent ? *p.listed_error_percent : r.error_percent;
    r.accuracy = 1.0 - e / 100.0;
    acc.push_back(r.accuracy);
    report.rows.push_back(r);
  }
  report.n = static_cast<int>(acc.size());
  if (acc.empty()) fail(ErrorCode::TooFewPairs, "no pairs" + (group.empty() ? std::string() : " in group '" + group + "'"));
  report.mean_accuracy = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
  report.ci = confidence_interval(acc, level);
  return report;
}

std::vector<std::string> pair_groups(const std::vector<PointPair>& pairs) {
  std::vector<std::string> out;
  for (const auto& p : pairs)
    if (!p.group.empty() && std::find(out.begin(), out.end(), p.group) == out.end()) out.push_back(p.group);
  return out;
}

std::vector<PointPair> parse_measurements_text(const std::string& text) {
  const auto lines = detail::split_lines(text);
  std::size_t li = 0;
  while (li < lines.size() && detail::trim(lines[li]).empty()) ++li;
  if (li == lines.size()) fail(ErrorCode::EmptyFile, "no header row");
  const auto header = detail::split_csv_row(lines[li]);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string h = detail::trim(header[i]);
    static const std::vector<std::string> known = {"label",   "group",   "experiment_mm",       "simulation_mm",
                                                   "point_a", "point_b", "listed_error_percent"};
    if (std::find(known.begin(), known.end(), h) == known.end())
      fail(ErrorCode::SchemaMismatch, "unknown measurement column '" + h + "'");
    if (!col.emplace(h, i).second) fail(ErrorCode::SchemaMismatch, "duplicate column '" + h + "'");
  }
  const bool refs = col.count("point_a") && col.count("point_b");
  if (!col.count("label") || !col.count("experiment_mm") || !(refs || col.count("simulation_mm")))
    fail(ErrorCode::SchemaMismatch, "measurement header needs label, experiment_mm and simulation_mm or point_a,point_b");
  if (col.count("point_a") != col.count("point_b"))
    fail(ErrorCode::SchemaMismatch, "point_a and point_b must appear together");

  std::vector<PointPair> out;
  for (++li; li < lines.size(); ++li) {
    if (detail::trim(lines[li]).empty()) continue;
    const std::string row = std::to_string(out.size());
    const auto cells = detail::split_csv_row(lines[li]);
    if (cells.size() != header.size())
      fail(ErrorCode::SchemaMismatch, "row " + row + " has " + std::to_string(cells.size()) + " columns");
    const auto cell = [&](const std::string& name) { return detail::trim(cells[col.at(name)]); };
    const auto number = [&](const std::string& name) {
      const auto v = detail::parse_double(cell(name));
      if (!v) fail(ErrorCode::MalformedRow, "row " + row + ": non-numeric " + name + " '" + cell(name) + "'");
      return *v;
    };
    PointPair p;
    p.label = cell("label");
    if (col.count("group")) p.group = cell("group");
    p.experiment_mm = number("experiment_mm");
    if (col.count("simulation_mm") && !cell("simulation_mm").empty()) p.simulation_mm = number("simulation_mm");
    if (refs) {
      p.point_a = cell("point_a");
      p.point_b = cell("point_b");
    }
    if (col.count("listed_error_percent") && !cell("listed_error_percent").empty())
      p.listed_error_percent = number("listed_error_percent");
    if (!(p.experiment_mm > 0.0) || (p.simulation_mm && !(*p.simulation_mm > 0.0)))
      fail(ErrorCode::MalformedRow, "row " + row + ": distances must be positive");
    if (!p.simulation_mm && (p.point_a.empty() || p.point_b.empty()))
      fail(ErrorCode::MalformedRow, "row " + row + ": neither a simulation distance nor point references");
    out.push_back(std::move(p));
  }
  if (out.empty()) fail(ErrorCode::EmptyFile, "no data rows");
  return out;
}

std::vector<PointPair> parse_measurements_csv(const std::filesystem::path& path) {
  return parse_measurements_text(detail::read_file(path));
}

std::string report_to_json(const AccuracyReport& r) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "accuracy_report";
  j["basis"] = to_string(r.basis);
  j["level"] = r.level;
  j["n"] = r.n;
  j["mean_accuracy"] = r.mean_accuracy;
  j["ci_low"] = r.ci.low;
  j["ci_high"] = r.ci.high;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    nlohmann::ordered_json o{{"label", row.label},
                             {"group", row.group},
                             {"experiment_mm", row.experiment_mm},
                             {"simulation_mm", row.simulation_mm},
                             {"error_percent", row.error_percent},
                             {"accuracy", row.accuracy}};
    if (row.listed_error_percent) o["listed_error_percent"] = *row.listed_error_percent;
    o["flagged"] = row.flagged;
    rows.push_back(o);
  }
  j["pairs"] = rows;
  j["flagged"] = r.flagged_labels();
  return j.dump(2) + "\n";
}

std::string report_to_table(const AccuracyReport& r) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-14s %-14s %10s %10s %8s %8s %9s\n", "pair", "group", "exp_mm", "sim_mm", "err_%",
                "listed", "accuracy");
  out += buf;
  for (const auto& row : r.rows) {
    char listed[32] = "-";
    if (row.listed_error_percent) std::snprintf(listed, sizeof listed, "%.2f", *row.listed_error_percent);
    std::snprintf(buf, sizeof buf, "%-14s %-14s %10.2f %10.2f %8.2f %8s %9.4f%s\n", row.label.c_str(),
                  row.group.c_str(), row.experiment_mm, row.simulation_mm, row.error_percent, listed, row.accuracy,
                  row.flagged ? "  mismatch" : "");
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "n = %d  mean accuracy = %.4f  %.0f%% CI = (%.3f, %.3f)  basis = %s\n", r.n,
                r.mean_accuracy, 100.0 * r.level, r.ci.low, r.ci.high, to_string(r.basis).c_str());
  out += buf;
  return out;
}

}  // namespace morphsim
