#include "morphsim/stress_shooter.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "morphsim/error.hpp"
#include "morphsim/unit_solver.hpp"
#include "text_util.hpp"

namespace morphsim {

void TriggeringObservation::validate() const {
  unit.validate();
  if (!(measured_end_distance > 0.0 && measured_end_distance <= 1.1 * unit.length))
    fail(ErrorCode::InvalidArgument, "measured end distance must lie in (0, 1.1 x unit length]");
}

std::string to_string(Coupling c) { return c == Coupling::reselect ? "reselect" : "frozen"; }

Coupling coupling_from_string(const std::string& s) {
  if (s == "reselect") return Coupling::reselect;
  if (s == "frozen") return Coupling::frozen;
  fail(ErrorCode::InvalidArgument, "unknown coupling '" + s + "'");
}

void ShooterConfig::validate() const {
  if (!(tol_mm > 0.0)) fail(ErrorCode::InvalidArgument, "tol_mm must be positive");
  if (max_iter < 1) fail(ErrorCode::InvalidArgument, "max_iter must be at least 1");
  if (!(sigma_tol > 0.0) || !(fd_step > 0.0)) fail(ErrorCode::InvalidArgument, "sigma_tol and fd_step must be positive");
  if (segments < 1) fail(ErrorCode::InvalidArgument, "segments must be at least 1");
  if (high_fidelity && coupling == Coupling::frozen)
    fail(ErrorCode::InvalidArgument, "frozen coupling is only available with the closed-form unit model");
  solver.validate();
}

namespace {

class ForwardModel {
public:
  ForwardModel(const MaterialCard& card, const ShooterConfig& config, const MaterialSet& others)
      : card_(card), config_(config), cards_(others) {
    cards_[card.name] = card;
  }

  void freeze_at(double sigma0) { frozen_ = select_unloading_curve(card_, sigma0); }

  double distance(const TriggeringObservation& obs, double sigma0) const {
    BendingUnitSpec spec = obs.unit;
    spec.sigma0 = sigma0;
    spec.actuator_material = card_.name;
    if (!config_.high_fidelity) {
      std::optional<ReleaseResponse> release;
      if (frozen_) release = release_response_frozen(*frozen_, sigma0);
      return end_distance(unit_shape(spec, cards_, obs.temperature_c, release));
    }
    GridDesign d;
    d.name = "shooting_trial";
    d.trigger_temperature_c = obs.temperature_c;
    d.nodes = {{"a", Vec3::Zero(), true}, {"b", Vec3(spec.length, 0.0, 0.0), false}};
    DesignMember m;
    m.id = "unit";
    m.node_a = "a";
    m.node_b = "b";
    m.unit = spec;
    d.members = {m};
    const auto r = sequential_simulate(d, cards_, config_.solver, {config_.segments});
    return r.stage_b.member_end_distance("unit");
  }

private:
  const MaterialCard& card_;
  const ShooterConfig& config_;
  MaterialSet cards_;
  std::optional<DmaCurve> frozen_;
};

}  // namespace

double simulate_end_distance(const TriggeringObservation& obs, double sigma0, const MaterialCard& card,
                             const ShooterConfig& config) {
  return ForwardModel(card, config, {}).distance(obs, sigma0);
}

double mismatch(const TriggeringObservation& obs, double sigma0, const MaterialCard& card,
                const ShooterConfig& config) {
  return simulate_end_distance(obs, sigma0, card, config) - obs.measured_end_distance;
}

ShooterResult shoot_residual_stress(const std::vector<TriggeringObservation>& obs, const MaterialCard& card,
                                    const ShooterConfig& config, const MaterialSet& others) {
  config.validate();
  if (obs.empty()) fail(ErrorCode::InvalidArgument, "no observations");
  for (const auto& o : obs) o.validate();
  if (card.unloading.empty()) fail(ErrorCode::InvalidArgument, "card '" + card.name + "' has no unloading family");

  const double lo = card.unloading.min_sigma0();
  const double hi = card.unloading.max_sigma0();
  ForwardModel model(card, config, others);
  const double start = std::clamp(config.initial_sigma0.value_or(0.5 * (lo + hi)), lo, hi);
  if (config.coupling == Coupling::frozen) model.freeze_at(start);

  ShooterResult result;
  const auto distances = [&](double s) {
    std::vector<double> d;
    for (const auto& o : obs) d.push_back(model.distance(o, s));
    return d;
  };
  // One observation: the mismatch itself. Several: the slope of the summed squared mismatch.
  const auto evaluate = [&](double s) {
    ShooterTrial t;
    t.sigma0 = s;
    t.distances = distances(s);
    if (obs.size() == 1) {
      t.objective = t.distances[0] - obs[0].measured_end_distance;
    } else {
      const double a = std::max(lo, s - config.fd_step);
      const double b = std::min(hi, s + config.fd_step);
      const auto da = distances(a);
      const auto db = distances(b);
      for (std::size_t i = 0; i < obs.size(); ++i)
        t.objective += (t.distances[i] - obs[i].measured_end_distance) * (db[i] - da[i]) / (b - a);
    }
    result.history.push_back(t);
    ++result.iterations;
    return t.objective;
  };

  double a = lo, b = hi;
  double fa = evaluate(a);
  double fb = evaluate(b);
  double x = a, fx = fa;
  if (fa != 0.0 && fb != 0.0) {
    if ((fa > 0.0) == (fb > 0.0)) {
      std::string msg = "mismatch keeps one sign over the calibrated span [" + detail::format_double(lo) + ", " +
                        detail::format_double(hi) + "] MPa";
      fail(ErrorCode::NoBracket, msg);
    }
    // secant iterates (x_prev, x) inside the bracket [a, b]
    double x_prev = b, f_prev = fb;
    x = start;
    if (!(x > a && x < b)) x = 0.5 * (a + b);
    fx = evaluate(x);
    int slow = 0;
    bool done = fx == 0.0;
    while (!done && result.iterations < config.max_iter) {
      if ((fx > 0.0) == (fa > 0.0)) {
        a = x;
        fa = fx;
      } else {
        b = x;
        fb = fx;
      }
      double next = x - fx * (x - x_prev) / (fx - f_prev);
      if (!std::isfinite(next) || next <= a || next >= b || slow >= 2) {
        next = 0.5 * (a + b);
        slow = 0;
      }
      const double step = std::abs(next - x);
      x_prev = x;
      f_prev = fx;
      x = next;
      fx = evaluate(x);
      slow = std::abs(fx) > 0.5 * std::abs(f_prev) ? slow + 1 : 0;
      done = fx == 0.0 || step < config.sigma_tol || b - a < config.sigma_tol;
    }
    result.converged = done;
  } else {
    if (fb == 0.0) x = b;
    result.converged = true;
  }

  result.sigma0 = x;
  const ShooterTrial* at = nullptr;
  for (const auto& t : result.history)
    if (t.sigma0 == x) at = &t;
  for (std::size_t i = 0; i < obs.size(); ++i)
    result.residual = std::max(result.residual, std::abs(at->distances[i] - obs[i].measured_end_distance));
  result.converged = result.converged && result.residual < config.tol_mm;
  return result;
}

std::vector<TriggeringObservation> parse_observations_text(const std::string& text, const BendingUnitSpec& base) {
  const auto rows = detail::parse_numeric_table(text, {"actuator_ratio", "distance_mm", "temp_c"});
  std::vector<TriggeringObservation> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    TriggeringObservation o;
    o.unit = base;
    o.unit.actuator_ratio = rows[i][0];
    o.measured_end_distance = rows[i][1];
    o.temperature_c = rows[i][2];
    try {
      o.validate();
    } catch (const Error& e) {
      fail(ErrorCode::MalformedRow, "row " + std::to_string(i) + ": " + e.what());
    }
    out.push_back(o);
  }
  return out;
}

std::vector<TriggeringObservation> parse_observations_csv(const std::filesystem::path& path,
                                                          const BendingUnitSpec& base) {
  return parse_observations_text(detail::read_file(path), base);
}

std::string shooter_result_to_json(const ShooterResult& r, const ShooterConfig& config, const std::string& material) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "shoot_result";
  j["material"] = material;
  j["coupling"] = to_string(config.coupling);
  j["high_fidelity"] = config.high_fidelity;
  j["tol_mm"] = config.tol_mm;
  j["sigma0_mpa"] = r.sigma0;
  j["residual_mm"] = r.residual;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  auto hist = nlohmann::ordered_json::array();
  for (const auto& t : r.history)
    hist.push_back({{"sigma0_mpa", t.sigma0}, {"distances_mm", t.distances}, {"objective", t.objective}});
  j["history"] = hist;
  return j.dump(2) + "\n";
}

}  // namespace morphsim
