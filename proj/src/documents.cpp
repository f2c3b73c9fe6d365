#include "morphsim/documents.hpp"

#include "json.hpp"
#include "morphsim/error.hpp"
#include "text_util.hpp"

namespace morphsim {

namespace {

using Json = nlohmann::ordered_json;

Json curve_arrays(const DmaCurve& c) {
  Json j;
  j["strain"] = c.strains();
  j["stress_mpa"] = c.stresses();
  return j;
}

DmaCurve curve_from_arrays(const Json& j, CurveKind kind) {
  const auto e = j.at("strain").get<std::vector<double>>();
  const auto s = j.at("stress_mpa").get<std::vector<double>>();
  if (e.size() != s.size()) fail(ErrorCode::InvalidDocument, "strain[] and stress_mpa[] differ in length");
  DmaCurve c;
  c.kind = kind;
  for (std::size_t i = 0; i < e.size(); ++i) c.points.push_back({e[i], s[i]});
  if (j.contains("temperature_c")) c.temperature_c = j.at("temperature_c").get<double>();
  if (j.contains("sample_id")) c.sample_id = j.at("sample_id").get<std::string>();
  return c;
}

Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const Json& j, const std::string& what) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) fail(ErrorCode::InvalidDocument, what + " must have three components");
  return {v[0], v[1], v[2]};
}

void check_header(const Json& j, const std::string& kind, int version) {
  if (!j.is_object()) fail(ErrorCode::InvalidDocument, "document is not a JSON object");
  if (!j.contains("kind") || j.at("kind") != kind) fail(ErrorCode::InvalidDocument, "document kind is not " + kind);
  const int v = j.at("format_version").get<int>();
  if (v != version) fail(ErrorCode::UnsupportedVersion, kind + " format_version " + std::to_string(v));
}

}  // namespace

std::string material_card_to_json(const MaterialCard& card) {
  Json j;
  j["format_version"] = kMaterialCardFormatVersion;
  j["kind"] = "material_card";
  j["name"] = card.name;
  j["alpha_t"] = card.alpha_t;
  j["poisson"] = card.poisson;
  j["density_kg_m3"] = card.density;
  j["viscoelastic_enabled"] = card.viscoelastic_enabled;

  Json loading = curve_arrays(card.marlow.loading());
  loading["interpolation"] = to_string(card.marlow.interpolation());
  loading["temperature_c"] = card.marlow.loading().temperature_c;
  j["loading"] = loading;

  Json members = Json::array();
  for (const auto& m : card.unloading.members) {
    Json o;
    o["sigma0_mpa"] = m.sigma0;
    o["anchor_strain"] = m.anchor_strain;
    const Json arrays = curve_arrays(m.curve);
    o["strain"] = arrays["strain"];
    o["stress_mpa"] = arrays["stress_mpa"];
    members.push_back(o);
  }
  j["unloading"] = {{"mode", to_string(card.unloading.mode)}, {"members", members}};

  if (card.damage) {
    Json d{{"r", card.damage->r}, {"m_mpa", card.damage->m}, {"beta", card.damage->beta}};
    if (card.damage_rms_mpa) d["rms_mpa"] = *card.damage_rms_mpa;
    j["damage"] = d;
  } else {
    j["damage"] = nullptr;
  }

  if (card.plasticity) {
    Json rows = Json::array();
    for (const auto& r : card.plasticity->rows)
      rows.push_back({{"yield_stress_mpa", r.yield_stress}, {"plastic_strain", r.plastic_strain}});
    j["plasticity"] = {{"rows", rows}};
  } else {
    j["plasticity"] = nullptr;
  }

  if (card.prony) {
    Json terms = Json::array();
    for (const auto& t : card.prony->terms) terms.push_back({{"e_mpa", t.modulus}, {"tau_s", t.tau}});
    j["prony"] = {{"e_infinity_mpa", card.prony->e_infinity},
                  {"rms_storage", card.prony->rms_storage},
                  {"rms_loss", card.prony->rms_loss},
                  {"terms", terms}};
  } else {
    j["prony"] = nullptr;
  }
  return j.dump(2) + "\n";
}

MaterialCard material_card_from_json(const std::string& text) {
  MaterialCard card;
  try {
    const auto j = Json::parse(text);
    check_header(j, "material_card", kMaterialCardFormatVersion);
    card.name = j.at("name").get<std::string>();
    if (card.name.empty()) fail(ErrorCode::InvalidDocument, "material card has an empty name");
    card.alpha_t = j.at("alpha_t").get<double>();
    card.poisson = j.at("poisson").get<double>();
    card.density = j.at("density_kg_m3").get<double>();
    card.viscoelastic_enabled = j.at("viscoelastic_enabled").get<bool>();

    const auto& loading = j.at("loading");
    card.marlow = MarlowCurve(curve_from_arrays(loading, CurveKind::loading),
                              interpolation_from_string(loading.at("interpolation").get<std::string>()));

    const auto& unloading = j.at("unloading");
    card.unloading.mode = unloading_mode_from_string(unloading.at("mode").get<std::string>());
    for (const auto& m : unloading.at("members")) {
      UnloadingMember member;
      member.sigma0 = m.at("sigma0_mpa").get<double>();
      member.anchor_strain = m.at("anchor_strain").get<double>();
      member.curve = curve_from_arrays(m, CurveKind::unloading);
      card.unloading.members.push_back(std::move(member));
    }

    if (const auto& d = j.at("damage"); !d.is_null()) {
      card.damage = DamageParams{d.at("r").get<double>(), d.at("m_mpa").get<double>(), d.at("beta").get<double>()};
      if (d.contains("rms_mpa")) card.damage_rms_mpa = d.at("rms_mpa").get<double>();
    }
    if (const auto& p = j.at("plasticity"); !p.is_null()) {
      PlasticityTable table;
      for (const auto& r : p.at("rows"))
        table.rows.push_back({r.at("yield_stress_mpa").get<double>(), r.at("plastic_strain").get<double>()});
      card.plasticity = table;
    }
    if (const auto& p = j.at("prony"); !p.is_null()) {
      PronySeries s;
      s.e_infinity = p.at("e_infinity_mpa").get<double>();
      s.rms_storage = p.value("rms_storage", 0.0);
      s.rms_loss = p.value("rms_loss", 0.0);
      for (const auto& t : p.at("terms")) s.terms.push_back({t.at("e_mpa").get<double>(), t.at("tau_s").get<double>()});
      card.prony = s;
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidDocument, std::string("malformed material card: ") + e.what());
  }
  try {
    card.validate();
  } catch (const Error& e) {
    fail(ErrorCode::InvalidDocument, "material card '" + card.name + "': " + e.what());
  }
  return card;
}

MaterialCard load_material_card(const std::filesystem::path& path) {
  return material_card_from_json(detail::read_file(path));
}

void save_material_card(const MaterialCard& card, const std::filesystem::path& path) {
  detail::write_file(path, material_card_to_json(card));
}

std::string material_file_name(const std::string& material) { return material + ".matcard.json"; }

std::string design_to_json(const GridDesign& d, const std::map<std::string, std::string>& material_files) {
  Json j;
  j["format_version"] = d.format_version;
  j["kind"] = "grid_design";
  j["name"] = d.name;
  j["trigger_temperature_c"] = d.trigger_temperature_c;
  j["gravity_m_s2"] = vec_json(d.gravity);
  j["normal"] = vec_json(d.normal);
  Json mats = Json::object();
  for (const auto& name : d.material_names()) {
    const auto it = material_files.find(name);
    mats[name] = it != material_files.end() ? it->second : material_file_name(name);
  }
  j["materials"] = mats;

  Json nodes = Json::array();
  for (const auto& n : d.nodes) nodes.push_back({{"id", n.id}, {"position", vec_json(n.position)}, {"fixed", n.fixed}});
  j["nodes"] = nodes;

  Json members = Json::array();
  for (const auto& m : d.members) {
    Json o{{"id", m.id}, {"kind", to_string(m.kind)}, {"nodes", {m.node_a, m.node_b}}};
    if (m.kind == MemberKind::bending_unit) {
      const auto& u = m.unit;
      o["unit"] = {{"length_mm", u.length},
                   {"width_mm", u.width},
                   {"total_thickness_mm", u.total_thickness},
                   {"actuator_thickness_mm", u.actuator_thickness},
                   {"actuator_ratio", u.actuator_ratio},
                   {"actuator_material", u.actuator_material},
                   {"constraint_material", u.constraint_material},
                   {"sigma0_mpa", u.sigma0},
                   {"orientation", vec_json(u.orientation)}};
    } else {
      o["joint"] = {{"width_mm", m.joint.width}, {"thickness_mm", m.joint.thickness}, {"material", m.joint.material}};
    }
    members.push_back(o);
  }
  j["members"] = members;
  return j.dump(2) + "\n";
}

DesignDocument design_from_json(const std::string& text) {
  DesignDocument doc;
  auto& d = doc.design;
  try {
    const auto j = Json::parse(text);
    if (!j.is_object()) fail(ErrorCode::InvalidDocument, "document is not a JSON object");
    if (!j.contains("kind") || j.at("kind") != "grid_design")
      fail(ErrorCode::InvalidDocument, "document kind is not grid_design");
    d.format_version = j.at("format_version").get<int>();
    d.name = j.at("name").get<std::string>();
    d.trigger_temperature_c = j.value("trigger_temperature_c", 80.0);
    if (j.contains("gravity_m_s2")) d.gravity = vec_from(j.at("gravity_m_s2"), "gravity_m_s2");
    if (j.contains("normal")) d.normal = vec_from(j.at("normal"), "normal");
    if (j.contains("materials"))
      for (const auto& [name, file] : j.at("materials").items()) doc.material_files[name] = file.get<std::string>();

    for (const auto& n : j.at("nodes"))
      d.nodes.push_back({n.at("id").get<std::string>(), vec_from(n.at("position"), "node position"),
                         n.value("fixed", false)});

    for (const auto& m : j.at("members")) {
      DesignMember member;
      member.id = m.at("id").get<std::string>();
      member.kind = member_kind_from_string(m.value("kind", std::string("bending_unit")));
      const auto ends = m.at("nodes").get<std::vector<std::string>>();
      if (ends.size() != 2) fail(ErrorCode::InvalidDocument, "member '" + member.id + "' needs two nodes");
      member.node_a = ends[0];
      member.node_b = ends[1];
      if (member.kind == MemberKind::bending_unit) {
        const auto& u = m.at("unit");
        BendingUnitSpec s;
        s.length = u.value("length_mm", s.length);
        s.width = u.value("width_mm", s.width);
        s.total_thickness = u.value("total_thickness_mm", s.total_thickness);
        s.actuator_thickness = u.value("actuator_thickness_mm", s.actuator_thickness);
        s.actuator_ratio = u.value("actuator_ratio", s.actuator_ratio);
        s.actuator_material = u.value("actuator_material", s.actuator_material);
        s.constraint_material = u.value("constraint_material", s.constraint_material);
        s.sigma0 = u.value("sigma0_mpa", s.sigma0);
        if (u.contains("orientation")) s.orientation = vec_from(u.at("orientation"), "orientation");
        member.unit = s;
      } else {
        const auto& jt = m.at("joint");
        member.joint.width = jt.value("width_mm", member.joint.width);
        member.joint.thickness = jt.value("thickness_mm", member.joint.thickness);
        member.joint.material = jt.value("material", member.joint.material);
      }
      d.members.push_back(std::move(member));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidDocument, std::string("malformed design: ") + e.what());
  }
  d.validate();
  for (const auto& name : d.material_names())
    if (!doc.material_files.count(name)) doc.material_files[name] = material_file_name(name);
  return doc;
}

DesignDocument load_design(const std::filesystem::path& path) { return design_from_json(detail::read_file(path)); }

void save_design(const GridDesign& design, const std::filesystem::path& path,
                 const std::map<std::string, std::string>& material_files) {
  detail::write_file(path, design_to_json(design, material_files));
}

MaterialSet load_design_materials(const DesignDocument& doc, const std::filesystem::path& base_dir) {
  MaterialSet cards;
  for (const auto& name : doc.design.material_names()) {
    const auto it = doc.material_files.find(name);
    const auto path = base_dir / (it != doc.material_files.end() ? it->second : material_file_name(name));
    if (!std::filesystem::exists(path))
      fail(ErrorCode::UnresolvedReference, "material '" + name + "' file '" + path.string() + "' not found");
    auto card = load_material_card(path);
    if (card.name != name)
      fail(ErrorCode::UnresolvedReference, "file '" + path.string() + "' holds material '" + card.name + "'");
    cards[name] = std::move(card);
  }
  doc.design.validate(cards);
  return cards;
}

}  // namespace morphsim
