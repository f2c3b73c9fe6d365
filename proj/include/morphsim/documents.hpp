#pragma once

// JSON documents for material cards (.matcard.json) and grid designs (.grid.json).

#include <filesystem>
#include <map>
#include <string>

#include "morphsim/grid_model.hpp"
#include "morphsim/material_card.hpp"

namespace morphsim {

inline constexpr int kMaterialCardFormatVersion = 1;

std::string material_card_to_json(const MaterialCard& card);
/// Parses and validates a card. Malformed documents raise InvalidDocument.
MaterialCard material_card_from_json(const std::string& text);

MaterialCard load_material_card(const std::filesystem::path& path);
void save_material_card(const MaterialCard& card, const std::filesystem::path& path);

/// Default file name of a material card: "<name>.matcard.json".
std::string material_file_name(const std::string& material);

struct DesignDocument {
  GridDesign design;
  /// Material name to card file, relative to the design file.
  std::map<std::string, std::string> material_files;
};

/// Material files default to material_file_name() for every material the design names.
std::string design_to_json(const GridDesign& design, const std::map<std::string, std::string>& material_files = {});
/// Parses and structurally validates a design. Material references are checked by load_design_materials.
DesignDocument design_from_json(const std::string& text);

DesignDocument load_design(const std::filesystem::path& path);
void save_design(const GridDesign& design, const std::filesystem::path& path,
                 const std::map<std::string, std::string>& material_files = {});

/// Loads the cards a design references, resolving file names against `base_dir`.
/// Missing files raise UnresolvedReference.
MaterialSet load_design_materials(const DesignDocument& doc, const std::filesystem::path& base_dir);

}  // namespace morphsim
