#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sce/enhance.hpp"
#include "sce/excitation.hpp"
#include "sce/ga.hpp"

namespace sce {

using json = nlohmann::json;

json to_json(const SceParams& p);
// Accepts {b, xi, m, s}. With on_grid set, every value must lie on `grid`.
SceParams params_from_json(const json& j, const ga::ParamGrid* on_grid = nullptr);
SceParams read_params_file(const std::filesystem::path& path,
                           const ga::ParamGrid* on_grid = nullptr);

// [{freq_hz, hl_db}, ...]
Audiogram audiogram_from_json(const json& j);
Audiogram read_audiogram_file(const std::filesystem::path& path);

json to_json(const ga::Genome& g, const ga::ParamGrid& grid);
json to_json(const ga::GaConfig& cfg);
ga::GaConfig ga_config_from_json(const json& j);
// [{generation, genomes, scores, elite}, ...]
json history_json(const ga::GaResult& result, const ga::ParamGrid& grid);

struct StimulusManifest {
  std::string target_path;
  std::string masker_path;
  double smr_db = 0.0;
  double lead_ms = 500.0;
};
std::vector<StimulusManifest> read_stimulus_manifest(const std::filesystem::path& path);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace sce
