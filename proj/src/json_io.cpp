#include "sce/json_io.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include "sce/error.hpp"

namespace sce {

json to_json(const SceParams& p) {
  return json{{"b", p.b}, {"xi", p.xi}, {"m", p.m}, {"s", p.s}};
}

namespace {

double number_field(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw ValidationError(std::string("missing numeric field '") + key + "'");
  }
  return j.at(key).get<double>();
}

bool on_axis(double v, const std::vector<double>& axis) {
  for (double a : axis) {
    if (std::abs(a - v) < 1e-9) return true;
  }
  return false;
}

}  // namespace

SceParams params_from_json(const json& j, const ga::ParamGrid* on_grid) {
  if (!j.is_object()) throw ValidationError("parameter file must be a JSON object");
  SceParams p;
  p.b = number_field(j, "b");
  p.xi = number_field(j, "xi");
  const double m = number_field(j, "m");
  if (m != std::floor(m)) throw ValidationError("m must be an integer");
  p.m = static_cast<int>(m);
  p.s = number_field(j, "s");
  p.validate();
  if (on_grid != nullptr) {
    const std::array<double, ga::kGenes> v{p.b, p.xi, static_cast<double>(p.m), p.s};
    for (std::size_t i = 0; i < ga::kGenes; ++i) {
      if (!on_axis(v[i], on_grid->values(i))) {
        throw ValidationError("parameters do not lie on the GA grid");
      }
    }
  }
  return p;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

SceParams read_params_file(const std::filesystem::path& path, const ga::ParamGrid* on_grid) {
  return params_from_json(read_json_file(path), on_grid);
}

Audiogram audiogram_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw ValidationError("empty audiogram");
  Audiogram a;
  for (const auto& p : j) {
    a.points.emplace_back(number_field(p, "freq_hz"), number_field(p, "hl_db"));
  }
  a.validate();
  return a;
}

Audiogram read_audiogram_file(const std::filesystem::path& path) {
  return audiogram_from_json(read_json_file(path));
}

json to_json(const ga::Genome& g, const ga::ParamGrid& grid) {
  json j = to_json(grid.params(g));
  j["index"] = g.idx;
  return j;
}

json to_json(const ga::GaConfig& cfg) {
  return json{{"population_size", cfg.population_size},
              {"elite_count", cfg.elite_count},
              {"mutation_rate", cfg.mutation_rate},
              {"max_generations", cfg.max_generations},
              {"convergence_patience", cfg.convergence_patience},
              {"seed", cfg.seed},
              {"dedup", cfg.dedup}};
}

ga::GaConfig ga_config_from_json(const json& j) {
  ga::GaConfig cfg;
  cfg.population_size = j.value("population_size", cfg.population_size);
  cfg.elite_count = j.value("elite_count", cfg.elite_count);
  cfg.mutation_rate = j.value("mutation_rate", cfg.mutation_rate);
  cfg.max_generations = j.value("max_generations", cfg.max_generations);
  cfg.convergence_patience = j.value("convergence_patience", cfg.convergence_patience);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.dedup = j.value("dedup", cfg.dedup);
  cfg.validate();
  return cfg;
}

json history_json(const ga::GaResult& result, const ga::ParamGrid& grid) {
  json gens = json::array();
  for (const auto& rec : result.history) {
    json genomes = json::array();
    for (const auto& g : rec.genomes) genomes.push_back(to_json(g, grid));
    gens.push_back({{"generation", rec.generation},
                    {"genomes", genomes},
                    {"scores", rec.scores},
                    {"elite", to_json(rec.elite, grid)},
                    {"elite_score", rec.elite_score}});
  }
  return gens;
}

std::vector<StimulusManifest> read_stimulus_manifest(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  const auto base = path.parent_path();
  auto one = [&](const json& e) {
    StimulusManifest m;
    if (!e.contains("target_path") || !e.contains("masker_path")) {
      throw ValidationError("manifest entry needs target_path and masker_path");
    }
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return (fp.is_relative() ? base / fp : fp).string();
    };
    m.target_path = resolve(e.at("target_path").get<std::string>());
    m.masker_path = resolve(e.at("masker_path").get<std::string>());
    m.smr_db = e.value("smr_db", 0.0);
    m.lead_ms = e.value("lead_ms", 500.0);
    return m;
  };
  std::vector<StimulusManifest> out;
  if (j.is_array()) {
    for (const auto& e : j) out.push_back(one(e));
  } else {
    out.push_back(one(j));
  }
  return out;
}

std::string sha256_hex(std::span<const unsigned char> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::kIo, "sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

}  // namespace sce
