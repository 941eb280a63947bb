#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sce/error.hpp"
#include "sce/json_io.hpp"

using namespace sce;

namespace {

std::filesystem::path scratch_dir() {
  auto d = std::filesystem::temp_directory_path() / "sce_json_test";
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("parameter files") {
  const SceParams p{1.5, 0.8, 6, 2.5};
  CHECK(params_from_json(to_json(p)) == p);

  const auto grid = ga::ParamGrid::full();
  CHECK(params_from_json(to_json(p), &grid) == p);
  // free-range values are fine for the DSP but rejected against the grid
  const json off{{"b", 1.2}, {"xi", 0.95}, {"m", 7}, {"s", 0.2}};
  CHECK(params_from_json(off).b == 1.2);
  CHECK_THROWS_AS(params_from_json(off, &grid), ValidationError);

  CHECK_THROWS_AS(params_from_json(json{{"b", 1.0}}), ValidationError);
  CHECK_THROWS_AS(params_from_json(json{{"b", 1.0}, {"xi", 0.9}, {"m", 5.5}, {"s", 1}}),
                  ValidationError);
  CHECK_THROWS_AS(params_from_json(json::array()), ValidationError);

  const auto path = scratch_dir() / "params.json";
  write_json_file(path, to_json(p));
  CHECK(read_params_file(path) == p);
  CHECK_THROWS_AS(read_params_file(scratch_dir() / "missing.json"), IoError);
  std::ofstream(scratch_dir() / "broken.json") << "{ not json";
  CHECK_THROWS_AS(read_params_file(scratch_dir() / "broken.json"), ValidationError);
}

TEST_CASE("audiogram files") {
  const auto a = audiogram_from_json(json::parse(
      R"([{"freq_hz": 500, "hl_db": 40}, {"freq_hz": 2000, "hl_db": 60}])"));
  CHECK(a.points.size() == 2);
  CHECK(a.hearing_level_at(1000.0) == doctest::Approx(50.0));
  CHECK_THROWS_AS(audiogram_from_json(json::array()), ValidationError);
  CHECK_THROWS_AS(audiogram_from_json(json::parse(R"([{"freq_hz": 500}])")), ValidationError);
}

TEST_CASE("GA config and history") {
  ga::GaConfig cfg;
  cfg.seed = 99;
  cfg.population_size = 10;
  const auto back = ga_config_from_json(to_json(cfg));
  CHECK(back.seed == 99);
  CHECK(back.population_size == 10);
  CHECK(ga_config_from_json(json::object()).population_size == 8);
  CHECK_THROWS_AS(ga_config_from_json(json{{"population_size", 2}}), ValidationError);

  const auto grid = ga::ParamGrid::full();
  const auto r = ga::run_ga([](const ga::Genome& g) { return double(g.idx[ga::kS]); }, cfg, grid);
  const auto h = history_json(r, grid);
  REQUIRE(h.size() == r.history.size());
  CHECK(h[0]["genomes"].size() == 10);
  CHECK(h[0].contains("elite"));
  CHECK(h[0]["elite"].contains("s"));
  CHECK(params_from_json(to_json(r.best, grid), &grid) == r.best_params);
}

TEST_CASE("stimulus manifests resolve relative paths") {
  const auto dir = scratch_dir();
  const auto path = dir / "manifest.json";
  write_json_file(path, json::parse(R"([
    {"target_path": "t.wav", "masker_path": "/abs/m.wav", "smr_db": -3},
    {"target_path": "u.wav", "masker_path": "m.wav"}
  ])"));
  const auto m = read_stimulus_manifest(path);
  REQUIRE(m.size() == 2);
  CHECK(m[0].target_path == (dir / "t.wav").string());
  CHECK(m[0].masker_path == "/abs/m.wav");
  CHECK(m[0].smr_db == -3.0);
  CHECK(m[1].lead_ms == 500.0);
}

TEST_CASE("sha256") {
  const std::string abc = "abc";
  CHECK(sha256_hex({reinterpret_cast<const unsigned char*>(abc.data()), abc.size()}) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex({}) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const auto path = scratch_dir() / "abc.txt";
  std::ofstream(path) << abc;
  CHECK(sha256_file(path) == sha256_hex({reinterpret_cast<const unsigned char*>(abc.data()), abc.size()}));
}
