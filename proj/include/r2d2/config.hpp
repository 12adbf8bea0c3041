#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "r2d2/evaluation.hpp"
#include "r2d2/inference.hpp"
#include "r2d2/models.hpp"
#include "r2d2/seabed_oracle.hpp"
#include "r2d2/tiling.hpp"
#include "r2d2/training.hpp"

namespace r2d2 {

struct DataConfig {
  std::uint64_t seed = 7;
  int n_pairs = 200;
  int workers = 1;
  bool operator==(const DataConfig&) const = default;
};

struct MissionDefaults {
  int grid_rows = 4;
  int grid_cols = 4;
  std::uint64_t seed = 1;
  int workers = 1;  // > 1 selects the wavefront path
  bool zero_conditions = false;
  bool operator==(const MissionDefaults&) const = default;
};

struct EvaluationConfig {
  int missions = 10;
  std::uint64_t seed = 11;
  bool atr = false;
  int sheet_tiles = 6;
  bool operator==(const EvaluationConfig&) const = default;
};

/// Everything a run needs, as one declarative document.
struct RunConfig {
  TerrainParams terrain = TerrainParams::defaults();
  TileGridSpec grid = TileGridSpec::make(64, 4, 4);
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  TrainingConfig training;
  DataConfig data;
  MissionDefaults mission;
  EvaluationConfig evaluation;
  BenchmarkConfig benchmark;
  AtrConfig atr;

  void validate() const;
  ModelLayout layout() const;
};

bool operator==(const AcquisitionPreset& a, const AcquisitionPreset& b);
bool operator==(const BenchmarkConfig& a, const BenchmarkConfig& b);
bool operator==(const RunConfig& a, const RunConfig& b);

nlohmann::json terrain_to_json(const TerrainParams& p);
TerrainParams terrain_from_json(const nlohmann::json& j);
nlohmann::json generator_to_json(const GeneratorConfig& g);
GeneratorConfig generator_from_json(const nlohmann::json& j);
nlohmann::json discriminator_to_json(const DiscriminatorConfig& d);
DiscriminatorConfig discriminator_from_json(const nlohmann::json& j);
nlohmann::json layout_to_json(const ModelLayout& l);
ModelLayout layout_from_json(const nlohmann::json& j);
nlohmann::json training_to_json(const TrainingConfig& t);
TrainingConfig training_from_json(const nlohmann::json& j);

/// Every field is written, so parse(serialize(c)) == c.
nlohmann::json run_config_to_json(const RunConfig& c);
/// Missing fields take their defaults; unknown keys raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& c, const std::filesystem::path& path);

/// SHA-256 of the canonical serialisation.
std::string config_hash(const RunConfig& c);

}  // namespace r2d2
