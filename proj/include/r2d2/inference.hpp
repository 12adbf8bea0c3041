#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "r2d2/image.hpp"
#include "r2d2/models.hpp"
#include "r2d2/seabed_oracle.hpp"
#include "r2d2/tiling.hpp"

namespace r2d2 {

struct MissionRequest {
  SemanticMap semantic_map;  // full mission size
  TileGridSpec spec;
  std::uint64_t master_seed = 0;
  /// Ablation: every tile sees zero snippets with both validity flags off.
  bool zero_conditions = false;
};

struct Mission {
  Image image;  // intensities in [0, 1]
  SemanticMap semantic_map;
  TileGridSpec spec;
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> tile_seeds;  // raster order
  std::vector<double> tile_ms;            // raster order
};

/// Noise seed of tile (row, col); shared by every execution order.
std::uint64_t tile_seed(std::uint64_t master_seed, int row, int col);

/// Hooks into the recursion. Calls may come from worker threads in the
/// wavefront path, but never concurrently for the same tile or row.
class MissionObserver {
 public:
  virtual ~MissionObserver() = default;
  /// Called just before tile (row, col) is generated from `conditions`.
  virtual void on_conditions(int /*row*/, int /*col*/, const ConditionSet& /*conditions*/) {}
  /// Called after tile (row, col) has been generated.
  virtual void on_tile(int /*row*/, int /*col*/, const Image& /*tile*/) {}
  /// Called once every tile of `row` exists; `strip` is T x image_width.
  virtual void on_row(int /*row*/, const Image& /*strip*/) {}
};

/// Throws ConfigError unless the request fits the model.
void check_compatible(const ModelParams<float>& params, const MissionRequest& request);

/// Raster-order recursion: left to right, then top to bottom.
Mission generate_mission(const ModelParams<float>& params, const MissionRequest& request,
                         MissionObserver* observer = nullptr);

using WaveSchedule = std::vector<std::vector<std::pair<int, int>>>;

/// Anti-diagonals r + c = k in increasing k.
WaveSchedule anti_diagonal_schedule(int rows, int cols);

/// Generates each wave concurrently on `workers` threads with a barrier
/// between waves. A custom schedule may be supplied; a tile whose upper or
/// left neighbour is not yet published raises DependencyViolation.
Mission generate_mission_wavefront(const ModelParams<float>& params, const MissionRequest& request,
                                   int workers, MissionObserver* observer = nullptr,
                                   const WaveSchedule* schedule = nullptr);

/// Two-sided line: port mirrored about the nadir column, then starboard.
Image two_sided_image(const Mission& port, const Mission& starboard);

/// Writes <stem>.pgm and <stem>.json (seeds, spec, hashes, timings).
void write_mission(const Mission& mission, const std::filesystem::path& stem,
                   const std::string& checkpoint_hash, const std::string& config_hash);

// ---------------------------------------------------------------- benchmark

struct AcquisitionPreset {
  std::string name;
  int across_track_pixels = 512;
  int channels = 2;
  double lines_per_second = 15.0;  // ping rate of the real sensor
};

struct BenchmarkConfig {
  std::vector<int> grid_sizes = {4, 6, 8, 10};  // square grids, one timed run each
  int warmup_tiles = 4;
  std::vector<AcquisitionPreset> presets = {{"marinesonic", 512, 2, 15.0},
                                            {"edgetech", 4620, 2, 10.0}};
  std::uint64_t seed = 1;

  void validate() const;
};

struct BenchmarkRun {
  int tiles = 0;
  double seconds = 0.0;
};

struct PresetReport {
  std::string name;
  int across_track_pixels = 0;
  int channels = 0;
  double acquisition_lines_per_second = 0.0;
  double generated_lines_per_second = 0.0;
  double ratio = 0.0;  // generated / acquired
};

struct BenchmarkReport {
  std::string hardware;
  int tile_size = 0;
  std::vector<BenchmarkRun> runs;
  double tiles_per_second = 0.0;
  double pixels_per_second = 0.0;
  double r_squared = 0.0;  // linear fit of wall time against tile count
  double slope_seconds_per_tile = 0.0;
  double intercept_seconds = 0.0;
  std::vector<PresetReport> presets;
};

/// Least-squares line y = a + b x and its coefficient of determination.
struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r_squared = 0.0;
};
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// Short description of the CPU and thread count.
std::string hardware_descriptor();

/// Throughput of sequential generation over oracle-sampled semantic maps.
BenchmarkReport benchmark_throughput(const ModelParams<float>& params, const TerrainParams& terrain,
                                     const BenchmarkConfig& cfg);

/// Report for a single preset; generated lines/s = tiles/s * T / (ceil(W / T) * channels).
PresetReport preset_report(const AcquisitionPreset& preset, double tiles_per_second, int tile_size);

}  // namespace r2d2
