#include "r2d2/inference.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <thread>

#include "r2d2/errors.hpp"
#include "r2d2/hashing.hpp"
#include "r2d2/parallel.hpp"
#include "r2d2/raster_io.hpp"

namespace r2d2 {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::uint64_t tile_seed(std::uint64_t master_seed, int row, int col) {
  return derive_seed(master_seed, row, col);
}

void check_compatible(const ModelParams<float>& params, const MissionRequest& request) {
  const ModelLayout& L = params.layout;
  const TileGridSpec& s = request.spec;
  s.validate();
  if (s.tile_size != L.tile_size || s.snippet_width != L.snippet_width || s.channels != L.channels)
    throw ConfigError("model expects tile " + std::to_string(L.tile_size) + ", snippet " +
                      std::to_string(L.snippet_width) + ", channels " + std::to_string(L.channels) +
                      "; request has tile " + std::to_string(s.tile_size) + ", snippet " +
                      std::to_string(s.snippet_width) + ", channels " + std::to_string(s.channels));
  const SemanticMap& m = request.semantic_map;
  if (m.num_classes() != L.num_classes)
    throw ConfigError("semantic map has " + std::to_string(m.num_classes()) +
                      " classes, model expects " + std::to_string(L.num_classes));
  if (m.height != s.image_height() || m.width != s.image_width())
    throw InvalidInput("semantic map is " + std::to_string(m.height) + "x" +
                       std::to_string(m.width) + ", not a multiple of tile size " +
                       std::to_string(s.tile_size) + " matching the grid " +
                       std::to_string(s.grid_rows) + "x" + std::to_string(s.grid_cols));
  m.validate();
}

namespace {

ConditionSet zeroed_conditions(const TileGridSpec& spec, int col) {
  ConditionSet cs;
  cs.c1 = Image(spec.channels, spec.snippet_width, spec.tile_size);
  cs.c2 = Image(spec.channels, spec.tile_size, spec.snippet_width);
  cs.across_track = across_track_map(spec, col * spec.tile_size, spec.tile_size, spec.tile_size);
  return cs;
}

Image generate_tile(const ModelParams<float>& params, const MissionRequest& req,
                    std::span<const Image> tiles, int r, int c, MissionObserver* observer) {
  const TileGridSpec& spec = req.spec;
  const int t = spec.tile_size;
  const ConditionSet cond =
      req.zero_conditions ? zeroed_conditions(spec, c) : extract_conditions(tiles, r, c, spec);
  if (observer) observer->on_conditions(r, c, cond);
  const Image noise = sample_noise(tile_seed(req.master_seed, r, c), params.gen.noise_channels, t);
  Image tile =
      generator_forward(params, cond, crop_map(req.semantic_map, r * t, c * t, t, t), noise);
  std::transform(tile.data.begin(), tile.data.end(), tile.data.begin(), to_intensity);
  return tile;
}

Mission empty_mission(const MissionRequest& req) {
  Mission m;
  m.semantic_map = req.semantic_map;
  m.spec = req.spec;
  m.master_seed = req.master_seed;
  const int n = req.spec.tile_count();
  m.tile_seeds.resize(n);
  m.tile_ms.resize(n);
  for (int r = 0; r < req.spec.grid_rows; ++r)
    for (int c = 0; c < req.spec.grid_cols; ++c)
      m.tile_seeds[r * req.spec.grid_cols + c] = tile_seed(req.master_seed, r, c);
  return m;
}

void emit_row(MissionObserver* observer, std::span<const Image> tiles, const TileGridSpec& spec,
              int r) {
  if (!observer) return;
  TileGridSpec row_spec = spec;
  row_spec.grid_rows = 1;
  observer->on_row(
      r, stitch(tiles.subspan(static_cast<std::size_t>(r) * spec.grid_cols, spec.grid_cols),
                row_spec));
}

}  // namespace

Mission generate_mission(const ModelParams<float>& params, const MissionRequest& request,
                         MissionObserver* observer) {
  check_compatible(params, request);
  const TileGridSpec& spec = request.spec;
  Mission mission = empty_mission(request);
  std::vector<Image> tiles(spec.tile_count());
  for (int r = 0; r < spec.grid_rows; ++r) {
    for (int c = 0; c < spec.grid_cols; ++c) {
      const auto t0 = Clock::now();
      const std::size_t i = static_cast<std::size_t>(r) * spec.grid_cols + c;
      tiles[i] = generate_tile(params, request, tiles, r, c, observer);
      mission.tile_ms[i] = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      if (observer) observer->on_tile(r, c, tiles[i]);
    }
    emit_row(observer, tiles, spec, r);
  }
  mission.image = stitch(tiles, spec);
  return mission;
}

WaveSchedule anti_diagonal_schedule(int rows, int cols) {
  WaveSchedule waves(static_cast<std::size_t>(std::max(0, rows + cols - 1)));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) waves[r + c].emplace_back(r, c);
  return waves;
}

Mission generate_mission_wavefront(const ModelParams<float>& params, const MissionRequest& request,
                                   int workers, MissionObserver* observer,
                                   const WaveSchedule* schedule) {
  if (workers < 1) throw InvalidInput("wavefront generation needs at least one worker");
  check_compatible(params, request);
  const TileGridSpec& spec = request.spec;
  const WaveSchedule waves =
      schedule ? *schedule : anti_diagonal_schedule(spec.grid_rows, spec.grid_cols);
  Mission mission = empty_mission(request);
  std::vector<Image> tiles(spec.tile_count());
  std::vector<std::atomic<bool>> published(spec.tile_count());
  std::vector<std::atomic<bool>> claimed(spec.tile_count());
  auto index = [&](int r, int c) { return static_cast<std::size_t>(r) * spec.grid_cols + c; };
  auto require = [&](int r, int c, int dr, int dc) {
    if (dr < 0 || dc < 0) return;
    if (!published[index(dr, dc)].load(std::memory_order_acquire))
      throw DependencyViolation("tile (" + std::to_string(r) + "," + std::to_string(c) +
                                ") scheduled before its neighbour (" + std::to_string(dr) + "," +
                                std::to_string(dc) + ") was published");
  };

  for (const auto& wave : waves) {
    parallel_for(wave.size(), workers, [&](std::size_t k) {
      const auto [r, c] = wave[k];
      if (r < 0 || r >= spec.grid_rows || c < 0 || c >= spec.grid_cols)
        throw InvalidInput("schedule names tile outside the grid");
      if (claimed[index(r, c)].exchange(true))
        throw DependencyViolation("tile (" + std::to_string(r) + "," + std::to_string(c) +
                                  ") scheduled twice");
      require(r, c, r - 1, c);
      require(r, c, r, c - 1);
      const auto t0 = Clock::now();
      tiles[index(r, c)] = generate_tile(params, request, tiles, r, c, observer);
      mission.tile_ms[index(r, c)] =
          std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      published[index(r, c)].store(true, std::memory_order_release);
      if (observer) observer->on_tile(r, c, tiles[index(r, c)]);
      if (c == spec.grid_cols - 1) emit_row(observer, tiles, spec, r);
    });
  }
  for (int r = 0; r < spec.grid_rows; ++r)
    for (int c = 0; c < spec.grid_cols; ++c)
      if (!published[index(r, c)].load())
        throw DependencyViolation("tile (" + std::to_string(r) + "," + std::to_string(c) +
                                  ") was never scheduled");
  mission.image = stitch(tiles, spec);
  return mission;
}

Image two_sided_image(const Mission& port, const Mission& starboard) {
  const Image& p = port.image;
  const Image& s = starboard.image;
  if (!p.same_shape(s)) throw InvalidInput("port and starboard missions differ in shape");
  Image out(p.channels, p.height, 2 * p.width);
  for (int c = 0; c < p.channels; ++c)
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x) {
        out.at(c, y, x) = p.at(c, y, p.width - 1 - x);
        out.at(c, y, p.width + x) = s.at(c, y, x);
      }
  return out;
}

void write_mission(const Mission& mission, const fs::path& stem, const std::string& checkpoint_hash,
                   const std::string& config_hash) {
  const fs::path image_path = fs::path(stem.string() + ".pgm");
  const fs::path meta_path = fs::path(stem.string() + ".json");
  write_pgm(image_path, mission.image);
  const TileGridSpec& s = mission.spec;
  json j;
  j["image"] = image_path.filename().string();
  j["image_sha256"] = sha256_file(image_path);
  j["master_seed"] = mission.master_seed;
  j["spec"] = {{"tile_size", s.tile_size},      {"snippet_width", s.snippet_width},
               {"grid_rows", s.grid_rows},      {"grid_cols", s.grid_cols},
               {"channels", s.channels},        {"image_height", s.image_height()},
               {"image_width", s.image_width()}};
  j["class_names"] = mission.semantic_map.class_names;
  j["tile_seeds"] = mission.tile_seeds;
  j["tile_ms"] = mission.tile_ms;
  j["checkpoint_sha256"] = checkpoint_hash;
  j["config_sha256"] = config_hash;
  std::ofstream out(meta_path);
  if (!out) throw IoError("cannot write " + meta_path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------- benchmark

void BenchmarkConfig::validate() const {
  if (grid_sizes.size() < 2) throw ConfigError("benchmark needs at least two grid sizes");
  for (int n : grid_sizes)
    if (n * n < 10) throw ConfigError("benchmark grids need at least 10 tiles (side >= 4)");
  if (warmup_tiles < 0) throw ConfigError("benchmark.warmup_tiles must be >= 0");
  for (const auto& p : presets)
    if (p.across_track_pixels < 1 || p.channels < 1 || p.lines_per_second <= 0)
      throw ConfigError("benchmark preset '" + p.name + "' has non-positive fields");
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidInput("fit_line needs >= 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0) throw InvalidInput("fit_line needs distinct x values");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy == 0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return f;
}

std::string hardware_descriptor() {
  std::string model = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line))
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(colon + 2);
      break;
    }
  return model + ", " + std::to_string(std::thread::hardware_concurrency()) +
         " hardware threads, sequential generation";
}

PresetReport preset_report(const AcquisitionPreset& preset, double tiles_per_second,
                           int tile_size) {
  PresetReport r;
  r.name = preset.name;
  r.across_track_pixels = preset.across_track_pixels;
  r.channels = preset.channels;
  r.acquisition_lines_per_second = preset.lines_per_second;
  const int tiles_across = (preset.across_track_pixels + tile_size - 1) / tile_size;
  r.generated_lines_per_second =
      tiles_per_second * tile_size / static_cast<double>(tiles_across * preset.channels);
  r.ratio = r.generated_lines_per_second / preset.lines_per_second;
  return r;
}

BenchmarkReport benchmark_throughput(const ModelParams<float>& params, const TerrainParams& terrain,
                                     const BenchmarkConfig& cfg) {
  cfg.validate();
  const int t = params.layout.tile_size;
  auto request = [&](int rows, int cols, std::uint64_t seed) {
    MissionRequest req;
    req.spec =
        TileGridSpec::make(t, rows, cols, params.layout.channels, params.layout.snippet_width);
    req.semantic_map = sample_semantic_map(seed, rows * t, cols * t, terrain);
    req.master_seed = seed;
    return req;
  };
  if (cfg.warmup_tiles > 0) generate_mission(params, request(1, cfg.warmup_tiles, cfg.seed));

  BenchmarkReport report;
  report.hardware = hardware_descriptor();
  report.tile_size = t;
  std::vector<double> xs, ys;
  double total_tiles = 0, total_seconds = 0;
  for (int n : cfg.grid_sizes) {
    const MissionRequest req = request(n, n, derive_seed(cfg.seed, n));
    const auto t0 = Clock::now();
    generate_mission(params, req);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    report.runs.push_back({n * n, secs});
    xs.push_back(n * n);
    ys.push_back(secs);
    total_tiles += n * n;
    total_seconds += secs;
  }
  const LinearFit fit = fit_line(xs, ys);
  report.r_squared = fit.r_squared;
  report.slope_seconds_per_tile = fit.slope;
  report.intercept_seconds = fit.intercept;
  report.tiles_per_second = total_tiles / total_seconds;
  report.pixels_per_second = report.tiles_per_second * t * t;
  for (const auto& p : cfg.presets)
    report.presets.push_back(preset_report(p, report.tiles_per_second, t));
  return report;
}

}  // namespace r2d2
