#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "r2d2/image.hpp"

namespace r2d2 {

/// Texture model of one terrain class.
struct ClassTexture {
  std::string name;
  double reflectivity = 0.5;        // [0, 1]
  double ripple_amplitude = 0.0;    // [0, 1]
  double ripple_wavelength = 12.0;  // pixels, >= 2
  double ripple_orientation = 0.0;  // radians, 0 = crests run along-track
  double speckle = 0.2;             // [0, 1], std-dev of the multiplicative factor
  double shadow_length = 0.0;       // shadow length / object width
  double area_weight = 1.0;         // relative frequency in sampled maps; 0 = never sampled

  bool operator==(const ClassTexture&) const = default;
};

struct TerrainParams {
  std::vector<ClassTexture> classes;
  double attenuation = 0.0005;   // per-pixel exponential decay across track
  int region_scale = 48;         // coarse cell size (pixels) of the region field
  int min_region_area = 64;      // smaller connected regions are merged away
  double shadow_darkness = 0.2;  // multiplier applied inside shadows

  /// flat_sand, ripples, rock, object.
  static TerrainParams defaults();

  std::vector<std::string> class_names() const;
  int class_index(const std::string& name) const;  // -1 if absent
  void validate() const;

  bool operator==(const TerrainParams&) const = default;
};

SemanticMap sample_semantic_map(std::uint64_t seed, int height, int width,
                                const TerrainParams& params);

Image render_seabed(const SemanticMap& map, std::uint64_t seed, const TerrainParams& params);

enum class TargetKind { Cylinder, Tyre };

struct TargetPlacement {
  int y = 0;  // centre row
  int x = 0;  // centre column
  TargetKind kind = TargetKind::Cylinder;
  int size = 6;  // half-extent in pixels
};

/// Pixel rectangle [y0, y1) x [x0, x1).
struct Box {
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;
};

/// Extent of the highlight and of highlight plus shadow for a placement.
Box target_highlight_box(const TargetPlacement& t);
Box target_footprint(const TargetPlacement& t, const TerrainParams& params);

/// Draws a bright highlight (ellipse or annulus) and a shadow cast away from
/// the sensor (increasing column), and labels the highlight as "object".
std::pair<Image, SemanticMap> embed_target(const Image& image, const SemanticMap& map,
                                           const TargetPlacement& target,
                                           const TerrainParams& params);

struct DatasetEntry {
  int index = 0;
  std::uint64_t seed = 0;
  std::string map_file;
  std::string image_file;
  std::string map_sha256;
  std::string image_sha256;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  int n_pairs = 0;
  int height = 0;
  int width = 0;
  TerrainParams params;
  std::string params_hash;
  std::string config_hash;  // empty when produced outside the CLI
  std::vector<DatasetEntry> pairs;
  std::filesystem::path directory;  // where the manifest was read from / written to

  static constexpr const char* kFileName = "manifest.json";
};

/// Per-pair seed; independent of generation order.
std::uint64_t pair_seed(std::uint64_t dataset_seed, int index);

DatasetManifest make_dataset(std::uint64_t seed, int n_pairs, int height, int width,
                             const TerrainParams& params, const std::filesystem::path& out_dir,
                             int workers = 1, const std::string& config_hash = {});

DatasetManifest read_manifest(const std::filesystem::path& manifest_path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Rewrites every data file named in the manifest into out_dir.
DatasetManifest regenerate_dataset(const DatasetManifest& manifest,
                                   const std::filesystem::path& out_dir, int workers = 1);

/// Loads pair i (image quantised as stored on disk).
std::pair<SemanticMap, Image> load_pair(const DatasetManifest& manifest, int index);

}  // namespace r2d2
