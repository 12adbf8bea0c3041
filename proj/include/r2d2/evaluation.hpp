#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "r2d2/image.hpp"
#include "r2d2/models.hpp"
#include "r2d2/seabed_oracle.hpp"
#include "r2d2/tiling.hpp"

namespace r2d2 {

// ------------------------------------------------------------------- seams

struct SeamReport {
  double boundary_gradient_mean = 0.0;
  double interior_gradient_mean = 0.0;
  /// boundary / interior; +infinity when only the interior mean is zero,
  /// empty when both are zero.
  std::optional<double> seam_ratio;
  std::size_t boundary_pairs = 0;
  std::size_t interior_pairs = 0;
};

/// Mean absolute difference across every internal tile edge against an equal
/// number of seeded, same-orientation adjacent pairs that straddle no edge.
/// Throws InvalidInput for a single-tile grid.
SeamReport seam_score(const Image& image, const TileGridSpec& spec, std::uint64_t seed = 0);

// ----------------------------------------------------------------- texture

struct ClassTextureStats {
  bool present = false;  // false when the class has no pixels; other fields are then zero
  std::size_t pixels = 0;
  double mean = 0.0;
  double variance = 0.0;
  /// Radially averaged power of the mean-removed, class-masked image; bin k
  /// covers radial frequency k / min(H, W) cycles per pixel.
  std::vector<double> spectrum;
};

using TextureReport = std::map<std::string, ClassTextureStats>;

TextureReport texture_stats(const Image& image, const SemanticMap& map);

/// Index of the largest spectrum bin above DC.
int spectrum_peak(const ClassTextureStats& stats);

// -------------------------------------------------------------- continuity

struct ContinuityReport {
  std::vector<double> ratios;           // conditioned recursion
  std::vector<double> ablation_ratios;  // zeroed conditions
  double median_ratio = 0.0;
  double median_ablation = 0.0;
  double improvement = 0.0;  // median_ablation / median_ratio
};

/// Generates `missions` missions over oracle-sampled maps, each with and
/// without conditions, and scores their seams. Undefined ratios count as +inf.
ContinuityReport continuity_experiment(const ModelParams<float>& params,
                                       const TerrainParams& terrain, const TileGridSpec& spec,
                                       int missions, std::uint64_t seed);

double median(std::vector<double> values);

// --------------------------------------------------------------------- ATR

struct AtrConfig {
  int chip_size = 32;
  int train_chips = 600;  // per training set
  int test_chips = 400;
  double positive_fraction = 0.5;
  double min_positive_fraction = 0.25;  // dataset balance bounds
  double max_positive_fraction = 0.75;
  int target_min_size = 3;
  int target_max_size = 5;
  int scene_tiles = 4;  // background scenes are scene_tiles x scene_tiles model tiles
  int chips_per_scene = 16;
  int residual_units = 3;
  int width = 8;
  int epochs = 8;
  int batch_size = 16;
  double learning_rate = 1e-3;
  std::vector<std::uint64_t> seeds = {1, 2, 3};

  void validate() const;
  bool operator==(const AtrConfig&) const = default;
};

/// Training-set identifiers in report order.
inline const std::vector<std::string>& atr_set_names() {
  static const std::vector<std::string> names = {"noise", "degraded_oracle", "r2d2_generated",
                                                 "oracle"};
  return names;
}

struct AtrSetResult {
  std::string id;
  int train_positives = 0;
  int train_negatives = 0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

struct AtrReport {
  std::uint64_t seed = 0;
  int test_positives = 0;
  int test_negatives = 0;
  std::vector<AtrSetResult> sets;  // atr_set_names() order

  const AtrSetResult& at(const std::string& id) const;
};

/// A labelled set of single-channel chips.
struct ChipSet {
  std::vector<Image> chips;
  std::vector<int> labels;  // 1 = target present
};

/// Chips cut from background scenes; a seeded fraction receives a target.
/// Throws DatasetFault when the positive fraction leaves the configured bounds.
ChipSet make_chips(const std::vector<std::pair<SemanticMap, Image>>& scenes, int count,
                   const TerrainParams& terrain, const AtrConfig& cfg, std::uint64_t seed);

struct DetectionScores {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};
DetectionScores detection_scores(const std::vector<int>& truth, const std::vector<int>& predicted);

/// Small residual classifier trained with binary cross-entropy; returns the
/// predicted labels for `test`.
std::vector<int> train_and_classify(const ChipSet& train, const ChipSet& test, const AtrConfig& cfg,
                                    std::uint64_t seed);

AtrReport atr_experiment(const ModelParams<float>& params, const TerrainParams& terrain,
                         const AtrConfig& cfg, std::uint64_t seed);

// -------------------------------------------------------------------- misc

/// Side-by-side grid: each row holds one real tile and one generated tile.
Image comparison_sheet(const std::vector<Image>& real, const std::vector<Image>& generated,
                       int gap = 2);

}  // namespace r2d2
