#pragma once

#include <span>
#include <utility>
#include <vector>

#include "r2d2/image.hpp"

namespace r2d2 {

/// Geometry of the square-tile lattice laid over a mission image.
struct TileGridSpec {
  int tile_size = 64;
  int snippet_width = 4;
  int grid_rows = 1;
  int grid_cols = 1;
  int channels = 1;

  int image_height() const { return grid_rows * tile_size; }
  int image_width() const { return grid_cols * tile_size; }
  int tile_count() const { return grid_rows * grid_cols; }

  /// Throws InvalidInput when the lattice invariants do not hold.
  void validate() const;

  /// Default snippet width: ceil(T / 16), at least 1.
  static int default_snippet_width(int tile_size);
  static TileGridSpec make(int tile_size, int rows, int cols, int channels = 1,
                           int snippet_width = 0);

  bool operator==(const TileGridSpec&) const = default;
};

/// Markov conditions for one tile plus its across-track position channel.
struct ConditionSet {
  Image c1;            ///< bottom strip of the tile above: channels x s x T
  Image c2;            ///< right strip of the tile to the left: channels x T x s
  Image across_track;  ///< 1 x T x T normalised global column coordinate
  bool valid_c1 = false;
  bool valid_c2 = false;
};

enum class QuadSlot { TopLeft = 0, TopRight = 1, BottomLeft = 2, BottomRight = 3 };

struct Quad {
  Image image;  ///< channels x 2T x 2T
  SemanticMap semantic;
  Image across_track;  ///< 1 x 2T x 2T
  int anchor_row = 0;
  int anchor_col = 0;
  QuadSlot target_slot = QuadSlot::BottomRight;
  int tile_size = 0;

  /// Pixel offset (y, x) of the target slot within the quad.
  std::pair<int, int> slot_offset() const;
};

struct TileEntry {
  Image tile;
  SemanticMap semantic;
  int row = 0;
  int col = 0;
};

/// Raster-order split of an image and its label map into T x T tiles.
std::vector<TileEntry> partition(const Image& image, const SemanticMap& map,
                                 const TileGridSpec& spec);

/// Image-only variant of partition().
std::vector<Image> partition_image(const Image& image, const TileGridSpec& spec);

SemanticMap crop_map(const SemanticMap& map, int y0, int x0, int h, int w);
Image crop_image(const Image& image, int y0, int x0, int h, int w);

/// Conditions for tile (row, col) taken from the raster-ordered tile grid.
/// Only the neighbours above and to the left are read; other entries may be
/// empty images (e.g. tiles not generated yet).
ConditionSet extract_conditions(std::span<const Image> tiles, int row, int col,
                                const TileGridSpec& spec);

/// Across-track channel for a region of `width` pixels starting at global
/// column `x0`, `height` rows tall.
Image across_track_map(const TileGridSpec& spec, int x0, int height, int width);

Quad compose_quad(const Image& image, const SemanticMap& map, int anchor_row, int anchor_col,
                  const TileGridSpec& spec, QuadSlot slot = QuadSlot::BottomRight);

/// Quad placement used for a tile under test: bottom-right slot whenever the
/// tile has neighbours above and to the left, otherwise the slot that keeps the
/// quad inside the grid.
std::pair<std::pair<int, int>, QuadSlot> quad_for_tile(int row, int col, const TileGridSpec& spec);

int available_quads(const TileGridSpec& spec);

/// Returns a copy of `quad` with the target slot overwritten by `tile`.
Quad replace_tile(const Quad& quad, const Image& tile);

Image stitch(std::span<const Image> tiles, const TileGridSpec& spec);

}  // namespace r2d2
