#include "r2d2/tiling.hpp"

#include <algorithm>
#include <string>

#include "r2d2/errors.hpp"

namespace r2d2 {

namespace {

std::string dims(int h, int w) { return std::to_string(h) + "x" + std::to_string(w); }

void copy_block(const Image& src, int sy, int sx, Image& dst, int dy, int dx, int h, int w) {
  for (int c = 0; c < src.channels; ++c)
    for (int y = 0; y < h; ++y) {
      const float* from =
          &src.data[(static_cast<std::size_t>(c) * src.height + sy + y) * src.width + sx];
      float* to = &dst.data[(static_cast<std::size_t>(c) * dst.height + dy + y) * dst.width + dx];
      std::copy(from, from + w, to);
    }
}

}  // namespace

void SemanticMap::validate() const {
  if (labels.size() != static_cast<std::size_t>(height) * width)
    throw InvalidInput("semantic map storage does not match " + dims(height, width));
  const int k = num_classes();
  for (auto v : labels)
    if (v >= k)
      throw InvalidInput("semantic label " + std::to_string(v) + " >= class count " +
                         std::to_string(k));
}

void TileGridSpec::validate() const {
  if (tile_size < 8) throw InvalidInput("tile_size must be >= 8");
  if (snippet_width < 1 || snippet_width >= tile_size)
    throw InvalidInput("snippet_width must be in [1, tile_size)");
  if (grid_rows < 1 || grid_cols < 1) throw InvalidInput("grid must have at least one tile");
  if (channels < 1) throw InvalidInput("channels must be >= 1");
}

int TileGridSpec::default_snippet_width(int tile_size) {
  return std::max(1, (tile_size + 15) / 16);
}

TileGridSpec TileGridSpec::make(int tile_size, int rows, int cols, int channels,
                                int snippet_width) {
  TileGridSpec s;
  s.tile_size = tile_size;
  s.grid_rows = rows;
  s.grid_cols = cols;
  s.channels = channels;
  s.snippet_width = snippet_width > 0 ? snippet_width : default_snippet_width(tile_size);
  s.validate();
  return s;
}

std::pair<int, int> Quad::slot_offset() const {
  const int s = static_cast<int>(target_slot);
  return {(s / 2) * tile_size, (s % 2) * tile_size};
}

Image crop_image(const Image& image, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > image.height || x0 + w > image.width)
    throw InvalidInput("crop outside image bounds");
  Image out(image.channels, h, w);
  copy_block(image, y0, x0, out, 0, 0, h, w);
  return out;
}

SemanticMap crop_map(const SemanticMap& map, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > map.height || x0 + w > map.width)
    throw InvalidInput("crop outside semantic map bounds");
  SemanticMap out(h, w, map.class_names);
  for (int y = 0; y < h; ++y)
    std::copy_n(&map.labels[static_cast<std::size_t>(y0 + y) * map.width + x0], w,
                &out.labels[static_cast<std::size_t>(y) * w]);
  return out;
}

std::vector<Image> partition_image(const Image& image, const TileGridSpec& spec) {
  spec.validate();
  if (image.height != spec.image_height() || image.width != spec.image_width() ||
      image.channels != spec.channels)
    throw InvalidInput("image is " + dims(image.height, image.width) + "x" +
                       std::to_string(image.channels) + ", grid expects " +
                       dims(spec.image_height(), spec.image_width()) + "x" +
                       std::to_string(spec.channels));
  std::vector<Image> tiles;
  tiles.reserve(spec.tile_count());
  const int t = spec.tile_size;
  for (int r = 0; r < spec.grid_rows; ++r)
    for (int c = 0; c < spec.grid_cols; ++c) tiles.push_back(crop_image(image, r * t, c * t, t, t));
  return tiles;
}

std::vector<TileEntry> partition(const Image& image, const SemanticMap& map,
                                 const TileGridSpec& spec) {
  if (map.height != image.height || map.width != image.width)
    throw InvalidInput("semantic map " + dims(map.height, map.width) + " does not match image " +
                       dims(image.height, image.width));
  auto images = partition_image(image, spec);
  std::vector<TileEntry> out;
  out.reserve(images.size());
  const int t = spec.tile_size;
  for (int r = 0; r < spec.grid_rows; ++r)
    for (int c = 0; c < spec.grid_cols; ++c) {
      const int i = r * spec.grid_cols + c;
      out.push_back({std::move(images[i]), crop_map(map, r * t, c * t, t, t), r, c});
    }
  return out;
}

Image across_track_map(const TileGridSpec& spec, int x0, int height, int width) {
  Image out(1, height, width);
  const double denom = static_cast<double>(spec.image_width() - 1);
  for (int x = 0; x < width; ++x) {
    const auto v = static_cast<float>(static_cast<double>(x0 + x) / denom);
    for (int y = 0; y < height; ++y) out.at(0, y, x) = v;
  }
  return out;
}

ConditionSet extract_conditions(std::span<const Image> tiles, int row, int col,
                                const TileGridSpec& spec) {
  spec.validate();
  if (row < 0 || row >= spec.grid_rows || col < 0 || col >= spec.grid_cols)
    throw InvalidInput("tile (" + std::to_string(row) + "," + std::to_string(col) + ") outside " +
                       dims(spec.grid_rows, spec.grid_cols) + " grid");
  if (tiles.size() != static_cast<std::size_t>(spec.tile_count()))
    throw InvalidInput("tile grid holds " + std::to_string(tiles.size()) + " tiles, expected " +
                       std::to_string(spec.tile_count()));
  const int t = spec.tile_size;
  const int s = spec.snippet_width;
  auto neighbour = [&](int r, int c) -> const Image& {
    const Image& n = tiles[static_cast<std::size_t>(r) * spec.grid_cols + c];
    if (n.channels != spec.channels || n.height != t || n.width != t)
      throw InvalidInput("neighbour tile (" + std::to_string(r) + "," + std::to_string(c) +
                         ") missing or mis-shaped");
    return n;
  };

  ConditionSet cs;
  cs.c1 = Image(spec.channels, s, t);
  cs.c2 = Image(spec.channels, t, s);
  if (row > 0) {
    copy_block(neighbour(row - 1, col), t - s, 0, cs.c1, 0, 0, s, t);
    cs.valid_c1 = true;
  }
  if (col > 0) {
    copy_block(neighbour(row, col - 1), 0, t - s, cs.c2, 0, 0, t, s);
    cs.valid_c2 = true;
  }
  cs.across_track = across_track_map(spec, col * t, t, t);
  return cs;
}

Quad compose_quad(const Image& image, const SemanticMap& map, int anchor_row, int anchor_col,
                  const TileGridSpec& spec, QuadSlot slot) {
  spec.validate();
  if (anchor_row < 0 || anchor_col < 0 || anchor_row + 1 >= spec.grid_rows ||
      anchor_col + 1 >= spec.grid_cols)
    throw NoQuadError("no 2x2 neighbourhood at anchor (" + std::to_string(anchor_row) + "," +
                      std::to_string(anchor_col) + ") in a " +
                      dims(spec.grid_rows, spec.grid_cols) + " grid");
  if (image.height != spec.image_height() || image.width != spec.image_width() ||
      map.height != image.height || map.width != image.width)
    throw InvalidInput("image/map dimensions do not match the grid");
  const int t = spec.tile_size;
  Quad q;
  q.image = crop_image(image, anchor_row * t, anchor_col * t, 2 * t, 2 * t);
  q.semantic = crop_map(map, anchor_row * t, anchor_col * t, 2 * t, 2 * t);
  q.across_track = across_track_map(spec, anchor_col * t, 2 * t, 2 * t);
  q.anchor_row = anchor_row;
  q.anchor_col = anchor_col;
  q.target_slot = slot;
  q.tile_size = t;
  return q;
}

std::pair<std::pair<int, int>, QuadSlot> quad_for_tile(int row, int col, const TileGridSpec& spec) {
  if (spec.grid_rows < 2 || spec.grid_cols < 2)
    throw NoQuadError("grid " + dims(spec.grid_rows, spec.grid_cols) + " has no 2x2 quads");
  const int ar = std::clamp(row - 1, 0, spec.grid_rows - 2);
  const int ac = std::clamp(col - 1, 0, spec.grid_cols - 2);
  const int slot = (row - ar) * 2 + (col - ac);
  return {{ar, ac}, static_cast<QuadSlot>(slot)};
}

int available_quads(const TileGridSpec& spec) {
  return std::max(0, spec.grid_rows - 1) * std::max(0, spec.grid_cols - 1);
}

Quad replace_tile(const Quad& quad, const Image& tile) {
  const int t = quad.tile_size;
  if (tile.channels != quad.image.channels || tile.height != t || tile.width != t)
    throw InvalidInput("replacement tile is " + dims(tile.height, tile.width) + ", quad expects " +
                       dims(t, t));
  Quad out = quad;
  auto [oy, ox] = quad.slot_offset();
  copy_block(tile, 0, 0, out.image, oy, ox, t, t);
  return out;
}

Image stitch(std::span<const Image> tiles, const TileGridSpec& spec) {
  spec.validate();
  if (tiles.size() != static_cast<std::size_t>(spec.tile_count()))
    throw InvalidInput("stitch got " + std::to_string(tiles.size()) + " tiles, grid needs " +
                       std::to_string(spec.tile_count()));
  const int t = spec.tile_size;
  Image out(spec.channels, spec.image_height(), spec.image_width());
  for (int r = 0; r < spec.grid_rows; ++r)
    for (int c = 0; c < spec.grid_cols; ++c) {
      const Image& tile = tiles[static_cast<std::size_t>(r) * spec.grid_cols + c];
      if (tile.channels != spec.channels || tile.height != t || tile.width != t)
        throw InvalidInput("tile (" + std::to_string(r) + "," + std::to_string(c) + ") has shape " +
                           dims(tile.height, tile.width));
      copy_block(tile, 0, 0, out, r * t, c * t, t, t);
    }
  return out;
}

}  // namespace r2d2
