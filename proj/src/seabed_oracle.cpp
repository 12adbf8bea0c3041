#include "r2d2/seabed_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <random>

#include "r2d2/config.hpp"
#include "r2d2/errors.hpp"
#include "r2d2/hashing.hpp"
#include "r2d2/parallel.hpp"
#include "r2d2/raster_io.hpp"

namespace r2d2 {

namespace fs = std::filesystem;
using nlohmann::json;

TerrainParams TerrainParams::defaults() {
  TerrainParams p;
  p.classes = {
      {"flat_sand", 0.45, 0.0, 12.0, 0.0, 0.25, 0.0, 1.0},
      {"ripples", 0.50, 0.35, 12.0, 0.35, 0.20, 0.0, 1.0},
      {"rock", 0.55, 0.20, 5.0, 1.2, 0.30, 0.0, 0.7},
      {"object", 0.90, 0.0, 12.0, 0.0, 0.10, 1.5, 0.0},
  };
  return p;
}

std::vector<std::string> TerrainParams::class_names() const {
  std::vector<std::string> names;
  names.reserve(classes.size());
  for (const auto& c : classes) names.push_back(c.name);
  return names;
}

int TerrainParams::class_index(const std::string& name) const {
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (classes[i].name == name) return static_cast<int>(i);
  return -1;
}

void TerrainParams::validate() const {
  if (classes.empty()) throw ConfigError("terrain needs at least one class");
  if (classes.size() > 255) throw ConfigError("terrain supports at most 255 classes");
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  for (const auto& c : classes) {
    const std::string where = "terrain class '" + c.name + "': ";
    if (c.name.empty()) throw ConfigError("terrain class with empty name");
    if (!unit(c.reflectivity)) throw ConfigError(where + "reflectivity outside [0,1]");
    if (!unit(c.ripple_amplitude)) throw ConfigError(where + "ripple_amplitude outside [0,1]");
    if (!unit(c.speckle)) throw ConfigError(where + "speckle outside [0,1]");
    if (c.ripple_wavelength < 2.0) throw ConfigError(where + "ripple_wavelength < 2");
    if (c.shadow_length < 0.0 || c.area_weight < 0.0)
      throw ConfigError(where + "negative shadow_length or area_weight");
  }
  if (attenuation < 0.0) throw ConfigError("attenuation must be >= 0");
  if (region_scale < 2) throw ConfigError("region_scale must be >= 2");
  if (min_region_area < 1) throw ConfigError("min_region_area must be >= 1");
  if (!unit(shadow_darkness)) throw ConfigError("shadow_darkness outside [0,1]");
}

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

/// Merges 4-connected components smaller than min_area into the neighbouring
/// label that borders them most often. Repeats until every region qualifies.
void merge_small_regions(SemanticMap& map, int min_area) {
  const int h = map.height, w = map.width;
  if (static_cast<long>(h) * w < min_area) return;
  std::vector<int> comp(static_cast<std::size_t>(h) * w);
  std::vector<int> stack;
  std::vector<int> members;
  for (bool changed = true; changed;) {
    changed = false;
    std::fill(comp.begin(), comp.end(), -1);
    int next = 0;
    for (int start = 0; start < h * w; ++start) {
      if (comp[start] >= 0) continue;
      const auto label = map.labels[start];
      members.clear();
      stack.assign(1, start);
      comp[start] = next;
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        members.push_back(p);
        const int y = p / w, x = p % w;
        const int nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
        for (auto& q : nb) {
          if (q[0] < 0 || q[0] >= h || q[1] < 0 || q[1] >= w) continue;
          const int qi = q[0] * w + q[1];
          if (comp[qi] < 0 && map.labels[qi] == label) {
            comp[qi] = next;
            stack.push_back(qi);
          }
        }
      }
      if (static_cast<int>(members.size()) < min_area) {
        std::vector<int> votes(256, 0);
        for (int p : members) {
          const int y = p / w, x = p % w;
          const int nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
          for (auto& q : nb) {
            if (q[0] < 0 || q[0] >= h || q[1] < 0 || q[1] >= w) continue;
            const auto l = map.labels[q[0] * w + q[1]];
            if (l != label) ++votes[l];
          }
        }
        const auto best = std::max_element(votes.begin(), votes.end()) - votes.begin();
        if (votes[best] > 0) {
          for (int p : members) map.labels[p] = static_cast<std::uint8_t>(best);
          changed = true;
        }
      }
      ++next;
    }
  }
}

/// Darkens non-object pixels behind every horizontal run of object pixels.
void cast_shadows(Image& img, const std::vector<std::uint8_t>& object_mask, double length_factor,
                  double darkness) {
  const int h = img.height, w = img.width;
  for (int y = 0; y < h; ++y) {
    int x = 0;
    while (x < w) {
      if (!object_mask[static_cast<std::size_t>(y) * w + x]) {
        ++x;
        continue;
      }
      const int start = x;
      while (x < w && object_mask[static_cast<std::size_t>(y) * w + x]) ++x;
      const int run = x - start;
      const int len = std::max(1, static_cast<int>(std::lround(length_factor * run)));
      for (int s = x; s < std::min(w, x + len); ++s) {
        if (object_mask[static_cast<std::size_t>(y) * w + s]) break;
        for (int c = 0; c < img.channels; ++c)
          img.at(c, y, s) = static_cast<float>(img.at(c, y, s) * darkness);
      }
    }
  }
}

const ClassTexture& texture_for(const TerrainParams& params, const SemanticMap& map, int label) {
  const int idx = params.class_index(map.class_names.at(label));
  if (idx < 0) throw InvalidInput("semantic class '" + map.class_names[label] + "' has no texture");
  return params.classes[idx];
}

struct TargetShape {
  int ry = 0, rx = 0;
  bool contains(const TargetPlacement& t, int dy, int dx) const {
    if (t.kind == TargetKind::Cylinder) {
      const double a = static_cast<double>(dy) / ry, b = static_cast<double>(dx) / rx;
      return a * a + b * b <= 1.0;
    }
    const int r2 = dy * dy + dx * dx;
    const int inner = t.size / 2;
    return r2 <= t.size * t.size && r2 >= inner * inner;
  }
};

TargetShape shape_of(const TargetPlacement& t) {
  if (t.kind == TargetKind::Cylinder) return {t.size, std::max(1, t.size / 2)};
  return {t.size, t.size};
}

int shadow_extent(const TargetPlacement& t, const TerrainParams& params) {
  const int idx = params.class_index("object");
  const double factor = idx >= 0 ? params.classes[idx].shadow_length : 1.0;
  const auto s = shape_of(t);
  return std::max(1, static_cast<int>(std::lround(factor * (2 * s.rx + 1))));
}

}  // namespace

SemanticMap sample_semantic_map(std::uint64_t seed, int height, int width,
                                const TerrainParams& params) {
  params.validate();
  if (height < 1 || width < 1) throw InvalidInput("semantic map needs positive dimensions");
  std::vector<int> sampled;
  for (std::size_t i = 0; i < params.classes.size(); ++i)
    if (params.classes[i].area_weight > 0.0) sampled.push_back(static_cast<int>(i));
  if (sampled.empty()) throw ConfigError("no terrain class has a positive area_weight");

  SemanticMap map(height, width, params.class_names(), static_cast<std::uint8_t>(sampled[0]));
  if (sampled.size() == 1) return map;

  const int scale = params.region_scale;
  const int gh = height / scale + 2, gw = width / scale + 2;
  std::mt19937_64 rng(derive_seed(seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> fields(sampled.size(),
                                          std::vector<double>(static_cast<std::size_t>(gh) * gw));
  for (auto& f : fields)
    for (auto& v : f) v = normal(rng);

  for (int y = 0; y < height; ++y) {
    const double fy = static_cast<double>(y) / scale;
    const int y0 = static_cast<int>(fy);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = static_cast<double>(x) / scale;
      const int x0 = static_cast<int>(fx);
      const double tx = fx - x0;
      double best = -1e300;
      int best_k = 0;
      for (std::size_t k = 0; k < sampled.size(); ++k) {
        const auto& f = fields[k];
        auto at = [&](int yy, int xx) { return f[static_cast<std::size_t>(yy) * gw + xx]; };
        const double v = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                         ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1)) +
                         std::log(params.classes[sampled[k]].area_weight);
        if (v > best) {
          best = v;
          best_k = sampled[k];
        }
      }
      map.at(y, x) = static_cast<std::uint8_t>(best_k);
    }
  }
  merge_small_regions(map, params.min_region_area);
  return map;
}

Image render_seabed(const SemanticMap& map, std::uint64_t seed, const TerrainParams& params) {
  params.validate();
  map.validate();
  const int h = map.height, w = map.width;
  const int k = map.num_classes();

  std::vector<const ClassTexture*> tex(k);
  std::vector<double> phase(k);
  for (int c = 0; c < k; ++c) {
    tex[c] = &texture_for(params, map, c);
    std::mt19937_64 prng(derive_seed(seed, 2, c));
    phase[c] = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(prng);
  }

  Image img(1, h, w);
  std::vector<std::uint8_t> object_mask(static_cast<std::size_t>(h) * w, 0);
  const int object_idx = [&] {
    for (int c = 0; c < k; ++c)
      if (map.class_names[c] == "object") return c;
    return -1;
  }();

  std::mt19937_64 rng(derive_seed(seed, 3));
  std::uniform_real_distribution<double> uni(-kSqrt3, kSqrt3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int c = map.at(y, x);
      const ClassTexture& t = *tex[c];
      const double u = uni(rng);
      double v = t.reflectivity;
      if (t.ripple_amplitude > 0.0) {
        const double arg =
            2.0 * std::numbers::pi *
                (x * std::cos(t.ripple_orientation) + y * std::sin(t.ripple_orientation)) /
                t.ripple_wavelength +
            phase[c];
        v *= 1.0 + t.ripple_amplitude * std::sin(arg);
      }
      v *= 1.0 + t.speckle * u;
      v *= std::exp(-params.attenuation * x);
      img.at(0, y, x) = static_cast<float>(v);
      if (c == object_idx) object_mask[static_cast<std::size_t>(y) * w + x] = 1;
    }
  if (object_idx >= 0)
    cast_shadows(img, object_mask, tex[object_idx]->shadow_length, params.shadow_darkness);
  for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

Box target_highlight_box(const TargetPlacement& t) {
  const auto s = shape_of(t);
  return {t.y - s.ry, t.x - s.rx, t.y + s.ry + 1, t.x + s.rx + 1};
}

Box target_footprint(const TargetPlacement& t, const TerrainParams& params) {
  Box b = target_highlight_box(t);
  b.x1 += shadow_extent(t, params);
  return b;
}

std::pair<Image, SemanticMap> embed_target(const Image& image, const SemanticMap& map,
                                           const TargetPlacement& target,
                                           const TerrainParams& params) {
  if (!(image.height == map.height && image.width == map.width))
    throw InvalidInput("embed_target: image and map dimensions differ");
  if (target.size < 2) throw InvalidInput("embed_target: target size must be >= 2");
  const Box fp = target_footprint(target, params);
  if (fp.y0 < 0 || fp.x0 < 0 || fp.y1 > image.height || fp.x1 > image.width)
    throw InvalidInput("target at (" + std::to_string(target.y) + "," + std::to_string(target.x) +
                       ") does not fit inside the image with its shadow");
  int object_label = -1;
  for (int c = 0; c < map.num_classes(); ++c)
    if (map.class_names[c] == "object") object_label = c;
  const int object_tex = params.class_index("object");
  if (object_label < 0 || object_tex < 0)
    throw InvalidInput("embed_target: class list has no 'object' class");
  const ClassTexture& tex = params.classes[object_tex];

  Image out = image;
  SemanticMap out_map = map;
  const auto shape = shape_of(target);
  const Box hb = target_highlight_box(target);
  std::mt19937_64 rng(derive_seed(0x7A56E7ull, target.y, target.x, static_cast<int>(target.kind)));
  std::uniform_real_distribution<double> uni(-kSqrt3, kSqrt3);
  const int shadow = shadow_extent(target, params);
  for (int y = hb.y0; y < hb.y1; ++y) {
    int rightmost = -1;
    for (int x = hb.x0; x < hb.x1; ++x) {
      if (!shape.contains(target, y - target.y, x - target.x)) continue;
      const double v = tex.reflectivity * (1.0 + tex.speckle * uni(rng));
      for (int c = 0; c < out.channels; ++c)
        out.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      out_map.at(y, x) = static_cast<std::uint8_t>(object_label);
      rightmost = x;
    }
    if (rightmost < 0) continue;
    for (int x = rightmost + 1; x <= rightmost + shadow && x < out.width; ++x)
      for (int c = 0; c < out.channels; ++c)
        out.at(c, y, x) = static_cast<float>(out.at(c, y, x) * params.shadow_darkness);
  }
  return {std::move(out), std::move(out_map)};
}

// ------------------------------------------------------------------ dataset

std::uint64_t pair_seed(std::uint64_t dataset_seed, int index) {
  return derive_seed(dataset_seed, 0xDA7A, index);
}

namespace {

std::string pair_stem(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair_%05d", i);
  return buf;
}

void write_pair(const DatasetManifest& m, DatasetEntry& e, const fs::path& dir) {
  SemanticMap map = sample_semantic_map(e.seed, m.height, m.width, m.params);
  Image img = render_seabed(map, derive_seed(e.seed, 0x1A6E), m.params);
  write_label_pgm(dir / e.map_file, map);
  write_pgm(dir / e.image_file, img);
  e.map_sha256 = sha256_file(dir / e.map_file);
  e.image_sha256 = sha256_file(dir / e.image_file);
}

void prepare_dir(const fs::path& out_dir) {
  const fs::path parent = fs::absolute(out_dir).parent_path();
  if (!fs::exists(parent)) throw IoError("parent directory does not exist: " + parent.string());
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir))
    throw IoError("cannot create dataset directory " + out_dir.string());
}

}  // namespace

DatasetManifest make_dataset(std::uint64_t seed, int n_pairs, int height, int width,
                             const TerrainParams& params, const fs::path& out_dir, int workers,
                             const std::string& config_hash) {
  if (n_pairs < 1) throw InvalidInput("n_pairs must be >= 1");
  if (height < 1 || width < 1) throw InvalidInput("dataset dimensions must be positive");
  params.validate();
  prepare_dir(out_dir);

  DatasetManifest m;
  m.seed = seed;
  m.n_pairs = n_pairs;
  m.height = height;
  m.width = width;
  m.params = params;
  m.params_hash = sha256_hex(terrain_to_json(params).dump());
  m.config_hash = config_hash;
  m.directory = out_dir;
  m.pairs.resize(n_pairs);
  for (int i = 0; i < n_pairs; ++i) {
    auto& e = m.pairs[i];
    e.index = i;
    e.seed = pair_seed(seed, i);
    e.map_file = pair_stem(i) + "_map.pgm";
    e.image_file = pair_stem(i) + "_img.pgm";
  }
  parallel_for(m.pairs.size(), workers, [&](std::size_t i) { write_pair(m, m.pairs[i], out_dir); });
  write_manifest(m, out_dir / DatasetManifest::kFileName);
  return m;
}

DatasetManifest regenerate_dataset(const DatasetManifest& manifest, const fs::path& out_dir,
                                   int workers) {
  prepare_dir(out_dir);
  DatasetManifest m = manifest;
  m.directory = out_dir;
  parallel_for(m.pairs.size(), workers, [&](std::size_t i) { write_pair(m, m.pairs[i], out_dir); });
  write_manifest(m, out_dir / DatasetManifest::kFileName);
  return m;
}

void write_manifest(const DatasetManifest& m, const fs::path& path) {
  json j;
  j["format"] = "r2d2-seabed-dataset";
  j["version"] = 1;
  j["seed"] = m.seed;
  j["n_pairs"] = m.n_pairs;
  j["height"] = m.height;
  j["width"] = m.width;
  j["params"] = terrain_to_json(m.params);
  j["params_hash"] = m.params_hash;
  j["config_hash"] = m.config_hash;
  json files = json::array();
  for (const auto& e : m.pairs)
    files.push_back({{"index", e.index},
                     {"seed", e.seed},
                     {"map", e.map_file},
                     {"image", e.image_file},
                     {"map_sha256", e.map_sha256},
                     {"image_sha256", e.image_sha256}});
  j["pairs"] = files;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const fs::path& manifest_path) {
  fs::path path = manifest_path;
  if (fs::is_directory(path)) path /= DatasetManifest::kFileName;
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInput("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    if (j.at("format") != "r2d2-seabed-dataset") throw InvalidInput("not a dataset manifest");
    DatasetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.n_pairs = j.at("n_pairs").get<int>();
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    m.params = terrain_from_json(j.at("params"));
    m.params_hash = j.at("params_hash").get<std::string>();
    m.config_hash = j.value("config_hash", std::string{});
    m.directory = path.parent_path();
    for (const auto& f : j.at("pairs")) {
      DatasetEntry e;
      e.index = f.at("index").get<int>();
      e.seed = f.at("seed").get<std::uint64_t>();
      e.map_file = f.at("map").get<std::string>();
      e.image_file = f.at("image").get<std::string>();
      e.map_sha256 = f.value("map_sha256", std::string{});
      e.image_sha256 = f.value("image_sha256", std::string{});
      m.pairs.push_back(std::move(e));
    }
    if (static_cast<int>(m.pairs.size()) != m.n_pairs)
      throw InvalidInput("manifest lists " + std::to_string(m.pairs.size()) +
                         " pairs, n_pairs=" + std::to_string(m.n_pairs));
    return m;
  } catch (const json::exception& e) {
    throw InvalidInput("manifest " + path.string() + ": " + e.what());
  }
}

std::pair<SemanticMap, Image> load_pair(const DatasetManifest& m, int index) {
  const auto& e = m.pairs.at(index);
  for (const auto& [file, hash] :
       {std::pair{e.map_file, e.map_sha256}, {e.image_file, e.image_sha256}})
    if (!hash.empty() && sha256_file(m.directory / file) != hash)
      throw IoError("dataset file " + (m.directory / file).string() +
                    " does not match its manifest hash");
  SemanticMap map = read_label_pgm(m.directory / e.map_file, m.params.class_names());
  Image img = read_pgm(m.directory / e.image_file);
  if (img.height != m.height || img.width != m.width || map.height != m.height ||
      map.width != m.width)
    throw InvalidInput("pair " + std::to_string(index) + " does not match manifest dimensions");
  return {std::move(map), std::move(img)};
}

}  // namespace r2d2
