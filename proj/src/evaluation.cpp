#include "r2d2/evaluation.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>

#include "r2d2/errors.hpp"
#include "r2d2/hashing.hpp"
#include "r2d2/inference.hpp"
#include "r2d2/training.hpp"

namespace r2d2 {

// ------------------------------------------------------------------- seams

SeamReport seam_score(const Image& image, const TileGridSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (image.height != spec.image_height() || image.width != spec.image_width() ||
      image.channels != spec.channels)
    throw InvalidInput("seam_score: image does not match the grid");
  if (spec.tile_count() == 1) throw InvalidInput("seam_score: a single tile has no boundaries");
  const int t = spec.tile_size;
  const int h = image.height, w = image.width, ch = image.channels;

  double boundary = 0.0;
  std::size_t nh = 0, nv = 0;
  for (int c = 0; c < ch; ++c) {
    for (int col = 1; col < spec.grid_cols; ++col)
      for (int y = 0; y < h; ++y, ++nh)
        boundary += std::abs(image.at(c, y, col * t) - image.at(c, y, col * t - 1));
    for (int row = 1; row < spec.grid_rows; ++row)
      for (int x = 0; x < w; ++x, ++nv)
        boundary += std::abs(image.at(c, row * t, x) - image.at(c, row * t - 1, x));
  }

  std::mt19937_64 rng(derive_seed(seed, 0x5EA3));
  std::uniform_int_distribution<int> chan(0, ch - 1);
  std::uniform_int_distribution<int> local(0, t - 2);
  std::uniform_int_distribution<int> any_row(0, h - 1), any_col(0, w - 1);
  std::uniform_int_distribution<int> tile_row(0, spec.grid_rows - 1);
  std::uniform_int_distribution<int> tile_col(0, spec.grid_cols - 1);
  double interior = 0.0;
  for (std::size_t i = 0; i < nh; ++i) {
    const int c = chan(rng), y = any_row(rng), x = tile_col(rng) * t + local(rng);
    interior += std::abs(image.at(c, y, x + 1) - image.at(c, y, x));
  }
  for (std::size_t i = 0; i < nv; ++i) {
    const int c = chan(rng), x = any_col(rng), y = tile_row(rng) * t + local(rng);
    interior += std::abs(image.at(c, y + 1, x) - image.at(c, y, x));
  }

  SeamReport r;
  r.boundary_pairs = nh + nv;
  r.interior_pairs = nh + nv;
  r.boundary_gradient_mean = boundary / static_cast<double>(r.boundary_pairs);
  r.interior_gradient_mean = interior / static_cast<double>(r.interior_pairs);
  if (r.interior_gradient_mean > 0.0)
    r.seam_ratio = r.boundary_gradient_mean / r.interior_gradient_mean;
  else if (r.boundary_gradient_mean > 0.0)
    r.seam_ratio = std::numeric_limits<double>::infinity();
  return r;
}

// ----------------------------------------------------------------- texture

namespace {

std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

std::vector<double> radial_spectrum(const std::vector<double>& field, int h, int w) {
  const int wc = w / 2 + 1;
  std::vector<double> in(field);
  fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(h) * wc);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_plan_mutex());
    plan = fftw_plan_dft_r2c_2d(h, w, in.data(), out, FFTW_ESTIMATE);
  }
  fftw_execute(plan);

  const int side = std::min(h, w);
  const int bins = side / 2 + 1;
  std::vector<double> power(bins, 0.0), count(bins, 0.0);
  for (int ky = 0; ky < h; ++ky) {
    const double fy = static_cast<double>(ky <= h / 2 ? ky : ky - h) / h;
    for (int kx = 0; kx < wc; ++kx) {
      const double fx = static_cast<double>(kx) / w;
      const int bin = static_cast<int>(std::lround(std::hypot(fy, fx) * side));
      if (bin >= bins) continue;
      // Columns other than DC and Nyquist stand for a conjugate pair.
      const double weight = (kx == 0 || (w % 2 == 0 && kx == w / 2)) ? 1.0 : 2.0;
      const auto& z = out[static_cast<std::size_t>(ky) * wc + kx];
      power[bin] += weight * (z[0] * z[0] + z[1] * z[1]);
      count[bin] += weight;
    }
  }
  {
    std::lock_guard lock(fftw_plan_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(out);
  for (int k = 0; k < bins; ++k) power[k] = count[k] > 0 ? power[k] / count[k] : 0.0;
  return power;
}

}  // namespace

TextureReport texture_stats(const Image& image, const SemanticMap& map) {
  if (image.height != map.height || image.width != map.width)
    throw InvalidInput("texture_stats: map and image dimensions differ");
  map.validate();
  const int h = image.height, w = image.width;
  TextureReport report;
  for (int k = 0; k < map.num_classes(); ++k) {
    ClassTextureStats s;
    double sum = 0.0;
    for (int c = 0; c < image.channels; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (map.at(y, x) == k) {
            sum += image.at(c, y, x);
            ++s.pixels;
          }
    if (s.pixels > 0) {
      s.present = true;
      s.mean = sum / static_cast<double>(s.pixels);
      double sq = 0.0;
      for (int c = 0; c < image.channels; ++c)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            if (map.at(y, x) == k) {
              const double d = image.at(c, y, x) - s.mean;
              sq += d * d;
            }
      s.variance = sq / static_cast<double>(s.pixels);
      std::vector<double> field(static_cast<std::size_t>(h) * w, 0.0);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (map.at(y, x) == k)
            field[static_cast<std::size_t>(y) * w + x] = image.at(0, y, x) - s.mean;
      s.spectrum = radial_spectrum(field, h, w);
      const double per_pixel = static_cast<double>(s.pixels) / image.channels;
      for (auto& p : s.spectrum) p /= per_pixel;
    }
    report[map.class_names[k]] = std::move(s);
  }
  return report;
}

int spectrum_peak(const ClassTextureStats& stats) {
  if (stats.spectrum.size() < 2) return 0;
  return static_cast<int>(std::max_element(stats.spectrum.begin() + 1, stats.spectrum.end()) -
                          stats.spectrum.begin());
}

// -------------------------------------------------------------- continuity

double median(std::vector<double> v) {
  if (v.empty()) throw InvalidInput("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ContinuityReport continuity_experiment(const ModelParams<float>& params,
                                       const TerrainParams& terrain, const TileGridSpec& spec,
                                       int missions, std::uint64_t seed) {
  if (missions < 1) throw InvalidInput("continuity experiment needs at least one mission");
  ContinuityReport r;
  const auto ratio_or_inf = [](const SeamReport& s) {
    return s.seam_ratio.value_or(std::numeric_limits<double>::infinity());
  };
  for (int m = 0; m < missions; ++m) {
    MissionRequest req;
    req.spec = spec;
    req.semantic_map = sample_semantic_map(derive_seed(seed, 0xC0, m), spec.image_height(),
                                           spec.image_width(), terrain);
    req.master_seed = derive_seed(seed, 0xC1, m);
    const std::uint64_t seam_seed = derive_seed(seed, 0xC2, m);
    r.ratios.push_back(
        ratio_or_inf(seam_score(generate_mission(params, req).image, spec, seam_seed)));
    req.zero_conditions = true;
    r.ablation_ratios.push_back(
        ratio_or_inf(seam_score(generate_mission(params, req).image, spec, seam_seed)));
  }
  r.median_ratio = median(r.ratios);
  r.median_ablation = median(r.ablation_ratios);
  r.improvement = r.median_ablation / r.median_ratio;
  return r;
}

// --------------------------------------------------------------------- ATR

void AtrConfig::validate() const {
  if (chip_size < 16) throw ConfigError("atr.chip_size must be >= 16");
  if (train_chips < 2 || test_chips < 2) throw ConfigError("atr chip counts must be >= 2");
  if (!(positive_fraction > 0 && positive_fraction < 1))
    throw ConfigError("atr.positive_fraction must be in (0, 1)");
  if (!(min_positive_fraction >= 0 && min_positive_fraction <= max_positive_fraction &&
        max_positive_fraction <= 1))
    throw ConfigError("atr positive-fraction bounds must satisfy 0 <= min <= max <= 1");
  if (target_min_size < 2 || target_max_size < target_min_size)
    throw ConfigError("atr target sizes must satisfy 2 <= min <= max");
  if (scene_tiles < 1 || chips_per_scene < 1) throw ConfigError("atr scene settings must be >= 1");
  if (residual_units < 1 || residual_units > 6)
    throw ConfigError("atr.residual_units must be in [1, 6]");
  if (width < 1 || epochs < 1 || batch_size < 1 || learning_rate <= 0)
    throw ConfigError("atr classifier settings must be positive");
  if (seeds.empty()) throw ConfigError("atr.seeds must not be empty");
}

const AtrSetResult& AtrReport::at(const std::string& id) const {
  for (const auto& s : sets)
    if (s.id == id) return s;
  throw InvalidInput("ATR report has no training set '" + id + "'");
}

ChipSet make_chips(const std::vector<std::pair<SemanticMap, Image>>& scenes, int count,
                   const TerrainParams& terrain, const AtrConfig& cfg, std::uint64_t seed) {
  if (scenes.empty()) throw InvalidInput("make_chips needs at least one scene");
  const int n = cfg.chip_size;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, scenes.size() - 1);
  std::bernoulli_distribution positive(cfg.positive_fraction);
  std::uniform_int_distribution<int> size(cfg.target_min_size, cfg.target_max_size);
  std::uniform_int_distribution<int> kind(0, 1);
  ChipSet out;
  int positives = 0;
  for (int i = 0; i < count; ++i) {
    const auto& [map, img] = scenes[pick(rng)];
    if (img.height < n || img.width < n) throw InvalidInput("scene smaller than a chip");
    std::uniform_int_distribution<int> oy(0, img.height - n), ox(0, img.width - n);
    const int y0 = oy(rng), x0 = ox(rng);
    Image chip = crop_image(img, y0, x0, n, n);
    SemanticMap chip_map = crop_map(map, y0, x0, n, n);
    int label = 0;
    if (positive(rng)) {
      TargetPlacement t;
      t.size = size(rng);
      t.kind = kind(rng) ? TargetKind::Tyre : TargetKind::Cylinder;
      // Footprint relative to the centre, then a centre that keeps it in the chip.
      t.y = t.x = 0;
      const Box fp = target_footprint(t, terrain);
      if (fp.y1 - fp.y0 > n || fp.x1 - fp.x0 > n)
        throw InvalidInput("target of size " + std::to_string(t.size) + " does not fit inside a " +
                           std::to_string(n) + " px chip");
      t.y = std::uniform_int_distribution<int>(-fp.y0, n - fp.y1)(rng);
      t.x = std::uniform_int_distribution<int>(-fp.x0, n - fp.x1)(rng);
      chip = embed_target(chip, chip_map, t, terrain).first;
      label = 1;
      ++positives;
    }
    out.chips.push_back(std::move(chip));
    out.labels.push_back(label);
  }
  const double fraction = static_cast<double>(positives) / count;
  if (fraction < cfg.min_positive_fraction || fraction > cfg.max_positive_fraction)
    throw DatasetFault("chip set has positive fraction " + std::to_string(fraction) + " outside [" +
                       std::to_string(cfg.min_positive_fraction) + ", " +
                       std::to_string(cfg.max_positive_fraction) + "]");
  return out;
}

DetectionScores detection_scores(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size()) throw InvalidInput("label vectors differ in length");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] && truth[i])
      ++tp;
    else if (predicted[i])
      ++fp;
    else if (truth[i])
      ++fn;
  }
  DetectionScores s;
  s.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  s.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  s.f1 = s.recall + s.precision > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

namespace {

void add_conv(ParamSet<float>& ps, std::mt19937_64& rng, const std::string& name, int out, int in,
              int k, double gain) {
  std::normal_distribution<double> normal(0.0, gain / std::sqrt(static_cast<double>(in * k * k)));
  Tensor<float> w(out, in, k, k);
  for (auto& v : w.data) v = static_cast<float>(normal(rng));
  ps.add(name + ".w", std::move(w));
  ps.add(name + ".b", Tensor<float>(1, out, 1, 1));
}

ParamSet<float> classifier_init(const AtrConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamSet<float> ps;
  int width = cfg.width;
  add_conv(ps, rng, "atr.stem", width, 1, 3, std::sqrt(2.0));
  for (int u = 0; u < cfg.residual_units; ++u) {
    const std::string name = "atr.unit" + std::to_string(u);
    add_conv(ps, rng, name + ".conv1", width, width, 3, std::sqrt(2.0));
    add_conv(ps, rng, name + ".conv2", width, width, 3, 0.5);
    if (u + 1 < cfg.residual_units) {
      add_conv(ps, rng, name + ".down", width * 2, width, 3, std::sqrt(2.0));
      width *= 2;
    }
  }
  add_conv(ps, rng, "atr.head", 1, width, 1, 1.0);
  return ps;
}

Var classifier_graph(Graph<float>& g, const Binding<float>& b, const AtrConfig& cfg, Var x) {
  auto conv = [&](const std::string& name, Var in, int stride, int pad) {
    return ag::conv2d(g, in, b(g, name + ".w"), b(g, name + ".b"), stride, pad);
  };
  Var h = ag::relu(g, conv("atr.stem", x, 1, 1));
  for (int u = 0; u < cfg.residual_units; ++u) {
    const std::string name = "atr.unit" + std::to_string(u);
    Var y = ag::relu(g, conv(name + ".conv1", h, 1, 1));
    y = conv(name + ".conv2", y, 1, 1);
    h = ag::relu(g, ag::add(g, h, y));
    if (u + 1 < cfg.residual_units) h = ag::relu(g, conv(name + ".down", h, 2, 1));
  }
  return conv("atr.head", ag::global_avg_pool(g, h), 1, 0);
}

Tensor<float> chip_batch(const ChipSet& set, const std::vector<std::size_t>& idx, std::size_t from,
                         std::size_t count, int n) {
  Tensor<float> t(static_cast<int>(count), 1, n, n);
  for (std::size_t k = 0; k < count; ++k) {
    const Image& chip = set.chips[idx[from + k]];
    std::transform(chip.data.begin(), chip.data.begin() + static_cast<long>(n) * n,
                   t.ptr(static_cast<int>(k)), to_model_range);
  }
  return t;
}

}  // namespace

std::vector<int> train_and_classify(const ChipSet& train, const ChipSet& test, const AtrConfig& cfg,
                                    std::uint64_t seed) {
  const int n = cfg.chip_size;
  ParamSet<float> params = classifier_init(cfg, derive_seed(seed, 0xC1A5));
  AdamState opt;
  for (const auto& p : params) {
    opt.m.emplace_back(p.value.n, p.value.c, p.value.h, p.value.w);
    opt.v.emplace_back(p.value.n, p.value.c, p.value.h, p.value.w);
  }
  TrainingConfig adam;
  adam.learning_rate = cfg.learning_rate;
  adam.beta1 = 0.9;
  adam.beta2 = 0.999;

  std::vector<std::size_t> order(train.chips.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(seed, 0xE0, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t from = 0; from < order.size(); from += cfg.batch_size) {
      const std::size_t count = std::min<std::size_t>(cfg.batch_size, order.size() - from);
      std::vector<float> targets(count);
      for (std::size_t k = 0; k < count; ++k)
        targets[k] = static_cast<float>(train.labels[order[from + k]]);
      Graph<float> g;
      Var logits = classifier_graph(g, trainable(params), cfg,
                                    g.constant(chip_batch(train, order, from, count, n)));
      Var loss = ag::bce_with_logits_mean(g, logits, targets);
      if (!std::isfinite(g.value(loss).item())) throw TrainingFault("non-finite ATR loss");
      params.zero_grad();
      g.backward(loss);
      adam_update(params, opt, adam);
    }
  }

  std::vector<std::size_t> all(test.chips.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<int> predicted;
  for (std::size_t from = 0; from < all.size(); from += 64) {
    const std::size_t count = std::min<std::size_t>(64, all.size() - from);
    Graph<float> g;
    Var logits =
        classifier_graph(g, frozen(params), cfg, g.constant(chip_batch(test, all, from, count, n)));
    for (float v : g.value(logits).data) predicted.push_back(v > 0.0f ? 1 : 0);
  }
  return predicted;
}

AtrReport atr_experiment(const ModelParams<float>& params, const TerrainParams& terrain,
                         const AtrConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const ModelLayout& L = params.layout;
  const int side = cfg.scene_tiles * L.tile_size;
  if (side < cfg.chip_size) throw ConfigError("ATR scenes are smaller than a chip");
  const int train_scenes = (cfg.train_chips + cfg.chips_per_scene - 1) / cfg.chips_per_scene;
  const int test_scenes = (cfg.test_chips + cfg.chips_per_scene - 1) / cfg.chips_per_scene;

  TerrainParams degraded = terrain;
  degraded.attenuation = 0.0;
  for (auto& c : degraded.classes) c.speckle = 0.0;
  const TileGridSpec spec = TileGridSpec::make(L.tile_size, cfg.scene_tiles, cfg.scene_tiles,
                                               L.channels, L.snippet_width);

  // Every training set shares one list of semantic maps; only the renderer differs.
  std::vector<SemanticMap> maps;
  for (int i = 0; i < train_scenes; ++i)
    maps.push_back(sample_semantic_map(derive_seed(seed, 0xA7, i), side, side, terrain));

  auto scenes_for = [&](const std::string& id) {
    std::vector<std::pair<SemanticMap, Image>> scenes;
    for (int i = 0; i < train_scenes; ++i) {
      const std::uint64_t s = derive_seed(seed, 0xA8, i);
      Image img;
      if (id == "noise") {
        img = Image(L.channels, side, side);
        std::mt19937_64 rng(s);
        std::uniform_real_distribution<float> u(0.0f, 1.0f);
        for (auto& v : img.data) v = u(rng);
      } else if (id == "degraded_oracle") {
        img = render_seabed(maps[i], s, degraded);
      } else if (id == "r2d2_generated") {
        MissionRequest req;
        req.spec = spec;
        req.semantic_map = maps[i];
        req.master_seed = s;
        img = generate_mission(params, req).image;
      } else {
        img = render_seabed(maps[i], s, terrain);
      }
      scenes.emplace_back(maps[i], std::move(img));
    }
    return scenes;
  };

  std::vector<std::pair<SemanticMap, Image>> test_scenes_v;
  for (int i = 0; i < test_scenes; ++i) {
    SemanticMap m = sample_semantic_map(derive_seed(seed, 0xB7, i), side, side, terrain);
    Image img = render_seabed(m, derive_seed(seed, 0xB8, i), terrain);
    test_scenes_v.emplace_back(std::move(m), std::move(img));
  }
  const ChipSet test =
      make_chips(test_scenes_v, cfg.test_chips, terrain, cfg, derive_seed(seed, 0xB9));

  AtrReport report;
  report.seed = seed;
  report.test_positives = static_cast<int>(std::count(test.labels.begin(), test.labels.end(), 1));
  report.test_negatives = static_cast<int>(test.labels.size()) - report.test_positives;
  for (const auto& id : atr_set_names()) {
    const ChipSet train =
        make_chips(scenes_for(id), cfg.train_chips, terrain, cfg, derive_seed(seed, 0xA9));
    const auto predicted = train_and_classify(train, test, cfg, seed);
    const DetectionScores s = detection_scores(test.labels, predicted);
    AtrSetResult r;
    r.id = id;
    r.train_positives = static_cast<int>(std::count(train.labels.begin(), train.labels.end(), 1));
    r.train_negatives = static_cast<int>(train.labels.size()) - r.train_positives;
    r.recall = s.recall;
    r.precision = s.precision;
    r.f1 = s.f1;
    report.sets.push_back(r);
  }
  return report;
}

// -------------------------------------------------------------------- misc

Image comparison_sheet(const std::vector<Image>& real, const std::vector<Image>& generated,
                       int gap) {
  if (real.empty() || real.size() != generated.size())
    throw InvalidInput("comparison sheet needs equally many real and generated tiles");
  const Image& first = real.front();
  for (std::size_t i = 0; i < real.size(); ++i)
    if (!real[i].same_shape(first) || !generated[i].same_shape(first))
      throw InvalidInput("comparison sheet tiles differ in shape");
  const int rows = static_cast<int>(real.size());
  const int h = first.height, w = first.width;
  Image sheet(first.channels, rows * h + (rows - 1) * gap, 2 * w + gap, 1.0f);
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < first.channels; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          sheet.at(c, i * (h + gap) + y, x) = real[i].at(c, y, x);
          sheet.at(c, i * (h + gap) + y, w + gap + x) = generated[i].at(c, y, x);
        }
  return sheet;
}

}  // namespace r2d2
