#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <queue>
#include <set>

#include "r2d2/errors.hpp"
#include "r2d2/hashing.hpp"
#include "r2d2/raster_io.hpp"
#include "r2d2/seabed_oracle.hpp"
#include "test_util.hpp"

using namespace r2d2;
namespace fs = std::filesystem;

namespace {

/// Sizes of 4-connected same-label components.
std::vector<int> component_sizes(const SemanticMap& m) {
  std::vector<int> seen(m.labels.size(), 0), sizes;
  for (int y0 = 0; y0 < m.height; ++y0)
    for (int x0 = 0; x0 < m.width; ++x0) {
      if (seen[y0 * m.width + x0]) continue;
      const int label = m.at(y0, x0);
      int n = 0;
      std::queue<std::pair<int, int>> q;
      q.push({y0, x0});
      seen[y0 * m.width + x0] = 1;
      while (!q.empty()) {
        auto [y, x] = q.front();
        q.pop();
        ++n;
        const int dy[] = {1, -1, 0, 0}, dx[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int yy = y + dy[k], xx = x + dx[k];
          if (yy < 0 || xx < 0 || yy >= m.height || xx >= m.width) continue;
          if (seen[yy * m.width + xx] || m.at(yy, xx) != label) continue;
          seen[yy * m.width + xx] = 1;
          q.push({yy, xx});
        }
      }
      sizes.push_back(n);
    }
  return sizes;
}

TerrainParams three_classes() {
  TerrainParams p = TerrainParams::defaults();
  p.classes.pop_back();
  return p;
}

double mean(const Image& img) {
  double s = 0;
  for (float v : img.data) s += v;
  return s / static_cast<double>(img.size());
}

double box_mean(const Image& img, const Box& b) {
  double s = 0;
  int n = 0;
  for (int y = b.y0; y < b.y1; ++y)
    for (int x = b.x0; x < b.x1; ++x, ++n) s += img.at(0, y, x);
  return s / n;
}

}  // namespace

TEST(SemanticMap, SameSeedSameMap) {
  const auto p = TerrainParams::defaults();
  EXPECT_EQ(sample_semantic_map(3, 96, 128, p), sample_semantic_map(3, 96, 128, p));
  EXPECT_NE(sample_semantic_map(3, 96, 128, p), sample_semantic_map(4, 96, 128, p));
}

TEST(SemanticMap, SingleClassGivesConstantMap) {
  TerrainParams p = TerrainParams::defaults();
  for (auto& c : p.classes) c.area_weight = 0.0;
  p.classes[1].area_weight = 1.0;
  const auto m = sample_semantic_map(5, 64, 64, p);
  for (auto v : m.labels) ASSERT_EQ(v, 1);
}

TEST(SemanticMap, RegionsRespectMinimumArea) {
  const auto p = three_classes();
  const auto m = sample_semantic_map(7, 512, 512, p);
  const auto sizes = component_sizes(m);
  EXPECT_GT(sizes.size(), 1u);
  for (int s : sizes) EXPECT_GE(s, p.min_region_area);
  std::set<int> used(m.labels.begin(), m.labels.end());
  EXPECT_EQ(used.size(), 3u);
}

TEST(Render, NoiseFreeImageIsBlockwiseReflectivity) {
  TerrainParams p = TerrainParams::defaults();
  p.attenuation = 0.0;
  for (auto& c : p.classes) {
    c.speckle = 0.0;
    c.ripple_amplitude = 0.0;
    c.shadow_length = 0.0;
  }
  auto m = sample_semantic_map(8, 64, 96, three_classes());
  m.class_names = p.class_names();
  const Image img = render_seabed(m, 9, p);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 96; ++x)
      ASSERT_EQ(img.at(0, y, x), static_cast<float>(p.classes[m.at(y, x)].reflectivity));
}

TEST(Render, FlatSandMeanMatchesClosedForm) {
  const TerrainParams p = TerrainParams::defaults();
  const SemanticMap m(256, 256, p.class_names(), 0);
  const Image img = render_seabed(m, 10, p);
  // E[1 + s u] = 1, so the expectation is r times the column-averaged decay.
  double profile = 0;
  for (int x = 0; x < 256; ++x) profile += std::exp(-p.attenuation * x);
  const double want = p.classes[0].reflectivity * profile / 256.0;
  EXPECT_NEAR(mean(img), want, 0.1 * want);
}

TEST(Render, DeterministicAndInRange) {
  const auto p = TerrainParams::defaults();
  const auto m = sample_semantic_map(11, 80, 80, p);
  const Image a = render_seabed(m, 12, p);
  EXPECT_EQ(a, render_seabed(m, 12, p));
  EXPECT_NE(a, render_seabed(m, 13, p));
  for (float v : a.data) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST(Render, ConstantClassIsStationaryAcrossTiles) {
  TerrainParams p = TerrainParams::defaults();
  for (int cls : {0, 1, 2}) {
    const SemanticMap m(256, 256, p.class_names(), static_cast<std::uint8_t>(cls));
    const Image img = render_seabed(m, 14, p);
    std::vector<double> means, vars;
    for (int ty = 1; ty < 3; ++ty)
      for (int tx = 1; tx < 3; ++tx) {
        double s = 0, s2 = 0;
        for (int y = 0; y < 64; ++y)
          for (int x = 0; x < 64; ++x) {
            const double v = img.at(0, ty * 64 + y, tx * 64 + x);
            s += v;
            s2 += v * v;
          }
        const double mu = s / 4096;
        means.push_back(mu);
        vars.push_back(s2 / 4096 - mu * mu);
      }
    for (std::size_t i = 0; i < means.size(); ++i)
      for (std::size_t j = 0; j < means.size(); ++j) {
        EXPECT_LT(std::abs(means[i] - means[j]) / means[j], 0.15) << cls;
        EXPECT_LT(std::abs(vars[i] - vars[j]) / vars[j], 0.15) << cls;
      }
  }
}

TEST(Render, ObjectsCastShadowsAwayFromTheSensor) {
  const auto p = TerrainParams::defaults();
  SemanticMap m(32, 32, p.class_names(), 0);
  for (int y = 10; y < 14; ++y)
    for (int x = 8; x < 12; ++x) m.at(y, x) = 3;
  const Image img = render_seabed(m, 15, p);
  EXPECT_GT(box_mean(img, {10, 8, 14, 12}), box_mean(img, {20, 0, 30, 32}));
  EXPECT_LT(box_mean(img, {10, 12, 14, 16}), 0.5 * box_mean(img, {20, 0, 30, 32}));
}

TEST(EmbedTarget, HighlightBrightShadowDark) {
  const auto p = TerrainParams::defaults();
  const SemanticMap m(64, 64, p.class_names(), 0);
  const Image bg = render_seabed(m, 16, p);
  for (auto kind : {TargetKind::Cylinder, TargetKind::Tyre}) {
    const TargetPlacement t{32, 20, kind, 5};
    const auto [img, map] = embed_target(bg, m, t, p);
    const Box hb = target_highlight_box(t);
    const Box fp = target_footprint(t, p);
    double hi = 0;
    int n = 0;
    for (int y = hb.y0; y < hb.y1; ++y)
      for (int x = hb.x0; x < hb.x1; ++x)
        if (map.at(y, x) == 3) {
          hi += img.at(0, y, x);
          ++n;
        }
    ASSERT_GT(n, 0);
    const double background = box_mean(bg, {0, 0, 16, 64});
    EXPECT_GT(hi / n, background);
    const Box shadow{t.y - 1, hb.x1 + 1, t.y + 2, std::min(fp.x1, hb.x1 + 4)};
    EXPECT_LT(box_mean(img, shadow), background);
  }
}

TEST(EmbedTarget, ChangesConfinedToFootprints) {
  const auto p = TerrainParams::defaults();
  const SemanticMap m(64, 96, p.class_names(), 0);
  const Image bg = render_seabed(m, 17, p);
  const TargetPlacement a{16, 16, TargetKind::Cylinder, 5}, b{44, 56, TargetKind::Tyre, 4};
  auto [i1, m1] = embed_target(bg, m, a, p);
  auto [i2, m2] = embed_target(i1, m1, b, p);
  const Box fa = target_footprint(a, p), fb = target_footprint(b, p);
  auto inside = [](const Box& f, int y, int x) {
    return y >= f.y0 && y < f.y1 && x >= f.x0 && x < f.x1;
  };
  int changed = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 96; ++x)
      if (i2.at(0, y, x) != bg.at(0, y, x) || m2.at(y, x) != m.at(y, x)) {
        ++changed;
        EXPECT_TRUE(inside(fa, y, x) || inside(fb, y, x)) << y << "," << x;
      }
  EXPECT_GT(changed, 0);
}

TEST(EmbedTarget, RejectsPlacementsOutsideTheImage) {
  const auto p = TerrainParams::defaults();
  const SemanticMap m(32, 32, p.class_names(), 0);
  EXPECT_THROW(embed_target(Image(1, 32, 32), m, {2, 2, TargetKind::Cylinder, 6}, p), InvalidInput);
}

TEST(Dataset, SinglePairWritesThreeFiles) {
  test_util::TempDir dir;
  const auto man = make_dataset(3, 1, 32, 32, TerrainParams::defaults(), dir.path);
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir.path)) files += e.is_regular_file();
  EXPECT_EQ(files, 3);
  EXPECT_EQ(man.pairs.size(), 1u);
}

TEST(Dataset, RegenerationIsBitIdentical) {
  test_util::TempDir a, b;
  const auto man = make_dataset(4, 3, 32, 48, TerrainParams::defaults(), a.path, 2);
  const auto reread = read_manifest(a.path / DatasetManifest::kFileName);
  const auto again = regenerate_dataset(reread, b.path);
  for (const auto& e : man.pairs) {
    EXPECT_EQ(sha256_file(a.path / e.image_file), sha256_file(b.path / e.image_file));
    EXPECT_EQ(sha256_file(a.path / e.map_file), sha256_file(b.path / e.map_file));
    EXPECT_EQ(sha256_file(a.path / e.image_file), e.image_sha256);
  }
  EXPECT_EQ(again.params_hash, man.params_hash);
}

TEST(Dataset, WorkerCountDoesNotChangeContent) {
  test_util::TempDir a, b;
  const auto one = make_dataset(5, 4, 32, 32, TerrainParams::defaults(), a.path, 1);
  const auto many = make_dataset(5, 4, 32, 32, TerrainParams::defaults(), b.path, 3);
  for (std::size_t i = 0; i < one.pairs.size(); ++i)
    EXPECT_EQ(one.pairs[i].image_sha256, many.pairs[i].image_sha256);
}

TEST(Dataset, ManyPairsGetDistinctSeeds) {
  std::set<std::uint64_t> seeds;
  for (int i = 0; i < 200; ++i) seeds.insert(pair_seed(7, i));
  EXPECT_EQ(seeds.size(), 200u);
}

TEST(Dataset, LoadPairMatchesQuantisedRender) {
  test_util::TempDir dir;
  const auto p = TerrainParams::defaults();
  const auto man = make_dataset(6, 2, 32, 32, p, dir.path);
  const auto [map, img] = load_pair(man, 1);
  const auto want_map = sample_semantic_map(man.pairs[1].seed, 32, 32, p);
  EXPECT_EQ(map, want_map);
  EXPECT_EQ(img, quantize8(render_seabed(want_map, derive_seed(man.pairs[1].seed, 0x1A6E), p)));
}

TEST(Dataset, CorruptedFileIsDetected) {
  test_util::TempDir dir;
  const auto man = make_dataset(8, 1, 32, 32, TerrainParams::defaults(), dir.path);
  {
    std::ofstream f(dir.path / man.pairs[0].image_file, std::ios::binary | std::ios::app);
    f << "x";
  }
  EXPECT_ANY_THROW(load_pair(read_manifest(dir.path / DatasetManifest::kFileName), 0));
}

TEST(TerrainParams, ValidationRejectsOutOfRange) {
  TerrainParams p = TerrainParams::defaults();
  p.classes[0].reflectivity = 1.5;
  EXPECT_THROW(p.validate(), ConfigError);
  p = TerrainParams::defaults();
  p.classes[1].ripple_wavelength = 1.0;
  EXPECT_THROW(p.validate(), ConfigError);
}
