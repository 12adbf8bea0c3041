// Acceptance run: one PASS/FAIL line per criterion.
//
//   r2d2_acceptance [work_dir] [--only N[,N...]]
//
// Criteria 6, 7 and 9 use the checkpoint trained for criterion 5; when they
// run without it (--only) they train it first.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "loss_oracle.hpp"
#include "micro.hpp"
#include "r2d2/config.hpp"
#include "r2d2/evaluation.hpp"
#include "r2d2/hashing.hpp"
#include "r2d2/inference.hpp"
#include "r2d2/seabed_oracle.hpp"
#include "r2d2/tiling.hpp"
#include "r2d2/training.hpp"

using namespace r2d2;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

ModelParams<double> micro_params(std::uint64_t seed) {
  auto p = init_params<double>(micro::generator(), micro::discriminator(), micro::layout(), seed);
  micro::jitter_biases(p.g, seed + 1);
  micro::jitter_biases(p.d1, seed + 2);
  micro::jitter_biases(p.d2, seed + 3);
  return p;
}

Outcome loss_oracle() {
  const auto t0 = Clock::now();
  double worst = 0;
  for (std::uint64_t seed : {3u, 17u, 99u, 1234u}) {
    auto p = micro_params(seed);
    const auto batch = micro::batch(seed * 7, 4, p.layout, p.gen.noise_channels);
    const TrainingConfig cfg;
    const auto want = oracle::losses(batch, p, cfg);
    const auto g = generator_loss(batch, p, cfg);
    const auto d = discriminator_losses(batch, p, cfg);
    for (double e : {g.total - want.g_total, g.l1 - want.l1, g.adv1 - want.adv1, g.adv2 - want.adv2,
                     d.d1 - want.d1, d.d2 - want.d2})
      worst = std::max(worst, std::abs(e));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && secs < 10.0,
          "max abs error " + fmt(worst) + " (<= 1e-6), " + fmt(secs, 3) + " s (< 10 s)"};
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  GeneratorConfig gc = micro::generator();
  gc.downsamples = 0;
  gc.stem_kernel = 1;
  const ModelLayout l = micro::layout();
  auto p = init_params<double>(gc, micro::discriminator(), l, 41);
  micro::jitter_biases(p.g, 42);
  micro::jitter_biases(p.d1, 43);
  micro::jitter_biases(p.d2, 44);
  const std::size_t n_params = p.g.scalar_count();
  const auto batch = micro::batch(45, 2, l, gc.noise_channels);
  const TrainingConfig cfg;
  p.g.zero_grad();
  generator_loss(batch, p, cfg, true);

  std::vector<std::pair<Parameter<double>*, std::size_t>> all;
  for (auto& prm : p.g)
    for (std::size_t i = 0; i < prm.value.data.size(); ++i) all.emplace_back(&prm, i);
  std::mt19937_64 rng(46);
  std::shuffle(all.begin(), all.end(), rng);

  const double h = 1e-4;
  const std::size_t sampled = std::min<std::size_t>(60, all.size());
  double worst = 0;
  for (std::size_t k = 0; k < sampled; ++k) {
    auto [prm, i] = all[k];
    const double analytic = prm->grad.data[i];
    const double orig = prm->value.data[i];
    auto loss_at = [&](double v) {
      prm->value.data[i] = v;
      return generator_loss(batch, p, cfg).total;
    };
    // Five-point stencil: O(h^4) truncation, so h can stay large enough to
    // keep round-off small.
    const double numeric = (-loss_at(orig + 2 * h) + 8 * loss_at(orig + h) - 8 * loss_at(orig - h) +
                            loss_at(orig - 2 * h)) /
                           (12 * h);
    prm->value.data[i] = orig;
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic - numeric) / scale);
  }
  const double secs = seconds_since(t0);
  const bool ok = n_params <= 500 && sampled >= 50 && worst < 1e-4 && secs < 60.0;
  return {ok, std::to_string(n_params) + " params, " + std::to_string(sampled) +
                  " sampled, max rel error " + fmt(worst) + " (< 1e-4), " + fmt(secs, 3) +
                  " s (< 60 s)"};
}

Outcome tiling() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> tile(8, 40), grid(1, 5), chans(1, 2);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  int round_trips = 0, snippet_checks = 0, replace_checks = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto spec = TileGridSpec::make(tile(rng), grid(rng), grid(rng), chans(rng));
    const int t = spec.tile_size, s = spec.snippet_width;
    Image img(spec.channels, spec.image_height(), spec.image_width());
    for (auto& v : img.data) v = u(rng);
    const auto tiles = partition_image(img, spec);
    if (stitch(tiles, spec) != img)
      return {false, "round trip differs at trial " + std::to_string(trial)};
    ++round_trips;

    for (int r = 0; r < spec.grid_rows; ++r)
      for (int c = 0; c < spec.grid_cols; ++c) {
        const auto cs = extract_conditions(tiles, r, c, spec);
        if (r > 0 && cs.c1 != crop_image(tiles[(r - 1) * spec.grid_cols + c], t - s, 0, s, t))
          return {false, "c1 differs from the upper strip"};
        if (c > 0 && cs.c2 != crop_image(tiles[r * spec.grid_cols + c - 1], 0, t - s, t, s))
          return {false, "c2 differs from the left strip"};
        ++snippet_checks;
      }

    if (spec.grid_rows >= 2 && spec.grid_cols >= 2) {
      SemanticMap map(spec.image_height(), spec.image_width(), {"a", "b"});
      const int slot = trial % 4;
      const Quad q = compose_quad(img, map, 0, 0, spec, static_cast<QuadSlot>(slot));
      Image fresh(spec.channels, t, t);
      for (auto& v : fresh.data) v = 2.0f + u(rng);
      const Quad out = replace_tile(q, fresh);
      const auto [oy, ox] = q.slot_offset();
      std::size_t changed = 0;
      for (int ch = 0; ch < spec.channels; ++ch)
        for (int y = 0; y < 2 * t; ++y)
          for (int x = 0; x < 2 * t; ++x) {
            const bool inside = y >= oy && y < oy + t && x >= ox && x < ox + t;
            const bool diff = out.image.at(ch, y, x) != q.image.at(ch, y, x);
            if (diff && !inside) return {false, "replace_tile wrote outside the target block"};
            if (inside && out.image.at(ch, y, x) != fresh.at(ch, y - oy, x - ox))
              return {false, "replace_tile target block mismatch"};
            changed += diff;
          }
      if (changed != static_cast<std::size_t>(t) * t * spec.channels)
        return {false, "replace_tile changed " + std::to_string(changed) + " pixels"};
      ++replace_checks;
    }
  }
  const double secs = seconds_since(t0);
  return {secs < 10.0, std::to_string(round_trips) + " round trips, " +
                           std::to_string(snippet_checks) + " snippet checks, " +
                           std::to_string(replace_checks) + " replace checks, " + fmt(secs, 3) +
                           " s (< 10 s)"};
}

Outcome counters() {
  RunConfig c;
  c.grid = TileGridSpec::make(16, 2, 2);
  c.generator.resnet_blocks = 1;
  c.generator.base_width = 4;
  c.generator.downsamples = 1;
  c.generator.stem_kernel = 3;
  c.discriminator.levels = 2;
  c.discriminator.base_width = 4;
  std::vector<std::pair<SemanticMap, Image>> pairs;
  for (int i = 0; i < 3; ++i) {
    const auto m = sample_semantic_map(100 + i, 32, 32, c.terrain);
    pairs.emplace_back(m, render_seabed(m, 200 + i, c.terrain));
  }
  const TrainingData data(pairs, c.grid, c.training);
  ModelState st = init_model(c.generator, c.discriminator, c.layout(), 5);
  for (std::int64_t step = 0; step < 7; ++step) {
    train_step(data.batch(step, c.generator.noise_channels), st, c.training, 9 + step);
    const auto& k = st.counters;
    if (k.d1_steps != 3 * k.g_steps || k.d2_steps != k.g_steps || k.g_steps != step + 1)
      return {false, "counters g=" + std::to_string(k.g_steps) +
                         " d1=" + std::to_string(k.d1_steps) + " d2=" + std::to_string(k.d2_steps)};
  }
  return {true,
          "d1 = 3g and d2 = g after each of 7 steps (g = " + std::to_string(st.counters.g_steps) +
              ", d1 = " + std::to_string(st.counters.d1_steps) + ")"};
}

/// Desk-scale reference run shared by criteria 5 to 9.
struct Reference {
  RunConfig config;
  fs::path data_dir;
  fs::path run_dir;
  DatasetManifest manifest;
  std::optional<ModelState> state;
  double train_seconds = 0;
  std::vector<StepMetrics> log;
};

void train_reference(Reference& ref) {
  const auto t0 = Clock::now();
  const RunConfig& c = ref.config;
  fs::remove_all(ref.data_dir);
  fs::remove_all(ref.run_dir);
  ref.manifest = make_dataset(c.data.seed, c.data.n_pairs, c.grid.image_height(),
                              c.grid.image_width(), c.terrain, ref.data_dir, 1, config_hash(c));
  const auto data =
      TrainingData::from_manifest(ref.manifest, c.grid.tile_size, c.grid.snippet_width, c.training);
  ModelState st = init_model(c.generator, c.discriminator, c.layout(), c.training.seed);
  TrainOptions opt;
  opt.provenance = "acceptance";
  std::int64_t total = c.training.epochs * data.steps_per_epoch();
  opt.on_step = [&](const StepMetrics& m) {
    if (m.step % 50 == 0 || m.step == total)
      std::cout << "  train step " << m.step << "/" << total << " l1 " << fmt(m.l1) << " ("
                << fmt(seconds_since(t0), 4) << " s)" << std::endl;
  };
  train(data, st, c.training, ref.run_dir, opt);
  ref.train_seconds = seconds_since(t0);
  ref.state = std::move(st);
  ref.log = read_metrics_log(ref.run_dir / kMetricsFile);
}

Outcome continuity(Reference& ref) {
  const auto t0 = Clock::now();
  const RunConfig& c = ref.config;
  const auto r = continuity_experiment(ref.state->params, c.terrain, c.grid, c.evaluation.missions,
                                       c.evaluation.seed);
  const double secs = ref.train_seconds + seconds_since(t0);
  const bool ok = r.improvement >= 1.3 && r.median_ratio <= 1.5 && secs <= 1800.0;
  return {ok, "median seam ratio " + fmt(r.median_ratio) + " (<= 1.5), ablation " +
                  fmt(r.median_ablation) + ", improvement " + fmt(r.improvement) + " (>= 1.3), " +
                  std::to_string(c.evaluation.missions) + " missions, " + fmt(secs, 4) +
                  " s incl. training (<= 1800 s)"};
}

MissionRequest mission_request(const RunConfig& c, int rows, int cols, std::uint64_t seed) {
  MissionRequest req;
  req.spec =
      TileGridSpec::make(c.grid.tile_size, rows, cols, c.grid.channels, c.grid.snippet_width);
  req.semantic_map = sample_semantic_map(derive_seed(seed, 0x3A9), req.spec.image_height(),
                                         req.spec.image_width(), c.terrain);
  req.master_seed = seed;
  return req;
}

Outcome wavefront(Reference& ref) {
  const auto& params = ref.state->params;
  int compared = 0;
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const auto req = mission_request(ref.config, 8, 8, seed);
    const Image seq = generate_mission(params, req).image;
    for (int w : {1, 2, 4}) {
      if (generate_mission_wavefront(params, req, w).image != seq)
        return {false, "seed " + std::to_string(seed) + " workers " + std::to_string(w) +
                           " differs from sequential"};
      ++compared;
    }
  }
  return {true, std::to_string(compared) +
                    " wavefront missions (8x8, 5 seeds, workers 1/2/4) "
                    "bit-identical to sequential"};
}

Outcome atr(Reference& ref) {
  const auto t0 = Clock::now();
  const RunConfig& c = ref.config;
  int beats_noise = 0, oracle_ge = 0;
  std::ostringstream per_seed;
  for (std::uint64_t seed : c.atr.seeds) {
    const auto rep = atr_experiment(ref.state->params, c.terrain, c.atr, seed);
    const double gen = rep.at("r2d2_generated").f1, noise = rep.at("noise").f1,
                 orc = rep.at("oracle").f1;
    beats_noise += gen > noise;
    oracle_ge += orc >= gen;
    per_seed << " [seed " << seed << ": noise " << fmt(noise, 3) << ", degraded "
             << fmt(rep.at("degraded_oracle").f1, 3) << ", r2d2 " << fmt(gen, 3) << ", oracle "
             << fmt(orc, 3) << "]";
    std::cout << "  atr" << per_seed.str().substr(per_seed.str().rfind(" [")) << std::endl;
  }
  const int n = static_cast<int>(c.atr.seeds.size());
  const double secs = seconds_since(t0);
  const bool ok = n == 3 && beats_noise == n && oracle_ge >= 2 && secs <= 1200.0;
  return {ok, "F1 r2d2 > noise in " + std::to_string(beats_noise) + "/" + std::to_string(n) +
                  ", oracle >= r2d2 in " + std::to_string(oracle_ge) + "/" + std::to_string(n) +
                  "," + per_seed.str() + ", " + fmt(secs, 4) + " s (<= 1200 s)"};
}

std::vector<std::string> log_without_timing(const std::vector<StepMetrics>& log) {
  std::vector<std::string> out;
  for (StepMetrics m : log) {
    m.wall_ms = 0;
    out.push_back(metrics_to_json_line(m));
  }
  return out;
}

Outcome determinism(Reference& ref, const fs::path& work) {
  const RunConfig& c = ref.config;
  // Dataset: regenerate from scratch and compare every file.
  const fs::path again = work / "data_again";
  fs::remove_all(again);
  const auto m2 = make_dataset(c.data.seed, c.data.n_pairs, c.grid.image_height(),
                               c.grid.image_width(), c.terrain, again, 1, config_hash(c));
  int files = 0;
  for (std::size_t i = 0; i < ref.manifest.pairs.size(); ++i) {
    const auto& a = ref.manifest.pairs[i];
    const auto& b = m2.pairs[i];
    for (const auto& [fa, fb] :
         {std::pair{a.image_file, b.image_file}, std::pair{a.map_file, b.map_file}}) {
      if (sha256_file(ref.data_dir / fa) != sha256_file(again / fb))
        return {false, "dataset file " + fa + " differs"};
      ++files;
    }
  }
  if (sha256_file(ref.data_dir / DatasetManifest::kFileName) !=
      sha256_file(again / DatasetManifest::kFileName))
    return {false, "dataset manifest differs"};

  // Training: a second run over the first epoch, compared step by step.
  const auto data =
      TrainingData::from_manifest(m2, c.grid.tile_size, c.grid.snippet_width, c.training);
  TrainingConfig short_cfg = c.training;
  short_cfg.max_steps = data.steps_per_epoch();
  const fs::path run2 = work / "run_again";
  fs::remove_all(run2);
  ModelState st = init_model(c.generator, c.discriminator, c.layout(), c.training.seed);
  train(data, st, short_cfg, run2);
  const auto a = log_without_timing(ref.log);
  const auto b = log_without_timing(read_metrics_log(run2 / kMetricsFile));
  if (b.size() != static_cast<std::size_t>(short_cfg.max_steps) || a.size() < b.size() ||
      !std::equal(b.begin(), b.end(), a.begin()))
    return {false, "metrics log differs from the reference run"};

  // Missions: two independent loads of the reference checkpoint.
  int missions = 0;
  for (std::uint64_t seed : {21u, 22u}) {
    const auto p1 = load_checkpoint(ref.run_dir / kCheckpointFile).params;
    const auto p2 = load_checkpoint(ref.run_dir / kCheckpointFile).params;
    const auto req = mission_request(c, 4, 4, seed);
    if (generate_mission(p1, req).image != generate_mission(p2, req).image)
      return {false, "mission differs for seed " + std::to_string(seed)};
    ++missions;
  }
  return {true, std::to_string(files) + " dataset files + manifest identical, " +
                    std::to_string(b.size()) + " logged steps identical (wall_ms excluded), " +
                    std::to_string(missions) + " missions identical"};
}

Outcome throughput(Reference& ref) {
  const auto rep =
      benchmark_throughput(ref.state->params, ref.config.terrain, ref.config.benchmark);
  bool presets = false;
  std::ostringstream s;
  s << fmt(rep.tiles_per_second) << " tiles/s, R^2 " << fmt(rep.r_squared, 5) << " over "
    << rep.runs.size() << " grid sizes";
  std::set<int> widths;
  for (const auto& p : rep.presets) {
    widths.insert(p.across_track_pixels);
    s << ", " << p.name << " (" << p.across_track_pixels << " px) ratio " << fmt(p.ratio);
  }
  presets = widths.count(512) && widths.count(4620);
  const bool ok =
      presets && rep.runs.size() >= 4 && rep.r_squared >= 0.98 && rep.tiles_per_second > 0;
  s << " (" << rep.hardware << ")";
  return {ok, s.str()};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = "acceptance_work";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      work = a;
    }
  }
  fs::create_directories(work);

  Reference ref;
  ref.data_dir = work / "data";
  ref.run_dir = work / "run";
  auto need_reference = [&] {
    if (!ref.state) train_reference(ref);
  };

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, loss_oracle},
      {2, gradient_check},
      {3, tiling},
      {4, counters},
      {5,
       [&] {
         need_reference();
         return continuity(ref);
       }},
      {6,
       [&] {
         need_reference();
         return wavefront(ref);
       }},
      {7,
       [&] {
         need_reference();
         return atr(ref);
       }},
      {8,
       [&] {
         need_reference();
         return determinism(ref, work);
       }},
      {9,
       [&] {
         need_reference();
         return throughput(ref);
       }},
  };
  const char* names[] = {
      "",           "loss oracle", "gradient check", "tiling exactness", "schedule",
      "continuity", "wavefront",   "atr ordering",   "determinism",      "throughput"};

  int failed = 0;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << names[id]
              << "): " << o.detail << " [" << fmt(seconds_since(t0), 4) << " s]" << std::endl;
  }
  if (ref.state && ref.log.size() >= 20) {
    // Module-level training check, reported for reference.
    double early = 0, late = 0;
    for (int i = 0; i < 10; ++i) {
      early += ref.log[i].l1 / 10;
      late += ref.log[ref.log.size() - 1 - i].l1 / 10;
    }
    std::cout << "INFO desk run L1: mean of first 10 steps " << fmt(early) << ", last 10 steps "
              << fmt(late) << " (" << fmt(100.0 * (1.0 - late / early), 3) << "% lower)"
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
