// Command-line front end: make-data, train, generate, evaluate, benchmark.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "r2d2/config.hpp"
#include "r2d2/errors.hpp"
#include "r2d2/evaluation.hpp"
#include "r2d2/hashing.hpp"
#include "r2d2/inference.hpp"
#include "r2d2/raster_io.hpp"
#include "r2d2/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace r2d2;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

fs::path default_data_dir() {
  if (const char* root = std::getenv("R2D2_DATA_ROOT"); root && *root)
    return fs::path(root) / "dataset";
  return "data";
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// Flags shared by every command; unset flags leave the file/default value.
struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

RunConfig load_config(const Overrides& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
  c.validate();
  return c;
}

bool dataset_up_to_date(const fs::path& dir, const RunConfig& c) {
  const fs::path manifest_path = dir / DatasetManifest::kFileName;
  if (!fs::exists(manifest_path)) return false;
  DatasetManifest m;
  try {
    m = read_manifest(manifest_path);
  } catch (const std::exception&) {
    return false;
  }
  if (m.seed != c.data.seed || m.n_pairs != c.data.n_pairs || m.height != c.grid.image_height() ||
      m.width != c.grid.image_width() || !(m.params == c.terrain))
    return false;
  for (const auto& e : m.pairs) {
    if (!fs::exists(dir / e.map_file) || !fs::exists(dir / e.image_file)) return false;
    if (sha256_file(dir / e.map_file) != e.map_sha256 ||
        sha256_file(dir / e.image_file) != e.image_sha256)
      return false;
  }
  return true;
}

ModelParams<float> load_params(const fs::path& checkpoint, const RunConfig& c) {
  ModelState s = load_checkpoint(checkpoint);
  if (s.params.layout.num_classes != c.layout().num_classes)
    throw ConfigError("checkpoint expects " + std::to_string(s.params.layout.num_classes) +
                      " terrain classes, config defines " + std::to_string(c.layout().num_classes));
  return std::move(s.params);
}

TileGridSpec spec_for(const ModelParams<float>& p, int rows, int cols) {
  return TileGridSpec::make(p.layout.tile_size, rows, cols, p.layout.channels,
                            p.layout.snippet_width);
}

json seam_json(const SeamReport& s) {
  json j = {{"boundary_gradient_mean", s.boundary_gradient_mean},
            {"interior_gradient_mean", s.interior_gradient_mean},
            {"boundary_pairs", s.boundary_pairs},
            {"interior_pairs", s.interior_pairs}};
  if (!s.seam_ratio)
    j["seam_ratio"] = nullptr;
  else if (std::isinf(*s.seam_ratio))
    j["seam_ratio"] = "inf";
  else
    j["seam_ratio"] = *s.seam_ratio;
  return j;
}

json texture_json(const TextureReport& r) {
  json j = json::object();
  for (const auto& [name, s] : r)
    j[name] = {{"present", s.present},
               {"pixels", s.pixels},
               {"mean", s.mean},
               {"variance", s.variance},
               {"spectrum", s.spectrum}};
  return j;
}

json finite_or_string(double v) { return std::isfinite(v) ? json(v) : json("inf"); }

// ----------------------------------------------------------------- commands

int cmd_make_data(const Overrides& o, const std::string& out_flag, std::optional<int> pairs) {
  RunConfig c = load_config(o);
  if (o.seed) c.data.seed = *o.seed;
  if (o.workers) c.data.workers = *o.workers;
  if (pairs) c.data.n_pairs = *pairs;
  c.validate();
  const fs::path out = out_flag.empty() ? default_data_dir() : fs::path(out_flag);
  const std::string hash = config_hash(c);
  const fs::path manifest_path = out / DatasetManifest::kFileName;
  if (dataset_up_to_date(out, c)) {
    DatasetManifest m = read_manifest(manifest_path);
    if (m.config_hash != hash) {
      m.config_hash = hash;
      write_manifest(m, manifest_path);
    }
    std::cout << manifest_path.string() << '\n';
    return 0;
  }
  make_dataset(c.data.seed, c.data.n_pairs, c.grid.image_height(), c.grid.image_width(), c.terrain,
               out, c.data.workers, hash);
  save_run_config(c, out / "config.json");
  std::cout << manifest_path.string() << '\n';
  return 0;
}

struct TrainFlags {
  std::string data;
  std::string out = "run";
  std::optional<int> epochs, batch;
  std::optional<std::int64_t> max_steps;
  bool resume = false;
};

int cmd_train(const Overrides& o, const TrainFlags& f) {
  RunConfig c = load_config(o);
  if (o.seed) c.training.seed = *o.seed;
  if (f.epochs) c.training.epochs = *f.epochs;
  if (f.batch) c.training.batch_size = *f.batch;
  if (f.max_steps) c.training.max_steps = *f.max_steps;
  c.validate();
  const fs::path data = f.data.empty() ? default_data_dir() : fs::path(f.data);
  const DatasetManifest manifest = read_manifest(data);
  if (!(manifest.params == c.terrain))
    throw ConfigError("dataset terrain parameters differ from the config's terrain section");
  const TrainingData samples =
      TrainingData::from_manifest(manifest, c.grid.tile_size, c.grid.snippet_width, c.training);
  const fs::path out(f.out);
  fs::create_directories(out);
  // The run config excludes max_steps so an interrupted run resumes under the same hash.
  RunConfig recorded = c;
  recorded.training.max_steps = 0;
  const std::string hash = config_hash(recorded);
  save_run_config(recorded, out / "config.json");

  ModelState state = init_model(c.generator, c.discriminator, c.layout(), c.training.seed);
  TrainOptions options;
  options.resume = f.resume;
  options.provenance = "config_sha256=" + hash + ";dataset=" + manifest.params_hash;
  const TrainResult r = train(samples, state, c.training, out, options);
  std::cerr << (r.completed ? "training complete" : "training stopped") << " at step " << r.g_steps
            << '\n';
  std::cout << r.checkpoint.string() << '\n';
  return 0;
}

struct GenerateFlags {
  std::string checkpoint;
  std::string map;
  std::string starboard_map;
  std::string out = "mission";
  int wavefront = 0;
  bool zero_conditions = false;
};

int cmd_generate(const Overrides& o, const GenerateFlags& f) {
  RunConfig c = load_config(o);
  if (o.seed) c.mission.seed = *o.seed;
  if (f.wavefront > 0) c.mission.workers = f.wavefront;
  if (f.zero_conditions) c.mission.zero_conditions = true;
  c.validate();
  const ModelParams<float> params = load_params(f.checkpoint, c);
  const int t = params.layout.tile_size;

  auto request_for = [&](const std::string& map_file, std::uint64_t seed) {
    MissionRequest req;
    if (map_file.empty()) {
      req.spec = spec_for(params, c.mission.grid_rows, c.mission.grid_cols);
      req.semantic_map = sample_semantic_map(derive_seed(seed, 0x3A9), req.spec.image_height(),
                                             req.spec.image_width(), c.terrain);
    } else {
      req.semantic_map = read_label_pgm(map_file, c.terrain.class_names());
      const SemanticMap& m = req.semantic_map;
      if (m.height % t || m.width % t)
        throw InvalidInput("semantic map " + map_file + " is " + std::to_string(m.height) + "x" +
                           std::to_string(m.width) + "; both dimensions must be multiples of " +
                           std::to_string(t));
      req.spec = spec_for(params, m.height / t, m.width / t);
    }
    req.master_seed = seed;
    req.zero_conditions = c.mission.zero_conditions;
    return req;
  };
  auto run = [&](const MissionRequest& req) {
    return c.mission.workers > 1 ? generate_mission_wavefront(params, req, c.mission.workers)
                                 : generate_mission(params, req);
  };

  const std::string ckpt_hash = sha256_file(f.checkpoint);
  const std::string cfg_hash = config_hash(c);
  const MissionRequest port = request_for(f.map, c.mission.seed);
  const Mission mission = run(port);
  write_mission(mission, f.out, ckpt_hash, cfg_hash);
  if (f.map.empty()) write_label_pgm(f.out + "_map.pgm", mission.semantic_map);
  if (!f.starboard_map.empty()) {
    const Mission starboard = run(request_for(f.starboard_map, derive_seed(c.mission.seed, 0x57B)));
    write_mission(starboard, f.out + "_starboard", ckpt_hash, cfg_hash);
    write_pgm(f.out + "_two_sided.pgm", two_sided_image(mission, starboard));
  }
  std::cout << f.out << ".pgm\n";
  return 0;
}

int cmd_evaluate(const Overrides& o, const std::string& checkpoint, const std::string& out_flag,
                 bool atr) {
  RunConfig c = load_config(o);
  if (o.seed) c.evaluation.seed = *o.seed;
  if (atr) c.evaluation.atr = true;
  c.validate();
  const ModelParams<float> params = load_params(checkpoint, c);
  const fs::path out(out_flag);
  fs::create_directories(out);
  const TileGridSpec spec = spec_for(params, c.mission.grid_rows, c.mission.grid_cols);
  if (spec.tile_count() < 2) throw ConfigError("evaluation needs a mission grid with >= 2 tiles");

  json report;
  report["checkpoint_sha256"] = sha256_file(checkpoint);
  report["config_sha256"] = config_hash(c);

  const ContinuityReport cont =
      continuity_experiment(params, c.terrain, spec, c.evaluation.missions, c.evaluation.seed);
  json ratios = json::array(), ablation = json::array();
  for (double r : cont.ratios) ratios.push_back(finite_or_string(r));
  for (double r : cont.ablation_ratios) ablation.push_back(finite_or_string(r));
  report["continuity"] = {{"missions", c.evaluation.missions},
                          {"seam_ratios", ratios},
                          {"ablation_seam_ratios", ablation},
                          {"median_seam_ratio", finite_or_string(cont.median_ratio)},
                          {"median_ablation_seam_ratio", finite_or_string(cont.median_ablation)},
                          {"improvement", finite_or_string(cont.improvement)}};

  // One mission against the oracle rendering of the same map.
  MissionRequest req;
  req.spec = spec;
  req.semantic_map = sample_semantic_map(derive_seed(c.evaluation.seed, 0xE7A1),
                                         spec.image_height(), spec.image_width(), c.terrain);
  req.master_seed = derive_seed(c.evaluation.seed, 0xE7A2);
  const Mission generated = generate_mission(params, req);
  const Image oracle = render_seabed(req.semantic_map, req.master_seed, c.terrain);
  report["seam_generated"] = seam_json(seam_score(generated.image, spec, c.evaluation.seed));
  report["seam_oracle"] = seam_json(seam_score(oracle, spec, c.evaluation.seed));
  report["texture_generated"] = texture_json(texture_stats(generated.image, req.semantic_map));
  report["texture_oracle"] = texture_json(texture_stats(oracle, req.semantic_map));

  const auto real_tiles = partition_image(oracle, spec);
  const auto gen_tiles = partition_image(generated.image, spec);
  const std::size_t n = std::min<std::size_t>(c.evaluation.sheet_tiles, real_tiles.size());
  write_pgm(out / "comparison.pgm", comparison_sheet({real_tiles.begin(), real_tiles.begin() + n},
                                                     {gen_tiles.begin(), gen_tiles.begin() + n}));
  write_pgm(out / "mission.pgm", generated.image);

  if (c.evaluation.atr) {
    json atr_runs = json::array();
    for (std::uint64_t seed : c.atr.seeds) {
      const AtrReport r = atr_experiment(params, c.terrain, c.atr, seed);
      json sets = json::array();
      for (const auto& s : r.sets)
        sets.push_back({{"id", s.id},
                        {"train_positives", s.train_positives},
                        {"train_negatives", s.train_negatives},
                        {"recall", s.recall},
                        {"precision", s.precision},
                        {"f1", s.f1}});
      atr_runs.push_back({{"seed", seed},
                          {"test_positives", r.test_positives},
                          {"test_negatives", r.test_negatives},
                          {"sets", sets}});
    }
    report["atr"] = atr_runs;
  }
  write_json(out / "report.json", report);
  std::cout << (out / "report.json").string() << '\n';
  return 0;
}

int cmd_benchmark(const Overrides& o, const std::string& checkpoint, const std::string& preset,
                  const std::string& out) {
  RunConfig c = load_config(o);
  if (o.seed) c.benchmark.seed = *o.seed;
  if (preset != "all") {
    std::vector<AcquisitionPreset> keep;
    for (const auto& p : c.benchmark.presets)
      if (p.name == preset) keep.push_back(p);
    if (keep.empty()) throw ConfigError("unknown benchmark preset '" + preset + "'");
    c.benchmark.presets = keep;
  }
  c.validate();
  const ModelParams<float> params = load_params(checkpoint, c);
  const BenchmarkReport r = benchmark_throughput(params, c.terrain, c.benchmark);
  json runs = json::array();
  for (const auto& run : r.runs) runs.push_back({{"tiles", run.tiles}, {"seconds", run.seconds}});
  json presets = json::array();
  for (const auto& p : r.presets)
    presets.push_back({{"name", p.name},
                       {"across_track_pixels", p.across_track_pixels},
                       {"channels", p.channels},
                       {"acquisition_lines_per_second", p.acquisition_lines_per_second},
                       {"generated_lines_per_second", p.generated_lines_per_second},
                       {"ratio_vs_acquisition", p.ratio}});
  const json j = {{"hardware", r.hardware},
                  {"tile_size", r.tile_size},
                  {"runs", runs},
                  {"tiles_per_second", r.tiles_per_second},
                  {"pixels_per_second", r.pixels_per_second},
                  {"linear_fit_r_squared", r.r_squared},
                  {"seconds_per_tile", r.slope_seconds_per_tile},
                  {"presets", presets},
                  {"checkpoint_sha256", sha256_file(checkpoint)},
                  {"config_sha256", config_hash(c)}};
  if (out.empty() || out == "-")
    std::cout << j.dump(2) << '\n';
  else
    write_json(out, j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recursive tiled sonar image synthesis"};
  app.require_subcommand(1);
  Overrides o;
  std::uint64_t seed = 0;
  int workers = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", o.config_path, "Run config (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "Seed override");
  };

  std::string data_out;
  int pairs = 0;
  auto* make_data = app.add_subcommand("make-data", "Render an oracle dataset");
  add_common(make_data);
  make_data->add_option("-o,--out", data_out, "Output directory (default $R2D2_DATA_ROOT/dataset)");
  make_data->add_option("--pairs", pairs, "Number of (map, image) pairs");
  make_data->add_option("--workers", workers, "Parallel workers");

  TrainFlags tf;
  int epochs = 0, batch = 0;
  std::int64_t max_steps = 0;
  auto* train_cmd = app.add_subcommand("train", "Train G, D1 and D2");
  add_common(train_cmd);
  train_cmd->add_option("-d,--data", tf.data, "Dataset directory or manifest");
  train_cmd->add_option("-o,--out", tf.out, "Run directory for checkpoints and metrics");
  train_cmd->add_option("--epochs", epochs, "Epochs");
  train_cmd->add_option("--batch", batch, "Batch size");
  train_cmd->add_option("--max-steps", max_steps, "Stop once this many generator steps exist");
  train_cmd->add_flag("--resume", tf.resume, "Continue from the run directory's checkpoint");

  GenerateFlags gf;
  auto* generate = app.add_subcommand("generate", "Generate a mission tile by tile");
  add_common(generate);
  generate->add_option("-k,--checkpoint", gf.checkpoint, "Checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  generate->add_option("-m,--map", gf.map, "Semantic map (label PGM); sampled when omitted");
  generate->add_option("--starboard-map", gf.starboard_map, "Second side for a two-sided line");
  generate->add_option("-o,--out", gf.out, "Output stem (<stem>.pgm, <stem>.json)");
  generate->add_option("--wavefront", gf.wavefront, "Generate anti-diagonals on N workers");
  generate->add_flag("--zero-conditions", gf.zero_conditions,
                     "Ablation: ignore neighbour snippets");

  std::string eval_ckpt, eval_out = "evaluation";
  bool eval_atr = false;
  auto* evaluate = app.add_subcommand("evaluate", "Seam, texture and optional ATR reports");
  add_common(evaluate);
  evaluate->add_option("-k,--checkpoint", eval_ckpt, "Checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("-o,--out", eval_out, "Report directory");
  evaluate->add_flag("--atr", eval_atr, "Also run the ATR experiment");

  std::string bench_ckpt, bench_preset = "all", bench_out;
  auto* bench = app.add_subcommand("benchmark", "Throughput against sensor acquisition rates");
  add_common(bench);
  bench->add_option("-k,--checkpoint", bench_ckpt, "Checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  bench->add_option("--preset", bench_preset, "marinesonic, edgetech or all");
  bench->add_option("-o,--out", bench_out, "Report file (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  auto given = [](CLI::App* cmd, const char* name) { return cmd->count(name) > 0; };
  try {
    CLI::App* cmd = app.get_subcommands().front();
    if (given(cmd, "--seed")) o.seed = seed;
    if (cmd == make_data) {
      if (given(cmd, "--workers")) o.workers = workers;
      return cmd_make_data(o, data_out,
                           given(cmd, "--pairs") ? std::optional<int>(pairs) : std::nullopt);
    }
    if (cmd == train_cmd) {
      if (given(cmd, "--epochs")) tf.epochs = epochs;
      if (given(cmd, "--batch")) tf.batch = batch;
      if (given(cmd, "--max-steps")) tf.max_steps = max_steps;
      return cmd_train(o, tf);
    }
    if (cmd == generate) return cmd_generate(o, gf);
    if (cmd == evaluate) return cmd_evaluate(o, eval_ckpt, eval_out, eval_atr);
    return cmd_benchmark(o, bench_ckpt, bench_preset, bench_out);
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
