#include "r2d2/config.hpp"

#include <fstream>
#include <set>
#include <type_traits>

#include "r2d2/errors.hpp"
#include "r2d2/hashing.hpp"

namespace r2d2 {

using nlohmann::json;

namespace {

/// Reads the keys of one JSON object and rejects any it was not asked for.
class Fields {
 public:
  Fields(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError(section_ + ": expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    const json& v = *it;
    bool ok;
    if constexpr (std::is_same_v<T, bool>)
      ok = v.is_boolean();
    else if constexpr (std::is_unsigned_v<T>)
      ok = v.is_number_unsigned();
    else if constexpr (std::is_integral_v<T>)
      ok = v.is_number_integer();
    else if constexpr (std::is_floating_point_v<T>)
      ok = v.is_number();
    else if constexpr (std::is_same_v<T, std::string>)
      ok = v.is_string();
    else
      ok = true;
    if (!ok) throw ConfigError(where(key) + ": wrong type (" + v.dump() + ")");
    try {
      out = v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  const json* sub(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string where(const std::string& key) const {
    return section_.empty() ? key : section_ + "." + key;
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ConfigError("unknown key '" + where(item.key()) + "'");
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

std::string norm_name(NormKind k) { return k == NormKind::Instance ? "instance" : "none"; }

NormKind parse_norm(const std::string& s, const std::string& where) {
  if (s == "none") return NormKind::None;
  if (s == "instance") return NormKind::Instance;
  throw ConfigError(where + ": expected \"none\" or \"instance\", got \"" + s + "\"");
}

template <typename T>
std::vector<T> get_array(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array");
  try {
    return v.get<std::vector<T>>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

// ----------------------------------------------------------------- terrain

json terrain_to_json(const TerrainParams& p) {
  json classes = json::array();
  for (const auto& c : p.classes)
    classes.push_back({{"name", c.name},
                       {"reflectivity", c.reflectivity},
                       {"ripple_amplitude", c.ripple_amplitude},
                       {"ripple_wavelength", c.ripple_wavelength},
                       {"ripple_orientation", c.ripple_orientation},
                       {"speckle", c.speckle},
                       {"shadow_length", c.shadow_length},
                       {"area_weight", c.area_weight}});
  return {{"classes", classes},
          {"attenuation", p.attenuation},
          {"region_scale", p.region_scale},
          {"min_region_area", p.min_region_area},
          {"shadow_darkness", p.shadow_darkness}};
}

TerrainParams terrain_from_json(const json& j) {
  TerrainParams p = TerrainParams::defaults();
  Fields f(j, "terrain");
  if (const json* classes = f.sub("classes")) {
    if (!classes->is_array()) throw ConfigError("terrain.classes: expected an array");
    p.classes.clear();
    for (std::size_t i = 0; i < classes->size(); ++i) {
      ClassTexture c;
      Fields cf((*classes)[i], "terrain.classes[" + std::to_string(i) + "]");
      cf.get("name", c.name);
      cf.get("reflectivity", c.reflectivity);
      cf.get("ripple_amplitude", c.ripple_amplitude);
      cf.get("ripple_wavelength", c.ripple_wavelength);
      cf.get("ripple_orientation", c.ripple_orientation);
      cf.get("speckle", c.speckle);
      cf.get("shadow_length", c.shadow_length);
      cf.get("area_weight", c.area_weight);
      cf.finish();
      p.classes.push_back(c);
    }
  }
  f.get("attenuation", p.attenuation);
  f.get("region_scale", p.region_scale);
  f.get("min_region_area", p.min_region_area);
  f.get("shadow_darkness", p.shadow_darkness);
  f.finish();
  try {
    p.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("terrain: ") + e.what());
  }
  return p;
}

// ------------------------------------------------------------------ models

json generator_to_json(const GeneratorConfig& g) {
  return {{"resnet_blocks", g.resnet_blocks},   {"base_width", g.base_width},
          {"noise_channels", g.noise_channels}, {"downsamples", g.downsamples},
          {"stem_kernel", g.stem_kernel},       {"norm", norm_name(g.norm)}};
}

GeneratorConfig generator_from_json(const json& j) {
  GeneratorConfig g;
  Fields f(j, "generator");
  f.get("resnet_blocks", g.resnet_blocks);
  f.get("base_width", g.base_width);
  f.get("noise_channels", g.noise_channels);
  f.get("downsamples", g.downsamples);
  f.get("stem_kernel", g.stem_kernel);
  std::string norm = norm_name(g.norm);
  f.get("norm", norm);
  g.norm = parse_norm(norm, "generator.norm");
  f.finish();
  g.validate();
  return g;
}

json discriminator_to_json(const DiscriminatorConfig& d) {
  return {{"levels", d.levels}, {"base_width", d.base_width}, {"norm", norm_name(d.norm)}};
}

DiscriminatorConfig discriminator_from_json(const json& j) {
  DiscriminatorConfig d;
  Fields f(j, "discriminator");
  f.get("levels", d.levels);
  f.get("base_width", d.base_width);
  std::string norm = norm_name(d.norm);
  f.get("norm", norm);
  d.norm = parse_norm(norm, "discriminator.norm");
  f.finish();
  d.validate();
  return d;
}

json layout_to_json(const ModelLayout& l) {
  return {{"tile_size", l.tile_size},
          {"snippet_width", l.snippet_width},
          {"channels", l.channels},
          {"num_classes", l.num_classes}};
}

ModelLayout layout_from_json(const json& j) {
  ModelLayout l;
  Fields f(j, "layout");
  f.get("tile_size", l.tile_size);
  f.get("snippet_width", l.snippet_width);
  f.get("channels", l.channels);
  f.get("num_classes", l.num_classes);
  f.finish();
  return l;
}

// ---------------------------------------------------------------- training

json training_to_json(const TrainingConfig& t) {
  return {
      {"epochs", t.epochs},
      {"batch_size", t.batch_size},
      {"d1_updates_per_g", t.d1_updates_per_g},
      {"d2_updates_per_g", t.d2_updates_per_g},
      {"l1_weight", t.l1_weight},
      {"gan_weight", t.gan_weight},
      {"learning_rate", t.learning_rate},
      {"beta1", t.beta1},
      {"beta2", t.beta2},
      {"adam_epsilon", t.adam_epsilon},
      {"prob_epsilon", t.prob_epsilon},
      {"seed", t.seed},
      {"loss_form", t.loss_form == LossForm::Literal ? "literal" : "standard"},
      {"condition_source", t.condition_source == ConditionSource::Generated ? "generated" : "real"},
      {"tiles_per_pair", t.tiles_per_pair},
      {"checkpoint_every", t.checkpoint_every},
      {"max_steps", t.max_steps}};
}

TrainingConfig training_from_json(const json& j) {
  TrainingConfig t;
  Fields f(j, "training");
  f.get("epochs", t.epochs);
  f.get("batch_size", t.batch_size);
  f.get("d1_updates_per_g", t.d1_updates_per_g);
  f.get("d2_updates_per_g", t.d2_updates_per_g);
  f.get("l1_weight", t.l1_weight);
  f.get("gan_weight", t.gan_weight);
  f.get("learning_rate", t.learning_rate);
  f.get("beta1", t.beta1);
  f.get("beta2", t.beta2);
  f.get("adam_epsilon", t.adam_epsilon);
  f.get("prob_epsilon", t.prob_epsilon);
  f.get("seed", t.seed);
  std::string form = "standard";
  f.get("loss_form", form);
  if (form == "standard")
    t.loss_form = LossForm::Standard;
  else if (form == "literal")
    t.loss_form = LossForm::Literal;
  else
    throw ConfigError("training.loss_form: expected \"standard\" or \"literal\"");
  std::string source = "real";
  f.get("condition_source", source);
  if (source == "real")
    t.condition_source = ConditionSource::Real;
  else if (source == "generated")
    t.condition_source = ConditionSource::Generated;
  else
    throw ConfigError("training.condition_source: expected \"real\" or \"generated\"");
  f.get("tiles_per_pair", t.tiles_per_pair);
  f.get("checkpoint_every", t.checkpoint_every);
  f.get("max_steps", t.max_steps);
  f.finish();
  t.validate();
  return t;
}

// ------------------------------------------------------------- run config

bool operator==(const AcquisitionPreset& a, const AcquisitionPreset& b) {
  return a.name == b.name && a.across_track_pixels == b.across_track_pixels &&
         a.channels == b.channels && a.lines_per_second == b.lines_per_second;
}

bool operator==(const BenchmarkConfig& a, const BenchmarkConfig& b) {
  return a.grid_sizes == b.grid_sizes && a.warmup_tiles == b.warmup_tiles &&
         a.presets == b.presets && a.seed == b.seed;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return a.terrain == b.terrain && a.grid.tile_size == b.grid.tile_size &&
         a.grid.snippet_width == b.grid.snippet_width && a.grid.grid_rows == b.grid.grid_rows &&
         a.grid.grid_cols == b.grid.grid_cols && a.grid.channels == b.grid.channels &&
         a.generator == b.generator && a.discriminator == b.discriminator &&
         a.training == b.training && a.data == b.data && a.mission == b.mission &&
         a.evaluation == b.evaluation && a.benchmark == b.benchmark && a.atr == b.atr;
}

ModelLayout RunConfig::layout() const {
  ModelLayout l;
  l.tile_size = grid.tile_size;
  l.snippet_width = grid.snippet_width;
  l.channels = grid.channels;
  l.num_classes = static_cast<int>(terrain.classes.size());
  return l;
}

void RunConfig::validate() const {
  try {
    terrain.validate();
    grid.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  generator.validate();
  discriminator.validate();
  layout().validate(generator);
  training.validate();
  if (data.n_pairs < 1) throw ConfigError("data.n_pairs must be >= 1");
  if (data.workers < 1) throw ConfigError("data.workers must be >= 1");
  if (mission.grid_rows < 1 || mission.grid_cols < 1)
    throw ConfigError("mission grid must be at least 1x1");
  if (mission.workers < 1) throw ConfigError("mission.workers must be >= 1");
  if (evaluation.missions < 1) throw ConfigError("evaluation.missions must be >= 1");
  if (evaluation.sheet_tiles < 1) throw ConfigError("evaluation.sheet_tiles must be >= 1");
  benchmark.validate();
  atr.validate();
}

json run_config_to_json(const RunConfig& c) {
  json presets = json::array();
  for (const auto& p : c.benchmark.presets)
    presets.push_back({{"name", p.name},
                       {"across_track_pixels", p.across_track_pixels},
                       {"channels", p.channels},
                       {"lines_per_second", p.lines_per_second}});
  const AtrConfig& a = c.atr;
  return {
      {"terrain", terrain_to_json(c.terrain)},
      {"grid",
       {{"tile_size", c.grid.tile_size},
        {"snippet_width", c.grid.snippet_width},
        {"grid_rows", c.grid.grid_rows},
        {"grid_cols", c.grid.grid_cols},
        {"channels", c.grid.channels}}},
      {"generator", generator_to_json(c.generator)},
      {"discriminator", discriminator_to_json(c.discriminator)},
      {"training", training_to_json(c.training)},
      {"data", {{"seed", c.data.seed}, {"n_pairs", c.data.n_pairs}, {"workers", c.data.workers}}},
      {"mission",
       {{"grid_rows", c.mission.grid_rows},
        {"grid_cols", c.mission.grid_cols},
        {"seed", c.mission.seed},
        {"workers", c.mission.workers},
        {"zero_conditions", c.mission.zero_conditions}}},
      {"evaluation",
       {{"missions", c.evaluation.missions},
        {"seed", c.evaluation.seed},
        {"atr", c.evaluation.atr},
        {"sheet_tiles", c.evaluation.sheet_tiles}}},
      {"benchmark",
       {{"grid_sizes", c.benchmark.grid_sizes},
        {"warmup_tiles", c.benchmark.warmup_tiles},
        {"presets", presets},
        {"seed", c.benchmark.seed}}},
      {"atr",
       {{"chip_size", a.chip_size},
        {"train_chips", a.train_chips},
        {"test_chips", a.test_chips},
        {"positive_fraction", a.positive_fraction},
        {"min_positive_fraction", a.min_positive_fraction},
        {"max_positive_fraction", a.max_positive_fraction},
        {"target_min_size", a.target_min_size},
        {"target_max_size", a.target_max_size},
        {"scene_tiles", a.scene_tiles},
        {"chips_per_scene", a.chips_per_scene},
        {"residual_units", a.residual_units},
        {"width", a.width},
        {"epochs", a.epochs},
        {"batch_size", a.batch_size},
        {"learning_rate", a.learning_rate},
        {"seeds", a.seeds}}}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Fields root(j, "");
  if (const json* v = root.sub("terrain")) c.terrain = terrain_from_json(*v);
  if (const json* v = root.sub("grid")) {
    Fields f(*v, "grid");
    int tile = c.grid.tile_size, snippet = 0, rows = c.grid.grid_rows, cols = c.grid.grid_cols,
        channels = c.grid.channels;
    f.get("tile_size", tile);
    f.get("snippet_width", snippet);
    f.get("grid_rows", rows);
    f.get("grid_cols", cols);
    f.get("channels", channels);
    f.finish();
    try {
      c.grid = TileGridSpec::make(tile, rows, cols, channels, snippet);
    } catch (const InvalidInput& e) {
      throw ConfigError(std::string("grid: ") + e.what());
    }
  }
  if (const json* v = root.sub("generator")) c.generator = generator_from_json(*v);
  if (const json* v = root.sub("discriminator")) c.discriminator = discriminator_from_json(*v);
  if (const json* v = root.sub("training")) c.training = training_from_json(*v);
  if (const json* v = root.sub("data")) {
    Fields f(*v, "data");
    f.get("seed", c.data.seed);
    f.get("n_pairs", c.data.n_pairs);
    f.get("workers", c.data.workers);
    f.finish();
  }
  if (const json* v = root.sub("mission")) {
    Fields f(*v, "mission");
    f.get("grid_rows", c.mission.grid_rows);
    f.get("grid_cols", c.mission.grid_cols);
    f.get("seed", c.mission.seed);
    f.get("workers", c.mission.workers);
    f.get("zero_conditions", c.mission.zero_conditions);
    f.finish();
  }
  if (const json* v = root.sub("evaluation")) {
    Fields f(*v, "evaluation");
    f.get("missions", c.evaluation.missions);
    f.get("seed", c.evaluation.seed);
    f.get("atr", c.evaluation.atr);
    f.get("sheet_tiles", c.evaluation.sheet_tiles);
    f.finish();
  }
  if (const json* v = root.sub("benchmark")) {
    Fields f(*v, "benchmark");
    if (const json* sizes = f.sub("grid_sizes"))
      c.benchmark.grid_sizes = get_array<int>(*sizes, "benchmark.grid_sizes");
    f.get("warmup_tiles", c.benchmark.warmup_tiles);
    f.get("seed", c.benchmark.seed);
    if (const json* presets = f.sub("presets")) {
      if (!presets->is_array()) throw ConfigError("benchmark.presets: expected an array");
      c.benchmark.presets.clear();
      for (std::size_t i = 0; i < presets->size(); ++i) {
        AcquisitionPreset p;
        Fields pf((*presets)[i], "benchmark.presets[" + std::to_string(i) + "]");
        pf.get("name", p.name);
        pf.get("across_track_pixels", p.across_track_pixels);
        pf.get("channels", p.channels);
        pf.get("lines_per_second", p.lines_per_second);
        pf.finish();
        c.benchmark.presets.push_back(p);
      }
    }
    f.finish();
  }
  if (const json* v = root.sub("atr")) {
    AtrConfig& a = c.atr;
    Fields f(*v, "atr");
    f.get("chip_size", a.chip_size);
    f.get("train_chips", a.train_chips);
    f.get("test_chips", a.test_chips);
    f.get("positive_fraction", a.positive_fraction);
    f.get("min_positive_fraction", a.min_positive_fraction);
    f.get("max_positive_fraction", a.max_positive_fraction);
    f.get("target_min_size", a.target_min_size);
    f.get("target_max_size", a.target_max_size);
    f.get("scene_tiles", a.scene_tiles);
    f.get("chips_per_scene", a.chips_per_scene);
    f.get("residual_units", a.residual_units);
    f.get("width", a.width);
    f.get("epochs", a.epochs);
    f.get("batch_size", a.batch_size);
    f.get("learning_rate", a.learning_rate);
    if (const json* seeds = f.sub("seeds")) a.seeds = get_array<std::uint64_t>(*seeds, "atr.seeds");
    f.finish();
  }
  root.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const RunConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << run_config_to_json(c).dump(2) << '\n';
}

std::string config_hash(const RunConfig& c) { return sha256_hex(run_config_to_json(c).dump()); }

}  // namespace r2d2
