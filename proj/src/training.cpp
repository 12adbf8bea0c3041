#include "r2d2/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

#include "r2d2/errors.hpp"
#include "r2d2/hashing.hpp"

namespace r2d2 {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainingConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || d1_updates_per_g < 1 || d2_updates_per_g < 1)
    throw ConfigError("training counts (epochs, batch_size, d1/d2 updates) must be >= 1");
  if (l1_weight < 0 || gan_weight < 0) throw ConfigError("loss weights must be >= 0");
  if (learning_rate < 0) throw ConfigError("learning_rate must be >= 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
    throw ConfigError("Adam decay rates must lie in [0, 1)");
  if (adam_epsilon <= 0) throw ConfigError("adam_epsilon must be > 0");
  if (prob_epsilon <= 0 || prob_epsilon >= 0.5)
    throw ConfigError("prob_epsilon must be in (0, 0.5)");
  if (tiles_per_pair < 0) throw ConfigError("tiles_per_pair must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
}

// ------------------------------------------------------------- batch tensors

namespace {

template <typename T>
Tensor<T> generator_input(const BatchSample& batch, const ModelParams<T>& p) {
  const ModelLayout& L = p.layout;
  const int t = L.tile_size;
  const int n = static_cast<int>(batch.size());
  if (n == 0) throw InvalidInput("empty batch");
  Tensor<T> in(n, L.generator_inputs(p.gen), t, t);
  const int base = L.condition_channels();
  for (int i = 0; i < n; ++i) {
    const SampleElement& e = batch[i];
    fill_condition_channels(in, i, e.conditions, e.semantic, L);
    if (e.noise.channels != p.gen.noise_channels ||
        (e.noise.channels > 0 && (e.noise.height != t || e.noise.width != t)))
      throw InvalidInput("batch noise does not match the generator configuration");
    std::transform(e.noise.data.begin(), e.noise.data.end(), in.ptr(i, base),
                   [](float v) { return static_cast<T>(v); });
  }
  return in;
}

template <typename T>
Tensor<T> condition_tensor(const BatchSample& batch, const ModelLayout& L) {
  const int n = static_cast<int>(batch.size());
  Tensor<T> out(n, L.condition_channels(), L.tile_size, L.tile_size);
  for (int i = 0; i < n; ++i)
    fill_condition_channels(out, i, batch[i].conditions, batch[i].semantic, L);
  return out;
}

template <typename T>
Tensor<T> real_tiles(const BatchSample& batch, const ModelLayout& L) {
  const int n = static_cast<int>(batch.size());
  Tensor<T> out(n, L.channels, L.tile_size, L.tile_size);
  for (int i = 0; i < n; ++i) fill_image(out, i, batch[i].tile);
  return out;
}

template <typename T>
Tensor<T> quad_conditions(const BatchSample& batch, const ModelLayout& L) {
  const int n = static_cast<int>(batch.size());
  Tensor<T> out(n, L.num_classes + 1, 2 * L.tile_size, 2 * L.tile_size);
  for (int i = 0; i < n; ++i) fill_quad_channels(out, i, batch[i].quad, L);
  return out;
}

template <typename T>
Tensor<T> quad_images(const BatchSample& batch, const ModelLayout& L) {
  const int n = static_cast<int>(batch.size());
  Tensor<T> out(n, L.channels, 2 * L.tile_size, 2 * L.tile_size);
  for (int i = 0; i < n; ++i) fill_image(out, i, batch[i].quad.image);
  return out;
}

std::vector<std::pair<int, int>> slot_offsets(const BatchSample& batch) {
  std::vector<std::pair<int, int>> out;
  out.reserve(batch.size());
  for (const auto& e : batch) out.push_back(e.quad.slot_offset());
  return out;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::copy(a.ptr(i), a.ptr(i) + a.plane() * a.c, out.ptr(i));
    std::copy(b.ptr(i), b.ptr(i) + b.plane() * b.c, out.ptr(i, a.c));
  }
  return out;
}

/// Model-range tiles from G without gradient.
template <typename T>
Tensor<T> detached_fake(const BatchSample& batch, const ModelParams<T>& p) {
  Graph<T> g;
  Var out = generator_graph(g, frozen(p.g), p.gen, p.layout, g.constant(generator_input(batch, p)));
  return g.value(out);
}

/// Total loss of one discriminator over real and fake inputs.
template <typename T>
double discriminator_loss(Graph<T>& g, const Binding<T>& b, const std::string& prefix,
                          const DiscriminatorConfig& disc, Tensor<T> real_in, Tensor<T> fake_in,
                          const TrainingConfig& cfg, bool record) {
  const T eps = static_cast<T>(cfg.prob_epsilon);
  Var real_logits = discriminator_graph(g, b, prefix, disc, g.constant(std::move(real_in)));
  Var fake_logits = discriminator_graph(g, b, prefix, disc, g.constant(std::move(fake_in)));
  Var real_term = ag::neg_log_prob_mean(g, real_logits, ProbSide::Real, eps);
  Var fake_term;
  if (cfg.loss_form == LossForm::Standard) {
    fake_term = ag::neg_log_prob_mean(g, fake_logits, ProbSide::Fake, eps);
  } else {
    // D maximises 1 - log D(fake); as a loss that is log D(fake) - 1.
    fake_term = ag::add_scalar(
        g, ag::scale(g, ag::neg_log_prob_mean(g, fake_logits, ProbSide::Real, eps), T(-1)), T(-1));
  }
  Var loss = ag::add(g, real_term, fake_term);
  const double value = static_cast<double>(g.value(loss).item());
  if (!std::isfinite(value)) throw TrainingFault("non-finite " + prefix + " loss");
  if (record) g.backward(loss);
  return value;
}

template <typename T>
double d1_loss(const BatchSample& batch, ModelParams<T>& p, const Tensor<T>& fake,
               const TrainingConfig& cfg, bool record) {
  const Tensor<T> cond = condition_tensor<T>(batch, p.layout);
  Graph<T> g;
  const Binding<T> b = record ? trainable(p.d1) : frozen(p.d1);
  return discriminator_loss(g, b, "d1", p.disc, concat(cond, real_tiles<T>(batch, p.layout)),
                            concat(cond, fake), cfg, record);
}

template <typename T>
double d2_loss(const BatchSample& batch, ModelParams<T>& p, const Tensor<T>& fake,
               const TrainingConfig& cfg, bool record) {
  const Tensor<T> cond = quad_conditions<T>(batch, p.layout);
  const Tensor<T> real = quad_images<T>(batch, p.layout);
  Tensor<T> edited = real;
  const auto offsets = slot_offsets(batch);
  const int t = p.layout.tile_size;
  for (int i = 0; i < edited.n; ++i)
    for (int c = 0; c < edited.c; ++c)
      for (int y = 0; y < t; ++y)
        for (int x = 0; x < t; ++x)
          edited.at(i, c, offsets[i].first + y, offsets[i].second + x) = fake.at(i, c, y, x);
  Graph<T> g;
  const Binding<T> b = record ? trainable(p.d2) : frozen(p.d2);
  return discriminator_loss(g, b, "d2", p.disc, concat(cond, real), concat(cond, edited), cfg,
                            record);
}

BatchSample with_noise(const BatchSample& batch, std::uint64_t seed, int channels) {
  BatchSample out = batch;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i].noise = sample_noise(derive_seed(seed, i), channels, out[i].tile.height);
  return out;
}

}  // namespace

template <typename T>
GeneratorLossTerms generator_loss(const BatchSample& batch, ModelParams<T>& p,
                                  const TrainingConfig& cfg, bool record_gradients) {
  const ModelLayout& L = p.layout;
  const T eps = static_cast<T>(cfg.prob_epsilon);
  Graph<T> g;
  const Binding<T> gb = record_gradients ? trainable(p.g) : frozen(p.g);
  Var fake = generator_graph(g, gb, p.gen, L, g.constant(generator_input(batch, p)));
  Var l1 = ag::l1_mean(g, fake, g.constant(real_tiles<T>(batch, L)));

  Var d1_in = ag::concat_channels(g, {g.constant(condition_tensor<T>(batch, L)), fake});
  Var d1 = discriminator_graph(g, frozen(p.d1), "d1", p.disc, d1_in);
  Var adv1 = ag::neg_log_prob_mean(g, d1, ProbSide::Real, eps);

  Var edited =
      ag::replace_block(g, g.constant(quad_images<T>(batch, L)), fake, slot_offsets(batch));
  Var d2_in = ag::concat_channels(g, {g.constant(quad_conditions<T>(batch, L)), edited});
  Var d2 = discriminator_graph(g, frozen(p.d2), "d2", p.disc, d2_in);
  Var adv2 = ag::neg_log_prob_mean(g, d2, ProbSide::Real, eps);

  if (cfg.loss_form == LossForm::Literal) {
    adv1 = ag::add_scalar(g, adv1, T(1));
    adv2 = ag::add_scalar(g, adv2, T(1));
  }
  Var total = ag::add(g, ag::scale(g, l1, static_cast<T>(cfg.l1_weight)),
                      ag::scale(g, ag::add(g, adv1, adv2), static_cast<T>(cfg.gan_weight)));
  GeneratorLossTerms terms;
  terms.total = static_cast<double>(g.value(total).item());
  terms.l1 = static_cast<double>(g.value(l1).item());
  terms.adv1 = static_cast<double>(g.value(adv1).item());
  terms.adv2 = static_cast<double>(g.value(adv2).item());
  if (!std::isfinite(terms.total)) throw TrainingFault("non-finite generator loss");
  if (record_gradients) g.backward(total);
  return terms;
}

template <typename T>
DiscriminatorLossTerms discriminator_losses(const BatchSample& batch, ModelParams<T>& p,
                                            const TrainingConfig& cfg, bool record_gradients) {
  const Tensor<T> fake = detached_fake(batch, p);
  DiscriminatorLossTerms out;
  out.d1 = d1_loss(batch, p, fake, cfg, record_gradients);
  out.d2 = d2_loss(batch, p, fake, cfg, record_gradients);
  return out;
}

template GeneratorLossTerms generator_loss<float>(const BatchSample&, ModelParams<float>&,
                                                  const TrainingConfig&, bool);
template GeneratorLossTerms generator_loss<double>(const BatchSample&, ModelParams<double>&,
                                                   const TrainingConfig&, bool);
template DiscriminatorLossTerms discriminator_losses<float>(const BatchSample&, ModelParams<float>&,
                                                            const TrainingConfig&, bool);
template DiscriminatorLossTerms discriminator_losses<double>(const BatchSample&,
                                                             ModelParams<double>&,
                                                             const TrainingConfig&, bool);

std::vector<Image> generate_tiles(const ModelParams<float>& params, const BatchSample& batch) {
  const Tensor<float> fake = detached_fake(batch, params);
  std::vector<Image> out;
  for (int i = 0; i < fake.n; ++i) {
    Image tile(fake.c, fake.h, fake.w);
    std::transform(fake.ptr(i), fake.ptr(i) + tile.size(), tile.data.begin(), to_intensity);
    out.push_back(std::move(tile));
  }
  return out;
}

// ---------------------------------------------------------------- optimiser

void adam_update(ParamSet<float>& params, AdamState& state, const TrainingConfig& cfg) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw InvalidInput("optimizer state does not match the parameter set");
  ++state.steps;
  const double t = static_cast<double>(state.steps);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const auto b1 = static_cast<float>(cfg.beta1);
  const auto b2 = static_cast<float>(cfg.beta2);
  const auto step = static_cast<float>(cfg.learning_rate / bc1);
  const auto inv_bc2 = static_cast<float>(1.0 / bc2);
  const auto eps = static_cast<float>(cfg.adam_epsilon);
  std::size_t i = 0;
  for (auto& p : params) {
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    ++i;
    if (p.grad.empty()) continue;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const float g = p.grad.data[k];
      m[k] = b1 * m[k] + (1.0f - b1) * g;
      v[k] = b2 * v[k] + (1.0f - b2) * g * g;
      p.value.data[k] -= step * m[k] / (std::sqrt(v[k] * inv_bc2) + eps);
    }
  }
}

// --------------------------------------------------------------- train step

StepMetrics train_step(const BatchSample& batch, ModelState& state, const TrainingConfig& cfg,
                       std::uint64_t noise_seed) {
  const auto t0 = std::chrono::steady_clock::now();
  ModelParams<float>& p = state.params;
  const int nc = p.gen.noise_channels;
  StepMetrics m;
  try {
    for (int u = 0; u < cfg.d1_updates_per_g; ++u) {
      const BatchSample b = with_noise(batch, derive_seed(noise_seed, 1, u), nc);
      const Tensor<float> fake = detached_fake(b, p);
      p.d1.zero_grad();
      m.d1_loss = d1_loss(b, p, fake, cfg, true);
      check_gradients(p.d1, "d1");
      adam_update(p.d1, state.d1_opt, cfg);
      check_finite(p.d1, "d1");
      ++state.counters.d1_steps;
    }
    for (int u = 0; u < cfg.d2_updates_per_g; ++u) {
      const BatchSample b = with_noise(batch, derive_seed(noise_seed, 2, u), nc);
      const Tensor<float> fake = detached_fake(b, p);
      p.d2.zero_grad();
      m.d2_loss = d2_loss(b, p, fake, cfg, true);
      check_gradients(p.d2, "d2");
      adam_update(p.d2, state.d2_opt, cfg);
      check_finite(p.d2, "d2");
      ++state.counters.d2_steps;
    }
    p.g.zero_grad();
    const GeneratorLossTerms terms = generator_loss(batch, p, cfg, true);
    check_gradients(p.g, "g");
    adam_update(p.g, state.g_opt, cfg);
    check_finite(p.g, "g");
    ++state.counters.g_steps;
    m.g_loss = terms.total;
    m.l1 = terms.l1;
    m.adv1 = terms.adv1;
    m.adv2 = terms.adv2;
  } catch (const TrainingFault& e) {
    throw TrainingFault("step " + std::to_string(state.counters.g_steps + 1) + ": " + e.what());
  }
  m.step = state.counters.g_steps;
  m.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

// ------------------------------------------------------------- training data

TrainingData::TrainingData(std::vector<std::pair<SemanticMap, Image>> pairs,
                           const TileGridSpec& tile, const TrainingConfig& cfg)
    : pairs_(std::move(pairs)), cfg_(cfg) {
  cfg.validate();
  if (pairs_.empty()) throw InvalidInput("training data needs at least one pair");
  const int t = tile.tile_size;
  const int h = pairs_.front().second.height;
  const int w = pairs_.front().second.width;
  if (h % t || w % t)
    throw InvalidInput("pair images " + std::to_string(h) + "x" + std::to_string(w) +
                       " are not multiples of tile size " + std::to_string(t));
  spec_ = TileGridSpec::make(t, h / t, w / t, pairs_.front().second.channels, tile.snippet_width);
  if (spec_.grid_rows < 2 || spec_.grid_cols < 2)
    throw InvalidInput("training needs grids of at least 2x2 tiles so that every tile has a quad");
  for (const auto& [map, img] : pairs_) {
    if (img.height != h || img.width != w || map.height != h || map.width != w)
      throw InvalidInput("all training pairs must share one size");
    tiles_.push_back(partition_image(img, spec_));
  }
}

TrainingData TrainingData::from_manifest(const DatasetManifest& manifest, int tile_size,
                                         int snippet_width, const TrainingConfig& cfg) {
  std::vector<std::pair<SemanticMap, Image>> pairs;
  pairs.reserve(manifest.pairs.size());
  for (int i = 0; i < static_cast<int>(manifest.pairs.size()); ++i)
    pairs.push_back(load_pair(manifest, i));
  TileGridSpec tile;
  tile.tile_size = tile_size;
  tile.snippet_width = snippet_width;
  return TrainingData(std::move(pairs), tile, cfg);
}

std::size_t TrainingData::sample_count() const {
  const int count = spec_.tile_count();
  const int per_pair = cfg_.tiles_per_pair == 0 ? count : std::min(cfg_.tiles_per_pair, count);
  return pairs_.size() * static_cast<std::size_t>(per_pair);
}

std::int64_t TrainingData::steps_per_epoch() const {
  return static_cast<std::int64_t>(sample_count()) / cfg_.batch_size;
}

BatchSample TrainingData::batch(std::int64_t step, int noise_channels,
                                const ModelParams<float>* generator) const {
  const std::int64_t per_epoch = steps_per_epoch();
  if (per_epoch == 0) throw InvalidInput("fewer samples than one batch");
  const std::int64_t epoch = step / per_epoch;
  const std::int64_t pos = step % per_epoch;

  // The sample list of an epoch: a fresh subset of tiles per pair, shuffled.
  const int count = spec_.tile_count();
  const int per_pair = cfg_.tiles_per_pair == 0 ? count : std::min(cfg_.tiles_per_pair, count);
  std::vector<Ref> refs;
  refs.reserve(pairs_.size() * per_pair);
  std::vector<int> order(count);
  for (int i = 0; i < static_cast<int>(pairs_.size()); ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg_.seed, 0x7113, epoch, i));
    std::shuffle(order.begin(), order.end(), rng);
    for (int k = 0; k < per_pair; ++k)
      refs.push_back({i, order[k] / spec_.grid_cols, order[k] % spec_.grid_cols});
  }
  std::mt19937_64 rng(derive_seed(cfg_.seed, 0xE90C, epoch));
  std::shuffle(refs.begin(), refs.end(), rng);

  BatchSample out;
  for (int b = 0; b < cfg_.batch_size; ++b) {
    const Ref& ref = refs[static_cast<std::size_t>(pos * cfg_.batch_size + b)];
    out.push_back(
        element(ref, derive_seed(cfg_.seed, 0x2015E, step, b), noise_channels, generator));
  }
  return out;
}

SampleElement TrainingData::element(const Ref& ref, std::uint64_t noise_seed, int noise_channels,
                                    const ModelParams<float>* generator) const {
  const int t = spec_.tile_size;
  const auto& [map, image] = pairs_[ref.pair];
  const auto& tiles = tiles_[ref.pair];
  SampleElement e;
  e.semantic = crop_map(map, ref.row * t, ref.col * t, t, t);
  e.tile = tiles[static_cast<std::size_t>(ref.row) * spec_.grid_cols + ref.col];
  if (cfg_.condition_source == ConditionSource::Generated && generator) {
    // Neighbours are regenerated from their own real conditions.
    std::vector<Image> grid = tiles;
    const std::pair<int, int> neighbours[] = {{ref.row - 1, ref.col}, {ref.row, ref.col - 1}};
    int k = 0;
    for (auto [r, c] : neighbours) {
      ++k;
      if (r < 0 || c < 0) continue;
      const ConditionSet cond = extract_conditions(tiles, r, c, spec_);
      const Image noise = sample_noise(derive_seed(noise_seed, 0xAB, k), noise_channels, t);
      const Image out =
          generator_forward(*generator, cond, crop_map(map, r * t, c * t, t, t), noise);
      Image& dst = grid[static_cast<std::size_t>(r) * spec_.grid_cols + c];
      std::transform(out.data.begin(), out.data.end(), dst.data.begin(), to_intensity);
    }
    e.conditions = extract_conditions(grid, ref.row, ref.col, spec_);
  } else {
    e.conditions = extract_conditions(tiles, ref.row, ref.col, spec_);
  }
  const auto [anchor, slot] = quad_for_tile(ref.row, ref.col, spec_);
  e.quad = compose_quad(image, map, anchor.first, anchor.second, spec_, slot);
  e.noise = sample_noise(noise_seed, noise_channels, t);
  return e;
}

// ------------------------------------------------------------------ metrics

std::string metrics_to_json_line(const StepMetrics& m) {
  json j;
  j["step"] = m.step;
  j["g_loss"] = m.g_loss;
  j["l1"] = m.l1;
  j["adv1"] = m.adv1;
  j["adv2"] = m.adv2;
  j["d1_loss"] = m.d1_loss;
  j["d2_loss"] = m.d2_loss;
  j["wall_ms"] = m.wall_ms;
  return j.dump();
}

std::vector<StepMetrics> read_metrics_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read metrics log " + path.string());
  std::vector<StepMetrics> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      StepMetrics m;
      m.step = j.at("step");
      m.g_loss = j.at("g_loss");
      m.l1 = j.at("l1");
      m.adv1 = j.at("adv1");
      m.adv2 = j.at("adv2");
      m.d1_loss = j.at("d1_loss");
      m.d2_loss = j.at("d2_loss");
      m.wall_ms = j.at("wall_ms");
      out.push_back(m);
    } catch (const json::exception& e) {
      throw InvalidInput("malformed metrics record in " + path.string() + ": " + e.what());
    }
  }
  return out;
}

// -------------------------------------------------------------------- train

TrainResult train(const TrainingData& data, ModelState& state, const TrainingConfig& cfg,
                  const fs::path& checkpoint_dir, const TrainOptions& options) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(checkpoint_dir, ec);
  if (!fs::is_directory(checkpoint_dir))
    throw IoError("cannot create checkpoint directory " + checkpoint_dir.string());
  TrainResult result;
  result.checkpoint = checkpoint_dir / kCheckpointFile;
  result.metrics_log = checkpoint_dir / kMetricsFile;

  std::vector<std::string> kept;
  if (options.resume && fs::exists(result.checkpoint)) {
    ModelState loaded = load_checkpoint(result.checkpoint);
    if (!(loaded.params.gen == state.params.gen && loaded.params.disc == state.params.disc &&
          loaded.params.layout == state.params.layout))
      throw ConfigError("checkpoint " + result.checkpoint.string() +
                        " was written with a different model configuration");
    state = std::move(loaded);
    // Drop records written after the checkpoint so the log matches the state.
    if (fs::exists(result.metrics_log))
      for (const auto& m : read_metrics_log(result.metrics_log))
        if (m.step <= state.counters.g_steps) kept.push_back(metrics_to_json_line(m));
  }
  if (!options.provenance.empty()) state.provenance = options.provenance;
  {
    std::ofstream log(result.metrics_log, std::ios::trunc);
    if (!log) throw IoError("cannot write metrics log " + result.metrics_log.string());
    for (const auto& line : kept) log << line << '\n';
  }
  std::ofstream log(result.metrics_log, std::ios::app);

  const std::int64_t total = static_cast<std::int64_t>(cfg.epochs) * data.steps_per_epoch();
  const bool generated = cfg.condition_source == ConditionSource::Generated;
  while (state.counters.g_steps < total) {
    if (cfg.max_steps > 0 && state.counters.g_steps >= cfg.max_steps) break;
    const std::int64_t step = state.counters.g_steps;
    const BatchSample batch =
        data.batch(step, state.params.gen.noise_channels, generated ? &state.params : nullptr);
    const StepMetrics m = train_step(batch, state, cfg, derive_seed(cfg.seed, 0x57E9, step));
    log << metrics_to_json_line(m) << '\n';
    log.flush();
    ++result.steps_run;
    if (options.on_step) options.on_step(m);
    if (cfg.checkpoint_every > 0 && state.counters.g_steps % cfg.checkpoint_every == 0)
      save_checkpoint(result.checkpoint, state);
  }
  save_checkpoint(result.checkpoint, state);
  result.g_steps = state.counters.g_steps;
  result.completed = state.counters.g_steps >= total;
  return result;
}

}  // namespace r2d2
