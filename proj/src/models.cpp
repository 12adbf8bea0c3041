#include "r2d2/models.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <nlohmann/json.hpp>
#include <random>

#include "r2d2/config.hpp"
#include "r2d2/errors.hpp"
#include "r2d2/hashing.hpp"

namespace r2d2 {

using nlohmann::json;

void GeneratorConfig::validate() const {
  if (resnet_blocks < 1) throw ConfigError("generator.resnet_blocks must be >= 1");
  if (base_width < 4) throw ConfigError("generator.base_width must be >= 4");
  if (noise_channels < 0) throw ConfigError("generator.noise_channels must be >= 0");
  if (downsamples < 0 || downsamples > 4)
    throw ConfigError("generator.downsamples must be in [0, 4]");
  if (stem_kernel < 1 || stem_kernel % 2 == 0)
    throw ConfigError("generator.stem_kernel must be odd and >= 1");
}

void DiscriminatorConfig::validate() const {
  if (levels < 1) throw ConfigError("discriminator.levels must be >= 1");
  if (base_width < 1) throw ConfigError("discriminator.base_width must be >= 1");
}

void ModelLayout::validate(const GeneratorConfig& g) const {
  if (tile_size < 1 || snippet_width < 1 || snippet_width >= tile_size)
    throw ConfigError("model layout: need 1 <= snippet_width < tile_size");
  if (channels < 1 || num_classes < 1) throw ConfigError("model layout: channels/classes >= 1");
  if (tile_size % (1 << g.downsamples) != 0)
    throw ConfigError("tile_size " + std::to_string(tile_size) + " not divisible by 2^" +
                      std::to_string(g.downsamples));
  if (g.stem_kernel / 2 >= tile_size) throw ConfigError("stem kernel larger than the tile");
}

// -------------------------------------------------------------- parameters

namespace {

template <typename T>
void add_conv(ParamSet<T>& ps, std::mt19937_64& rng, const std::string& name, int out, int in,
              int k, double gain) {
  const double stddev = gain / std::sqrt(static_cast<double>(in * k * k));
  std::normal_distribution<double> normal(0.0, stddev);
  Tensor<T> w(out, in, k, k);
  for (auto& v : w.data) v = static_cast<T>(normal(rng));
  ps.add(name + ".w", std::move(w));
  ps.add(name + ".b", Tensor<T>(1, out, 1, 1));
}

int disc_width(const DiscriminatorConfig& cfg, int level) {
  return cfg.base_width * (1 << std::min(level, 3));
}

template <typename T>
ParamSet<T> make_discriminator(const std::string& prefix, const DiscriminatorConfig& cfg,
                               int inputs, std::mt19937_64& rng) {
  ParamSet<T> ps;
  int in = inputs;
  for (int l = 0; l < cfg.levels; ++l) {
    const int out = disc_width(cfg, l);
    add_conv(ps, rng, prefix + ".down" + std::to_string(l), out, in, 4, std::sqrt(2.0));
    in = out;
  }
  add_conv(ps, rng, prefix + ".head", 1, in, 3, 1.0);
  return ps;
}

}  // namespace

template <typename T>
ModelParams<T> init_params(const GeneratorConfig& gen, const DiscriminatorConfig& disc,
                           const ModelLayout& layout, std::uint64_t seed) {
  gen.validate();
  disc.validate();
  layout.validate(gen);
  ModelParams<T> p{gen, disc, layout, {}, {}, {}};

  std::mt19937_64 rng(derive_seed(seed, 0x6E6));
  const double relu_gain = std::sqrt(2.0);
  int width = gen.base_width;
  add_conv(p.g, rng, "g.stem", width, layout.generator_inputs(gen), gen.stem_kernel, relu_gain);
  for (int i = 0; i < gen.downsamples; ++i) {
    add_conv(p.g, rng, "g.down" + std::to_string(i), width * 2, width, 3, relu_gain);
    width *= 2;
  }
  for (int b = 0; b < gen.resnet_blocks; ++b) {
    const std::string name = "g.res" + std::to_string(b);
    add_conv(p.g, rng, name + ".conv1", width, width, 3, relu_gain);
    // Residual branches start close to the identity map.
    add_conv(p.g, rng, name + ".conv2", width, width, 3, 0.1);
  }
  for (int i = 0; i < gen.downsamples; ++i) {
    add_conv(p.g, rng, "g.up" + std::to_string(i), width / 2, width, 3, relu_gain);
    width /= 2;
  }
  add_conv(p.g, rng, "g.head", layout.channels, width, gen.stem_kernel, 1.0);

  std::mt19937_64 rng1(derive_seed(seed, 0xD1));
  p.d1 = make_discriminator<T>("d1", disc, layout.d1_inputs(), rng1);
  std::mt19937_64 rng2(derive_seed(seed, 0xD2));
  p.d2 = make_discriminator<T>("d2", disc, layout.d2_inputs(), rng2);
  return p;
}

template ModelParams<float> init_params<float>(const GeneratorConfig&, const DiscriminatorConfig&,
                                               const ModelLayout&, std::uint64_t);
template ModelParams<double> init_params<double>(const GeneratorConfig&, const DiscriminatorConfig&,
                                                 const ModelLayout&, std::uint64_t);

namespace {

AdamState empty_adam(const ParamSet<float>& ps) {
  AdamState s;
  for (const auto& p : ps) {
    const auto& v = p.value;
    s.m.emplace_back(v.n, v.c, v.h, v.w);
    s.v.emplace_back(v.n, v.c, v.h, v.w);
  }
  return s;
}

}  // namespace

ModelState init_model(const GeneratorConfig& gen, const DiscriminatorConfig& disc,
                      const ModelLayout& layout, std::uint64_t seed) {
  ModelState s;
  s.params = init_params<float>(gen, disc, layout, seed);
  s.seed = seed;
  s.g_opt = empty_adam(s.params.g);
  s.d1_opt = empty_adam(s.params.d1);
  s.d2_opt = empty_adam(s.params.d2);
  return s;
}

// ------------------------------------------------------------ input tensors

template <typename T>
void fill_condition_channels(Tensor<T>& dst, int i, const ConditionSet& cond,
                             const SemanticMap& tile_map, const ModelLayout& layout) {
  const int t = layout.tile_size;
  const int s = layout.snippet_width;
  const int k = layout.num_classes;
  if (dst.c < layout.condition_channels() || dst.h != t || dst.w != t)
    throw InvalidInput("condition tensor " + dst.shape_str() + " does not fit the layout");
  if (tile_map.height != t || tile_map.width != t)
    throw InvalidInput("semantic tile must be " + std::to_string(t) + "x" + std::to_string(t));
  if (cond.c1.height != s || cond.c1.width != t || cond.c2.height != t || cond.c2.width != s ||
      cond.c1.channels != layout.channels || cond.c2.channels != layout.channels)
    throw InvalidInput("condition snippets do not match tile/snippet size");
  if (cond.across_track.height != t || cond.across_track.width != t)
    throw InvalidInput("across-track map does not match tile size");

  for (int y = 0; y < t; ++y)
    for (int x = 0; x < t; ++x) {
      const int label = tile_map.at(y, x);
      if (label >= k) throw InvalidInput("semantic label exceeds model class count");
      for (int c = 0; c < k; ++c) dst.at(i, c, y, x) = c == label ? T(1) : T(0);
      dst.at(i, k, y, x) = static_cast<T>(cond.across_track.at(0, y, x));
      dst.at(i, k + 1, y, x) = cond.valid_c1 ? T(1) : T(0);
      dst.at(i, k + 2, y, x) = cond.valid_c2 ? T(1) : T(0);
    }
  const int base1 = k + 3;
  const int base2 = base1 + layout.channels;
  for (int c = 0; c < layout.channels; ++c) {
    for (int y = 0; y < t; ++y)
      for (int x = 0; x < t; ++x) {
        dst.at(i, base1 + c, y, x) = T(0);
        dst.at(i, base2 + c, y, x) = T(0);
      }
    if (cond.valid_c1)
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < t; ++x)
          dst.at(i, base1 + c, y, x) = static_cast<T>(to_model_range(cond.c1.at(c, y, x)));
    if (cond.valid_c2)
      for (int y = 0; y < t; ++y)
        for (int x = 0; x < s; ++x)
          dst.at(i, base2 + c, y, x) = static_cast<T>(to_model_range(cond.c2.at(c, y, x)));
  }
}

template <typename T>
void fill_quad_channels(Tensor<T>& dst, int i, const Quad& quad, const ModelLayout& layout) {
  const int q = 2 * layout.tile_size;
  const int k = layout.num_classes;
  if (quad.semantic.height != q || quad.semantic.width != q || dst.h != q || dst.w != q ||
      dst.c < k + 1)
    throw InvalidInput("quad does not match a 2T x 2T layout");
  for (int y = 0; y < q; ++y)
    for (int x = 0; x < q; ++x) {
      const int label = quad.semantic.at(y, x);
      if (label >= k) throw InvalidInput("semantic label exceeds model class count");
      for (int c = 0; c < k; ++c) dst.at(i, c, y, x) = c == label ? T(1) : T(0);
      dst.at(i, k, y, x) = static_cast<T>(quad.across_track.at(0, y, x));
    }
}

template <typename T>
void fill_image(Tensor<T>& dst, int i, const Image& image) {
  if (dst.c != image.channels || dst.h != image.height || dst.w != image.width)
    throw InvalidInput("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                       " does not fit tensor " + dst.shape_str());
  for (std::size_t j = 0; j < image.size(); ++j)
    dst.ptr(i)[j] = static_cast<T>(to_model_range(image.data[j]));
}

#define R2D2_INSTANTIATE_FILL(T)                                                         \
  template void fill_condition_channels<T>(Tensor<T>&, int, const ConditionSet&,         \
                                           const SemanticMap&, const ModelLayout&);      \
  template void fill_quad_channels<T>(Tensor<T>&, int, const Quad&, const ModelLayout&); \
  template void fill_image<T>(Tensor<T>&, int, const Image&);
R2D2_INSTANTIATE_FILL(float)
R2D2_INSTANTIATE_FILL(double)
#undef R2D2_INSTANTIATE_FILL

Image sample_noise(std::uint64_t seed, int channels, int size) {
  Image noise(channels, size, size);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (auto& v : noise.data) v = normal(rng);
  return noise;
}

// ------------------------------------------------------------------ graphs

template <typename T>
Var Binding<T>::operator()(Graph<T>& g, const std::string& name) const {
  if (trainable) return g.param(trainable->get(name), true);
  const Parameter<T>& p = frozen->get(name);
  return g.param(const_cast<Parameter<T>&>(p), false);
}

namespace {

template <typename T>
Var conv(Graph<T>& g, const Binding<T>& b, const std::string& name, Var x, int stride, int pad) {
  return ag::conv2d(g, x, b(g, name + ".w"), b(g, name + ".b"), stride, pad);
}

template <typename T>
Var norm(Graph<T>& g, NormKind kind, Var x) {
  return kind == NormKind::Instance ? ag::instance_norm(g, x, static_cast<T>(1e-5)) : x;
}

}  // namespace

template <typename T>
Var generator_graph(Graph<T>& g, const Binding<T>& b, const GeneratorConfig& cfg,
                    const ModelLayout& layout, Var input) {
  const Tensor<T>& in = g.value(input);
  if (in.c != layout.generator_inputs(cfg) || in.h != in.w || in.h % (1 << cfg.downsamples))
    throw InvalidInput("generator input " + in.shape_str() + " does not match the configuration");
  const int half = cfg.stem_kernel / 2;
  Var h = half > 0 ? ag::pad_reflect(g, input, half) : input;
  h = ag::relu(g, norm<T>(g, cfg.norm, conv(g, b, "g.stem", h, 1, 0)));
  for (int i = 0; i < cfg.downsamples; ++i)
    h = ag::relu(g, norm<T>(g, cfg.norm, conv(g, b, "g.down" + std::to_string(i), h, 2, 1)));
  for (int r = 0; r < cfg.resnet_blocks; ++r) {
    const std::string name = "g.res" + std::to_string(r);
    Var y = conv(g, b, name + ".conv1", ag::pad_reflect(g, h, 1), 1, 0);
    y = ag::relu(g, norm<T>(g, cfg.norm, y));
    y = norm<T>(g, cfg.norm, conv(g, b, name + ".conv2", ag::pad_reflect(g, y, 1), 1, 0));
    h = ag::add(g, h, y);
  }
  for (int i = 0; i < cfg.downsamples; ++i) {
    Var u = ag::pad_reflect(g, ag::upsample2x(g, h), 1);
    h = ag::relu(g, norm<T>(g, cfg.norm, conv(g, b, "g.up" + std::to_string(i), u, 1, 0)));
  }
  if (half > 0) h = ag::pad_reflect(g, h, half);
  return ag::tanh(g, conv(g, b, "g.head", h, 1, 0));
}

template <typename T>
Var discriminator_graph(Graph<T>& g, const Binding<T>& b, const std::string& prefix,
                        const DiscriminatorConfig& cfg, Var input) {
  const Tensor<T>& in = g.value(input);
  if (in.h % (1 << cfg.levels) || in.w % (1 << cfg.levels))
    throw InvalidInput(prefix + " input " + in.shape_str() + " not divisible by 2^levels");
  Var h = input;
  for (int l = 0; l < cfg.levels; ++l) {
    h = conv(g, b, prefix + ".down" + std::to_string(l), h, 2, 1);
    if (l > 0) h = norm<T>(g, cfg.norm, h);
    h = ag::leaky_relu(g, h, static_cast<T>(0.2));
  }
  return conv(g, b, prefix + ".head", h, 1, 1);
}

template struct Binding<float>;
template struct Binding<double>;
template Var generator_graph<float>(Graph<float>&, const Binding<float>&, const GeneratorConfig&,
                                    const ModelLayout&, Var);
template Var generator_graph<double>(Graph<double>&, const Binding<double>&, const GeneratorConfig&,
                                     const ModelLayout&, Var);
template Var discriminator_graph<float>(Graph<float>&, const Binding<float>&, const std::string&,
                                        const DiscriminatorConfig&, Var);
template Var discriminator_graph<double>(Graph<double>&, const Binding<double>&, const std::string&,
                                         const DiscriminatorConfig&, Var);

// ---------------------------------------------------------------- helpers

Image generator_forward(const ModelParams<float>& params, const ConditionSet& cond,
                        const SemanticMap& semantic_tile, const Image& noise) {
  const ModelLayout& L = params.layout;
  const int t = L.tile_size;
  if (noise.channels != params.gen.noise_channels ||
      (noise.channels > 0 && (noise.height != t || noise.width != t)))
    throw InvalidInput("noise must be " + std::to_string(params.gen.noise_channels) + "x" +
                       std::to_string(t) + "x" + std::to_string(t));
  Tensor<float> input(1, L.generator_inputs(params.gen), t, t);
  fill_condition_channels(input, 0, cond, semantic_tile, L);
  const int base = L.condition_channels();
  for (int c = 0; c < noise.channels; ++c)
    for (int y = 0; y < t; ++y)
      for (int x = 0; x < t; ++x) input.at(0, base + c, y, x) = noise.at(c, y, x);
  Graph<float> g;
  Var out = generator_graph(g, frozen(params.g), params.gen, L, g.constant(std::move(input)));
  const Tensor<float>& o = g.value(out);
  Image tile(L.channels, t, t);
  std::copy(o.data.begin(), o.data.end(), tile.data.begin());
  return tile;
}

Tensor<float> d1_forward(const ModelParams<float>& params, const std::vector<ConditionSet>& conds,
                         const std::vector<SemanticMap>& semantic_tiles,
                         const std::vector<Image>& tiles) {
  const ModelLayout& L = params.layout;
  const int n = static_cast<int>(tiles.size());
  if (conds.size() != tiles.size() || semantic_tiles.size() != tiles.size() || n == 0)
    throw InvalidInput("d1_forward: batch components differ in length");
  const int t = L.tile_size;
  Tensor<float> input(n, L.d1_inputs(), t, t);
  Tensor<float> img(1, L.channels, t, t);
  for (int i = 0; i < n; ++i) {
    fill_condition_channels(input, i, conds[i], semantic_tiles[i], L);
    fill_image(img, 0, tiles[i]);
    std::copy(img.data.begin(), img.data.end(), input.ptr(i, L.condition_channels()));
  }
  Graph<float> g;
  return g.value(
      discriminator_graph(g, frozen(params.d1), "d1", params.disc, g.constant(std::move(input))));
}

Tensor<float> d2_forward(const ModelParams<float>& params, const std::vector<Quad>& quads) {
  const ModelLayout& L = params.layout;
  const int n = static_cast<int>(quads.size());
  if (n == 0) throw InvalidInput("d2_forward: empty batch");
  const int q = 2 * L.tile_size;
  Tensor<float> input(n, L.d2_inputs(), q, q);
  Tensor<float> img(1, L.channels, q, q);
  for (int i = 0; i < n; ++i) {
    fill_quad_channels(input, i, quads[i], L);
    fill_image(img, 0, quads[i].image);
    std::copy(img.data.begin(), img.data.end(), input.ptr(i, L.num_classes + 1));
  }
  Graph<float> g;
  return g.value(
      discriminator_graph(g, frozen(params.d2), "d2", params.disc, g.constant(std::move(input))));
}

template <typename T>
void check_gradients(const ParamSet<T>& params, const std::string& network) {
  for (const auto& p : params)
    if (!p.grad.empty() && !p.grad.all_finite())
      throw TrainingFault("non-finite gradient in " + network + " parameter " + p.name);
}

template <typename T>
void check_finite(const ParamSet<T>& params, const std::string& network) {
  for (const auto& p : params)
    if (!p.value.all_finite())
      throw TrainingFault("non-finite value in " + network + " parameter " + p.name);
}

template void check_gradients<float>(const ParamSet<float>&, const std::string&);
template void check_gradients<double>(const ParamSet<double>&, const std::string&);
template void check_finite<float>(const ParamSet<float>&, const std::string&);
template void check_finite<double>(const ParamSet<double>&, const std::string&);

// -------------------------------------------------------------- checkpoint

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'R', '2', 'D', '2', 'C', 'K', 'P', 'T'};

struct Writer {
  std::vector<std::uint8_t> bytes;
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void tensor(const std::string& name, const Tensor<float>& t) {
    str(name);
    u32(4);
    for (int d : {t.n, t.c, t.h, t.w}) u32(static_cast<std::uint32_t>(d));
    raw(t.data.data(), t.data.size() * sizeof(float));
  }
};

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
  void raw(void* p, std::size_t n) {
    if (pos + n > bytes.size()) throw InvalidInput("checkpoint truncated");
    std::memcpy(p, bytes.data() + pos, n);
    pos += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::string str() {
    const auto n = u32();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  std::pair<std::string, Tensor<float>> tensor() {
    std::string name = str();
    if (u32() != 4) throw InvalidInput("checkpoint tensor " + name + " is not 4-D");
    int d[4];
    for (int& v : d) v = static_cast<int>(u32());
    Tensor<float> t(d[0], d[1], d[2], d[3]);
    raw(t.data.data(), t.data.size() * sizeof(float));
    return {std::move(name), std::move(t)};
  }
};

void write_set(Writer& w, const ParamSet<float>& ps, const AdamState& opt, const std::string& net) {
  for (const auto& p : ps) w.tensor(p.name, p.value);
  std::size_t i = 0;
  for (const auto& p : ps) {
    w.tensor("opt." + net + ".m." + p.name, opt.m.at(i));
    w.tensor("opt." + net + ".v." + p.name, opt.v.at(i));
    ++i;
  }
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelState& s) {
  json cfg;
  cfg["generator"] = generator_to_json(s.params.gen);
  cfg["discriminator"] = discriminator_to_json(s.params.disc);
  cfg["layout"] = layout_to_json(s.params.layout);
  cfg["seed"] = s.seed;
  cfg["counters"] = {{"g_steps", s.counters.g_steps},
                     {"d1_steps", s.counters.d1_steps},
                     {"d2_steps", s.counters.d2_steps}};
  cfg["optimizer_steps"] = {{"g", s.g_opt.steps}, {"d1", s.d1_opt.steps}, {"d2", s.d2_opt.steps}};
  cfg["provenance"] = s.provenance;

  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(cfg.dump());
  const std::size_t n = 3 * (s.params.g.size() + s.params.d1.size() + s.params.d2.size());
  w.u32(static_cast<std::uint32_t>(n));
  write_set(w, s.params.g, s.g_opt, "g");
  write_set(w, s.params.d1, s.d1_opt, "d1");
  write_set(w, s.params.d2, s.d2_opt, "d2");
  return std::move(w.bytes);
}

ModelState deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw InvalidInput("not an r2d2 checkpoint");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  json cfg;
  try {
    cfg = json::parse(r.str());
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("checkpoint config block: ") + e.what());
  }
  const GeneratorConfig gen = generator_from_json(cfg.at("generator"));
  const DiscriminatorConfig disc = discriminator_from_json(cfg.at("discriminator"));
  const ModelLayout layout = layout_from_json(cfg.at("layout"));
  ModelState s = init_model(gen, disc, layout, cfg.at("seed").get<std::uint64_t>());
  s.counters.g_steps = cfg.at("counters").at("g_steps");
  s.counters.d1_steps = cfg.at("counters").at("d1_steps");
  s.counters.d2_steps = cfg.at("counters").at("d2_steps");
  s.g_opt.steps = cfg.at("optimizer_steps").at("g");
  s.d1_opt.steps = cfg.at("optimizer_steps").at("d1");
  s.d2_opt.steps = cfg.at("optimizer_steps").at("d2");
  s.provenance = cfg.value("provenance", std::string{});

  const auto count = r.u32();
  std::map<std::string, Tensor<float>> tensors;
  for (std::uint32_t i = 0; i < count; ++i) tensors.insert(r.tensor());

  auto restore = [&](ParamSet<float>& ps, AdamState& opt, const std::string& net) {
    std::size_t i = 0;
    for (auto& p : ps) {
      auto take = [&](const std::string& key, Tensor<float>& dst) {
        auto it = tensors.find(key);
        if (it == tensors.end()) throw InvalidInput("checkpoint lacks tensor " + key);
        if (!it->second.same_shape(dst))
          throw ConfigError("checkpoint tensor " + key + " has shape " + it->second.shape_str() +
                            ", model expects " + dst.shape_str());
        dst = std::move(it->second);
      };
      take(p.name, p.value);
      take("opt." + net + ".m." + p.name, opt.m.at(i));
      take("opt." + net + ".v." + p.name, opt.v.at(i));
      ++i;
    }
  };
  restore(s.params.g, s.g_opt, "g");
  restore(s.params.d1, s.d1_opt, "d1");
  restore(s.params.d2, s.d2_opt, "d2");
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& state) {
  const auto bytes = serialize_checkpoint(state);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace r2d2
