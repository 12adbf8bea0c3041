#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "r2d2/autograd.hpp"
#include "r2d2/image.hpp"
#include "r2d2/tiling.hpp"

namespace r2d2 {

enum class NormKind { None, Instance };

struct GeneratorConfig {
  int resnet_blocks = 9;
  int base_width = 16;
  int noise_channels = 1;
  int downsamples = 2;
  int stem_kernel = 7;
  NormKind norm = NormKind::None;

  void validate() const;
  bool operator==(const GeneratorConfig&) const = default;
};

struct DiscriminatorConfig {
  int levels = 3;
  int base_width = 16;
  NormKind norm = NormKind::None;

  void validate() const;
  bool operator==(const DiscriminatorConfig&) const = default;
};

/// Data layout shared by all three networks.
struct ModelLayout {
  int tile_size = 64;
  int snippet_width = 4;
  int channels = 1;
  int num_classes = 4;

  /// one-hot classes + across-track + two validity flags + two snippet canvases
  int condition_channels() const { return num_classes + 3 + 2 * channels; }
  int generator_inputs(const GeneratorConfig& g) const {
    return condition_channels() + g.noise_channels;
  }
  int d1_inputs() const { return condition_channels() + channels; }
  int d2_inputs() const { return num_classes + 1 + channels; }

  void validate(const GeneratorConfig& g) const;
  bool operator==(const ModelLayout&) const = default;
};

/// Weights of G, D1 and D2 together with their architecture.
template <typename T>
struct ModelParams {
  GeneratorConfig gen;
  DiscriminatorConfig disc;
  ModelLayout layout;
  ParamSet<T> g, d1, d2;

  template <typename U>
  ModelParams<U> cast() const {
    return ModelParams<U>{
        gen, disc, layout, g.template cast<U>(), d1.template cast<U>(), d2.template cast<U>()};
  }
};

/// First/second moment estimates for one network.
struct AdamState {
  std::int64_t steps = 0;
  std::vector<Tensor<float>> m, v;
  bool operator==(const AdamState&) const = default;
};

struct StepCounters {
  std::int64_t g_steps = 0;
  std::int64_t d1_steps = 0;
  std::int64_t d2_steps = 0;
  bool operator==(const StepCounters&) const = default;
};

struct ModelState {
  ModelParams<float> params;
  StepCounters counters;
  std::uint64_t seed = 0;
  AdamState g_opt, d1_opt, d2_opt;
  /// Free-form provenance written into the checkpoint (e.g. config hash).
  std::string provenance;
};

template <typename T>
ModelParams<T> init_params(const GeneratorConfig& gen, const DiscriminatorConfig& disc,
                           const ModelLayout& layout, std::uint64_t seed);

ModelState init_model(const GeneratorConfig& gen, const DiscriminatorConfig& disc,
                      const ModelLayout& layout, std::uint64_t seed);

// ----------------------------------------------------------- input tensors

/// Intensity [0, 1] <-> model range [-1, 1].
inline float to_model_range(float v) { return 2.0f * v - 1.0f; }
inline float to_intensity(float v) { return 0.5f * (v + 1.0f); }

/// Writes the condition channels of sample i into dst ([n, condition_channels, T, T]).
template <typename T>
void fill_condition_channels(Tensor<T>& dst, int i, const ConditionSet& cond,
                             const SemanticMap& tile_map, const ModelLayout& layout);

/// Writes one-hot(X) | across-track of a quad into dst ([n, K + 1, 2T, 2T]).
template <typename T>
void fill_quad_channels(Tensor<T>& dst, int i, const Quad& quad, const ModelLayout& layout);

/// Copies an intensity image into dst sample i, mapped to [-1, 1].
template <typename T>
void fill_image(Tensor<T>& dst, int i, const Image& image);

/// I.i.d. standard-normal noise planes for one tile.
Image sample_noise(std::uint64_t seed, int channels, int size);

// ------------------------------------------------------------------ graphs

/// Selects whether parameters are bound as trainable leaves or constants.
template <typename T>
struct Binding {
  ParamSet<T>* trainable = nullptr;
  const ParamSet<T>* frozen = nullptr;
  Var operator()(Graph<T>& g, const std::string& name) const;
};

template <typename T>
Binding<T> trainable(ParamSet<T>& p) {
  return Binding<T>{&p, nullptr};
}
template <typename T>
Binding<T> frozen(const ParamSet<T>& p) {
  return Binding<T>{nullptr, &p};
}

/// G: [n, generator_inputs, T, T] -> [n, channels, T, T] in [-1, 1].
template <typename T>
Var generator_graph(Graph<T>& g, const Binding<T>& params, const GeneratorConfig& cfg,
                    const ModelLayout& layout, Var input);

/// Patch discriminator: [n, c, H, W] -> [n, 1, H / 2^levels, W / 2^levels] logits.
template <typename T>
Var discriminator_graph(Graph<T>& g, const Binding<T>& params, const std::string& prefix,
                        const DiscriminatorConfig& cfg, Var input);

// ----------------------------------------------------- single-shot helpers

/// Generated tile in model range [-1, 1].
Image generator_forward(const ModelParams<float>& params, const ConditionSet& cond,
                        const SemanticMap& semantic_tile, const Image& noise);

Tensor<float> d1_forward(const ModelParams<float>& params, const std::vector<ConditionSet>& conds,
                         const std::vector<SemanticMap>& semantic_tiles,
                         const std::vector<Image>& tiles);

Tensor<float> d2_forward(const ModelParams<float>& params, const std::vector<Quad>& quads);

/// Throws TrainingFault naming the first parameter whose gradient is missing
/// a finite value.
template <typename T>
void check_gradients(const ParamSet<T>& params, const std::string& network);

/// Throws TrainingFault naming the first non-finite parameter.
template <typename T>
void check_finite(const ParamSet<T>& params, const std::string& network);

// -------------------------------------------------------------- checkpoint

constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ModelState& state);
ModelState load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_checkpoint(const ModelState& state);
ModelState deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

}  // namespace r2d2
