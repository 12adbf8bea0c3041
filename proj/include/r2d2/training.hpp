#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "r2d2/models.hpp"
#include "r2d2/seabed_oracle.hpp"
#include "r2d2/tiling.hpp"

namespace r2d2 {

/// standard: G minimises -log D(fake), D minimises -log D(real) - log(1 - D(fake)).
/// literal: the printed "1 - log D(fake)" fake term, for fidelity experiments.
enum class LossForm { Standard, Literal };

/// Where training-time snippets come from.
enum class ConditionSource { Real, Generated };

struct TrainingConfig {
  int epochs = 10;
  int batch_size = 3;
  int d1_updates_per_g = 3;
  int d2_updates_per_g = 1;
  double l1_weight = 1.0;
  double gan_weight = 0.5;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double prob_epsilon = 1e-7;
  std::uint64_t seed = 1;
  LossForm loss_form = LossForm::Standard;
  ConditionSource condition_source = ConditionSource::Real;
  int tiles_per_pair = 4;      // tiles drawn from each pair; 0 = every tile
  int checkpoint_every = 100;  // generator steps; 0 = only at the end
  std::int64_t max_steps = 0;  // stop once the generator counter reaches this; 0 = no limit

  void validate() const;
  bool operator==(const TrainingConfig&) const = default;
};

/// One training element: tile t of some pair with everything the loss needs.
struct SampleElement {
  SemanticMap semantic;     // x_t
  Image tile;               // y_t, intensities in [0, 1]
  ConditionSet conditions;  // C_t
  Quad quad;                // X_t, Y_t with the slot of t
  Image noise;              // z
};

using BatchSample = std::vector<SampleElement>;

struct GeneratorLossTerms {
  double total = 0.0;
  double l1 = 0.0;
  double adv1 = 0.0;
  double adv2 = 0.0;
};

struct DiscriminatorLossTerms {
  double d1 = 0.0;
  double d2 = 0.0;
};

/// Generator objective. With record_gradients the gradient of `total` is
/// accumulated into params.g (the discriminators stay frozen).
template <typename T>
GeneratorLossTerms generator_loss(const BatchSample& batch, ModelParams<T>& params,
                                  const TrainingConfig& cfg, bool record_gradients = false);

/// Both discriminator objectives on the same generated tiles. G is evaluated
/// without gradient. With record_gradients the gradients are accumulated into
/// params.d1 and params.d2 respectively.
template <typename T>
DiscriminatorLossTerms discriminator_losses(const BatchSample& batch, ModelParams<T>& params,
                                            const TrainingConfig& cfg,
                                            bool record_gradients = false);

/// Generated tiles for a batch (no gradient), intensities in [0, 1].
std::vector<Image> generate_tiles(const ModelParams<float>& params, const BatchSample& batch);

void adam_update(ParamSet<float>& params, AdamState& state, const TrainingConfig& cfg);

struct StepMetrics {
  std::int64_t step = 0;  // generator counter after the step
  double g_loss = 0.0;
  double l1 = 0.0;
  double adv1 = 0.0;
  double adv2 = 0.0;
  double d1_loss = 0.0;
  double d2_loss = 0.0;
  double wall_ms = 0.0;
};

/// D1 updates, D2 updates (fresh noise for each), then one generator update.
/// `noise_seed` fixes every noise draw of the step.
StepMetrics train_step(const BatchSample& batch, ModelState& state, const TrainingConfig& cfg,
                       std::uint64_t noise_seed);

/// Training samples drawn from an in-memory set of (map, image) pairs.
class TrainingData {
 public:
  TrainingData(std::vector<std::pair<SemanticMap, Image>> pairs, const TileGridSpec& tile,
               const TrainingConfig& cfg);

  /// Loads every pair listed in the manifest.
  static TrainingData from_manifest(const DatasetManifest& manifest, int tile_size,
                                    int snippet_width, const TrainingConfig& cfg);

  /// Samples per epoch: pairs x tiles_per_pair.
  std::size_t sample_count() const;
  std::int64_t steps_per_epoch() const;
  const TileGridSpec& spec() const { return spec_; }

  /// Batch for global generator step `step` (0-based); reproducible without
  /// replaying earlier steps. With ConditionSource::Generated the snippets are
  /// cut from neighbours produced by `generator`.
  BatchSample batch(std::int64_t step, int noise_channels,
                    const ModelParams<float>* generator = nullptr) const;

 private:
  struct Ref {
    int pair;
    int row;
    int col;
  };
  SampleElement element(const Ref& ref, std::uint64_t noise_seed, int noise_channels,
                        const ModelParams<float>* generator) const;

  std::vector<std::pair<SemanticMap, Image>> pairs_;
  std::vector<std::vector<Image>> tiles_;
  TileGridSpec spec_;
  TrainingConfig cfg_;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_log;
  std::int64_t g_steps = 0;
  std::int64_t steps_run = 0;  // steps executed by this call
  bool completed = false;      // false when stopped by max_steps
};

struct TrainOptions {
  bool resume = false;
  std::string provenance;  // recorded in every checkpoint
  std::function<void(const StepMetrics&)> on_step;
};

/// Checkpoints go to checkpoint_dir/latest.ckpt, metrics to
/// checkpoint_dir/metrics.jsonl (one JSON object per generator step).
TrainResult train(const TrainingData& data, ModelState& state, const TrainingConfig& cfg,
                  const std::filesystem::path& checkpoint_dir, const TrainOptions& options = {});

std::string metrics_to_json_line(const StepMetrics& m);
std::vector<StepMetrics> read_metrics_log(const std::filesystem::path& path);

inline constexpr const char* kCheckpointFile = "latest.ckpt";
inline constexpr const char* kMetricsFile = "metrics.jsonl";

}  // namespace r2d2
