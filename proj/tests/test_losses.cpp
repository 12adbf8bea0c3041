#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "loss_oracle.hpp"
#include "micro.hpp"
#include "r2d2/errors.hpp"
#include "r2d2/training.hpp"

using namespace r2d2;

namespace {

ModelParams<double> micro_params(std::uint64_t seed) {
  auto p = init_params<double>(micro::generator(), micro::discriminator(), micro::layout(), seed);
  micro::jitter_biases(p.g, seed + 1);
  micro::jitter_biases(p.d1, seed + 2);
  micro::jitter_biases(p.d2, seed + 3);
  return p;
}

void zero_all(ParamSet<double>& ps) {
  for (auto& p : ps) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
}

}  // namespace

TEST(Losses, MatchStraightLineOracle) {
  for (std::uint64_t seed : {3u, 17u, 99u}) {
    auto p = micro_params(seed);
    const auto batch = micro::batch(seed * 7, 4, p.layout, p.gen.noise_channels);
    TrainingConfig cfg;
    const auto want = oracle::losses(batch, p, cfg);
    const auto g = generator_loss(batch, p, cfg);
    const auto d = discriminator_losses(batch, p, cfg);
    EXPECT_NEAR(g.l1, want.l1, 1e-6);
    EXPECT_NEAR(g.adv1, want.adv1, 1e-6);
    EXPECT_NEAR(g.adv2, want.adv2, 1e-6);
    EXPECT_NEAR(g.total, want.g_total, 1e-6);
    EXPECT_NEAR(d.d1, want.d1, 1e-6);
    EXPECT_NEAR(d.d2, want.d2, 1e-6);
  }
}

TEST(Losses, HalfProbabilityDiscriminators) {
  auto p = micro_params(5);
  zero_all(p.d1);
  zero_all(p.d2);
  const auto batch = micro::batch(8, 3, p.layout, p.gen.noise_channels);
  TrainingConfig cfg;
  const auto g = generator_loss(batch, p, cfg);
  EXPECT_NEAR(cfg.gan_weight * (g.adv1 + g.adv2), std::log(2.0), 1e-9);
  EXPECT_NEAR(g.total - cfg.l1_weight * g.l1, 0.6931, 1e-4);
  const auto d = discriminator_losses(batch, p, cfg);
  EXPECT_NEAR(d.d1, 1.3863, 1e-4);
  EXPECT_NEAR(d.d2, 1.3863, 1e-4);
}

TEST(Losses, PerfectDiscriminatorIsNearZero) {
  auto p = micro_params(6);
  // A discriminator whose head bias is huge says "real" to everything; the
  // clamp keeps the fake term finite at -log(eps).
  zero_all(p.d1);
  p.d1.get("d1.head.b").value.data[0] = 50.0;
  const auto batch = micro::batch(9, 2, p.layout, p.gen.noise_channels);
  TrainingConfig cfg;
  const auto d = discriminator_losses(batch, p, cfg);
  EXPECT_NEAR(d.d1, -std::log(cfg.prob_epsilon) - std::log(1.0 - cfg.prob_epsilon), 1e-6);
}

TEST(Losses, LiteralFormShiftsGeneratorTermByOne) {
  auto p = micro_params(11);
  const auto batch = micro::batch(12, 3, p.layout, p.gen.noise_channels);
  TrainingConfig std_cfg, lit_cfg;
  lit_cfg.loss_form = LossForm::Literal;
  const auto a = generator_loss(batch, p, std_cfg);
  const auto b = generator_loss(batch, p, lit_cfg);
  EXPECT_NEAR(b.adv1 - a.adv1, 1.0, 1e-9);
  EXPECT_NEAR(b.adv2 - a.adv2, 1.0, 1e-9);
  EXPECT_NEAR(b.l1, a.l1, 1e-12);
}

TEST(Losses, NativeTileQuadMakesD2TermsShareActivations) {
  // If G reproduced the native tile exactly, the edited quad equals the real
  // one, so the real and fake D2 terms see identical logits:
  // -log p - log(1 - p) for the same p.
  auto p = micro_params(21);
  const auto batch = micro::batch(22, 1, p.layout, p.gen.noise_channels);
  const auto& q = batch[0].quad;
  const Quad same = replace_tile(q, batch[0].tile);
  EXPECT_EQ(same.image, q.image);
}

TEST(GradientCheck, GeneratorMatchesCentralDifferences) {
  GeneratorConfig gc = micro::generator();
  gc.downsamples = 0;
  gc.stem_kernel = 1;
  const ModelLayout l = micro::layout();
  auto p = init_params<double>(gc, micro::discriminator(), l, 41);
  micro::jitter_biases(p.g, 42);
  micro::jitter_biases(p.d1, 43);
  micro::jitter_biases(p.d2, 44);
  ASSERT_LE(p.g.scalar_count(), 500u);
  const auto batch = micro::batch(45, 2, l, gc.noise_channels);
  TrainingConfig cfg;

  p.g.zero_grad();
  generator_loss(batch, p, cfg, true);

  std::vector<std::pair<Parameter<double>*, std::size_t>> all;
  for (auto& prm : p.g)
    for (std::size_t i = 0; i < prm.value.data.size(); ++i) all.emplace_back(&prm, i);
  std::mt19937_64 rng(46);
  std::shuffle(all.begin(), all.end(), rng);

  const double h = 1e-4;
  int checked = 0;
  for (std::size_t k = 0; k < 60; ++k) {
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
    EXPECT_LT(std::abs(analytic - numeric) / scale, 1e-4)
        << prm->name << "[" << i << "] analytic " << analytic << " numeric " << numeric;
    ++checked;
  }
  EXPECT_GE(checked, 50);
}

TEST(GradientCheck, DiscriminatorPassLeavesGeneratorGradientZero) {
  auto p = micro_params(51);
  const auto batch = micro::batch(52, 2, p.layout, p.gen.noise_channels);
  p.g.zero_grad();
  p.d1.zero_grad();
  discriminator_losses(batch, p, TrainingConfig{}, true);
  for (const auto& prm : p.g)
    for (double v : prm.grad.data) ASSERT_EQ(v, 0.0) << prm.name;
  double d1_norm = 0;
  for (const auto& prm : p.d1)
    for (double v : prm.grad.data) d1_norm += std::abs(v);
  EXPECT_GT(d1_norm, 0.0);
}

TEST(Losses, NonFiniteWeightsRaiseTrainingFault) {
  auto p = micro_params(61);
  p.g.get("g.head.b").value.data[0] = std::nan("");
  const auto batch = micro::batch(62, 1, p.layout, p.gen.noise_channels);
  EXPECT_THROW(generator_loss(batch, p, TrainingConfig{}), TrainingFault);
}
