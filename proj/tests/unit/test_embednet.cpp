#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <random>

#include "curvseg/embednet.hpp"
#include "curvseg/errors.hpp"
#include "curvseg/gradcheck.hpp"
#include "curvseg/synthgen.hpp"

using namespace curvseg;

namespace {

EmbeddingField field(std::size_t h, std::size_t w, std::vector<double> v) {
  return EmbeddingField(h, w, 3, std::move(v));
}

ImageGrid test_image(std::size_t h, std::size_t w) {
  ImageGrid img(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) img.at(r, c) = 0.5 + 0.4 * std::sin(0.7 * r + 0.3 * c);
  }
  return img;
}

std::uint64_t fnv1a(std::uint64_t h, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    h ^= (bits >> (8 * i)) & 0xFF;
    h *= 0x100000001b3ULL;
  }
  return h;
}

TrainSample small_sample(std::uint64_t seed) {
  SceneSpec spec;
  spec.height = spec.width = 32;
  spec.rng_seed = seed;
  const Scene s = generate_scene(spec);
  return {s.image, s.instances};
}

}  // namespace

TEST(Forward, ZeroNetwork) {
  const NetworkOutput out = forward(ModelParams{}, test_image(10, 12));
  EXPECT_EQ(out.seg_prob.height(), 5u);
  EXPECT_EQ(out.seg_prob.width(), 6u);
  for (double p : out.seg_prob.values()) EXPECT_EQ(p, 0.5);
  for (double e : out.embedding.values()) EXPECT_EQ(e, 0.0);
}

TEST(Forward, HalvesDimensionsAndRejectsOdd) {
  const ModelParams p = ModelParams::initialize(Architecture{}, 1);
  for (auto [h, w] : {std::pair{2, 2}, {8, 14}, {64, 64}}) {
    const NetworkOutput out = forward(p, test_image(h, w));
    EXPECT_EQ(out.embedding.height(), h / 2u);
    EXPECT_EQ(out.embedding.width(), w / 2u);
    EXPECT_EQ(out.embedding.dim(), 3u);
    EXPECT_TRUE(out.embedding.all_finite());
  }
  EXPECT_THROW(forward(p, test_image(7, 8)), std::invalid_argument);
}

TEST(Forward, PinnedOutputHash) {
  const ModelParams p = ModelParams::initialize(Architecture{}, 42);
  const NetworkOutput out = forward(p, test_image(16, 16));
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : out.seg_prob.values()) h = fnv1a(h, v);
  for (double v : out.embedding.values()) h = fnv1a(h, v);
  EXPECT_EQ(h, 17943824747164820489ULL);
}

TEST(Params, InitializationIsSeededAndFanInScaled) {
  const ModelParams a = ModelParams::initialize(Architecture{}, 3);
  EXPECT_EQ(a, ModelParams::initialize(Architecture{}, 3));
  EXPECT_NE(a, ModelParams::initialize(Architecture{}, 4));
  const double bound = std::sqrt(6.0 / 9.0);
  for (double v : a.tensor(Slot::kConv1Weight)) EXPECT_LE(std::abs(v), bound);
  for (double v : a.tensor(Slot::kConv1Bias)) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(a.info(Slot::kConv2Weight).shape, (std::vector<std::size_t>{16, 16, 3, 3}));
}

TEST(Dice, Examples) {
  const Mask t(3, 4, std::vector<std::uint8_t>{1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 0, 0});
  ImageGrid p(3, 4);
  for (std::size_t i = 0; i < t.size(); ++i) p[i] = t[i];
  EXPECT_DOUBLE_EQ(dice_loss(p, t), 0.0);

  const std::size_t n = 12;
  EXPECT_DOUBLE_EQ(dice_loss(ImageGrid(3, 4, 1.0), Mask(3, 4, 0)), 1.0 - 1.0 / (n + 1.0));
  EXPECT_DOUBLE_EQ(dice_loss(ImageGrid(3, 4, 0.0), Mask(3, 4, 0)), 0.0);
  EXPECT_THROW(dice_loss(ImageGrid(2, 2), Mask(2, 3)), std::invalid_argument);
}

TEST(Dice, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  ImageGrid p(4, 5);
  Mask t(4, 5);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = u(rng);
    t[i] = u(rng) > 0.5;
  }
  const ImageGrid g = dice_loss_grad(p, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    ImageGrid up = p;
    ImageGrid dn = p;
    up[i] += 1e-5;
    dn[i] -= 1e-5;
    EXPECT_NEAR(g[i], (dice_loss(up, t) - dice_loss(dn, t)) / 2e-5, 1e-8);
  }
}

TEST(Discriminative, PushOnlyCaseIsFour) {
  const auto r = discriminative_loss(field(1, 3, {0, 0, 0, 0, 0, 0, 1, 0, 0}), LabelMap(1, 3, std::vector<int>{1, 1, 2}),
                                     LossConfig{});
  EXPECT_NEAR(r.variance_term, 0.0, 1e-12);
  EXPECT_NEAR(r.distance_term, 4.0, 1e-9);
  EXPECT_NEAR(r.loss, 4.0, 1e-9);
}

TEST(Discriminative, PullOnlyCaseIsQuarter) {
  const auto r = discriminative_loss(field(1, 2, {0, 0, 0, 2, 0, 0}), LabelMap(1, 2, 1), LossConfig{});
  EXPECT_NEAR(r.loss, 0.25, 1e-9);
  EXPECT_EQ(r.distance_term, 0.0);
}

TEST(Discriminative, ZeroWhenHingesAreSatisfied) {
  // Intra spread 0.4 < delta_v, inter distance 3.5 > delta_d.
  const auto r = discriminative_loss(
      field(1, 4, {0, 0, 0, 0.4, 0, 0, 3.5, 0, 0, 3.5, 0.4, 0}), LabelMap(1, 4, std::vector<int>{1, 1, 2, 2}),
      LossConfig{});
  EXPECT_EQ(r.loss, 0.0);
  for (double g : r.grad.values()) EXPECT_EQ(g, 0.0);

  const auto same = discriminative_loss(field(1, 3, {1, 2, 3, 1, 2, 3, 1, 2, 3}), LabelMap(1, 3, 1), LossConfig{});
  EXPECT_EQ(same.loss, 0.0);
}

TEST(Discriminative, NoForegroundIsZero) {
  const auto r = discriminative_loss(field(1, 2, {1, 2, 3, 4, 5, 6}), LabelMap(1, 2, 0), LossConfig{});
  EXPECT_EQ(r.loss, 0.0);
  for (double g : r.grad.values()) EXPECT_EQ(g, 0.0);
}

TEST(Discriminative, TranslationAndRotationInvariant) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> id(0, 3);
  for (int trial = 0; trial < 20; ++trial) {
    EmbeddingField e(6, 7, 3);
    LabelMap l(6, 7);
    for (auto& v : e.values()) v = n(rng);
    for (auto& v : l.values()) v = id(rng);
    l[0] = 1;
    const double base = discriminative_loss(e, l, LossConfig{}).loss;
    EXPECT_GE(base, 0.0);

    EmbeddingField shifted = e;
    EmbeddingField rotated = e;
    const double shift[3] = {n(rng), n(rng), n(rng)};
    const double a = n(rng);
    for (std::size_t i = 0; i < e.values().size(); i += 3) {
      for (int d = 0; d < 3; ++d) shifted.values()[i + d] += shift[d];
      const double x = e.values()[i];
      const double y = e.values()[i + 1];
      rotated.values()[i] = std::cos(a) * x - std::sin(a) * y;
      rotated.values()[i + 1] = std::sin(a) * x + std::cos(a) * y;
    }
    EXPECT_NEAR(discriminative_loss(shifted, l, LossConfig{}).loss, base, 1e-9);
    EXPECT_NEAR(discriminative_loss(rotated, l, LossConfig{}).loss, base, 1e-9);
  }
}

TEST(Discriminative, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const GradcheckFixture fx = make_gradcheck_fixture(seed);
    EXPECT_LE(check_discriminative_gradient(fx.embedding, fx.labels, LossConfig{}, 1e-3), 1e-4);
  }
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
  const GradcheckFixture fx = make_gradcheck_fixture(7);
  EXPECT_LE(check_total_gradient(fx.params, fx.image, fx.seg_target, fx.labels, LossConfig{}, 1e-3), 1e-4);
}

TEST(TotalLoss, WithoutDiceEqualsDiscriminative) {
  const ModelParams p = ModelParams::initialize(Architecture{}, 8);
  const ImageGrid img = test_image(12, 12);
  LossConfig cfg;
  cfg.w_dice = 0.0;
  const LabelMap labels(6, 6, 1);
  const Mask seg(6, 6, 1);
  const LossAndGrad lg = total_loss_and_grad(p, img, seg, labels, cfg);
  const double disc = discriminative_loss(forward(p, img).embedding, labels, cfg).loss;
  EXPECT_DOUBLE_EQ(lg.loss, disc);
  EXPECT_DOUBLE_EQ(lg.discriminative, disc);
}

TEST(TotalLoss, DecreasesWhenOverfittingOneSample) {
  const TrainSample s = small_sample(4);
  const LabelMap full = make_training_labels(s.instances, 1);
  const Targets t = downsample_targets(full, 2);
  ModelParams p = ModelParams::initialize(Architecture{}, 2);
  OptimConfig oc;
  oc.learning_rate = 1e-2;
  AdamWState st;
  const double first = total_loss_and_grad(p, s.image, t.segmentation, t.instances, LossConfig{}, false).loss;
  for (int step = 0; step < 50; ++step) {
    const LossAndGrad lg = total_loss_and_grad(p, s.image, t.segmentation, t.instances, LossConfig{});
    adamw_step(p.flat(), lg.grad.flat(), st, oc);
  }
  const double last = total_loss_and_grad(p, s.image, t.segmentation, t.instances, LossConfig{}, false).loss;
  EXPECT_LT(last, first);
}

TEST(Targets, BlockMajority) {
  // 2x2 blocks: {1,1,0,0} -> fg id 1; {2,0,0,0} -> bg; {1,2,1,2} -> tie, lowest id;
  // {3,3,3,0} -> 3.
  const LabelMap full(2, 8, std::vector<int>{1, 1, 2, 0, 1, 2, 3, 3,  //
                                             0, 0, 0, 0, 1, 2, 3, 0});
  const Targets t = downsample_targets(full, 2);
  EXPECT_EQ(t.segmentation, Mask(1, 4, std::vector<std::uint8_t>{1, 0, 1, 1}));
  EXPECT_EQ(t.instances, LabelMap(1, 4, std::vector<int>{1, 0, 1, 3}));
  EXPECT_THROW(downsample_targets(LabelMap(3, 4), 2), std::invalid_argument);
}

TEST(AdamW, ZeroGradientIdentities) {
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g(3, 0.0);
  AdamWState st;
  OptimConfig cfg;
  cfg.weight_decay = 0.0;
  adamw_step(p, g, st, cfg);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 0.5}));

  cfg.weight_decay = 0.01;
  cfg.learning_rate = 0.1;
  AdamWState st2;
  adamw_step(p, g, st2, cfg);
  EXPECT_DOUBLE_EQ(p[0], 1.0 * (1 - 0.1 * 0.01));
  EXPECT_DOUBLE_EQ(p[1], -2.0 * (1 - 0.1 * 0.01));
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  std::vector<double> p{3.0};
  const std::vector<double> g{1.0};
  AdamWState st;
  OptimConfig cfg;
  cfg.weight_decay = 0.0;
  adamw_step(p, g, st, cfg);
  EXPECT_NEAR(p[0], 3.0 - cfg.learning_rate, 1e-10);
}

TEST(AdamW, RejectsNonFiniteGradient) {
  std::vector<double> p{1.0};
  const std::vector<double> g{std::nan("")};
  AdamWState st;
  EXPECT_THROW(adamw_step(p, g, st, OptimConfig{}), NumericError);
}

TEST(Train, ZeroEpochsReturnsInitialization) {
  TrainConfig cfg;
  cfg.optim.epochs = 0;
  cfg.seed = 3;
  const TrainResult r = train({small_sample(1)}, {small_sample(2)}, cfg);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(r.best_epoch, 0u);
  EXPECT_EQ(r.params, initial_params(cfg));
  EXPECT_NE(r.params, ModelParams{});
}

TEST(Train, OneSampleLossDecreasesAndIsDeterministic) {
  TrainConfig cfg;
  cfg.optim.epochs = 200;
  cfg.optim.batch_size = 1;
  cfg.optim.learning_rate = 1e-2;
  cfg.use_augmentation = false;
  cfg.seed = 5;
  const std::vector<TrainSample> tr{small_sample(10)};
  const std::vector<TrainSample> va{small_sample(11)};
  const TrainResult a = train(tr, va, cfg);
  ASSERT_EQ(a.log.size(), 200u);
  EXPECT_LT(a.log.back().train_loss, a.log.front().train_loss);
  cfg.optim.epochs = 20;
  const TrainResult b = train(tr, va, cfg);
  const TrainResult c = train(tr, va, cfg);
  ASSERT_EQ(b.log.size(), c.log.size());
  for (std::size_t i = 0; i < b.log.size(); ++i) {
    EXPECT_EQ(b.log[i].train_loss, c.log[i].train_loss);
    EXPECT_EQ(b.log[i].val_loss, c.log[i].val_loss);
  }
  EXPECT_EQ(b.params, c.params);
}

TEST(Train, RequiresBothSplits) {
  EXPECT_THROW(train({}, {small_sample(1)}, TrainConfig{}), std::invalid_argument);
}
