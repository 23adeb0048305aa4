#include <gtest/gtest.h>

#include <cmath>

#include "repcali/calibration.hpp"
#include "repcali/grad_check.hpp"
#include "repcali/methods.hpp"
#include "repcali/model.hpp"

using namespace repcali;

namespace {

template <class T>
BasicTensor<T> random_latent(Shape shape, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.normal(0.0, 1.0));
  return BasicTensor<T>(std::move(shape), std::move(v));
}

CalibrationBlock<float> make_block(SeedMode mode, double lambda, std::size_t n_max = 8, std::size_t d_h = 6,
                                   std::uint64_t seed = 3) {
  CalibrationOptions opt;
  opt.seed_mode = mode;
  opt.lambda = lambda;
  SplitMix64 rng(seed);
  return CalibrationBlock<float>::create(opt, n_max, d_h, rng);
}

ModelConfig small_config() {
  ModelConfig c;
  c.layers = 1;
  c.d_h = 8;
  c.heads = 2;
  c.ffn_mult = 2;
  c.vocab = 12;
  c.n_max = 10;
  c.dropout = 0.0;
  return c;
}

IntTensor random_tokens(std::size_t b, std::size_t t, std::size_t vocab, SplitMix64& rng) {
  IntTensor x({b, t}, 0);
  for (auto& v : x.data) v = 4 + static_cast<int>(rng.below(vocab - 4));
  return x;
}

}  // namespace

TEST(ShapeSeedTest, ConstantOnes) {
  auto s = build_shape_seed(SeedMode::constant_ones, 2, 3, 8);
  EXPECT_EQ(s.shape, (Shape{2, 3}));
  EXPECT_EQ(s.data, (std::vector<int>{1, 1, 1, 1, 1, 1}));
}

TEST(ShapeSeedTest, Positional) {
  auto s = build_shape_seed(SeedMode::positional, 1, 4, 8);
  EXPECT_EQ(s.data, (std::vector<int>{0, 1, 2, 3}));
  auto two = build_shape_seed(SeedMode::positional, 2, 3, 8);
  EXPECT_EQ(two.row(0), two.row(1));
}

TEST(ShapeSeedTest, LengthBeyondNMaxThrows) {
  EXPECT_THROW(build_shape_seed(SeedMode::positional, 1, 9, 8), LengthError);
  EXPECT_THROW(build_shape_seed(SeedMode::constant_ones, 1, 9, 8), LengthError);
  EXPECT_NO_THROW(build_shape_seed(SeedMode::positional, 1, 8, 8));
}

TEST(CalibrationTest, ConstantOnesFieldIsUniform) {
  auto blk = make_block(SeedMode::constant_ones, 1.0);
  auto d = compute_calibration(blk, 3, 5);
  const std::size_t w = blk.width();
  for (std::size_t r = 0; r < 15; ++r)
    for (std::size_t k = 0; k < w; ++k) EXPECT_EQ(d[r * w + k], d[k]);
}

TEST(CalibrationTest, PositionalFieldVariesWithPosition) {
  auto blk = make_block(SeedMode::positional, 1.0);
  auto d = compute_calibration(blk, 1, 5);
  const std::size_t w = blk.width();
  for (std::size_t i = 1; i < 5; ++i) {
    bool differs = false;
    for (std::size_t k = 0; k < w; ++k) differs = differs || d[i * w + k] != d[k];
    EXPECT_TRUE(differs) << "position " << i;
  }
}

TEST(CalibrationTest, FieldRowsAreNormalized) {
  auto blk = make_block(SeedMode::positional, 1.0, 16, 32);
  auto d = compute_calibration(blk, 2, 16);
  for (std::size_t r = 0; r < 32; ++r) {
    double mean = 0.0;
    for (std::size_t k = 0; k < 32; ++k) mean += d[r * 32 + k];
    EXPECT_NEAR(mean / 32.0, 0.0, 1e-5);
  }
}

TEST(CalibrationTest, LambdaZeroIsBitwiseIdentity) {
  auto blk = make_block(SeedMode::positional, 0.0);
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto h = random_latent<float>({2, 4, 6}, s);
    auto p = calibrate(blk, h);
    ASSERT_EQ(p.vec(), h.vec());
  }
}

TEST(CalibrationTest, LambdaOneAddsFieldExactly) {
  auto blk = make_block(SeedMode::positional, 1.0);
  auto h = random_latent<float>({2, 4, 6}, 11);
  auto d = compute_calibration(blk, 2, 4);
  auto p = calibrate(blk, h);
  for (std::size_t i = 0; i < h.numel(); ++i) EXPECT_EQ(p[i], h[i] + d[i]);
}

TEST(CalibrationTest, LinearInLambda) {
  auto one = make_block(SeedMode::positional, 1.0);
  auto two = make_block(SeedMode::positional, 2.0);
  auto h = random_latent<double>({2, 3, 6}, 5);
  auto blk1 = CalibrationBlock<double>{one.embed_table.cast<double>(), one.ln_gain.cast<double>(),
                                       one.ln_bias.cast<double>(), 1.0, one.seed_mode, one.n_max};
  auto blk2 = blk1;
  blk2.lambda = two.lambda;
  auto d = compute_calibration(blk1, 2, 3);
  auto p1 = calibrate(blk1, h), p2 = calibrate(blk2, h);
  for (std::size_t i = 0; i < h.numel(); ++i) EXPECT_NEAR(p2[i] - p1[i], d[i], 1e-12);
}

TEST(CalibrationTest, AdditivityOnLatents) {
  auto blk = make_block(SeedMode::positional, 1.0);
  auto h1 = random_latent<float>({2, 4, 6}, 1), h2 = random_latent<float>({2, 4, 6}, 2);
  auto sum = ops::add(h1, h2);
  auto a = calibrate(blk, sum), b = calibrate(blk, h1);
  for (std::size_t i = 0; i < h1.numel(); ++i) EXPECT_NEAR(a[i] - b[i], h2[i], 1e-5);
}

TEST(CalibrationTest, WidthMismatchThrows) {
  auto blk = make_block(SeedMode::positional, 1.0);
  EXPECT_THROW(calibrate(blk, random_latent<float>({1, 3, 5}, 0)), ShapeError);
  EXPECT_THROW(calibrate(blk, random_latent<float>({3, 6}, 0)), ShapeError);
}

TEST(CalibrationTest, NegativeLambdaRejected) {
  EXPECT_THROW(make_block(SeedMode::positional, -0.5), ValueError);
}

TEST(CalibrationTest, ZeroInitIsNoOp) {
  CalibrationOptions opt;
  opt.zero_init = true;
  SplitMix64 rng(1);
  auto blk = CalibrationBlock<float>::create(opt, 8, 6, rng);
  auto h = random_latent<float>({1, 4, 6}, 9);
  EXPECT_EQ(calibrate(blk, h).vec(), h.vec());
}

TEST(CalibrationTest, EmbedTableGradientMatchesFiniteDifferences) {
  for (auto mode : {SeedMode::positional, SeedMode::constant_ones}) {
    CalibrationOptions opt;
    opt.seed_mode = mode;
    opt.lambda = 0.7;
    SplitMix64 rng(4);
    auto blk = CalibrationBlock<double>::create(opt, 6, 5, rng);
    auto h = random_latent<double>({2, 4, 5}, 8), w = random_latent<double>({2, 4, 5}, 9);
    auto f = [&] { return ops::sum(ops::mul(ops::tanh(calibrate(blk, h)), w)); };
    auto r = grad_check_tensors<double>(f, {blk.embed_table, blk.ln_gain, blk.ln_bias}, 1e-5, 0, 1);
    EXPECT_LE(r.max_rel_error, 1e-3) << to_string(mode);
  }
}

TEST(ParamCountTest, ClosedForms) {
  EXPECT_EQ(repcali_param_count(SeedMode::constant_ones, 32, 4).count, 12u);
  EXPECT_EQ(repcali_param_count(SeedMode::constant_ones, 32, 768).paper_literal, 1536u);
  const auto pos = repcali_param_count(SeedMode::positional, 1024, 768);
  EXPECT_EQ(pos.count, 1024u * 768u + 2u * 768u);  // 787,968
  EXPECT_NEAR(100.0 * static_cast<double>(pos.count) / 220e6, 0.35, 0.05);
}

TEST(ParamCountTest, InstantiatedBlockMatchesClosedForm) {
  for (auto mode : {SeedMode::positional, SeedMode::constant_ones}) {
    for (std::size_t n_max : {4u, 10u, 32u}) {
      for (std::size_t d_h : {4u, 8u, 64u}) {
        auto blk = make_block(mode, 1.0, n_max, d_h);
        EXPECT_EQ(blk.param_count(), repcali_param_count(mode, n_max, d_h).count);
      }
    }
  }
}

TEST(CalibratedForwardTest, LambdaZeroMatchesBaseForward) {
  Seq2SeqModel<float> model(small_config(), 2);
  SplitMix64 rng(3);
  CalibrationOptions opt;
  opt.lambda = 0.0;
  auto blk = CalibrationBlock<float>::create(opt, model.config().n_max, model.config().d_h, rng);
  for (int i = 0; i < 10; ++i) {
    auto src = random_tokens(2, 5, 12, rng), y = random_tokens(2, 4, 12, rng);
    ASSERT_EQ(calibrated_forward(model, blk, src, y).vec(), model.forward(src, y).vec());
  }
}

TEST(CalibratedForwardTest, FieldIsInputIndependent) {
  Seq2SeqModel<float> model(small_config(), 2);
  TuningMethodSpec spec;
  attach(model, spec, 5);
  SplitMix64 rng(6);
  auto a = random_tokens(2, 5, 12, rng), b = random_tokens(2, 5, 12, rng);
  auto pa = model.latent(a), ha = model.encode(a);
  auto pb = model.latent(b), hb = model.encode(b);
  for (std::size_t i = 0; i < pa.numel(); ++i) EXPECT_NEAR(pa[i] - ha[i], pb[i] - hb[i], 1e-5);
}

TEST(CalibratedForwardTest, AttachingTouchesNoBaseParameter) {
  Seq2SeqModel<float> base(small_config(), 2);
  auto model = base.clone();
  TuningMethodSpec spec;
  attach(model, spec, 5);
  std::vector<std::string> added;
  for (const auto& [name, p] : model.params().entries()) {
    if (!base.params().contains(name)) {
      added.push_back(name);
      continue;
    }
    EXPECT_EQ(p.tensor.vec(), base.params().get(name).vec()) << name;
  }
  EXPECT_EQ(added, (std::vector<std::string>{"calibration.embed", "calibration.ln.bias", "calibration.ln.gain"}));
}

TEST(CalibratedForwardTest, LossGradientReachesEmbedTable) {
  Seq2SeqModel<float> model(small_config(), 2);
  TuningMethodSpec spec;
  spec.freeze_decoder = true;
  attach(model, spec, 5);
  SplitMix64 rng(7);
  auto src = random_tokens(2, 5, 12, rng), y_in = random_tokens(2, 4, 12, rng), y_out = random_tokens(2, 4, 12, rng);
  Tape<float> tape;
  TapeGuard<float> guard(tape);
  backward(tape, ops::cross_entropy(model.forward(src, y_in), y_out, kPad));
  auto table = model.params().get("calibration.embed");
  ASSERT_TRUE(table.has_grad());
  double norm = 0.0;
  for (float g : table.grad()) norm += std::fabs(g);
  EXPECT_GT(norm, 0.0);
}
