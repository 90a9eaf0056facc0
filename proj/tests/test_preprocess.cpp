#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "vce/error.hpp"
#include "vce/preprocess.hpp"

namespace vce {
namespace {

using testing::TempDir;

TEST(Resize, ToModelInputSize) {
  const auto out = resize(testing::constant_image(576, 576, 3.0), 224, 224);
  EXPECT_EQ(out.height, 224);
  EXPECT_EQ(out.width, 224);
  EXPECT_EQ(out.state, RangeState::Raw);
}

TEST(Resize, SameSizeIsExactCopy) {
  Rng rng(3);
  const auto img = testing::random_image(24, 24, rng);
  EXPECT_EQ(resize(img, 24, 24), img);
}

TEST(Resize, ConstantStaysConstant) {
  const auto out = resize(testing::constant_image(100, 50, 77.25), 224, 224);
  for (double v : out.data) EXPECT_DOUBLE_EQ(v, 77.25);
}

TEST(Resize, PreservesRangeState) {
  auto unit = to_unit(testing::constant_image(8, 8, 51));
  EXPECT_EQ(resize(unit, 4, 4).state, RangeState::Unit);
}

TEST(Resize, HalfPixelDownsampleAveragesPairs) {
  // 1x4 -> 1x2 with half-pixel centres samples exactly between neighbours.
  ImageTensor img(1, 4, RangeState::Raw);
  for (int c = 0; c < 3; ++c)
    for (int x = 0; x < 4; ++x) img.at(c, 0, x) = 10.0 * x;
  const auto out = resize(img, 1, 2);
  EXPECT_DOUBLE_EQ(out.at(0, 0, 0), 5.0);
  EXPECT_DOUBLE_EQ(out.at(0, 0, 1), 25.0);
}

TEST(ToUnit, Examples) {
  ImageTensor img(1, 3, RangeState::Raw);
  img.at(0, 0, 0) = 255;
  img.at(0, 0, 1) = 0;
  img.at(0, 0, 2) = 51;
  const auto u = to_unit(img);
  EXPECT_EQ(u.state, RangeState::Unit);
  EXPECT_DOUBLE_EQ(u.at(0, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(u.at(0, 0, 1), 0.0);
  EXPECT_DOUBLE_EQ(u.at(0, 0, 2), 0.2);
}

TEST(ToUnit, WrongRangeState) {
  const auto u = to_unit(testing::constant_image(2, 2, 1));
  try {
    to_unit(u);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::WrongRangeState);
  }
}

TEST(Normalize, Examples) {
  ImageTensor half(1, 1, RangeState::Unit, 0.5);
  EXPECT_DOUBLE_EQ(normalize(half, {{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}}).at(0, 0, 0), 0.0);
  ImageTensor one(1, 1, RangeState::Unit, 1.0);
  EXPECT_DOUBLE_EQ(normalize(one, {{0, 0, 0}, {1, 1, 1}}).at(1, 0, 0), 1.0);
  ImageTensor zero(1, 1, RangeState::Unit, 0.0);
  const auto n = normalize(zero, NormalizationStats{});
  EXPECT_NEAR(n.at(0, 0, 0), (0.0 - 0.485) / 0.229, 1e-15);
  EXPECT_NEAR(n.at(0, 0, 0), -2.1179, 1e-4);
  EXPECT_EQ(n.state, RangeState::Normalized);
}

TEST(Normalize, RequiresUnitRange) {
  EXPECT_THROW(normalize(testing::constant_image(2, 2, 1), NormalizationStats{}), Error);
}

TEST(Normalize, StatsValidation) {
  NormalizationStats bad;
  bad.std[1] = 0.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Normalize, BoundsFromRawRange) {
  Rng rng(8);
  const NormalizationStats stats;
  const auto n = normalize(to_unit(testing::random_image(16, 16, rng)), stats);
  for (int c = 0; c < 3; ++c) {
    const double lo = (0.0 - stats.mean[static_cast<std::size_t>(c)]) / stats.std[static_cast<std::size_t>(c)];
    const double hi = (1.0 - stats.mean[static_cast<std::size_t>(c)]) / stats.std[static_cast<std::size_t>(c)];
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        EXPECT_GE(n.at(c, y, x), lo - 1e-12);
        EXPECT_LE(n.at(c, y, x), hi + 1e-12);
      }
  }
}

TEST(Flip, DoubleFlipIsBitwiseIdentity) {
  Rng rng(4);
  const auto img = testing::random_image(7, 9, rng);
  EXPECT_EQ(horizontal_flip(horizontal_flip(img)), img);
}

TEST(Flip, SymmetricImageUnchanged) {
  ImageTensor img(3, 4, RangeState::Raw);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 4; ++x) img.at(c, y, x) = c + y + std::min(x, 3 - x);
  EXPECT_EQ(horizontal_flip(img), img);
}

TEST(Flip, ZeroProbabilityNeverFlips) {
  Rng img_rng(5);
  const auto img = testing::random_image(5, 5, img_rng);
  AugmentationPolicy policy;
  policy.hflip_prob = 0.0;
  Rng rng(6);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(random_horizontal_flip(img, policy, rng), img);
}

TEST(Flip, ProbabilityOneAlwaysFlips) {
  Rng img_rng(5);
  const auto img = testing::random_image(5, 5, img_rng);
  AugmentationPolicy policy;
  policy.hflip_prob = 1.0;
  Rng rng(6);
  EXPECT_EQ(random_horizontal_flip(img, policy, rng), horizontal_flip(img));
}

TEST(Flip, DrawsExactlyOneNumber) {
  Rng img_rng(5);
  const auto img = testing::random_image(5, 5, img_rng);
  Rng a(42), b(42);
  random_horizontal_flip(img, AugmentationPolicy{}, a);
  b.uniform();
  EXPECT_EQ(a.next(), b.next());
}

TEST(Rotation, ZeroMaxIsIdentity) {
  Rng img_rng(5);
  const auto img = testing::random_image(12, 10, img_rng);
  AugmentationPolicy policy;
  policy.rotation_max_deg = 0.0;
  Rng rng(9);
  EXPECT_EQ(random_rotation(img, policy, rng), img);
}

TEST(Rotation, ConstantInteriorStaysConstant) {
  const auto img = testing::constant_image(41, 41, 100.0);
  for (double deg : {-10.0, -3.3, 7.0, 10.0}) {
    const auto r = rotate(img, deg);
    // Disc well inside the frame is fully covered for any angle.
    for (int y = 0; y < 41; ++y)
      for (int x = 0; x < 41; ++x)
        if (std::hypot(x - 20.0, y - 20.0) < 18.0) EXPECT_NEAR(r.at(1, y, x), 100.0, 1e-9);
  }
}

TEST(Rotation, OutOfBoundsIsZeroFilled) {
  const auto r = rotate(testing::constant_image(40, 40, 100.0), 45.0);
  EXPECT_EQ(r.at(0, 0, 0), 0.0);
  EXPECT_EQ(r.at(2, 39, 39), 0.0);
}

TEST(Rotation, ShapePreserved) {
  Rng rng(10);
  const auto img = testing::random_image(224, 224, rng);
  AugmentationPolicy policy;
  for (int i = 0; i < 3; ++i) {
    const auto r = random_rotation(img, policy, rng);
    EXPECT_EQ(r.height, 224);
    EXPECT_EQ(r.width, 224);
  }
}

TEST(Rotation, QuarterTurnPermutesPixels) {
  ImageTensor img(5, 5, RangeState::Raw);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = 5 * y + x;
  const auto r = rotate(img, 90.0);
  // Every output pixel is some input pixel (no interpolation at 90 degrees).
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      const double v = r.at(0, y, x);
      EXPECT_NEAR(v, std::round(v), 1e-9);
    }
  EXPECT_NEAR(r.at(0, 2, 2), img.at(0, 2, 2), 1e-9);
}

TEST(Pipeline, DefaultShapeAndFinite) {
  TempDir dir;
  Rng rng(12);
  save_png(testing::random_image(60, 90, rng), dir / "a.png");
  const LabeledFrame frame{(dir / "a.png").string(), 3, Split::Train};
  for (Split split : {Split::Train, Split::Val}) {
    Rng r(1);
    const Sample s = apply_pipeline(frame, split, PreprocessConfig{}, r);
    EXPECT_EQ(s.label, 3);
    EXPECT_EQ(s.image.height, 224);
    EXPECT_EQ(s.image.width, 224);
    EXPECT_EQ(s.image.state, RangeState::Normalized);
    for (double v : s.image.data) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(Pipeline, ValIsDeterministicAndUnaugmented) {
  TempDir dir;
  Rng rng(13);
  save_png(testing::random_image(30, 30, rng), dir / "a.png");
  const LabeledFrame frame{(dir / "a.png").string(), 0, Split::Val};
  PreprocessConfig cfg;
  cfg.input_size = 32;
  Rng r1(1), r2(999);
  const auto a = apply_pipeline(frame, Split::Val, cfg, r1);
  const auto b = apply_pipeline(frame, Split::Val, cfg, r2);
  EXPECT_EQ(a.image, b.image);
  const auto expected = normalize(to_unit(resize(load_image(frame.path), 32, 32)), cfg.stats);
  EXPECT_EQ(a.image, expected);
}

TEST(Pipeline, TrainSeededDeterminism) {
  TempDir dir;
  Rng rng(14);
  save_png(testing::random_image(30, 30, rng), dir / "a.png");
  const LabeledFrame frame{(dir / "a.png").string(), 0, Split::Train};
  PreprocessConfig cfg;
  cfg.input_size = 32;
  Rng r1(77), r2(77), r3(78);
  const auto a = apply_pipeline(frame, Split::Train, cfg, r1);
  const auto b = apply_pipeline(frame, Split::Train, cfg, r2);
  const auto c = apply_pipeline(frame, Split::Train, cfg, r3);
  EXPECT_EQ(a.image, b.image);
  EXPECT_NE(a.image, c.image);
}

TEST(Pipeline, UnreadablePropagates) {
  TempDir dir;
  write_text_file(dir / "bad.png", "garbage");
  Rng r(1);
  try {
    apply_pipeline({(dir / "bad.png").string(), 0, Split::Val}, Split::Val, PreprocessConfig{}, r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnreadableImage);
  }
}

TEST(FrameLoader, MatchesDirectPipeline) {
  TempDir dir;
  Rng rng(15);
  save_png(testing::random_image(20, 28, rng), dir / "a.png");
  const LabeledFrame frame{(dir / "a.png").string(), 1, Split::Train};
  PreprocessConfig cfg;
  cfg.input_size = 16;
  FrameLoader loader(cfg);
  for (std::uint64_t seed : {1u, 2u, 1u}) {
    Rng r(seed);
    EXPECT_EQ(loader.load(frame, Split::Train, seed), apply_pipeline(frame, Split::Train, cfg, r).image);
  }
}

}  // namespace
}  // namespace vce
