#include <gtest/gtest.h>

#include <random>

#include "deanet/error.hpp"
#include "deanet/log.hpp"
#include "deanet/losses.hpp"
#include "support/oracles.hpp"

using namespace deanet;
using namespace deanet::testing;

namespace {

Tensor<double> uniform(const Shape& shape, std::mt19937_64& rng, double lo = 0.02, double hi = 0.98) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor<double>(shape, std::move(v));
}

struct DecomCase {
  Tensor<double> i_low, i_high;
  Decomposition<double> low, high;
};

DecomCase decom_case(std::uint64_t seed, int h = 12, int w = 10) {
  std::mt19937_64 rng(seed);
  return {uniform({1, 3, h, w}, rng), uniform({1, 3, h, w}, rng),
          {uniform({1, 3, h, w}, rng), uniform({1, 1, h, w}, rng)},
          {uniform({1, 3, h, w}, rng), uniform({1, 1, h, w}, rng)}};
}

}  // namespace

TEST(DecomLoss, MatchesScalarOracleOnSeededCases) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = decom_case(seed);
    const auto terms = decom_loss(c.i_low, c.low, c.i_high, c.high);
    const double oracle = decom_total_oracle(plain(c.i_low), plain(c.low.reflectance), plain(c.low.illumination),
                                             plain(c.i_high), plain(c.high.reflectance), plain(c.high.illumination));
    EXPECT_NEAR(terms.total.item(), oracle, 1e-6) << seed;
  }
}

TEST(DecomLoss, WeightsAreExact) {
  const auto c = decom_case(42);
  const auto t = decom_loss(c.i_low, c.low, c.i_high, c.high);
  const double recomposed = 0.01 * t.l_r.item() + t.l_recon_low.item() + t.l_recon_high.item() +
                            0.001 * (t.l_recon_low_mutual.item() + t.l_recon_high_mutual.item());
  EXPECT_NEAR(t.total.item(), recomposed, 1e-12);
  EXPECT_EQ(kReflectanceWeight, 0.01);
  EXPECT_EQ(kMutualWeight, 0.001);
}

TEST(DecomLoss, ZeroWhenReflectanceSharedAndReconstructionExact) {
  std::mt19937_64 rng(3);
  auto r = uniform({1, 3, 8, 8}, rng);
  auto l_low = uniform({1, 1, 8, 8}, rng), l_high = uniform({1, 1, 8, 8}, rng);
  auto i_low = mul(r, l_low), i_high = mul(r, l_high);
  const auto t = decom_loss(i_low, {r, l_low}, i_high, {r, l_high});
  for (const auto* term : {&t.l_r, &t.l_recon_low, &t.l_recon_high, &t.l_recon_low_mutual, &t.l_recon_high_mutual,
                           &t.total})
    EXPECT_EQ(term->item(), 0.0);
}

TEST(DecomLoss, ShapeMismatchRejected) {
  auto c = decom_case(1);
  std::mt19937_64 rng(2);
  c.high.illumination = uniform({1, 1, 12, 8}, rng);
  EXPECT_THROW(decom_loss(c.i_low, c.low, c.i_high, c.high), ShapeError);
}

TEST(EnhanceLoss, SumAndOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    EnhanceOutput<double> out{uniform({1, 3, 8, 8}, rng, -0.3, 0.3), uniform({1, 3, 8, 8}, rng),
                              uniform({1, 1, 8, 8}, rng)};
    EnhanceTargets<double> tgt{uniform({1, 3, 8, 8}, rng, -0.3, 0.3), uniform({1, 3, 8, 8}, rng),
                               uniform({1, 1, 8, 8}, rng)};
    const auto t = enhance_loss(out, tgt);
    EXPECT_NEAR(t.l_enhance.item(), t.l_hf.item() + t.l_en_r.item() + t.l_en_l.item(), 1e-7);
    EXPECT_NEAR(t.l_enhance.item(),
                enhance_oracle(plain(out.hf_enhanced), plain(tgt.hf_high), plain(out.reflectance_enhanced),
                               plain(tgt.reflectance_high), plain(out.illumination_enhanced),
                               plain(tgt.illumination_high)),
                1e-6);
  }
}

TEST(EnhanceLoss, ZeroAtEquality) {
  std::mt19937_64 rng(9);
  EnhanceOutput<double> out{uniform({1, 3, 8, 8}, rng), uniform({1, 3, 8, 8}, rng), uniform({1, 1, 8, 8}, rng)};
  const auto t = enhance_loss(out, {out.hf_enhanced, out.reflectance_enhanced, out.illumination_enhanced});
  EXPECT_EQ(t.l_enhance.item(), 0.0);
}

TEST(ContentLoss, ZeroAtEqualitySymmetricAndPositiveUnderNoise) {
  std::mt19937_64 rng(11);
  FeatureExtractor<double> fx;
  auto a = uniform({1, 3, 24, 24}, rng);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::vector<double> bv(a.data().begin(), a.data().end());
  for (double& v : bv) v += noise(rng);
  Tensor<double> b({1, 3, 24, 24}, bv);
  EXPECT_EQ(content_loss(a, a, fx).item(), 0.0);
  EXPECT_DOUBLE_EQ(content_loss(a, b, fx).item(), content_loss(b, a, fx).item());
  EXPECT_GT(content_loss(a, b, fx).item(), 0.0);
  EXPECT_NEAR(content_loss(a, b, fx).item(), content_oracle(plain(a), plain(b), fx), 1e-9);
}

TEST(ContentLoss, GradientFlowsOnlyIntoGenerated) {
  std::mt19937_64 rng(12);
  FeatureExtractor<double> fx;
  auto gen = uniform({1, 3, 16, 16}, rng);
  gen.set_requires_grad(true);
  auto ref = uniform({1, 3, 16, 16}, rng);
  ref.set_requires_grad(true);
  content_loss(gen, ref, fx).backward();
  EXPECT_TRUE(gen.has_grad());
  EXPECT_FALSE(ref.has_grad());
  for (const auto& p : fx.parameters()) EXPECT_FALSE(p.has_grad());
}

TEST(ContentLoss, NoTapsGivesZeroWithWarning) {
  std::mt19937_64 rng(13);
  FeatureExtractor<double> fx(7, {});
  auto a = uniform({1, 3, 8, 8}, rng), b = uniform({1, 3, 8, 8}, rng);
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(content_loss(a, b, fx).item(), 0.0);
  EXPECT_NE(::testing::internal::GetCapturedStderr().find("no tap"), std::string::npos);
}

TEST(ContentLoss, OutOfRangeTapRejected) { EXPECT_THROW(FeatureExtractor<double>(7, {8}), ConfigError); }

TEST(JointLoss, MatchesScalarOracleOnSeededCases) {
  FeatureExtractor<double> fx;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(100 + seed);
    EnhanceOutput<double> out{uniform({1, 3, 16, 16}, rng, -0.3, 0.3), uniform({1, 3, 16, 16}, rng),
                              uniform({1, 1, 16, 16}, rng)};
    EnhanceTargets<double> tgt{uniform({1, 3, 16, 16}, rng, -0.3, 0.3), uniform({1, 3, 16, 16}, rng),
                               uniform({1, 1, 16, 16}, rng)};
    auto final_image = uniform({1, 3, 16, 16}, rng), reference = uniform({1, 3, 16, 16}, rng);
    const auto t = joint_loss(final_image, reference, enhance_loss(out, tgt), fx);
    const double l_enhance = enhance_oracle(plain(out.hf_enhanced), plain(tgt.hf_high), plain(out.reflectance_enhanced),
                                            plain(tgt.reflectance_high), plain(out.illumination_enhanced),
                                            plain(tgt.illumination_high));
    EXPECT_NEAR(t.total.item(), joint_total_oracle(plain(final_image), plain(reference), l_enhance, fx), 1e-6) << seed;
    EXPECT_NEAR(t.total.item(), 0.1 * t.l_enhance.item() + t.l_colour.item() + t.l_content.item(), 1e-12);
  }
  EXPECT_EQ(kEnhanceWeight, 0.1);
}

TEST(JointLoss, ZeroWhenEverythingMatches) {
  std::mt19937_64 rng(5);
  FeatureExtractor<double> fx;
  EnhanceOutput<double> out{uniform({1, 3, 8, 8}, rng), uniform({1, 3, 8, 8}, rng), uniform({1, 1, 8, 8}, rng)};
  auto img = uniform({1, 3, 8, 8}, rng);
  const auto t =
      joint_loss(img, img, enhance_loss(out, {out.hf_enhanced, out.reflectance_enhanced, out.illumination_enhanced}), fx);
  EXPECT_EQ(t.total.item(), 0.0);
}

TEST(L1Terms, ScaleLinearlyWithPositiveFactor) {
  std::mt19937_64 rng(6);
  auto a = uniform({1, 3, 8, 8}, rng), b = uniform({1, 3, 8, 8}, rng);
  for (double c : {0.5, 2.0, 7.0}) EXPECT_NEAR(l1_loss(scale(a, c), scale(b, c)).item(), c * l1_loss(a, b).item(), 1e-12);
}

TEST(FeatureExtractor, ImportFromCheckpointEntries) {
  FeatureExtractor<double> reference;
  auto entries = export_parameters(reference);
  entries.push_back({"fx.2.stride", {}, {2.0f}});
  entries.push_back({"fx.4.stride", {}, {2.0f}});
  entries.push_back({"fx.7.stride", {}, {2.0f}});
  auto imported = FeatureExtractor<double>::from_checkpoint(entries, FeatureExtractor<double>::default_taps(), "mem");
  EXPECT_EQ(imported.layer_count(), 8u);
  std::mt19937_64 rng(8);
  auto a = uniform({1, 3, 16, 16}, rng), b = uniform({1, 3, 16, 16}, rng);
  // Weights were rounded to float on export.
  EXPECT_NEAR(content_loss(a, b, imported).item(), content_loss(a, b, reference).item(), 1e-5);
}

TEST(FeatureExtractor, ImportAppliesNormalisation) {
  std::vector<CheckpointEntry> entries{{"fx.0.weight", {1, 3, 1, 1}, {1.0f, 0.0f, 0.0f}},
                                       {"fx.0.bias", {1}, {0.0f}},
                                       {"fx.mean", {3}, {0.5f, 0.0f, 0.0f}},
                                       {"fx.std", {3}, {0.25f, 1.0f, 1.0f}}};
  auto fx = FeatureExtractor<double>::from_checkpoint(entries, {0}, "mem");
  Tensor<double> img({1, 3, 1, 2}, std::vector<double>{1.0, 0.25, 0, 0, 0, 0});
  const auto f = fx.features(img)[0];
  EXPECT_DOUBLE_EQ(f.data()[0], 2.0);  // (1 - 0.5) / 0.25
  EXPECT_DOUBLE_EQ(f.data()[1], 0.0);  // relu(-1)
}

TEST(FeatureExtractor, ImportWithoutWeightsFails) {
  std::vector<CheckpointEntry> entries{{"other", {1}, {0.0f}}};
  EXPECT_THROW(FeatureExtractor<double>::from_checkpoint(entries, {0}, "mem"), DataError);
}
