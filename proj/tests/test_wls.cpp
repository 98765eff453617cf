#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "deanet/error.hpp"
#include "deanet/wls.hpp"
#include "support/synthetic.hpp"
#include "support/wls_oracle.hpp"

using namespace deanet;
using namespace deanet::testing;

namespace {

double total_variation(const Image& img) {
  double tv = 0;
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        if (x + 1 < img.width()) tv += std::abs(img.at(c, y, x + 1) - img.at(c, y, x));
        if (y + 1 < img.height()) tv += std::abs(img.at(c, y + 1, x) - img.at(c, y, x));
      }
  return tv;
}

double variance(const Image& img) {
  double m = 0, s = 0;
  for (double v : img.data()) m += v;
  m /= img.size();
  for (double v : img.data()) s += (v - m) * (v - m);
  return s / img.size();
}

Image step_edge(int h, int w) {
  Image img(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = w / 2; x < w; ++x) img.at(0, y, x) = 1.0;
  return img;
}

double max_cross_edge_gradient(const Image& img) {
  double m = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x + 1 < img.width(); ++x) m = std::max(m, std::abs(img.at(0, y, x + 1) - img.at(0, y, x)));
  return m;
}

}  // namespace

TEST(WlsBase, ConstantImageIsReturnedExactly) {
  Image img(12, 9, 3, 0.37);
  const Image base = wls_base(img);
  EXPECT_EQ(base.data(), img.data());
}

TEST(WlsBase, ZeroLambdaIsIdentity) {
  const Image img = natural_image(1, 16, 16);
  WlsParams p;
  p.lambda = 0.0;
  EXPECT_EQ(wls_base(img, p).data(), img.data());
}

TEST(WlsBase, MatchesDenseDirectSolveOnSeededImages) {
  WlsParams p;
  p.lambda = 1.0;
  p.alpha = 1.2;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Image img = random_image(100 + seed, 8, 8, 1);
    const Image iterative = wls_base(img, p);
    const Image direct = dense_wls(img, 1.0, 1.2, p.eps);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(iterative.data()[i], direct.data()[i], 1e-6) << seed;
  }
}

TEST(WlsBase, ColourImageUsesSharedLuminanceWeights) {
  const Image img = natural_image(3, 12, 12);
  const Image iterative = wls_base(img);
  const Image direct = dense_wls(img, 1.0, 1.2, 1e-4);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(iterative.data()[i], direct.data()[i], 1e-6);
}

TEST(WlsBase, ResidualBelowTolerance) {
  const Image img = natural_image(4, 32, 40);
  std::vector<WlsSolveStats> stats;
  wls_base(img, {}, &stats);
  ASSERT_EQ(stats.size(), 3u);
  for (const auto& s : stats) {
    EXPECT_LT(s.relative_residual, 1e-8);
    EXPECT_GT(s.iterations, 0);
  }
}

TEST(WlsBase, SolutionMinimisesEnergyAgainstRandomPerturbations) {
  const Image img = luma(natural_image(5, 16, 16));
  WlsParams p;
  const Image base = wls_base(img, p);
  const WlsSystem sys = make_wls_system(img.plane(0), 16, 16, p);
  const double e0 = wls_energy(sys, base.plane(0), img.plane(0));
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1e-3, 1e-3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> perturbed(base.plane(0).begin(), base.plane(0).end());
    for (double& v : perturbed) v += u(rng);
    perturbed[trial % perturbed.size()] += 1e-3 - std::abs(u(rng));  // some coordinate near the inf-norm bound
    EXPECT_LE(e0, wls_energy(sys, perturbed, img.plane(0)));
  }
}

TEST(WlsBase, TotalVariationDecreasesWithLambda) {
  for (std::uint64_t seed : {7u, 8u, 9u}) {
    const Image img = add_gaussian_noise(natural_image(seed, 32, 32), 0.03, seed);
    double previous = total_variation(img);
    for (double lambda : {0.25, 1.0, 4.0}) {
      WlsParams p;
      p.lambda = lambda;
      const double tv = total_variation(wls_base(img, p));
      EXPECT_LE(tv, previous) << "seed " << seed << " lambda " << lambda;
      previous = tv;
    }
  }
}

TEST(WlsBase, StepEdgeSurvivesSmoothing) {
  // Threshold checked against the dense oracle first, then the iterative path.
  const Image edge = step_edge(16, 16);
  const double input_gradient = max_cross_edge_gradient(edge);
  const Image direct = dense_wls(edge, 1.0, 1.2, 1e-4);
  ASSERT_GT(max_cross_edge_gradient(direct), 0.5 * input_gradient);
  const Image big = step_edge(32, 48);
  EXPECT_GT(max_cross_edge_gradient(wls_base(big)), 0.5 * max_cross_edge_gradient(big));
}

TEST(WlsBase, PerChannelGuideModeRuns) {
  const Image img = natural_image(10, 16, 16);
  WlsParams p;
  p.guide = WlsGuide::per_channel;
  const Image base = wls_base(img, p);
  EXPECT_TRUE(base.same_shape(img));
  EXPECT_NE(base.data(), wls_base(img).data());
}

TEST(WlsBase, IterationCapRaisesNumericalErrorWithResidual) {
  const Image img = natural_image(11, 32, 32);
  WlsParams p;
  p.max_iter_factor = 0;
  try {
    wls_base(img, p);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos);
  }
}

TEST(WlsBase, NonFiniteInputIsRejected) {
  Image img(4, 4, 1, 0.5);
  img.at(0, 1, 1) = std::nan("");
  EXPECT_THROW(wls_base(img), DataError);
}

TEST(FrequencySplit, LowPlusHighReconstructsInput) {
  const Image img = natural_image(12, 24, 20);
  const auto split = frequency_split(img);
  const Image sum = add(split.low_freq, split.high_freq);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(sum.data()[i], img.data()[i], 1e-6);
}

TEST(FrequencySplit, ConstantImageHasZeroHighFrequency) {
  const auto split = frequency_split(Image(8, 8, 3, 0.2));
  for (double v : split.high_freq.data()) EXPECT_EQ(v, 0.0);
}

TEST(FrequencySplit, NoiseRaisesHighFrequencyVariance) {
  const Image clean = natural_image(13, 48, 48);
  const Image noisy = add_gaussian_noise(clean, 0.05, 14, false);
  EXPECT_GT(variance(frequency_split(noisy).high_freq), variance(frequency_split(clean).high_freq));
}
