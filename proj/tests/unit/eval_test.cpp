#include "gsure/eval.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gsure/datasets.hpp"
#include "gsure/error.hpp"
#include "support/oracles.hpp"

namespace gsure {
namespace {

using testing::random_tensor;

const DiffusionSchedule kSchedule = linear_schedule(1000, 1e-4, 0.2);

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// E|Z| for Z ~ N(m, s^2).
double folded_normal_mean(double m, double s) {
  return s * std::sqrt(2.0 / std::numbers::pi) * std::exp(-m * m / (2 * s * s)) + m * (1 - 2 * normal_cdf(-m / s));
}

TEST(MseSweep, PerfectAndZeroModels) {
  const std::vector<std::vector<double>> clean = {{0.5, -1.0, 2.0}};
  const AnalyticDenoiser perfect = constant_denoiser(clean[0]);
  const AnalyticDenoiser zero = zero_denoiser(3);
  Rng rng(1);
  const auto res =
      denoising_mse_sweep(perfect, zero, clean, OrthoTransform::identity(3), kSchedule, {500, 1, 1000, 500}, rng);
  ASSERT_EQ(res.rows.size(), 3u);
  EXPECT_EQ(res.rows[0].t, 1);
  EXPECT_EQ(res.rows[2].t, 1000);
  for (const auto& r : res.rows) {
    EXPECT_EQ(r.mse_a, 0.0);
    EXPECT_NEAR(r.mse_b, 0.25 + 1.0 + 4.0, 1e-12);
  }
}

TEST(MseSweep, GaussianPosteriorMatchesPosteriorVariance) {
  const double var = 0.5;
  Rng rng(2);
  const auto clean = isotropic_gaussian(20000, 4, rng, var);
  const AnalyticDenoiser post = gaussian_posterior_denoiser(4, var);
  const auto res =
      denoising_mse_sweep(post, post, clean, OrthoTransform::spectral(1, 2), kSchedule, {5, 50, 300}, rng);
  for (const auto& r : res.rows) {
    const double ab = kSchedule.alpha_bar(r.t);
    const double expect = 4 * var * (1 - ab) / (ab * var + 1 - ab);
    EXPECT_NEAR(r.mse_a, expect, 4 * expect * std::sqrt(2.0 / (4 * 20000)));
    EXPECT_EQ(r.mse_a, r.mse_b);
  }
}

TEST(Psnr, SameModelIsInfinite) {
  Rng rng(3);
  const auto clean = isotropic_gaussian(10, 2, rng);
  const AnalyticDenoiser post = gaussian_posterior_denoiser(2, 1.0);
  for (const auto& r : generalization_psnr(post, post, clean, OrthoTransform::identity(2), kSchedule, {1, 10}, rng)) {
    EXPECT_TRUE(std::isinf(r.psnr));
  }
}

TEST(Psnr, ConstantOffsetClosedForm) {
  Rng rng(4);
  const Tensor a = random_tensor(Shape{3, 3}, rng);
  const double delta = 0.01;
  const LinearDenoiser m1(a, Tensor::vector({0.0, 0.0, 0.0})), m2(a, Tensor::vector({delta, delta, delta}));
  const auto clean = isotropic_gaussian(50, 3, rng);
  const auto rows = generalization_psnr(m1, m2, clean, OrthoTransform::identity(3), kSchedule, {7}, rng, 2.0,
                                        Weights::live);
  EXPECT_NEAR(rows[0].psnr, 20 * std::log10(2.0 / delta), 1e-9);
}

TEST(EnergyDistance, ZeroOnIdenticalSetsAndSymmetric) {
  Rng rng(5);
  const Tensor a = random_tensor(Shape{300, 2}, rng), b = random_tensor(Shape{200, 2}, rng, 1.5);
  EXPECT_NEAR(energy_distance(a, a), 0.0, 1e-12);
  EXPECT_NEAR(energy_distance(a, b), energy_distance(b, a), 1e-12);
}

TEST(EnergyDistance, ShiftedGaussiansClosedForm) {
  Rng rng(6);
  const std::size_t n = 3000;
  Tensor a(Shape{n, 1}), b(Shape{n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = rng.normal();
    b[i] = 1.0 + rng.normal();
  }
  const double expect = 2 * folded_normal_mean(1.0, std::sqrt(2.0)) - 2 * folded_normal_mean(0.0, std::sqrt(2.0));
  EXPECT_NEAR(energy_distance(a, b), expect, 0.03);
}

TEST(EnergyDistance, PermutationTestSeparatesAndAccepts) {
  Rng rng(7);
  const Tensor a = random_tensor(Shape{400, 2}, rng), b = random_tensor(Shape{400, 2}, rng);
  Tensor c = random_tensor(Shape{400, 2}, rng);
  for (std::size_t i = 0; i < 400; ++i) c.at(i, 0) += 0.5;
  const auto same = energy_permutation_test(a, b, 100, rng);
  const auto diff = energy_permutation_test(a, c, 100, rng);
  EXPECT_FALSE(same.significant());
  EXPECT_GT(same.p_value, 0.01);
  EXPECT_TRUE(diff.significant());
  EXPECT_NEAR(diff.p_value, 1.0 / 101, 1e-12);
}

TEST(IndependenceDemo, ThreeRegimes) {
  const std::vector<double> snrs = {1e-2, 1e2};
  const AnalyticDenoiser gauss = gaussian_posterior_denoiser(2, 1.0);
  const AnalyticDenoiser deltas = two_deltas_posterior_denoiser(2);
  Rng rng(8);
  const auto g = independence_demo(DemoPrior::isotropic_gaussian, gauss, kSchedule, snrs, 1500, rng, 0.0, 60);
  const auto d = independence_demo(DemoPrior::two_deltas, deltas, kSchedule, snrs, 1500, rng, 0.0, 60);
  EXPECT_NEAR(std::log10(g[0].snr), -2.0, 0.1);
  EXPECT_NEAR(std::log10(g[1].snr), 2.0, 0.1);
  EXPECT_EQ(g[0].errors_mask0.rows() + g[0].errors_mask1.rows(), 1500u);
  EXPECT_FALSE(g[0].test.significant());
  EXPECT_FALSE(d[0].test.significant());
  EXPECT_TRUE(g[1].test.significant());
  EXPECT_FALSE(d[1].test.significant());
}

TEST(Cca, IdenticalViewsGiveOne) {
  Rng rng(9);
  Tensor m(Shape{500, 4});
  for (double& v : m.storage()) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
  const auto rho = linear_cca(m, m);
  EXPECT_NEAR(rho.front(), 1.0, 1e-4);
}

TEST(Cca, IndependentViewsStayBelowPermutationThreshold) {
  Rng rng(10);
  const Tensor x = random_tensor(Shape{2000, 3}, rng);
  Tensor y(Shape{2000, 3});
  for (double& v : y.storage()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  const double top = linear_cca(x, y).front();
  std::vector<double> null;
  for (int k = 0; k < 200; ++k) {
    Tensor ys = y;
    for (std::size_t i = ys.rows() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(i)));
      for (std::size_t c = 0; c < 3; ++c) std::swap(ys.at(i, c), ys.at(j, c));
    }
    null.push_back(linear_cca(x, ys).front());
  }
  const auto ms = testing::mean_se(null);
  EXPECT_LT(top, ms.mean + 3 * std::sqrt(ms.variance));
}

TEST(Cca, LinearGaussianClosedForm) {
  Rng rng(11);
  const std::size_t n = 20000;
  const double sx = 1.5, sy = 0.7;
  Tensor x(Shape{n, 1}), y(Shape{n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const double z = rng.normal();
    x[i] = z + sx * rng.normal();
    y.at(i, 0) = z + sy * rng.normal();
    y.at(i, 1) = rng.normal();
  }
  const double rho = 1 / std::sqrt((1 + sx * sx) * (1 + sy * sy));
  const auto got = linear_cca(x, y);
  ASSERT_EQ(got.size(), 1u);
  EXPECT_NEAR(got[0], rho, 4 * (1 - rho * rho) / std::sqrt(n));
}

TEST(Cca, InvariantToInvertibleReparameterization) {
  Rng rng(12);
  const Tensor x = random_tensor(Shape{300, 3}, rng);
  Tensor y = random_tensor(Shape{300, 2}, rng);
  for (std::size_t i = 0; i < 300; ++i) y.at(i, 0) += 0.5 * x.at(i, 1);
  const Tensor a = Tensor::matrix(3, 3, {2, 0.5, 0, 0, 1, -1, 0.3, 0, 3});
  const Tensor b = Tensor::matrix(2, 2, {1, 2, -1, 1});
  const auto base = linear_cca(x, y), moved = linear_cca(matmul(x, a), matmul(y, b));
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(base[i], moved[i], 1e-5);
  for (double r : base) {
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
  }
}

TEST(Cca, RejectsMismatchedRows) {
  EXPECT_THROW(linear_cca(Tensor(Shape{3, 1}), Tensor(Shape{4, 1})), ShapeError);
}

TEST(UncertaintyMap, DeterministicSamplerWithSharedSeedHasNoSpread) {
  const AnalyticDenoiser post = gaussian_posterior_denoiser(4, 1.0);
  Rng rng(13);
  const auto vt = OrthoTransform::identity(4);
  const Measurement m = corrupt(std::vector<double>{0.3, -0.2, 1.0, 0.5},
                                SpectralDegradation(vt, {1.0, 0.0, 1.0, 0.0}, 0.0), rng);
  SamplerConfig cfg;
  cfg.steps = 20;
  cfg.weights = Weights::live;
  const auto fixed = uncertainty_map(post, kSchedule, m, vt, cfg, 5, 8, true);
  for (double v : fixed.stddev) EXPECT_EQ(v, 0.0);
  cfg.eta = 1.0;
  const auto spread = uncertainty_map(post, kSchedule, m, vt, cfg, 5, 8);
  EXPECT_GT(spread.stddev[1], 0.1);
  EXPECT_GT(spread.stddev[3], 0.1);
  EXPECT_THROW(uncertainty_map(post, kSchedule, m, vt, cfg, 5, 1), DomainError);
}

TEST(Wasserstein, OneDimensionalClosedForms) {
  EXPECT_NEAR(wasserstein2_squared_1d({0.0, 1.0}, {1.0, 0.0}), 0.0, 0.0);
  // Quantiles of {0} against {1, 3}: half the mass moves 1, half moves 3.
  EXPECT_NEAR(wasserstein2_squared_1d({0.0}, {1.0, 3.0}), 5.0, 1e-15);
  EXPECT_NEAR(wasserstein2_squared_1d({0.0, 1.0, 2.0}, {0.5, 1.5, 2.5}), 0.25, 1e-15);
}

TEST(DistributionDistance, IdenticalSetsAreZero) {
  Rng rng(14);
  const Tensor a = random_tensor(Shape{100, 3}, rng);
  const auto d = distribution_distance(a, a, 32, rng);
  EXPECT_EQ(d.sliced_w2, 0.0);
  EXPECT_EQ(d.mean_gap, 0.0);
  EXPECT_EQ(d.cov_gap, 0.0);
}

TEST(DistributionDistance, ShiftedGaussiansRecoverOffset) {
  Rng rng(15);
  Tensor a = random_tensor(Shape{4000, 2}, rng), b = random_tensor(Shape{4000, 2}, rng);
  for (std::size_t i = 0; i < 4000; ++i) b.at(i, 0) += 1.0;
  Rng r1(16), r2(16);
  const auto ab = distribution_distance(a, b, 512, r1);
  const auto ba = distribution_distance(b, a, 512, r2);
  EXPECT_NEAR(ab.sliced_w2, 1.0, 0.1);
  EXPECT_NEAR(ab.sliced_w2, ba.sliced_w2, 1e-12);
  EXPECT_NEAR(ab.mean_gap, 1.0, 0.05);
  EXPECT_THROW(distribution_distance(Tensor(Shape{0, 2}), b, 4, r1), DomainError);
}

}  // namespace
}  // namespace gsure
