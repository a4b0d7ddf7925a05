#include "gsure/operators.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "gsure/error.hpp"
#include "support/oracles.hpp"

namespace gsure {
namespace {

using testing::mean_se;

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// Random orthogonal matrix by Gram-Schmidt on Gaussian rows.
Tensor random_orthogonal(std::size_t n, Rng& rng) {
  Tensor q(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> r = random_vector(n, rng);
    for (std::size_t k = 0; k < i; ++k) {
      double d = 0.0;
      for (std::size_t j = 0; j < n; ++j) d += r[j] * q.at(k, j);
      for (std::size_t j = 0; j < n; ++j) r[j] -= d * q.at(k, j);
    }
    const double nr = norm2(r);
    for (std::size_t j = 0; j < n; ++j) q.at(i, j) = r[j] / nr;
  }
  return q;
}

TEST(OrthoTransform, InverseAndNormPreservation) {
  Rng rng(3);
  std::vector<std::size_t> perm = {3, 0, 4, 1, 2, 5, 7, 6};
  const std::vector<OrthoTransform> transforms = {
      OrthoTransform::identity(8), OrthoTransform::permutation(perm),
      OrthoTransform::explicit_matrix(random_orthogonal(8, rng)), OrthoTransform::spectral(2, 2)};
  for (const auto& t : transforms) {
    const std::vector<double> x = random_vector(8, rng);
    const std::vector<double> xb = t.apply(x);
    EXPECT_NEAR(norm2(xb), norm2(x), 1e-10) << t.kind_name();
    const std::vector<double> back = t.apply_inverse(xb);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(back[i], x[i], 1e-10) << t.kind_name();
  }
}

TEST(OrthoTransform, SpectralMatchesDirectCentredDft) {
  // Oracle: direct complex double sum with std::polar, no shared tables.
  const std::size_t h = 6, w = 5;
  Rng rng(11);
  const std::vector<double> x = random_vector(2 * h * w, rng);
  const OrthoTransform t = OrthoTransform::spectral(h, w);
  const std::vector<double> xb = t.apply(x);
  const double ch = static_cast<double>(h / 2), cw = static_cast<double>(w / 2);
  for (std::size_t k1 = 0; k1 < h; ++k1) {
    for (std::size_t k2 = 0; k2 < w; ++k2) {
      std::complex<double> acc = 0.0;
      for (std::size_t j1 = 0; j1 < h; ++j1) {
        for (std::size_t j2 = 0; j2 < w; ++j2) {
          const std::complex<double> v(x[j1 * w + j2], x[h * w + j1 * w + j2]);
          const double ang = -2.0 * std::numbers::pi *
                             ((static_cast<double>(k1) - ch) * static_cast<double>(j1) / static_cast<double>(h) +
                              (static_cast<double>(k2) - cw) * static_cast<double>(j2) / static_cast<double>(w));
          acc += v * std::polar(1.0, ang);
        }
      }
      acc /= std::sqrt(static_cast<double>(h * w));
      EXPECT_NEAR(xb[k1 * w + k2], acc.real(), 1e-10);
      EXPECT_NEAR(xb[h * w + k1 * w + k2], acc.imag(), 1e-10);
    }
  }
}

TEST(OrthoTransform, SpectralDcSitsAtCentre) {
  const std::size_t h = 4, w = 4;
  std::vector<double> x(2 * h * w, 0.0);
  for (std::size_t i = 0; i < h * w; ++i) x[i] = 1.0;
  const std::vector<double> xb = OrthoTransform::spectral(h, w).apply(x);
  EXPECT_NEAR(xb[2 * w + 2], 4.0, 1e-12);  // sqrt(16)
  for (std::size_t i = 0; i < xb.size(); ++i) {
    if (i != 2 * w + 2) EXPECT_NEAR(xb[i], 0.0, 1e-12);
  }
}

TEST(OrthoTransform, RejectsNonOrthogonalAndBadPermutation) {
  EXPECT_THROW(OrthoTransform::explicit_matrix(Tensor::matrix(2, 2, {1, 1, 0, 1})), DomainError);
  EXPECT_THROW(OrthoTransform::permutation({0, 0, 1}), DomainError);
  EXPECT_THROW(OrthoTransform::identity(3).apply(std::vector<double>(4)), ShapeError);
}

TEST(PatchMask, ZeroProbabilityKeepsEverything) {
  Rng rng(1);
  const Mask m = sample_patch_mask(8, 8, 4, 0.0, rng);
  for (auto v : m) EXPECT_EQ(v, 1);
}

TEST(PatchMask, RejectsSingularAndNonTiling) {
  Rng rng(1);
  EXPECT_THROW(sample_patch_mask(8, 8, 4, 1.0, rng), DomainError);
  EXPECT_THROW(sample_patch_mask(10, 8, 4, 0.2, rng), DomainError);
  EXPECT_THROW(MaskDistribution(PatchDrop{8, 8, 4, 1.0}), DomainError);
}

TEST(PatchMask, KeepFrequencyMatchesOneMinusP) {
  Rng rng(2024);
  const std::size_t draws = 10000;
  std::vector<double> keep(32 * 32, 0.0);
  for (std::size_t d = 0; d < draws; ++d) {
    const Mask m = sample_patch_mask(32, 32, 4, 0.2, rng);
    for (std::size_t i = 0; i < m.size(); ++i) keep[i] += m[i];
  }
  const double sigma = std::sqrt(0.8 * 0.2 / static_cast<double>(draws));
  for (double& k : keep) {
    k /= static_cast<double>(draws);
    // 1024 pixels but only 64 independent patches; 4 sigma for the family.
    EXPECT_NEAR(k, 0.8, 4.0 * sigma);
  }
}

TEST(PatchMask, WholePatchesDropTogether) {
  Rng rng(5);
  const Mask m = sample_patch_mask(16, 16, 4, 0.5, rng);
  for (std::size_t pr = 0; pr < 4; ++pr) {
    for (std::size_t pc = 0; pc < 4; ++pc) {
      const auto first = m[pr * 4 * 16 + pc * 4];
      for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(m[(pr * 4 + r) * 16 + pc * 4 + c], first);
      }
    }
  }
}

TEST(PatchMask, SameSeedIsReproducible) {
  Rng a(77), b(77);
  EXPECT_EQ(sample_patch_mask(16, 16, 4, 0.3, a), sample_patch_mask(16, 16, 4, 0.3, b));
}

TEST(LineMask, FullScaleLayout) {
  Rng rng(9);
  const LineLayout l = line_layout(320, 4);
  EXPECT_EQ(l.total, 80u);
  EXPECT_EQ(l.central, 30u);
  for (int rep = 0; rep < 20; ++rep) {
    const Mask m = sample_line_mask(320, 4, rng);
    std::size_t kept = 0;
    for (auto v : m) kept += v;
    EXPECT_EQ(kept, 80u);
    for (std::size_t k = l.central_begin; k < l.central_begin + 30; ++k) EXPECT_EQ(m[k], 1);
  }
}

TEST(LineMask, NonCentralKeepProbability) {
  Rng rng(10);
  const std::size_t draws = 20000;
  const LineLayout l = line_layout(320, 4);
  std::vector<double> freq(320, 0.0);
  for (std::size_t d = 0; d < draws; ++d) {
    const Mask m = sample_line_mask(320, 4, rng);
    for (std::size_t i = 0; i < 320; ++i) freq[i] += m[i];
  }
  const double q = 200.0 / 1160.0;
  double pooled = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < 320; ++i) {
    if (i >= l.central_begin && i < l.central_begin + l.central) continue;
    pooled += freq[i];
    ++count;
    EXPECT_NEAR(freq[i] / draws, q, 4.0 * std::sqrt(q * (1 - q) / draws));
  }
  // The pooled frequency is exact: every draw keeps exactly 50 of 290 lines.
  EXPECT_NEAR(pooled / (static_cast<double>(count) * draws), q, 1e-12);
}

TEST(LineMask, AccelerationOneKeepsAll) {
  Rng rng(1);
  for (auto v : sample_line_mask(20, 1, rng)) EXPECT_EQ(v, 1);
}

TEST(LineMask, RejectsTooFewLines) {
  Rng rng(1);
  EXPECT_THROW(sample_line_mask(16, 17, rng), DomainError);
}

TEST(LineMask, NestedSweepIsMonotone) {
  Rng rng(4);
  const std::vector<std::size_t> rs = {4, 6, 8, 10, 12};
  const std::vector<Mask> masks = sample_nested_line_masks(96, rs, rng);
  for (std::size_t k = 0; k < rs.size(); ++k) {
    std::size_t kept = 0;
    for (auto v : masks[k]) kept += v;
    EXPECT_EQ(kept, line_layout(96, rs[k]).total);
    if (k > 0) {
      for (std::size_t i = 0; i < 96; ++i) {
        if (masks[k][i]) EXPECT_EQ(masks[k - 1][i], 1);
      }
    }
  }
}

TEST(Corrupt, NoiselessIdentityIsExact) {
  Rng rng(1);
  const std::vector<double> x = random_vector(6, rng);
  const SpectralDegradation deg(OrthoTransform::identity(6), std::vector<double>(6, 1.0), 0.0);
  const Measurement m = corrupt(x, deg, rng);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(m.ybar[i], x[i]);
}

TEST(Corrupt, MaskedEntriesAreZeroAndNoiseHasDeclaredVariance) {
  Rng rng(8);
  const std::vector<double> x = {0.3, -1.0, 2.0, 0.5};
  const SpectralDegradation deg(OrthoTransform::identity(4), {1.0, 0.0, 1.0, 0.0}, 0.01);
  std::vector<double> diffs;
  for (int d = 0; d < 100000; ++d) {
    const Measurement m = corrupt(x, deg, rng);
    EXPECT_EQ(m.ybar[1], 0.0);
    EXPECT_EQ(m.ybar[3], 0.0);
    diffs.push_back(m.ybar[d % 2 == 0 ? 0 : 2] - x[d % 2 == 0 ? 0 : 2]);
  }
  // Variance of the sample variance for Gaussian data: 2 sigma^4 / (n - 1).
  std::vector<double> squares;
  for (double z : diffs) squares.push_back(z * z);
  const auto s = mean_se(squares);
  EXPECT_NEAR(s.mean, 1e-4, 3.0 * s.se);
  EXPECT_EQ(deg.noise_var()[0], 1e-4);
  EXPECT_EQ(deg.noise_var()[1], 0.0);
}

TEST(Corrupt, MatchesFullSvdSimulationInDistribution) {
  // y = U S V^T x + z with an explicit U, then ybar = S^+ U^T y; compare the
  // first two moments with corrupt() on 10^4 draws.
  Rng rng(21);
  const std::size_t n = 4;
  const Tensor vt = random_orthogonal(n, rng);
  const Tensor u = random_orthogonal(n, rng);
  const std::vector<double> s = {2.0, 0.5, 0.0, 1.0};
  const double sigma0 = 0.3;
  const std::vector<double> x = random_vector(n, rng);
  const SpectralDegradation deg(OrthoTransform::explicit_matrix(vt), s, sigma0);

  const int draws = 10000;
  std::vector<std::vector<double>> a(n), b(n);
  for (int d = 0; d < draws; ++d) {
    const Measurement m = corrupt(x, deg, rng);
    std::vector<double> xb(n, 0.0), y(n, 0.0), ybar(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) xb[i] += vt.at(i, j) * x[j];
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) y[i] += u.at(i, j) * s[j] * xb[j];
      y[i] += sigma0 * rng.normal();
    }
    for (std::size_t j = 0; j < n; ++j) {
      double uty = 0.0;
      for (std::size_t i = 0; i < n; ++i) uty += u.at(i, j) * y[i];
      ybar[j] = s[j] > 0 ? uty / s[j] : 0.0;
    }
    for (std::size_t i = 0; i < n; ++i) {
      a[i].push_back(m.ybar[i]);
      b[i].push_back(ybar[i]);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto ma = mean_se(a[i]);
    const auto mb = mean_se(b[i]);
    EXPECT_NEAR(ma.mean, mb.mean, 3.0 * std::hypot(ma.se, mb.se) + 1e-15) << i;
    const double var_se = std::sqrt(2.0 / (draws - 1)) * std::max(ma.variance, 1e-30);
    EXPECT_NEAR(ma.variance, mb.variance, 4.0 * var_se + 1e-15) << i;
  }
}

TEST(Projection, AlgebraicIdentities) {
  Rng rng(2);
  const MaskDistribution dist(PatchDrop{8, 8, 2, 0.4});
  for (int rep = 0; rep < 10; ++rep) {
    const std::vector<double> p = mask_to_values(dist.sample(rng));
    for (double v : p) EXPECT_EQ(v * v, v);  // P^2 = P; diagonal so P^T = P
  }
}

TEST(Projection, AnalyticExpectations) {
  const auto patch = expected_projection(MaskDistribution(PatchDrop{8, 8, 4, 0.2}));
  for (double v : patch) EXPECT_DOUBLE_EQ(v, 0.8);

  const auto lines = expected_projection(MaskDistribution(LineSubsample{1, 320, 4}));
  const LineLayout l = line_layout(320, 4);
  for (std::size_t i = 0; i < 320; ++i) {
    const bool central = i >= l.central_begin && i < l.central_begin + 30;
    EXPECT_DOUBLE_EQ(lines[i], central ? 1.0 : 200.0 / 1160.0);
  }

  const auto full = expected_projection(MaskDistribution(FixedMask{Mask(5, 1)}));
  for (double v : full) EXPECT_EQ(v, 1.0);
  EXPECT_THROW(MaskDistribution(FixedMask{Mask{1, 0, 1}}), DomainError);
}

TEST(Projection, MonteCarloAgreesWithAnalytic) {
  Rng rng(6);
  const MaskDistribution single(SingleDrop{5});
  const auto mc = expected_projection_monte_carlo(single, 100000, rng);
  const auto an = expected_projection(single);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(mc[i], an[i], 4.0 * std::sqrt(0.8 * 0.2 / 1e5));
}

TEST(WeightMatrix, InverseSquareRoot) {
  const std::vector<double> ep(4, 0.8);
  for (double w : weight_matrix(ep)) EXPECT_NEAR(w, 1.0 / std::sqrt(0.8), 1e-15);
  EXPECT_NEAR(1.0 / std::sqrt(0.8), 1.118033988749895, 1e-15);

  const auto mri = weight_matrix(expected_projection(MaskDistribution(LineSubsample{1, 320, 4})));
  const LineLayout l = line_layout(320, 4);
  for (std::size_t i = 0; i < 320; ++i) {
    const bool central = i >= l.central_begin && i < l.central_begin + 30;
    EXPECT_NEAR(mri[i], central ? 1.0 : std::sqrt(5.8), 1e-12);
  }
  for (double w : weight_matrix(std::vector<double>(3, 1.0))) EXPECT_EQ(w, 1.0);
  EXPECT_THROW(weight_matrix(std::vector<double>{1.0, 0.0}), DomainError);
}

TEST(WeightMatrix, SquaredTimesExpectationIsIdentity) {
  const auto ep = expected_projection(MaskDistribution(LineSubsample{3, 40, 4}));
  const auto w = weight_matrix(ep);
  for (std::size_t i = 0; i < ep.size(); ++i) EXPECT_NEAR(w[i] * w[i] * ep[i], 1.0, 1e-12);
}

TEST(ZeroFilled, EqualsInverseTransformOfYbar) {
  Rng rng(13);
  const OrthoTransform vt = OrthoTransform::spectral(4, 4);
  const MaskDistribution dist(LineSubsample{4, 4, 2});
  const SpectralDegradation deg = sample_degradation(dist, vt, 1.0, 0.01, rng);
  const Measurement m = corrupt(random_vector(32, rng), deg, rng);
  EXPECT_EQ(zero_filled(m, vt), vt.apply_inverse(m.ybar.data()));
}

}  // namespace
}  // namespace gsure
