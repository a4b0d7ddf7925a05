#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gsure/rng.hpp"
#include "gsure/tensor.hpp"

// SVD-factored linear degradations. Every operator in a dataset shares the
// right-singular basis V^T; a measurement is stored in that basis as
// ybar = P xbar + zbar, where P is a 0/1 diagonal mask and zbar has the
// per-entry variance sigma0^2 / s_i^2 on kept entries.
namespace gsure {

using Mask = std::vector<std::uint8_t>;

std::vector<double> mask_to_values(const Mask& mask);

// Orthogonal change of basis x -> V^T x.
class OrthoTransform {
 public:
  enum class Kind { identity, permutation, spectral, explicit_matrix };

  static OrthoTransform identity(std::size_t n);
  // V^T x = (x[perm[0]], x[perm[1]], ...).
  static OrthoTransform permutation(std::vector<std::size_t> perm);
  // Unitary 2-D DFT of a height x width complex image stored as two real
  // planes [re; im]; frequencies are centred so index height/2, width/2 is DC.
  static OrthoTransform spectral(std::size_t height, std::size_t width);
  // Rows of `q` form V^T. Must be orthogonal to 1e-9.
  static OrthoTransform explicit_matrix(Tensor q);

  Kind kind() const { return kind_; }
  std::string kind_name() const;
  std::size_t dim() const { return dim_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }

  std::vector<double> apply(std::span<const double> x) const;
  std::vector<double> apply_inverse(std::span<const double> xbar) const;
  // Row-wise versions over a [B, dim] batch.
  Tensor apply_rows(const Tensor& batch) const;
  Tensor apply_inverse_rows(const Tensor& batch) const;

  friend bool operator==(const OrthoTransform& a, const OrthoTransform& b);

 private:
  OrthoTransform() = default;
  void dft2(std::span<const double> in, std::span<double> out, bool inverse) const;

  Kind kind_ = Kind::identity;
  std::size_t dim_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::size_t> perm_;
  Tensor matrix_;
  // cos/sin tables of the centred DFT along each axis, [k * n + j].
  std::vector<double> cos_h_, sin_h_, cos_w_, sin_w_;
};

struct SpectralDegradation {
  OrthoTransform vt;
  std::vector<double> singulars;  // s_i >= 0; s_i == 0 drops coordinate i
  double sigma0 = 0.0;

  SpectralDegradation(OrthoTransform vt, std::vector<double> singulars, double sigma0);
  std::size_t dim() const { return singulars.size(); }
  Mask mask() const;
  // sigma0^2 / s_i^2 on kept entries, 0 elsewhere.
  std::vector<double> noise_var() const;
  double max_noise_var() const;
};

struct Measurement {
  Tensor ybar;  // [n], identically zero where mask is 0
  Mask mask;
  double sigma0 = 0.0;
  std::vector<double> noise_var;

  std::size_t dim() const { return mask.size(); }
};

struct PatchDrop {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t patch = 1;
  double p = 0.0;
};

// Horizontal frequency lines of a [2, height, lines] spectral image.
struct LineSubsample {
  std::size_t height = 1;
  std::size_t lines = 0;
  std::size_t acceleration = 1;
};

// Exactly one coordinate out of `n` is dropped, uniformly at random.
struct SingleDrop {
  std::size_t n = 2;
};

struct FixedMask {
  Mask mask;
};

// Distribution of projections P. Validated on construction: E[P] must be
// positive definite.
class MaskDistribution {
 public:
  using Spec = std::variant<PatchDrop, LineSubsample, SingleDrop, FixedMask>;

  explicit MaskDistribution(Spec spec);
  const Spec& spec() const { return spec_; }
  std::size_t dim() const;
  std::string kind_name() const;

  Mask sample(Rng& rng) const;

 private:
  Spec spec_;
};

Mask sample_patch_mask(std::size_t height, std::size_t width, std::size_t patch, double p, Rng& rng);

struct LineLayout {
  std::size_t total = 0;    // floor(n / R)
  std::size_t central = 0;  // ceil(0.375 n / R), always kept
  std::size_t central_begin = 0;
};
LineLayout line_layout(std::size_t n, std::size_t acceleration);

// Mask over n lines: the central block plus uniformly chosen extra lines.
Mask sample_line_mask(std::size_t n, std::size_t acceleration, Rng& rng);
// Spreads a per-line mask over a [2, height, lines] spectral image.
Mask expand_line_mask(const Mask& lines, std::size_t height);

// Nested line masks for an acceleration sweep: the set kept at a larger R is
// a subset of the set kept at a smaller R.
std::vector<Mask> sample_nested_line_masks(std::size_t n, std::span<const std::size_t> accelerations,
                                           Rng& rng);

// Diagonal of E[P]; analytic for every built-in distribution. Throws
// DomainError if any entry is zero.
std::vector<double> expected_projection(const MaskDistribution& dist);
std::vector<double> expected_projection_monte_carlo(const MaskDistribution& dist, std::size_t draws,
                                                    Rng& rng);
// Empirical E[P] over stored masks.
std::vector<double> empirical_projection(std::span<const Mask> masks);

// W = E[P]^{-1/2}.
std::vector<double> weight_matrix(std::span<const double> expected_projection);

// Draws an operator: mask from `dist`, singular value `s` on kept entries.
SpectralDegradation sample_degradation(const MaskDistribution& dist, const OrthoTransform& vt,
                                       double singular_value, double sigma0, Rng& rng);

// ybar = P V^T x + zbar.
Measurement corrupt(std::span<const double> x, const SpectralDegradation& deg, Rng& rng);

// V ybar: the naive reconstruction with zeros at unobserved coordinates.
std::vector<double> zero_filled(const Measurement& m, const OrthoTransform& vt);

}  // namespace gsure
