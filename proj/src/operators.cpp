#include "gsure/operators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "gsure/error.hpp"

namespace gsure {

namespace {

void centred_dft_tables(std::size_t n, std::vector<double>& cos_t, std::vector<double>& sin_t) {
  cos_t.resize(n * n);
  sin_t.resize(n * n);
  const auto centre = static_cast<long>(n / 2);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      // (k - centre) * j reduced mod n keeps the angle small and exact.
      long prod = (static_cast<long>(k) - centre) * static_cast<long>(j);
      prod %= static_cast<long>(n);
      if (prod < 0) prod += static_cast<long>(n);
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(prod) / static_cast<double>(n);
      cos_t[k * n + j] = std::cos(angle) * inv_sqrt;
      sin_t[k * n + j] = std::sin(angle) * inv_sqrt;
    }
  }
}

void require_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected dimension " + std::to_string(want) + ", got " +
                     std::to_string(got));
  }
}

}  // namespace

std::vector<double> mask_to_values(const Mask& mask) {
  std::vector<double> out(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] ? 1.0 : 0.0;
  return out;
}

OrthoTransform OrthoTransform::identity(std::size_t n) {
  OrthoTransform t;
  t.kind_ = Kind::identity;
  t.dim_ = n;
  return t;
}

OrthoTransform OrthoTransform::permutation(std::vector<std::size_t> perm) {
  std::vector<std::size_t> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != i) throw DomainError("permutation: not a permutation of 0..n-1");
  }
  OrthoTransform t;
  t.kind_ = Kind::permutation;
  t.dim_ = perm.size();
  t.perm_ = std::move(perm);
  return t;
}

OrthoTransform OrthoTransform::spectral(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw DomainError("spectral transform: empty grid");
  OrthoTransform t;
  t.kind_ = Kind::spectral;
  t.height_ = height;
  t.width_ = width;
  t.dim_ = 2 * height * width;
  centred_dft_tables(height, t.cos_h_, t.sin_h_);
  centred_dft_tables(width, t.cos_w_, t.sin_w_);
  return t;
}

OrthoTransform OrthoTransform::explicit_matrix(Tensor q) {
  if (q.rank() != 2 || q.rows() != q.cols()) throw ShapeError("explicit transform: matrix must be square");
  const Tensor qqt = matmul_nt(q, q);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    for (std::size_t j = 0; j < q.cols(); ++j) {
      const double want = i == j ? 1.0 : 0.0;
      if (std::abs(qqt.at(i, j) - want) > 1e-9) throw DomainError("explicit transform: matrix is not orthogonal");
    }
  }
  OrthoTransform t;
  t.kind_ = Kind::explicit_matrix;
  t.dim_ = q.rows();
  t.matrix_ = std::move(q);
  return t;
}

std::string OrthoTransform::kind_name() const {
  switch (kind_) {
    case Kind::identity: return "identity";
    case Kind::permutation: return "permutation";
    case Kind::spectral: return "spectral";
    case Kind::explicit_matrix: return "explicit";
  }
  return "?";
}

// Separable centred DFT: along each row of every plane pair, then along
// each column.
void OrthoTransform::dft2(std::span<const double> in, std::span<double> out, bool inverse) const {
  const std::size_t h = height_;
  const std::size_t w = width_;
  const std::size_t plane = h * w;
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<double> tre(plane), tim(plane);
  // Rows: transform along the width axis.
  for (std::size_t r = 0; r < h; ++r) {
    const double* xr = in.data() + r * w;
    const double* xi = in.data() + plane + r * w;
    for (std::size_t k = 0; k < w; ++k) {
      double sre = 0.0, sim = 0.0;
      // inverse uses the conjugate transpose: table index [j * w + k]
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t idx = inverse ? j * w + k : k * w + j;
        const double c = cos_w_[idx];
        const double s = sign * sin_w_[idx];
        sre += xr[j] * c - xi[j] * s;
        sim += xr[j] * s + xi[j] * c;
      }
      tre[r * w + k] = sre;
      tim[r * w + k] = sim;
    }
  }
  // Columns: transform along the height axis.
  for (std::size_t col = 0; col < w; ++col) {
    for (std::size_t k = 0; k < h; ++k) {
      double sre = 0.0, sim = 0.0;
      for (std::size_t j = 0; j < h; ++j) {
        const std::size_t idx = inverse ? j * h + k : k * h + j;
        const double c = cos_h_[idx];
        const double s = sign * sin_h_[idx];
        const double ar = tre[j * w + col];
        const double ai = tim[j * w + col];
        sre += ar * c - ai * s;
        sim += ar * s + ai * c;
      }
      out[k * w + col] = sre;
      out[plane + k * w + col] = sim;
    }
  }
}

std::vector<double> OrthoTransform::apply(std::span<const double> x) const {
  require_dim(x.size(), dim_, "transform");
  std::vector<double> out(dim_);
  switch (kind_) {
    case Kind::identity:
      std::copy(x.begin(), x.end(), out.begin());
      break;
    case Kind::permutation:
      for (std::size_t i = 0; i < dim_; ++i) out[i] = x[perm_[i]];
      break;
    case Kind::spectral:
      dft2(x, out, false);
      break;
    case Kind::explicit_matrix:
      for (std::size_t i = 0; i < dim_; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) s += matrix_.at(i, j) * x[j];
        out[i] = s;
      }
      break;
  }
  return out;
}

std::vector<double> OrthoTransform::apply_inverse(std::span<const double> xbar) const {
  require_dim(xbar.size(), dim_, "inverse transform");
  std::vector<double> out(dim_);
  switch (kind_) {
    case Kind::identity:
      std::copy(xbar.begin(), xbar.end(), out.begin());
      break;
    case Kind::permutation:
      for (std::size_t i = 0; i < dim_; ++i) out[perm_[i]] = xbar[i];
      break;
    case Kind::spectral:
      dft2(xbar, out, true);
      break;
    case Kind::explicit_matrix:
      for (std::size_t j = 0; j < dim_; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) s += matrix_.at(i, j) * xbar[i];
        out[j] = s;
      }
      break;
  }
  return out;
}

Tensor OrthoTransform::apply_rows(const Tensor& batch) const {
  if (batch.rank() != 2) throw ShapeError("transform: expected a [B, n] batch");
  Tensor out(batch.shape());
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const std::vector<double> y = apply(batch.row(r));
    std::copy(y.begin(), y.end(), out.row(r).begin());
  }
  return out;
}

Tensor OrthoTransform::apply_inverse_rows(const Tensor& batch) const {
  if (batch.rank() != 2) throw ShapeError("transform: expected a [B, n] batch");
  Tensor out(batch.shape());
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const std::vector<double> y = apply_inverse(batch.row(r));
    std::copy(y.begin(), y.end(), out.row(r).begin());
  }
  return out;
}

bool operator==(const OrthoTransform& a, const OrthoTransform& b) {
  if (a.kind_ != b.kind_ || a.dim_ != b.dim_) return false;
  switch (a.kind_) {
    case OrthoTransform::Kind::identity: return true;
    case OrthoTransform::Kind::permutation: return a.perm_ == b.perm_;
    case OrthoTransform::Kind::spectral: return a.height_ == b.height_ && a.width_ == b.width_;
    case OrthoTransform::Kind::explicit_matrix: return a.matrix_ == b.matrix_;
  }
  return false;
}

SpectralDegradation::SpectralDegradation(OrthoTransform vt_in, std::vector<double> singulars_in, double sigma0_in)
    : vt(std::move(vt_in)), singulars(std::move(singulars_in)), sigma0(sigma0_in) {
  require_dim(singulars.size(), vt.dim(), "degradation");
  if (sigma0 < 0.0) throw DomainError("degradation: sigma0 must be nonnegative");
  for (double s : singulars) {
    if (!(s >= 0.0)) throw DomainError("degradation: singular values must be nonnegative");
  }
}

Mask SpectralDegradation::mask() const {
  Mask m(singulars.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = singulars[i] > 0.0 ? 1 : 0;
  return m;
}

std::vector<double> SpectralDegradation::noise_var() const {
  std::vector<double> v(singulars.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (singulars[i] > 0.0) v[i] = sigma0 * sigma0 / (singulars[i] * singulars[i]);
  }
  return v;
}

double SpectralDegradation::max_noise_var() const {
  const std::vector<double> v = noise_var();
  return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
}

// ---------------------------------------------------------------------------
// Mask distributions

LineLayout line_layout(std::size_t n, std::size_t acceleration) {
  if (acceleration == 0) throw DomainError("line mask: acceleration must be >= 1");
  if (n == 0) throw DomainError("line mask: no lines");
  LineLayout l;
  const double per = static_cast<double>(n) / static_cast<double>(acceleration);
  l.total = n / acceleration;
  l.central = static_cast<std::size_t>(std::ceil(0.375 * per - 1e-12));
  if (acceleration == 1) l.central = n;
  if (l.total < l.central || l.total == 0) {
    throw DomainError("line mask: n/R = " + std::to_string(l.total) +
                      " is smaller than the central block of " + std::to_string(l.central) + " lines");
  }
  l.central_begin = (n - l.central) / 2;
  return l;
}

Mask sample_patch_mask(std::size_t height, std::size_t width, std::size_t patch, double p, Rng& rng) {
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw DomainError("patch mask: patch size " + std::to_string(patch) + " does not tile " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
  if (!(p >= 0.0 && p < 1.0)) throw DomainError("patch mask: drop probability must be in [0, 1)");
  Mask m(height * width, 1);
  for (std::size_t pr = 0; pr < height / patch; ++pr) {
    for (std::size_t pc = 0; pc < width / patch; ++pc) {
      if (!rng.bernoulli(p)) continue;
      for (std::size_t r = 0; r < patch; ++r) {
        for (std::size_t c = 0; c < patch; ++c) m[(pr * patch + r) * width + pc * patch + c] = 0;
      }
    }
  }
  return m;
}

Mask sample_line_mask(std::size_t n, std::size_t acceleration, Rng& rng) {
  const LineLayout l = line_layout(n, acceleration);
  Mask m(n, 0);
  std::vector<std::size_t> rest;
  rest.reserve(n - l.central);
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= l.central_begin && i < l.central_begin + l.central) {
      m[i] = 1;
    } else {
      rest.push_back(i);
    }
  }
  // Partial Fisher-Yates: the first `extra` entries are a uniform subset.
  const std::size_t extra = l.total - l.central;
  for (std::size_t k = 0; k < extra; ++k) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<long>(k), static_cast<long>(rest.size() - 1)));
    std::swap(rest[k], rest[j]);
    m[rest[k]] = 1;
  }
  return m;
}

Mask expand_line_mask(const Mask& lines, std::size_t height) {
  const std::size_t w = lines.size();
  Mask m(2 * height * w);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t col = 0; col < w; ++col) m[c * height * w + r * w + col] = lines[col];
    }
  }
  return m;
}

std::vector<Mask> sample_nested_line_masks(std::size_t n, std::span<const std::size_t> accelerations,
                                           Rng& rng) {
  // Priority order: lines sorted by distance to the centre up to the largest
  // central block, then a random permutation of the rest.
  std::size_t max_central = 0;
  for (std::size_t r : accelerations) max_central = std::max(max_central, line_layout(n, r).central);
  std::vector<std::size_t> by_distance(n);
  std::iota(by_distance.begin(), by_distance.end(), 0);
  const double centre = static_cast<double>(n - 1) / 2.0;
  std::stable_sort(by_distance.begin(), by_distance.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(static_cast<double>(a) - centre) < std::abs(static_cast<double>(b) - centre);
  });
  std::vector<std::size_t> order(by_distance.begin(), by_distance.begin() + static_cast<long>(max_central));
  std::vector<std::size_t> rest(by_distance.begin() + static_cast<long>(max_central), by_distance.end());
  std::sort(rest.begin(), rest.end());
  std::shuffle(rest.begin(), rest.end(), rng.engine());
  order.insert(order.end(), rest.begin(), rest.end());

  std::vector<Mask> out;
  for (std::size_t r : accelerations) {
    const LineLayout l = line_layout(n, r);
    Mask m(n, 0);
    for (std::size_t k = l.central_begin; k < l.central_begin + l.central; ++k) m[k] = 1;
    std::size_t kept = l.central;
    for (std::size_t k = 0; k < order.size() && kept < l.total; ++k) {
      if (!m[order[k]]) {
        m[order[k]] = 1;
        ++kept;
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

MaskDistribution::MaskDistribution(Spec spec) : spec_(std::move(spec)) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PatchDrop>) {
          if (s.patch == 0 || s.height % s.patch != 0 || s.width % s.patch != 0) {
            throw DomainError("patch-drop: patch size does not tile the image");
          }
          if (!(s.p >= 0.0 && s.p < 1.0)) {
            throw DomainError("patch-drop: p must be in [0, 1); p = 1 makes E[P] singular");
          }
        } else if constexpr (std::is_same_v<T, LineSubsample>) {
          if (s.height == 0) throw DomainError("line-subsample: height must be positive");
          line_layout(s.lines, s.acceleration);
        } else if constexpr (std::is_same_v<T, SingleDrop>) {
          if (s.n < 2) throw DomainError("single-drop: needs at least two coordinates");
        } else {
          for (std::uint8_t v : s.mask) {
            if (!v) throw DomainError("fixed mask: E[P] is singular (a coordinate is never observed)");
          }
        }
      },
      spec_);
}

std::size_t MaskDistribution::dim() const {
  return std::visit(
      [](const auto& s) -> std::size_t {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PatchDrop>) return s.height * s.width;
        else if constexpr (std::is_same_v<T, LineSubsample>) return 2 * s.height * s.lines;
        else if constexpr (std::is_same_v<T, SingleDrop>) return s.n;
        else return s.mask.size();
      },
      spec_);
}

std::string MaskDistribution::kind_name() const {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PatchDrop>) return "patch-drop";
        else if constexpr (std::is_same_v<T, LineSubsample>) return "line-subsample";
        else if constexpr (std::is_same_v<T, SingleDrop>) return "single-drop";
        else return "fixed";
      },
      spec_);
}

Mask MaskDistribution::sample(Rng& rng) const {
  return std::visit(
      [&rng](const auto& s) -> Mask {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PatchDrop>) {
          return sample_patch_mask(s.height, s.width, s.patch, s.p, rng);
        } else if constexpr (std::is_same_v<T, LineSubsample>) {
          return expand_line_mask(sample_line_mask(s.lines, s.acceleration, rng), s.height);
        } else if constexpr (std::is_same_v<T, SingleDrop>) {
          Mask m(s.n, 1);
          m[static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(s.n) - 1))] = 0;
          return m;
        } else {
          return s.mask;
        }
      },
      spec_);
}

std::vector<double> expected_projection(const MaskDistribution& dist) {
  std::vector<double> ep = std::visit(
      [](const auto& s) -> std::vector<double> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PatchDrop>) {
          return std::vector<double>(s.height * s.width, 1.0 - s.p);
        } else if constexpr (std::is_same_v<T, LineSubsample>) {
          const LineLayout l = line_layout(s.lines, s.acceleration);
          const std::size_t others = s.lines - l.central;
          const double q = others == 0 ? 1.0
                                       : static_cast<double>(l.total - l.central) / static_cast<double>(others);
          std::vector<double> per_line(s.lines, q);
          for (std::size_t k = l.central_begin; k < l.central_begin + l.central; ++k) per_line[k] = 1.0;
          std::vector<double> out(2 * s.height * s.lines);
          for (std::size_t i = 0; i < out.size(); ++i) out[i] = per_line[i % s.lines];
          return out;
        } else if constexpr (std::is_same_v<T, SingleDrop>) {
          return std::vector<double>(s.n, static_cast<double>(s.n - 1) / static_cast<double>(s.n));
        } else {
          return mask_to_values(s.mask);
        }
      },
      dist.spec());
  for (double v : ep) {
    if (!(v > 0.0)) throw DomainError("expected projection: E[P] is not positive definite");
  }
  return ep;
}

std::vector<double> expected_projection_monte_carlo(const MaskDistribution& dist, std::size_t draws,
                                                    Rng& rng) {
  std::vector<double> acc(dist.dim(), 0.0);
  for (std::size_t d = 0; d < draws; ++d) {
    const Mask m = dist.sample(rng);
    for (std::size_t i = 0; i < m.size(); ++i) acc[i] += m[i];
  }
  for (double& v : acc) {
    v /= static_cast<double>(draws);
    if (!(v > 0.0)) throw DomainError("expected projection: E[P] is not positive definite");
  }
  return acc;
}

std::vector<double> empirical_projection(std::span<const Mask> masks) {
  if (masks.empty()) throw DomainError("empirical projection: no masks");
  std::vector<double> acc(masks.front().size(), 0.0);
  for (const Mask& m : masks) {
    require_dim(m.size(), acc.size(), "empirical projection");
    for (std::size_t i = 0; i < m.size(); ++i) acc[i] += m[i];
  }
  for (double& v : acc) {
    v /= static_cast<double>(masks.size());
    if (!(v > 0.0)) throw DomainError("empirical projection: a coordinate is never observed");
  }
  return acc;
}

std::vector<double> weight_matrix(std::span<const double> expected_projection) {
  std::vector<double> w(expected_projection.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(expected_projection[i] > 0.0)) throw DomainError("weight matrix: E[P] entry must be positive");
    w[i] = 1.0 / std::sqrt(expected_projection[i]);
  }
  return w;
}

SpectralDegradation sample_degradation(const MaskDistribution& dist, const OrthoTransform& vt,
                                       double singular_value, double sigma0, Rng& rng) {
  if (!(singular_value > 0.0)) throw DomainError("degradation: singular value must be positive");
  require_dim(dist.dim(), vt.dim(), "degradation family");
  const Mask m = dist.sample(rng);
  std::vector<double> s(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) s[i] = m[i] ? singular_value : 0.0;
  return SpectralDegradation(vt, std::move(s), sigma0);
}

Measurement corrupt(std::span<const double> x, const SpectralDegradation& deg, Rng& rng) {
  require_dim(x.size(), deg.dim(), "corrupt");
  const std::vector<double> xbar = deg.vt.apply(x);
  Measurement m;
  m.mask = deg.mask();
  m.sigma0 = deg.sigma0;
  m.noise_var = deg.noise_var();
  m.ybar = Tensor(Shape{x.size()});
  for (std::size_t i = 0; i < xbar.size(); ++i) {
    if (!m.mask[i]) continue;
    const double sd = deg.sigma0 / deg.singulars[i];
    m.ybar[i] = xbar[i] + (sd > 0.0 ? sd * rng.normal() : 0.0);
  }
  return m;
}

std::vector<double> zero_filled(const Measurement& m, const OrthoTransform& vt) {
  return vt.apply_inverse(m.ybar.data());
}

}  // namespace gsure
