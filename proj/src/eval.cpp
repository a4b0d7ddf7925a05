#include "gsure/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "gsure/error.hpp"

namespace gsure {

namespace {

Tensor clean_spectral_batch(std::span<const std::vector<double>> clean, const OrthoTransform& vt) {
  if (clean.empty()) throw DomainError("evaluation: empty clean set");
  const std::size_t n = vt.dim();
  Tensor out(Shape{clean.size(), n});
  for (std::size_t r = 0; r < clean.size(); ++r) {
    if (clean[r].size() != n) throw ShapeError("evaluation: signal dimension mismatch");
    const auto xbar = vt.apply(clean[r]);
    std::copy(xbar.begin(), xbar.end(), out.row(r).begin());
  }
  return out;
}

Tensor diffuse_batch(const Tensor& xbar, int t, const DiffusionSchedule& s, Rng& rng) {
  Tensor out(xbar.shape());
  for (std::size_t r = 0; r < xbar.rows(); ++r) {
    const Tensor row = diffuse_clean(xbar.row(r), t, s, rng);
    std::copy(row.data().begin(), row.data().end(), out.row(r).begin());
  }
  return out;
}

double mean_row_sq_error(const Tensor& f, const Tensor& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) acc += (f[i] - x[i]) * (f[i] - x[i]);
  return acc / static_cast<double>(f.rows());
}

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t.at(r, c);
  return m;
}

Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& c) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(1e-300);
  return es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

// Pair sums over a pooled sample split by labels: [AA, AB, BB] over i < j.
std::array<double, 3> pair_sums(const Tensor& z, const std::vector<std::uint8_t>& label) {
  std::array<double, 3> acc{0.0, 0.0, 0.0};
  const std::size_t n = z.rows(), d = z.cols();
  const double* p = z.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* zi = p + i * d;
    double row[3] = {0.0, 0.0, 0.0};
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* zj = p + j * d;
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) sq += (zi[k] - zj[k]) * (zi[k] - zj[k]);
      row[label[j]] += std::sqrt(sq);
    }
    // label[i] + label[j]: 0 = AA, 1 = AB, 2 = BB.
    if (label[i] == 0) {
      acc[0] += row[0];
      acc[1] += row[1];
    } else {
      acc[1] += row[0];
      acc[2] += row[1];
    }
  }
  return acc;
}

double energy_from_sums(const std::array<double, 3>& s, std::size_t na, std::size_t nb) {
  const double a = static_cast<double>(na), b = static_cast<double>(nb);
  return 2.0 * s[1] / (a * b) - 2.0 * s[0] / (a * a) - 2.0 * s[2] / (b * b);
}

Tensor pool(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw ShapeError("energy distance: dimension mismatch");
  if (a.rows() == 0 || b.rows() == 0) throw DomainError("energy distance: empty sample");
  Tensor z(Shape{a.rows() + b.rows(), a.cols()});
  std::copy(a.data().begin(), a.data().end(), z.storage().begin());
  std::copy(b.data().begin(), b.data().end(), z.storage().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return z;
}

}  // namespace

SweepResult denoising_mse_sweep(const Denoiser& a, const Denoiser& b, std::span<const std::vector<double>> clean,
                                const OrthoTransform& vt, const DiffusionSchedule& s, std::vector<int> ts, Rng& rng,
                                Weights which, std::string dataset) {
  if (a.dim() != b.dim() || a.dim() != vt.dim()) throw ShapeError("mse sweep: models and transform must share dimension");
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  const Tensor xbar = clean_spectral_batch(clean, vt);
  SweepResult out;
  out.dataset = std::move(dataset);
  out.samples = clean.size();
  for (int t : ts) {
    const Tensor xt = diffuse_batch(xbar, t, s, rng);
    const std::vector<int> tv(xt.rows(), t);
    out.rows.push_back({t, mean_row_sq_error(a.predict(xt, tv, s, which), xbar),
                        mean_row_sq_error(b.predict(xt, tv, s, which), xbar)});
  }
  return out;
}

std::vector<PsnrRow> generalization_psnr(const Denoiser& a, const Denoiser& b, std::span<const std::vector<double>> clean,
                                         const OrthoTransform& vt, const DiffusionSchedule& s, std::vector<int> ts,
                                         Rng& rng, double data_range, Weights which) {
  if (a.dim() != b.dim() || a.dim() != vt.dim()) throw ShapeError("psnr: models and transform must share dimension");
  if (!(data_range > 0.0)) throw DomainError("psnr: data range must be positive");
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  const Tensor xbar = clean_spectral_batch(clean, vt);
  std::vector<PsnrRow> out;
  for (int t : ts) {
    const Tensor xt = diffuse_batch(xbar, t, s, rng);
    const std::vector<int> tv(xt.rows(), t);
    const Tensor fa = vt.apply_inverse_rows(a.predict(xt, tv, s, which));
    const Tensor fb = vt.apply_inverse_rows(b.predict(xt, tv, s, which));
    const double mse = mean_row_sq_error(fa, fb) / static_cast<double>(fa.cols());
    out.push_back({t, mse == 0.0 ? std::numeric_limits<double>::infinity()
                                 : 10.0 * std::log10(data_range * data_range / mse)});
  }
  return out;
}

double energy_distance(const Tensor& a, const Tensor& b) {
  const Tensor z = pool(a, b);
  std::vector<std::uint8_t> label(z.rows(), 0);
  std::fill(label.begin() + static_cast<std::ptrdiff_t>(a.rows()), label.end(), 1);
  return energy_from_sums(pair_sums(z, label), a.rows(), b.rows());
}

PermutationTest energy_permutation_test(const Tensor& a, const Tensor& b, int shuffles, Rng& rng) {
  if (shuffles < 1) throw DomainError("permutation test: needs at least one shuffle");
  const Tensor z = pool(a, b);
  std::vector<std::uint8_t> label(z.rows(), 0);
  std::fill(label.begin() + static_cast<std::ptrdiff_t>(a.rows()), label.end(), 1);
  PermutationTest out;
  out.statistic = energy_from_sums(pair_sums(z, label), a.rows(), b.rows());
  std::vector<double> null(static_cast<std::size_t>(shuffles));
  int exceed = 0;
  for (double& v : null) {
    // Fisher-Yates with the library engine, for a reproducible order.
    for (std::size_t i = label.size() - 1; i > 0; --i) {
      std::swap(label[i], label[static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(i)))]);
    }
    v = energy_from_sums(pair_sums(z, label), a.rows(), b.rows());
    if (v >= out.statistic) ++exceed;
  }
  const double n = static_cast<double>(shuffles);
  out.null_mean = std::accumulate(null.begin(), null.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : null) ss += (v - out.null_mean) * (v - out.null_mean);
  out.null_sd = shuffles > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  out.p_value = (1.0 + exceed) / (1.0 + n);
  return out;
}

int timestep_for_snr(const DiffusionSchedule& s, double snr) {
  int best = 1;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int t = 1; t <= s.T; ++t) {
    const double ab = s.alpha_bar(t);
    const double gap = std::abs(std::log(ab / (1.0 - ab)) - std::log(snr));
    if (gap < best_gap) {
      best_gap = gap;
      best = t;
    }
  }
  return best;
}

std::vector<IndependenceResult> independence_demo(DemoPrior prior, const Denoiser& model, const DiffusionSchedule& s,
                                                  std::span<const double> snr_levels, std::size_t samples, Rng& rng,
                                                  double sigma0, int shuffles, Weights which) {
  if (model.dim() != 2) throw ShapeError("independence demo: needs a 2-D model");
  const OrthoTransform vt = OrthoTransform::identity(2);
  std::vector<IndependenceResult> out;
  for (double snr : snr_levels) {
    if (!(snr > 0.0)) throw DomainError("independence demo: SNR must be positive");
    IndependenceResult res;
    res.t = timestep_for_snr(s, snr);
    res.snr = s.alpha_bar(res.t) / (1.0 - s.alpha_bar(res.t));
    Tensor xt(Shape{samples, 2}), xbar(Shape{samples, 2});
    std::vector<int> dropped(samples);
    for (std::size_t i = 0; i < samples; ++i) {
      std::vector<double> x(2);
      if (prior == DemoPrior::two_deltas) {
        x.assign(2, rng.bernoulli(0.5) ? 1.0 : -1.0);
      } else {
        x = {rng.normal(), rng.normal()};
      }
      dropped[i] = rng.bernoulli(0.5) ? 1 : 0;
      std::vector<double> sing(2, 1.0);
      sing[static_cast<std::size_t>(dropped[i])] = 0.0;
      const Measurement m = corrupt(x, SpectralDegradation(vt, sing, sigma0), rng);
      const Tensor row = perturb(m, res.t, s, rng);
      for (std::size_t j = 0; j < 2; ++j) {
        xt.at(i, j) = row[j];
        xbar.at(i, j) = x[j];
      }
    }
    const Tensor f = model.predict(xt, std::vector<int>(samples, res.t), s, which);
    std::vector<double> e0, e1;
    for (std::size_t i = 0; i < samples; ++i) {
      auto& dst = dropped[i] == 0 ? e0 : e1;
      for (std::size_t j = 0; j < 2; ++j) dst.push_back(f.at(i, j) - xbar.at(i, j));
    }
    const std::size_t n0 = e0.size() / 2, n1 = e1.size() / 2;
    res.errors_mask0 = Tensor(Shape{n0, 2}, std::move(e0));
    res.errors_mask1 = Tensor(Shape{n1, 2}, std::move(e1));
    res.test = energy_permutation_test(res.errors_mask0, res.errors_mask1, shuffles, rng);
    out.push_back(std::move(res));
  }
  return out;
}

std::vector<double> linear_cca(const Tensor& x, const Tensor& y, double ridge) {
  if (x.rows() != y.rows()) throw ShapeError("cca: views need equal row counts");
  if (x.rows() < 2) throw DomainError("cca: needs at least two rows");
  if (!(ridge >= 0.0)) throw DomainError("cca: ridge must be non-negative");
  Eigen::MatrixXd a = to_eigen(x), b = to_eigen(y);
  a.rowwise() -= a.colwise().mean();
  b.rowwise() -= b.colwise().mean();
  const double denom = static_cast<double>(x.rows()) - 1.0;
  Eigen::MatrixXd caa = a.transpose() * a / denom, cbb = b.transpose() * b / denom;
  caa.diagonal().array() += ridge;
  cbb.diagonal().array() += ridge;
  const Eigen::MatrixXd cab = a.transpose() * b / denom;
  const Eigen::MatrixXd m = inverse_sqrt(caa) * cab * inverse_sqrt(cbb);
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
  std::vector<double> out(static_cast<std::size_t>(sv.size()));
  for (Eigen::Index i = 0; i < sv.size(); ++i) out[static_cast<std::size_t>(i)] = std::clamp(sv(i), 0.0, 1.0);
  return out;
}

UncertaintyMap uncertainty_map(const Denoiser& model, const DiffusionSchedule& s, const Measurement& m,
                               const OrthoTransform& vt, const SamplerConfig& cfg, std::uint64_t seed, int k,
                               bool reuse_seed) {
  if (k < 2) throw DomainError("uncertainty map: needs k >= 2");
  const std::size_t n = m.dim();
  std::vector<std::vector<double>> runs;
  for (int i = 0; i < k; ++i) {
    Rng rng(Rng::derive(seed, reuse_seed ? 0 : static_cast<std::uint64_t>(i)));
    runs.push_back(reconstruct(model, s, m, cfg, rng, vt));
  }
  // Moments of deviations from the first run: identical runs give exactly 0.
  UncertaintyMap out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (std::size_t j = 0; j < n; ++j) {
    double sum = 0.0, sq = 0.0;
    for (const auto& r : runs) {
      const double d = r[j] - runs.front()[j];
      sum += d;
      sq += d * d;
    }
    out.mean[j] = runs.front()[j] + sum / k;
    out.stddev[j] = std::sqrt(std::max(0.0, (sq - sum * sum / k) / (k - 1)));
  }
  return out;
}

double wasserstein2_squared_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DomainError("wasserstein: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  // Integrate (F^-1(u) - G^-1(u))^2 over the merged quantile breakpoints.
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double u = 0.0, acc = 0.0;
  while (i < a.size() && j < b.size()) {
    const double next_a = static_cast<double>(i + 1) / na, next_b = static_cast<double>(j + 1) / nb;
    const double next = std::min(next_a, next_b);
    acc += (next - u) * (a[i] - b[j]) * (a[i] - b[j]);
    u = next;
    if (next_a <= next) ++i;
    if (next_b <= next) ++j;
  }
  return acc;
}

DistributionDistance distribution_distance(const Tensor& a, const Tensor& b, int projections, Rng& rng) {
  if (a.rows() == 0 || b.rows() == 0) throw DomainError("distribution distance: empty sample set");
  if (a.cols() != b.cols()) throw ShapeError("distribution distance: dimension mismatch");
  if (projections < 1) throw DomainError("distribution distance: needs at least one projection");
  const std::size_t d = a.cols();
  double w2 = 0.0;
  std::vector<double> theta(d), pa(a.rows()), pb(b.rows());
  for (int p = 0; p < projections; ++p) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : theta) {
        v = rng.normal();
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& v : theta) v /= norm;
    auto project = [&](std::span<const double> x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += x[k] * theta[k];
      return acc;
    };
    for (std::size_t r = 0; r < a.rows(); ++r) pa[r] = project(a.row(r));
    for (std::size_t r = 0; r < b.rows(); ++r) pb[r] = project(b.row(r));
    w2 += wasserstein2_squared_1d(pa, pb);
  }
  DistributionDistance out;
  out.sliced_w2 = std::sqrt(static_cast<double>(d) * w2 / projections);

  const Eigen::MatrixXd ea = to_eigen(a), eb = to_eigen(b);
  const Eigen::RowVectorXd ma = ea.colwise().mean(), mb = eb.colwise().mean();
  out.mean_gap = (ma - mb).norm();
  auto cov = [](const Eigen::MatrixXd& m, const Eigen::RowVectorXd& mu) {
    const Eigen::MatrixXd c = m.rowwise() - mu;
    return Eigen::MatrixXd(c.transpose() * c / std::max<double>(1.0, static_cast<double>(m.rows()) - 1.0));
  };
  out.cov_gap = (cov(ea, ma) - cov(eb, mb)).norm();
  return out;
}

}  // namespace gsure
