// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mlasdi/core/dense_matrix.hpp"
#include "mlasdi/error.hpp"
#include "mlasdi/latent_dynamics.hpp"
#include "mlasdi/parallel.hpp"

namespace mlasdi {

/// Matern nu=3/2 covariance: variance * (1 + sqrt(3) r / l) * exp(-sqrt(3) r / l).
inline double matern_kernel(std::span<const double> x1, std::span<const double> x2, double variance,
                            double lengthscale) {
  if (!(lengthscale > 0.0)) fail(ErrorKind::argument, "matern: lengthscale must be positive");
  if (variance < 0.0) fail(ErrorKind::argument, "matern: variance must be non-negative");
  if (x1.size() != x2.size()) fail(ErrorKind::shape, "matern: input dimensions differ");
  double r2 = 0.0;
  for (std::size_t i = 0; i < x1.size(); ++i) {
    const double d = x1[i] - x2[i];
    r2 += d * d;
  }
  const double s = std::numbers::sqrt3 * std::sqrt(r2) / lengthscale;
  return variance * (1.0 + s) * std::exp(-s);
}

struct GpHyperparameters {
  double variance = 1.0;
  double lengthscale = 1.0;
  double jitter = 1e-12;

  friend bool operator==(const GpHyperparameters&, const GpHyperparameters&) = default;
};

struct GpSearchOptions {
  std::size_t random_starts = 4;
  std::size_t rounds = 3;
  std::size_t grid_points = 11;
  std::uint64_t seed = 0;
};

struct GpPrediction {
  double mean = 0.0;
  double std = 0.0;
};

/// Lower Cholesky factor of an SPD matrix, or nullopt when a pivot is not
/// strictly positive.
inline std::optional<DenseMatrix> cholesky(const DenseMatrix& a) {
  const std::size_t n = a.rows();
  DenseMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

namespace detail {

inline std::vector<double> forward_substitute(const DenseMatrix& l, std::span<const double> b) {
  const std::size_t n = l.rows();
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x[k];
    x[i] = s / l(i, i);
  }
  return x;
}

inline std::vector<double> backward_substitute_transposed(const DenseMatrix& l, std::span<const double> b) {
  const std::size_t n = l.rows();
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
    x[i] = s / l(i, i);
  }
  return x;
}

inline DenseMatrix kernel_matrix(const DenseMatrix& inputs, double variance, double lengthscale, double jitter) {
  const std::size_t n = inputs.rows();
  DenseMatrix k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = matern_kernel(inputs.row(i), inputs.row(j), variance, lengthscale);
      k(i, j) = v;
      k(j, i) = v;
    }
    k(i, i) += jitter;
  }
  return k;
}

inline constexpr int kMaxJitterEscalations = 5;

struct Factorization {
  DenseMatrix chol;
  double jitter = 0.0;
};

// Escalates jitter by x10 up to five times (a zero jitter escalates to 1e-12 first).
inline std::optional<Factorization> factorize(const DenseMatrix& inputs, double variance, double lengthscale,
                                              double jitter) {
  for (int attempt = 0; attempt <= kMaxJitterEscalations; ++attempt) {
    if (auto l = cholesky(kernel_matrix(inputs, variance, lengthscale, jitter))) {
      return Factorization{std::move(*l), jitter};
    }
    jitter = jitter > 0.0 ? jitter * 10.0 : 1e-12;
  }
  return std::nullopt;
}

inline double log_marginal_likelihood(const Factorization& f, std::span<const double> targets) {
  const std::vector<double> v = forward_substitute(f.chol, targets);
  double quad = 0.0;
  for (double x : v) quad += x * x;
  double logdet = 0.0;
  for (std::size_t i = 0; i < f.chol.rows(); ++i) logdet += std::log(f.chol(i, i));
  const double n = static_cast<double>(targets.size());
  return -0.5 * quad - logdet - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

}  // namespace detail

/// Default jitter for a target vector: 1e-8 * variance(targets) + 1e-12.
inline double default_jitter(std::span<const double> targets) {
  double mean = 0.0;
  for (double y : targets) mean += y;
  mean /= static_cast<double>(targets.size());
  double var = 0.0;
  for (double y : targets) var += (y - mean) * (y - mean);
  var /= static_cast<double>(targets.size());
  return 1e-8 * var + 1e-12;
}

/// Zero-mean scalar GP regressor with a Matern 3/2 kernel.
class GaussianProcess {
 public:
  GaussianProcess() = default;

  /// Fixed hyperparameters; still escalates jitter if the factorization fails.
  static GaussianProcess with_hyperparameters(DenseMatrix inputs, std::vector<double> targets,
                                              GpHyperparameters hyper) {
    check_training_set(inputs, targets, 1);
    auto f = detail::factorize(inputs, hyper.variance, hyper.lengthscale, hyper.jitter);
    if (!f) {
      fail(ErrorKind::conditioning, "GP kernel matrix is not positive definite after " +
                                        std::to_string(detail::kMaxJitterEscalations) + " jitter escalations");
    }
    hyper.jitter = f->jitter;
    return GaussianProcess(std::move(inputs), std::move(targets), hyper, std::move(f->chol));
  }

  /// Maximizes the log marginal likelihood over (variance, lengthscale) by a
  /// seeded multi-start coordinate search on log-space grids.
  static GaussianProcess fit(DenseMatrix inputs, std::vector<double> targets, const GpSearchOptions& opts = {}) {
    check_training_set(inputs, targets);
    const double jitter = default_jitter(targets);

    double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
    for (std::size_t i = 0; i < inputs.rows(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        double r2 = 0.0;
        for (std::size_t c = 0; c < inputs.cols(); ++c) {
          const double d = inputs(i, c) - inputs(j, c);
          r2 += d * d;
        }
        const double r = std::sqrt(r2);
        dmin = std::min(dmin, r);
        dmax = std::max(dmax, r);
      }
    }
    double scale = 0.0;
    for (double y : targets) scale += y * y;
    scale /= static_cast<double>(targets.size());
    if (!(scale > 0.0)) scale = 1.0;

    const double lo_l = std::log(dmin / 10.0), hi_l = std::log(dmax * 10.0);
    const double lo_v = std::log(scale * 1e-3), hi_v = std::log(scale * 1e3);

    auto objective = [&](double log_v, double log_l) {
      auto f = detail::factorize(inputs, std::exp(log_v), std::exp(log_l), jitter);
      if (!f) return -std::numeric_limits<double>::infinity();
      return detail::log_marginal_likelihood(*f, targets);
    };

    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> uv(lo_v, hi_v), ul(lo_l, hi_l);
    std::vector<std::pair<double, double>> starts{{0.5 * (lo_v + hi_v), 0.5 * (lo_l + hi_l)}};
    for (std::size_t s = 0; s < opts.random_starts; ++s) {
      const double v = uv(rng);
      const double l = ul(rng);
      starts.emplace_back(v, l);
    }

    double best_v = starts.front().first, best_l = starts.front().second;
    double best = -std::numeric_limits<double>::infinity();
    const std::size_t npts = std::max<std::size_t>(opts.grid_points, 2);
    for (auto [cur_v, cur_l] : starts) {
      double cur = objective(cur_v, cur_l);
      double half_v = 0.5 * (hi_v - lo_v), half_l = 0.5 * (hi_l - lo_l);
      for (std::size_t round = 0; round < opts.rounds; ++round) {
        for (int coord = 0; coord < 2; ++coord) {
          const double center = coord == 0 ? cur_v : cur_l;
          const double half = coord == 0 ? half_v : half_l;
          const double box_lo = coord == 0 ? lo_v : lo_l;
          const double box_hi = coord == 0 ? hi_v : hi_l;
          // first round scans the whole box, later rounds zoom in around the incumbent
          const double lo = round == 0 ? box_lo : std::max(center - half, box_lo);
          const double hi = round == 0 ? box_hi : std::min(center + half, box_hi);
          for (std::size_t g = 0; g < npts; ++g) {
            const double x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(npts - 1);
            const double val = coord == 0 ? objective(x, cur_l) : objective(cur_v, x);
            if (val > cur) {
              cur = val;
              (coord == 0 ? cur_v : cur_l) = x;
            }
          }
        }
        half_v /= static_cast<double>(npts - 1) / 2.0;
        half_l /= static_cast<double>(npts - 1) / 2.0;
      }
      if (cur > best) {
        best = cur;
        best_v = cur_v;
        best_l = cur_l;
      }
    }
    if (!std::isfinite(best)) {
      fail(ErrorKind::conditioning, "GP kernel matrix is not positive definite for any searched hyperparameters");
    }
    return with_hyperparameters(std::move(inputs), std::move(targets),
                                {std::exp(best_v), std::exp(best_l), jitter});
  }

  bool fitted() const noexcept { return !chol_.empty(); }
  const GpHyperparameters& hyperparameters() const noexcept { return hyper_; }
  const DenseMatrix& inputs() const noexcept { return inputs_; }
  const std::vector<double>& targets() const noexcept { return targets_; }

  double log_marginal_likelihood() const {
    return detail::log_marginal_likelihood({chol_, hyper_.jitter}, targets_);
  }

  /// Log marginal likelihood of a training set under given hyperparameters.
  static double log_marginal_likelihood(const DenseMatrix& inputs, std::span<const double> targets,
                                        const GpHyperparameters& hyper) {
    auto f = detail::factorize(inputs, hyper.variance, hyper.lengthscale, hyper.jitter);
    if (!f) fail(ErrorKind::conditioning, "kernel matrix not positive definite");
    return detail::log_marginal_likelihood(*f, targets);
  }

  GpPrediction predict(std::span<const double> x) const {
    if (!fitted()) fail(ErrorKind::not_fitted, "GP has not been fitted");
    if (x.size() != inputs_.cols()) {
      fail(ErrorKind::shape, "GP query has " + std::to_string(x.size()) + " components, expected " +
                                 std::to_string(inputs_.cols()));
    }
    const std::size_t n = inputs_.rows();
    std::vector<double> k(n);
    for (std::size_t i = 0; i < n; ++i) k[i] = matern_kernel(inputs_.row(i), x, hyper_.variance, hyper_.lengthscale);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += k[i] * alpha_[i];
    const std::vector<double> v = detail::forward_substitute(chol_, k);
    double reduction = 0.0;
    for (double e : v) reduction += e * e;
    const double var = hyper_.variance - reduction;
    return {mean, var > 0.0 ? std::sqrt(var) : 0.0};
  }

 private:
  GaussianProcess(DenseMatrix inputs, std::vector<double> targets, GpHyperparameters hyper, DenseMatrix chol)
      : inputs_(std::move(inputs)), targets_(std::move(targets)), hyper_(hyper), chol_(std::move(chol)) {
    alpha_ = detail::backward_substitute_transposed(chol_, detail::forward_substitute(chol_, targets_));
  }

  // Hyperparameter search needs two distinct inputs; fixed hyperparameters need one.
  static void check_training_set(const DenseMatrix& inputs, std::span<const double> targets,
                                 std::size_t min_distinct = 2) {
    if (inputs.rows() != targets.size()) {
      fail(ErrorKind::shape, "GP: " + std::to_string(inputs.rows()) + " inputs but " +
                                 std::to_string(targets.size()) + " targets");
    }
    if (inputs.rows() < min_distinct) {
      fail(ErrorKind::argument, "GP needs at least " + std::to_string(min_distinct) + " training inputs");
    }
    bool distinct = min_distinct < 2;
    for (std::size_t i = 0; i < inputs.rows(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        const bool same = std::equal(inputs.row(i).begin(), inputs.row(i).end(), inputs.row(j).begin());
        if (!same) {
          distinct = true;
        } else if (targets[i] != targets[j]) {
          fail(ErrorKind::conditioning, "GP: duplicate training inputs " + std::to_string(j) + " and " +
                                            std::to_string(i) + " carry different targets; kernel matrix is singular");
        }
      }
    }
    if (!distinct) fail(ErrorKind::argument, "GP needs at least 2 distinct training inputs");
    for (double y : targets) {
      if (!std::isfinite(y)) fail(ErrorKind::argument, "GP: non-finite target");
    }
  }

  DenseMatrix inputs_;
  std::vector<double> targets_;
  GpHyperparameters hyper_;
  DenseMatrix chol_;
  std::vector<double> alpha_;
};

/// Interpolated coefficients with per-entry predictive std.
struct CoefficientPrediction {
  SindyCoefficients mean;  // a single parameter slice
  SindyCoefficients std;
};

/// One GP per scalar latent-ODE coefficient, over the training parameters.
class GpSurrogate {
 public:
  GpSurrogate() = default;

  static GpSurrogate fit(const DenseMatrix& params, const SindyCoefficients& xi, const GpSearchOptions& opts = {},
                         std::size_t threads = 1) {
    if (params.rows() != xi.n_params()) {
      fail(ErrorKind::shape, "GP surrogate: " + std::to_string(params.rows()) + " parameters but coefficients " +
                                 xi.shape_string());
    }
    GpSurrogate s;
    s.latent_dim_ = xi.latent_dim();
    const std::size_t ncoef = xi.coefficients_per_param();
    s.gps_.resize(ncoef);
    parallel_for(ncoef, threads, [&](std::size_t c) {
      s.gps_[c] = GaussianProcess::fit(params, s.targets_for(xi, c), opts);
    });
    return s;
  }

  /// Rebuilds from stored hyperparameters (checkpoint load).
  static GpSurrogate from_hyperparameters(const DenseMatrix& params, const SindyCoefficients& xi,
                                          const std::vector<GpHyperparameters>& hypers) {
    if (hypers.size() != xi.coefficients_per_param()) {
      fail(ErrorKind::shape, "GP surrogate expects " + std::to_string(xi.coefficients_per_param()) +
                                 " hyperparameter sets, got " + std::to_string(hypers.size()));
    }
    GpSurrogate s;
    s.latent_dim_ = xi.latent_dim();
    for (std::size_t c = 0; c < hypers.size(); ++c) {
      s.gps_.push_back(GaussianProcess::with_hyperparameters(params, s.targets_for(xi, c), hypers[c]));
    }
    return s;
  }

  bool fitted() const noexcept { return !gps_.empty(); }
  std::size_t latent_dim() const noexcept { return latent_dim_; }
  const std::vector<GaussianProcess>& processes() const noexcept { return gps_; }

  std::vector<GpHyperparameters> hyperparameters() const {
    std::vector<GpHyperparameters> h;
    for (const auto& gp : gps_) h.push_back(gp.hyperparameters());
    return h;
  }

  CoefficientPrediction interpolate(std::span<const double> mu) const {
    if (!fitted()) fail(ErrorKind::not_fitted, "GP surrogate has not been fitted");
    CoefficientPrediction out{SindyCoefficients(1, latent_dim_), SindyCoefficients(1, latent_dim_)};
    auto m = out.mean.values();
    auto s = out.std.values();
    for (std::size_t c = 0; c < gps_.size(); ++c) {
      const GpPrediction p = gps_[c].predict(mu);
      m[c] = p.mean;
      s[c] = p.std;
    }
    return out;
  }

 private:
  std::vector<double> targets_for(const SindyCoefficients& xi, std::size_t c) const {
    std::vector<double> y(xi.n_params());
    const std::size_t ncoef = xi.coefficients_per_param();
    for (std::size_t p = 0; p < xi.n_params(); ++p) y[p] = xi.values()[p * ncoef + c];
    return y;
  }

  std::size_t latent_dim_ = 0;
  std::vector<GaussianProcess> gps_;
};

/// Predictive-mean coefficients (b*, A*) at an unseen parameter.
inline AffineField interpolate_coefficients(const GpSurrogate& gps, std::span<const double> mu) {
  return gps.interpolate(mu).mean.field(0);
}

}  // namespace mlasdi
