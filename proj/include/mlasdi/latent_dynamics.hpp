// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mlasdi/core/dense_matrix.hpp"
#include "mlasdi/core/mlp.hpp"
#include "mlasdi/error.hpp"

namespace mlasdi {

/// Latent trajectories indexed [param][time][latent].
using LatentTensor = Tensor3;

/// Affine latent vector field dz/dt = b + A z for one parameter.
struct AffineField {
  std::vector<double> b;
  DenseMatrix A;

  std::size_t dim() const noexcept { return b.size(); }
};

/// Per-parameter coefficients of the linear latent ODE.
///
/// Stored as Xi[p] of shape (Nz+1, Nz): row 0 is b^T and rows 1..Nz are A^T,
/// so that Theta(Z) Xi gives the model derivative row by row.
class SindyCoefficients {
 public:
  SindyCoefficients() = default;
  SindyCoefficients(std::size_t n_params, std::size_t latent_dim)
      : values_(n_params, latent_dim + 1, latent_dim) {}
  explicit SindyCoefficients(Tensor3 values) : values_(std::move(values)) {
    if (values_.dim1() != values_.dim2() + 1) {
      fail(ErrorKind::shape, "coefficient tensor " + values_.shape_string() + " is not (Nmu, Nz+1, Nz)");
    }
  }

  std::size_t n_params() const noexcept { return values_.dim0(); }
  std::size_t latent_dim() const noexcept { return values_.dim2(); }
  /// Number of scalar coefficients per parameter, (Nz+1)*Nz.
  std::size_t coefficients_per_param() const noexcept { return values_.dim1() * values_.dim2(); }

  double& operator()(std::size_t p, std::size_t row, std::size_t col) noexcept { return values_(p, row, col); }
  double operator()(std::size_t p, std::size_t row, std::size_t col) const noexcept {
    return values_(p, row, col);
  }

  double intercept(std::size_t p, std::size_t i) const noexcept { return values_(p, 0, i); }
  /// A_ij, the coefficient of z_j in dz_i/dt.
  double matrix(std::size_t p, std::size_t i, std::size_t j) const noexcept { return values_(p, 1 + j, i); }

  AffineField field(std::size_t p) const {
    const std::size_t nz = latent_dim();
    AffineField f{std::vector<double>(nz), DenseMatrix(nz, nz)};
    for (std::size_t i = 0; i < nz; ++i) {
      f.b[i] = intercept(p, i);
      for (std::size_t j = 0; j < nz; ++j) f.A(i, j) = matrix(p, i, j);
    }
    return f;
  }

  void set_field(std::size_t p, const AffineField& f) {
    const std::size_t nz = latent_dim();
    if (f.b.size() != nz || f.A.rows() != nz || f.A.cols() != nz) {
      fail(ErrorKind::shape, "affine field does not match latent dim " + std::to_string(nz));
    }
    for (std::size_t i = 0; i < nz; ++i) {
      values_(p, 0, i) = f.b[i];
      for (std::size_t j = 0; j < nz; ++j) values_(p, 1 + j, i) = f.A(i, j);
    }
  }

  double squared_norm() const noexcept {
    double s = 0.0;
    for (double v : values_.values()) s += v * v;
    return s;
  }

  const Tensor3& tensor() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_.values(); }
  std::span<const double> values() const noexcept { return values_.values(); }

  std::string shape_string() const { return values_.shape_string(); }

  friend bool operator==(const SindyCoefficients&, const SindyCoefficients&) = default;

 private:
  Tensor3 values_;
};

/// Library Theta(Z) = (1, Z): a column of ones followed by the latent coordinates.
inline DenseMatrix sindy_library(const DenseMatrix& snapshots) {
  if (!snapshots.all_finite()) fail(ErrorKind::argument, "sindy_library: non-finite latent input");
  DenseMatrix theta(snapshots.rows(), snapshots.cols() + 1);
  for (std::size_t t = 0; t < snapshots.rows(); ++t) {
    theta(t, 0) = 1.0;
    for (std::size_t j = 0; j < snapshots.cols(); ++j) theta(t, j + 1) = snapshots(t, j);
  }
  return theta;
}

namespace detail {

inline void check_stencil_args(std::size_t n_times, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    fail(ErrorKind::argument, "time step must be positive, got " + std::to_string(dt));
  }
  if (n_times < 3) {
    fail(ErrorKind::shape, "derivative stencil needs at least 3 time samples, got " + std::to_string(n_times));
  }
}

}  // namespace detail

/// Second-order time derivative along axis 1: central differences inside,
/// one-sided (-3, 4, -1)/(2 dt) stencils at both ends.
inline LatentTensor estimate_derivative(const LatentTensor& z, double dt) {
  const std::size_t np = z.dim0(), nt = z.dim1(), nz = z.dim2();
  detail::check_stencil_args(nt, dt);
  const double inv = 1.0 / (2.0 * dt);
  LatentTensor d(np, nt, nz);
  for (std::size_t p = 0; p < np; ++p) {
    for (std::size_t k = 0; k < nz; ++k) {
      d(p, 0, k) = (-3.0 * z(p, 0, k) + 4.0 * z(p, 1, k) - z(p, 2, k)) * inv;
      for (std::size_t t = 1; t + 1 < nt; ++t) d(p, t, k) = (z(p, t + 1, k) - z(p, t - 1, k)) * inv;
      d(p, nt - 1, k) = (3.0 * z(p, nt - 1, k) - 4.0 * z(p, nt - 2, k) + z(p, nt - 3, k)) * inv;
    }
  }
  return d;
}

/// Transpose of estimate_derivative applied to `g`.
inline LatentTensor derivative_adjoint(const LatentTensor& g, double dt) {
  const std::size_t np = g.dim0(), nt = g.dim1(), nz = g.dim2();
  detail::check_stencil_args(nt, dt);
  const double inv = 1.0 / (2.0 * dt);
  LatentTensor out(np, nt, nz);
  for (std::size_t p = 0; p < np; ++p) {
    for (std::size_t k = 0; k < nz; ++k) {
      const double g0 = g(p, 0, k) * inv;
      out(p, 0, k) += -3.0 * g0;
      out(p, 1, k) += 4.0 * g0;
      out(p, 2, k) += -g0;
      for (std::size_t t = 1; t + 1 < nt; ++t) {
        const double gt = g(p, t, k) * inv;
        out(p, t + 1, k) += gt;
        out(p, t - 1, k) -= gt;
      }
      const double gl = g(p, nt - 1, k) * inv;
      out(p, nt - 1, k) += 3.0 * gl;
      out(p, nt - 2, k) += -4.0 * gl;
      out(p, nt - 3, k) += gl;
    }
  }
  return out;
}

struct DiLossResult {
  double loss = 0.0;
  LatentTensor grad_z;
  SindyCoefficients grad_xi;
};

namespace detail {

// Loss plus the residual e = zdot - Theta(Z) Xi; grad_z covers the library path only.
inline DiLossResult di_core(const LatentTensor& z, const LatentTensor& zdot, const SindyCoefficients& xi,
                            LatentTensor* residual) {
  const std::size_t np = z.dim0(), nt = z.dim1(), nz = z.dim2();
  if (zdot.dim0() != np || zdot.dim1() != nt || zdot.dim2() != nz) {
    fail(ErrorKind::shape, "derivative " + zdot.shape_string() + " does not match latent " + z.shape_string());
  }
  if (xi.n_params() != np || xi.latent_dim() != nz) {
    fail(ErrorKind::shape, "coefficients " + xi.shape_string() + " do not match latent " + z.shape_string());
  }
  DiLossResult r{0.0, LatentTensor(np, nt, nz), SindyCoefficients(np, nz)};
  if (residual != nullptr) *residual = LatentTensor(np, nt, nz);
  std::vector<double> e(nz);
  for (std::size_t p = 0; p < np; ++p) {
    for (std::size_t t = 0; t < nt; ++t) {
      for (std::size_t i = 0; i < nz; ++i) {
        double model = xi(p, 0, i);
        for (std::size_t j = 0; j < nz; ++j) model += z(p, t, j) * xi(p, 1 + j, i);
        e[i] = zdot(p, t, i) - model;
        r.loss += e[i] * e[i];
        if (residual != nullptr) (*residual)(p, t, i) = e[i];
      }
      for (std::size_t i = 0; i < nz; ++i) {
        const double gm = -2.0 * e[i];
        r.grad_xi(p, 0, i) += gm;
        for (std::size_t j = 0; j < nz; ++j) {
          r.grad_xi(p, 1 + j, i) += gm * z(p, t, j);
          r.grad_z(p, t, j) += gm * xi(p, 1 + j, i);
        }
      }
    }
  }
  return r;
}

}  // namespace detail

/// Sum of squared mismatch between a given `zdot` and Theta(Z) Xi. The Z
/// gradient treats `zdot` as data.
inline DiLossResult di_residual_loss(const LatentTensor& z, const LatentTensor& zdot,
                                     const SindyCoefficients& xi) {
  return detail::di_core(z, zdot, xi, nullptr);
}

/// Dynamics-identification loss with the derivative estimated from Z itself;
/// the Z gradient flows through both the stencils and the library.
inline DiLossResult di_loss(const LatentTensor& z, const SindyCoefficients& xi, double dt) {
  const LatentTensor zdot = estimate_derivative(z, dt);
  LatentTensor residual;
  DiLossResult r = detail::di_core(z, zdot, xi, &residual);
  for (double& v : residual.values()) v *= 2.0;
  const LatentTensor through_stencil = derivative_adjoint(residual, dt);
  auto gz = r.grad_z.values();
  auto gs = through_stencil.values();
  for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += gs[i];
  return r;
}

/// Classical four-stage Runge-Kutta integration of dz/dt = b + A z.
/// Row 0 of the result is z0.
inline DenseMatrix rk4_rollout(const AffineField& field, std::span<const double> z0, double dt,
                               std::size_t n_steps) {
  const std::size_t nz = field.dim();
  if (field.A.rows() != nz || field.A.cols() != nz || z0.size() != nz) {
    fail(ErrorKind::shape, "rk4: field dim " + std::to_string(nz) + ", A " + field.A.shape_string() +
                               ", z0 length " + std::to_string(z0.size()));
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorKind::argument, "rk4: dt must be positive");

  auto rhs = [&](const std::vector<double>& z, std::vector<double>& out) {
    for (std::size_t i = 0; i < nz; ++i) {
      double acc = field.b[i];
      for (std::size_t j = 0; j < nz; ++j) acc += field.A(i, j) * z[j];
      out[i] = acc;
    }
  };

  DenseMatrix traj(n_steps + 1, nz);
  std::vector<double> z(z0.begin(), z0.end());
  std::vector<double> k1(nz), k2(nz), k3(nz), k4(nz), tmp(nz);
  for (std::size_t i = 0; i < nz; ++i) traj(0, i) = z[i];
  for (std::size_t step = 1; step <= n_steps; ++step) {
    rhs(z, k1);
    for (std::size_t i = 0; i < nz; ++i) tmp[i] = z[i] + 0.5 * dt * k1[i];
    rhs(tmp, k2);
    for (std::size_t i = 0; i < nz; ++i) tmp[i] = z[i] + 0.5 * dt * k2[i];
    rhs(tmp, k3);
    for (std::size_t i = 0; i < nz; ++i) tmp[i] = z[i] + dt * k3[i];
    rhs(tmp, k4);
    for (std::size_t i = 0; i < nz; ++i) {
      z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (!std::isfinite(z[i])) {
        fail(ErrorKind::divergence, "rk4: non-finite latent state at step " + std::to_string(step));
      }
      traj(step, i) = z[i];
    }
  }
  return traj;
}

}  // namespace mlasdi
