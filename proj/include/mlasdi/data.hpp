// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mlasdi/binary_io.hpp"
#include "mlasdi/core/dense_matrix.hpp"
#include "mlasdi/error.hpp"

namespace mlasdi {

/// Snapshots u(t_j; mu_i) on a uniform time grid, indexed [param][time][state].
struct SnapshotTensor {
  double dt = 0.0;
  DenseMatrix params;  // (n_params, n_param_dims)
  Tensor3 values;

  std::size_t n_params() const noexcept { return values.dim0(); }
  std::size_t n_times() const noexcept { return values.dim1(); }
  std::size_t state_dim() const noexcept { return values.dim2(); }
  std::size_t param_dims() const noexcept { return params.cols(); }

  friend bool operator==(const SnapshotTensor&, const SnapshotTensor&) = default;

  DenseMatrix trajectory(std::size_t p) const { return values.slab_matrix(p); }

  std::span<const double> initial_condition(std::size_t p) const {
    return values.slab(p).subspan(0, state_dim());
  }

  /// Parameters and trajectories for the given indices, in that order.
  SnapshotTensor subset(std::span<const std::size_t> indices) const {
    SnapshotTensor out{dt, DenseMatrix(indices.size(), param_dims()),
                       Tensor3(indices.size(), n_times(), state_dim())};
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= n_params()) fail(ErrorKind::argument, "subset index out of range");
      auto src = params.row(indices[i]);
      std::copy(src.begin(), src.end(), out.params.row(i).begin());
      auto s = values.slab(indices[i]);
      std::copy(s.begin(), s.end(), out.values.slab(i).begin());
    }
    return out;
  }

  /// Index of the parameter row equal to `mu`, or n_params() if absent.
  std::size_t find_param(std::span<const double> mu, double tol = 0.0) const {
    for (std::size_t p = 0; p < n_params(); ++p) {
      auto row = params.row(p);
      bool match = row.size() == mu.size();
      for (std::size_t c = 0; match && c < row.size(); ++c) match = std::abs(row[c] - mu[c]) <= tol;
      if (match) return p;
    }
    return n_params();
  }

  /// Structural and numeric checks shared by generated and imported tensors.
  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorKind::format, "snapshot dt must be positive and finite");
    if (params.rows() != n_params()) {
      fail(ErrorKind::shape, "parameter matrix " + params.shape_string() + " does not match " +
                                 std::to_string(n_params()) + " trajectories");
    }
    if (n_params() == 0 || n_times() == 0 || state_dim() == 0) {
      fail(ErrorKind::format, "snapshot tensor has an empty dimension " + values.shape_string());
    }
    if (!params.all_finite()) fail(ErrorKind::format, "non-finite parameter value");
    if (!values.all_finite()) fail(ErrorKind::format, "non-finite snapshot value");
    for (std::size_t i = 0; i < n_params(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (std::equal(params.row(i).begin(), params.row(i).end(), params.row(j).begin())) {
          fail(ErrorKind::format, "duplicate parameter rows " + std::to_string(j) + " and " + std::to_string(i));
        }
      }
    }
  }
};

struct ParamAxis {
  double min = 0.0;
  double max = 0.0;
  double step = 1.0;

  std::size_t count() const {
    if (!(step > 0.0)) fail(ErrorKind::config, "parameter grid step must be positive");
    if (!(min <= max)) fail(ErrorKind::config, "parameter grid min must not exceed max");
    const double span = (max - min) / step;
    return static_cast<std::size_t>(std::floor(span + 1e-9)) + 1;
  }

  double value(std::size_t i) const { return min + static_cast<double>(i) * step; }
};

/// Tensor-product parameter grid; the last axis varies fastest.
struct ParamGrid {
  std::vector<ParamAxis> axes;

  std::size_t dims() const noexcept { return axes.size(); }

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.count();
    return axes.empty() ? 0 : n;
  }

  DenseMatrix points() const {
    const std::size_t n = size();
    DenseMatrix pts(n, dims());
    for (std::size_t idx = 0; idx < n; ++idx) {
      std::size_t rem = idx;
      for (std::size_t d = dims(); d-- > 0;) {
        const std::size_t c = axes[d].count();
        pts(idx, d) = axes[d].value(rem % c);
        rem /= c;
      }
    }
    return pts;
  }

  void validate() const {
    if (axes.empty()) fail(ErrorKind::config, "parameter grid has no axes");
    for (const auto& a : axes) (void)a.count();
  }
};

/// Periodic Gaussian pulse u(x, t) = exp(-wrap(x - speed t)^2 / (2 width^2)) on [0, 1).
///
/// Grid axis 0 is the speed, axis 1 the width. Produces nt + 1 snapshots.
inline SnapshotTensor generate_pulse_dataset(const ParamGrid& grid, std::size_t nx, std::size_t nt, double dt) {
  grid.validate();
  if (grid.dims() != 2) fail(ErrorKind::config, "pulse generator needs a 2-D (speed, width) grid");
  if (nx < 16) fail(ErrorKind::config, "pulse generator needs nx >= 16");
  if (nt < 3) fail(ErrorKind::config, "pulse generator needs nt >= 3");
  if (!(dt > 0.0)) fail(ErrorKind::config, "pulse generator needs dt > 0");

  SnapshotTensor out{dt, grid.points(), {}};
  const std::size_t np = out.params.rows();
  out.values = Tensor3(np, nt + 1, nx);
  for (std::size_t p = 0; p < np; ++p) {
    const double speed = out.params(p, 0);
    const double width = out.params(p, 1);
    if (!(width > 0.0)) fail(ErrorKind::config, "pulse width must be positive");
    for (std::size_t j = 0; j <= nt; ++j) {
      const double t = static_cast<double>(j) * dt;
      for (std::size_t i = 0; i < nx; ++i) {
        const double x = static_cast<double>(i) / static_cast<double>(nx);
        double d = x - speed * t;
        d -= std::floor(d + 0.5);  // wrap into [-0.5, 0.5)
        out.values(p, j, i) = std::exp(-d * d / (2.0 * width * width));
      }
    }
  }
  out.validate();
  return out;
}

/// Initial condition of the pulse family at an arbitrary parameter.
inline std::vector<double> pulse_initial_condition(std::span<const double> mu, std::size_t nx) {
  if (mu.size() != 2) fail(ErrorKind::argument, "pulse parameter must be (speed, width)");
  std::vector<double> u(nx);
  for (std::size_t i = 0; i < nx; ++i) {
    double d = static_cast<double>(i) / static_cast<double>(nx);
    d -= std::floor(d + 0.5);
    u[i] = std::exp(-d * d / (2.0 * mu[1] * mu[1]));
  }
  return u;
}

/// Training parameter indices into grid.points(), sorted ascending.
///
/// A perfect-square request on a 2-D grid takes an evenly spaced m x m
/// subgrid that includes the corners; anything else is a seeded uniform draw
/// without replacement.
inline std::vector<std::size_t> select_training_params(const ParamGrid& grid, std::size_t n_select,
                                                       std::uint64_t seed) {
  grid.validate();
  const std::size_t total = grid.size();
  if (n_select > total) {
    fail(ErrorKind::argument, "cannot select " + std::to_string(n_select) + " of " + std::to_string(total) +
                                  " grid points");
  }
  std::vector<std::size_t> out;
  if (n_select == total) {
    out.resize(total);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  const auto m = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n_select))));
  if (grid.dims() == 2 && m * m == n_select && m >= 1) {
    const std::size_t c0 = grid.axes[0].count(), c1 = grid.axes[1].count();
    if (c0 >= m && c1 >= m) {
      auto strata = [m](std::size_t count) {
        std::vector<std::size_t> idx;
        if (m == 1) return std::vector<std::size_t>{(count - 1) / 2};
        for (std::size_t i = 0; i < m; ++i) {
          idx.push_back(static_cast<std::size_t>(
              std::llround(static_cast<double>(i) * static_cast<double>(count - 1) / static_cast<double>(m - 1))));
        }
        return idx;
      };
      for (std::size_t a : strata(c0)) {
        for (std::size_t b : strata(c1)) out.push_back(a * c1 + b);
      }
      return out;
    }
  }
  std::vector<std::size_t> all(total);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n_select; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, total - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  out.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_select));
  std::sort(out.begin(), out.end());
  return out;
}

// Snapshot file: "MLSD", u32 version, u64 n_params, u64 n_times, u64 state_dim,
// u64 param_dims, f64 dt, f64 params[n_params][param_dims], f64 data[param][time][state].
inline constexpr std::array<std::uint8_t, 4> kSnapshotMagic{0x4D, 0x4C, 0x53, 0x44};
inline constexpr std::uint32_t kSnapshotVersion = 1;
inline constexpr std::size_t kSnapshotHeaderBytes = 4 + 4 + 4 * 8 + 8;

inline std::vector<std::uint8_t> encode_snapshots(const SnapshotTensor& t) {
  t.validate();
  io::ByteWriter w;
  w.bytes(kSnapshotMagic);
  w.u32(kSnapshotVersion);
  w.u64(t.n_params());
  w.u64(t.n_times());
  w.u64(t.state_dim());
  w.u64(t.param_dims());
  w.f64(t.dt);
  w.f64s(t.params.values());
  w.f64s(t.values.values());
  return w.buffer();
}

inline SnapshotTensor decode_snapshots(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (bytes.size() < 4) fail(ErrorKind::truncated, "snapshot file shorter than its magic");
  auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kSnapshotMagic.begin())) {
    fail(ErrorKind::bad_magic, "bad magic: not an MLSD snapshot file");
  }
  const std::uint32_t version = r.u32();
  if (version != kSnapshotVersion) {
    fail(ErrorKind::unsupported_version, "unsupported snapshot version " + std::to_string(version));
  }
  const std::uint64_t np = r.u64(), nt = r.u64(), nu = r.u64(), nd = r.u64();
  const double dt = r.f64();
  const std::uint64_t n_param_values = io::checked_mul(np, nd, "parameter matrix size");
  const std::uint64_t n_values = io::checked_mul(io::checked_mul(np, nt, "data size"), nu, "data size");
  const std::uint64_t payload_values = n_param_values + n_values;
  if (payload_values < n_values || payload_values > UINT64_MAX / 8) {
    fail(ErrorKind::dimension_overflow, "declared dimensions overflow the payload size");
  }
  if (payload_values * 8 > r.remaining()) {
    fail(ErrorKind::truncated, "header declares " + std::to_string(payload_values * 8) + " payload bytes but only " +
                                   std::to_string(r.remaining()) + " remain");
  }
  if (payload_values * 8 < r.remaining()) {
    fail(ErrorKind::format, std::to_string(r.remaining() - payload_values * 8) + " trailing bytes after payload");
  }
  SnapshotTensor t;
  t.dt = dt;
  t.params = DenseMatrix(np, nd, r.f64s(n_param_values));
  t.values = Tensor3(np, nt, nu, r.f64s(n_values));
  t.validate();
  return t;
}

inline void save_snapshots(const SnapshotTensor& t, const std::string& path) {
  io::write_file(path, encode_snapshots(t));
}

inline SnapshotTensor load_snapshots(const std::string& path) { return decode_snapshots(io::read_file(path)); }

}  // namespace mlasdi
