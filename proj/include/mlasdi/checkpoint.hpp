// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mlasdi/binary_io.hpp"
#include "mlasdi/error.hpp"
#include "mlasdi/multistage.hpp"

namespace mlasdi {

// Checkpoint container, little-endian, no padding:
//   "MLCK" u32 version
//   config: f64 beta1 beta2 lr, u64 n_stages, u64 iterations[n_stages], u64 latent_dim,
//           u64 n_hidden, { u64 len, u64 widths[len] }[n_hidden], u64 seed
//   f64 dt, u64 state_dim
//   encoder, decoder1 networks: u64 n_layers, { u64 in, u64 out, u8 activation, f64 W[out*in], f64 b[out] }
//   xi: u64 n_params, u64 latent_dim, f64 values
//   train params: u64 rows, u64 cols, f64 values
//   gps: u64 count, { f64 variance, f64 lengthscale, f64 jitter }[count]
//   residual stages: u64 count, { network, f64 epsilon }[count]
//   data reference: u64 len + path bytes, u64 n, u64 indices[n]
inline constexpr std::array<std::uint8_t, 4> kCheckpointMagic{0x4D, 0x4C, 0x43, 0x4B};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline std::uint8_t activation_code(Activation a) {
  switch (a) {
    case Activation::tanh: return 0;
    case Activation::sine: return 1;
    case Activation::identity: return 2;
  }
  return 2;
}

inline Activation activation_from_code(std::uint8_t c) {
  switch (c) {
    case 0: return Activation::tanh;
    case 1: return Activation::sine;
    case 2: return Activation::identity;
    default: fail(ErrorKind::format, "unknown activation code " + std::to_string(c));
  }
}

inline void write_network(io::ByteWriter& w, const MlpNetwork& net) {
  w.u64(net.num_layers());
  for (const auto& l : net.layers()) {
    w.u64(l.weight.cols());
    w.u64(l.weight.rows());
    w.u8(activation_code(l.activation));
    w.f64s(l.weight.values());
    w.f64s(l.bias);
  }
}

inline std::size_t read_count(io::ByteReader& r, std::uint64_t limit, const char* what) {
  const std::uint64_t n = r.u64();
  if (n > limit) fail(ErrorKind::dimension_overflow, std::string(what) + " count " + std::to_string(n) + " too large");
  return static_cast<std::size_t>(n);
}

inline MlpNetwork read_network(io::ByteReader& r) {
  const std::size_t n_layers = read_count(r, 1024, "layer");
  if (n_layers == 0) return {};
  std::vector<std::size_t> dims;
  std::vector<Activation> acts;
  std::vector<std::vector<double>> weights, biases;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const std::uint64_t in = r.u64(), out = r.u64();
    const std::uint64_t n = io::checked_mul(in, out, "layer weights");
    if (n > r.remaining() / 8) fail(ErrorKind::truncated, "checkpoint truncated inside layer " + std::to_string(i));
    if (i == 0) dims.push_back(in);
    if (dims.back() != in) fail(ErrorKind::format, "layer " + std::to_string(i) + " input dim mismatch");
    dims.push_back(out);
    acts.push_back(activation_from_code(r.u8()));
    weights.push_back(r.f64s(n));
    biases.push_back(r.f64s(out));
  }
  MlpNetwork net(dims, acts);
  for (std::size_t i = 0; i < n_layers; ++i) {
    auto& l = net.layers()[i];
    l.weight = DenseMatrix(l.weight.rows(), l.weight.cols(), std::move(weights[i]));
    l.bias = std::move(biases[i]);
  }
  return net;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const StageStack& s) {
  io::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  const TrainConfig& c = s.config;
  w.f64(c.beta1);
  w.f64(c.beta2);
  w.f64(c.lr);
  w.u64(c.iterations.size());
  for (auto it : c.iterations) w.u64(it);
  w.u64(c.latent_dim);
  w.u64(c.hidden.size());
  for (const auto& h : c.hidden) {
    w.u64(h.size());
    for (auto width : h) w.u64(width);
  }
  w.u64(c.seed);
  w.f64(s.dt);
  w.u64(s.state_dim);
  detail::write_network(w, s.encoder);
  detail::write_network(w, s.decoder1);
  w.u64(s.xi.n_params());
  w.u64(s.xi.latent_dim());
  w.f64s(s.xi.values());
  w.u64(s.train_params.rows());
  w.u64(s.train_params.cols());
  w.f64s(s.train_params.values());
  const auto hypers = s.gps.hyperparameters();
  w.u64(hypers.size());
  for (const auto& h : hypers) {
    w.f64(h.variance);
    w.f64(h.lengthscale);
    w.f64(h.jitter);
  }
  w.u64(s.residual_stages.size());
  for (const auto& st : s.residual_stages) {
    detail::write_network(w, st.decoder);
    w.f64(st.epsilon);
  }
  w.string(s.data.path);
  w.u64(s.data.indices.size());
  for (auto i : s.data.indices) w.u64(i);
  return w.buffer();
}

inline StageStack decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) fail(ErrorKind::truncated, "checkpoint shorter than its magic");
  io::ByteReader r(bytes);
  auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic.begin())) {
    fail(ErrorKind::bad_magic, "bad magic: not an MLCK checkpoint");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorKind::unsupported_version, "unsupported checkpoint version " + std::to_string(version));
  }
  StageStack s;
  TrainConfig& c = s.config;
  c.beta1 = r.f64();
  c.beta2 = r.f64();
  c.lr = r.f64();
  c.iterations.resize(detail::read_count(r, 1024, "stage"));
  for (auto& it : c.iterations) it = r.u64();
  c.latent_dim = r.u64();
  c.hidden.resize(detail::read_count(r, 1024, "hidden list"));
  for (auto& h : c.hidden) {
    h.resize(detail::read_count(r, 1024, "hidden layer"));
    for (auto& width : h) width = r.u64();
  }
  c.seed = r.u64();
  s.dt = r.f64();
  s.state_dim = r.u64();
  s.encoder = detail::read_network(r);
  s.decoder1 = detail::read_network(r);
  {
    const std::uint64_t np = r.u64(), nz = r.u64();
    const std::uint64_t n = io::checked_mul(io::checked_mul(np, nz + 1, "xi"), nz, "xi");
    if (n > r.remaining() / 8) fail(ErrorKind::truncated, "checkpoint truncated inside coefficients");
    s.xi = SindyCoefficients(Tensor3(np, nz + 1, nz, r.f64s(n)));
  }
  {
    const std::uint64_t rows = r.u64(), cols = r.u64();
    const std::uint64_t n = io::checked_mul(rows, cols, "training parameters");
    if (n > r.remaining() / 8) fail(ErrorKind::truncated, "checkpoint truncated inside training parameters");
    s.train_params = DenseMatrix(rows, cols, r.f64s(n));
  }
  std::vector<GpHyperparameters> hypers(detail::read_count(r, r.remaining() / 24, "GP"));
  for (auto& h : hypers) {
    h.variance = r.f64();
    h.lengthscale = r.f64();
    h.jitter = r.f64();
  }
  const std::size_t n_res = detail::read_count(r, 1024, "residual stage");
  for (std::size_t i = 0; i < n_res; ++i) {
    ResidualStage st;
    st.decoder = detail::read_network(r);
    st.epsilon = r.f64();
    s.residual_stages.push_back(std::move(st));
  }
  s.data.path = r.string();
  s.data.indices.resize(detail::read_count(r, r.remaining() / 8, "index"));
  for (auto& i : s.data.indices) i = r.u64();
  if (r.remaining() != 0) fail(ErrorKind::format, std::to_string(r.remaining()) + " trailing bytes in checkpoint");

  if (s.encoder.num_layers() == 0 || s.decoder1.num_layers() == 0) {
    fail(ErrorKind::format, "checkpoint has no stage-1 networks");
  }
  check_composable(s.encoder, s.decoder1);
  if (s.encoder.input_dim() != s.state_dim || s.decoder1.output_dim() != s.state_dim) {
    fail(ErrorKind::format, "checkpoint networks do not match state dim " + std::to_string(s.state_dim));
  }
  for (const auto& st : s.residual_stages) {
    if (st.decoder.input_dim() != s.encoder.output_dim() || st.decoder.output_dim() != s.state_dim) {
      fail(ErrorKind::format, "residual decoder dims do not match the stack");
    }
    if (!(st.epsilon > 0.0)) fail(ErrorKind::format, "residual scale must be positive");
  }
  if (!hypers.empty()) s.gps = GpSurrogate::from_hyperparameters(s.train_params, s.xi, hypers);
  return s;
}

inline void save_checkpoint(const StageStack& s, const std::string& path) {
  io::write_file(path, encode_checkpoint(s));
}

inline StageStack load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace mlasdi
