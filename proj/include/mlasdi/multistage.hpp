// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mlasdi/core/adam.hpp"
#include "mlasdi/core/dense_matrix.hpp"
#include "mlasdi/core/mlp.hpp"
#include "mlasdi/data.hpp"
#include "mlasdi/error.hpp"
#include "mlasdi/gp.hpp"
#include "mlasdi/latent_dynamics.hpp"

namespace mlasdi {

/// Hyperparameters for the whole multi-stage run.
struct TrainConfig {
  double beta1 = 0.1;
  double beta2 = 0.001;
  double lr = 1e-3;
  std::vector<std::size_t> iterations{25000, 25000};  // one entry per stage
  std::size_t latent_dim = 4;
  /// Hidden widths per stage; the last entry applies to any later stage.
  std::vector<std::vector<std::size_t>> hidden{{50}};
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  std::size_t n_stages() const noexcept { return iterations.size(); }

  const std::vector<std::size_t>& hidden_for_stage(std::size_t stage) const {
    if (hidden.empty()) fail(ErrorKind::config, "no hidden layer widths configured");
    return hidden[std::min(stage, hidden.size()) - 1];
  }

  /// Everything except iteration positivity, which only the config parser enforces.
  void validate_structure() const {
    if (!(beta1 >= 0.0) || !(beta2 >= 0.0)) fail(ErrorKind::config, "beta1 and beta2 must be non-negative");
    if (!(lr > 0.0)) fail(ErrorKind::config, "learning rate must be positive");
    if (latent_dim < 1) fail(ErrorKind::config, "latent_dim must be at least 1");
    if (iterations.empty()) fail(ErrorKind::config, "at least one stage is required");
    if (hidden.empty()) fail(ErrorKind::config, "hidden widths are required");
    for (const auto& h : hidden) {
      for (std::size_t w : h) {
        if (w == 0) fail(ErrorKind::config, "hidden widths must be positive");
      }
    }
  }

  void validate() const {
    validate_structure();
    for (std::size_t k = 0; k < iterations.size(); ++k) {
      if (iterations[k] == 0) {
        fail(ErrorKind::config, "stage " + std::to_string(k + 1) + " has 0 iterations");
      }
    }
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct ResidualStage {
  MlpNetwork decoder;
  double epsilon = 1.0;  // scale of the residual this decoder approximates

  friend bool operator==(const ResidualStage&, const ResidualStage&) = default;
};

/// Where the training set came from; kept for provenance only.
struct DataReference {
  std::string path;
  std::vector<std::size_t> indices;

  friend bool operator==(const DataReference&, const DataReference&) = default;
};

/// A trained (possibly partially trained) multi-stage model.
struct StageStack {
  TrainConfig config;
  double dt = 0.0;
  std::size_t state_dim = 0;
  MlpNetwork encoder;
  MlpNetwork decoder1;
  SindyCoefficients xi;
  DenseMatrix train_params;
  GpSurrogate gps;
  std::vector<ResidualStage> residual_stages;
  DataReference data;

  std::size_t n_stages() const noexcept { return encoder.num_layers() == 0 ? 0 : 1 + residual_stages.size(); }

  const MlpNetwork& decoder(std::size_t stage) const {
    if (stage < 1 || stage > n_stages()) {
      fail(ErrorKind::argument, "stage " + std::to_string(stage) + " out of range; available stages 1.." +
                                    std::to_string(n_stages()));
    }
    return stage == 1 ? decoder1 : residual_stages[stage - 2].decoder;
  }

  /// Trainable scalars used by the first `cutoff` stages (all by default).
  std::size_t parameter_count(std::optional<std::size_t> cutoff = std::nullopt) const {
    std::size_t n = encoder.parameter_count() + decoder1.parameter_count() + xi.values().size();
    const std::size_t k = std::min(cutoff.value_or(n_stages()), n_stages());
    for (std::size_t i = 0; i + 1 < k; ++i) n += residual_stages[i].decoder.parameter_count();
    return n;
  }
};

inline std::uint64_t stage_seed(std::uint64_t seed, std::size_t stage) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(stage);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Encoder u -> z with tanh hidden layers.
template <class Rng>
MlpNetwork make_encoder(std::size_t state_dim, std::size_t latent_dim, const std::vector<std::size_t>& hidden,
                        Rng& rng) {
  std::vector<std::size_t> dims{state_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(latent_dim);
  auto acts = MlpNetwork::activations_for(dims.size() - 1, [](std::size_t) { return Activation::tanh; });
  return MlpNetwork::initialized(dims, acts, rng);
}

/// Decoder z -> u mirroring the encoder widths. Residual decoders use a sine
/// first hidden layer and tanh after it.
template <class Rng>
MlpNetwork make_decoder(std::size_t latent_dim, std::size_t state_dim, const std::vector<std::size_t>& hidden,
                        bool sine_first, Rng& rng) {
  std::vector<std::size_t> dims{latent_dim};
  dims.insert(dims.end(), hidden.rbegin(), hidden.rend());
  dims.push_back(state_dim);
  auto acts = MlpNetwork::activations_for(dims.size() - 1, [sine_first](std::size_t i) {
    return sine_first && i == 0 ? Activation::sine : Activation::tanh;
  });
  return MlpNetwork::initialized(dims, acts, rng);
}

struct Stage1LossResult {
  double total = 0.0;
  double ae = 0.0;
  double di = 0.0;
  double penalty = 0.0;
  MlpGradients encoder_grad;
  MlpGradients decoder_grad;
  SindyCoefficients xi_grad;
};

/// L = ||U - dec(enc(U))||^2 + beta1 * L_DI(enc(U), Xi) + beta2 * ||Xi||^2 with
/// exact gradients for encoder, decoder and Xi.
inline Stage1LossResult stage1_loss(const Tensor3& u, const MlpNetwork& encoder, const MlpNetwork& decoder,
                                    const SindyCoefficients& xi, double dt, double beta1, double beta2) {
  check_composable(encoder, decoder);
  if (decoder.output_dim() != u.dim2()) {
    fail(ErrorKind::shape, "decoder output dim " + std::to_string(decoder.output_dim()) +
                               " does not match state dim " + std::to_string(u.dim2()));
  }
  if (xi.n_params() != u.dim0() || xi.latent_dim() != encoder.output_dim()) {
    fail(ErrorKind::shape, "coefficients " + xi.shape_string() + " do not match data " + u.shape_string() +
                               " and latent dim " + std::to_string(encoder.output_dim()));
  }
  const DenseMatrix flat = u.flattened();
  const ForwardCache enc = encoder.forward_cached(flat);
  const ForwardCache dec = decoder.forward_cached(enc.output);

  Stage1LossResult r;
  DenseMatrix d_out(flat.rows(), flat.cols());
  {
    auto o = dec.output.values();
    auto t = flat.values();
    auto d = d_out.values();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double e = o[i] - t[i];
      r.ae += e * e;
      d[i] = 2.0 * e;
    }
  }
  r.decoder_grad = decoder.backward(dec, d_out);

  const LatentTensor z = Tensor3::from_flattened(u.dim0(), u.dim1(), enc.output);
  DiLossResult di = di_loss(z, xi, dt);
  r.di = di.loss;
  r.penalty = xi.squared_norm();
  r.total = r.ae + beta1 * r.di + beta2 * r.penalty;
  if (!std::isfinite(r.total)) {
    fail(ErrorKind::divergence, "non-finite stage-1 loss: L_AE=" + std::to_string(r.ae) +
                                    " L_DI=" + std::to_string(r.di) + " penalty=" + std::to_string(r.penalty));
  }

  DenseMatrix dz = r.decoder_grad.input;
  {
    auto a = dz.values();
    auto b = di.grad_z.values();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += beta1 * b[i];
  }
  r.encoder_grad = encoder.backward(enc, dz);

  r.xi_grad = std::move(di.grad_xi);
  {
    auto g = r.xi_grad.values();
    auto x = xi.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = beta1 * g[i] + 2.0 * beta2 * x[i];
  }
  return r;
}

struct LossTerms {
  double total = 0.0;
  double ae = 0.0;
  double di = 0.0;
  double penalty = 0.0;
};

struct Stage1Result {
  MlpNetwork encoder;
  MlpNetwork decoder;
  SindyCoefficients xi;
  std::vector<LossTerms> trace;  // loss before each update
};

/// Full-batch Adam on the stage-1 loss for config.iterations[0] steps.
inline Stage1Result train_stage1(const SnapshotTensor& u, const TrainConfig& config) {
  config.validate_structure();
  u.validate();
  std::mt19937_64 rng(config.seed);
  const auto& hidden = config.hidden_for_stage(1);
  Stage1Result r;
  r.encoder = make_encoder(u.state_dim(), config.latent_dim, hidden, rng);
  r.decoder = make_decoder(config.latent_dim, u.state_dim(), hidden, false, rng);
  r.xi = SindyCoefficients(u.n_params(), config.latent_dim);

  AdamState adam(AdamOptions{.lr = config.lr});
  std::vector<ParamBlock> params = r.encoder.parameter_blocks("encoder.");
  for (auto& b : r.decoder.parameter_blocks("decoder1.")) params.push_back(std::move(b));
  params.push_back({"xi", r.xi.values()});

  const std::size_t iters = config.iterations.at(0);
  r.trace.reserve(iters);
  for (std::size_t it = 0; it < iters; ++it) {
    Stage1LossResult loss;
    try {
      loss = stage1_loss(u.values, r.encoder, r.decoder, r.xi, u.dt, config.beta1, config.beta2);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::divergence) throw;
      fail(ErrorKind::divergence, "stage 1 iteration " + std::to_string(it) + ": " + e.what());
    }
    r.trace.push_back({loss.total, loss.ae, loss.di, loss.penalty});
    std::vector<GradBlock> grads = loss.encoder_grad.blocks("encoder.");
    for (auto& b : loss.decoder_grad.blocks("decoder1.")) grads.push_back(std::move(b));
    grads.push_back({"xi", loss.xi_grad.values()});
    adam_step(params, grads, adam);
  }
  return r;
}

/// Latent SINDy trajectories: z0 = enc(u(0; mu_p)) rolled out with each
/// parameter's own coefficients over the data's time grid.
inline LatentTensor sindy_trajectories(const MlpNetwork& encoder, const SindyCoefficients& xi,
                                       const SnapshotTensor& u) {
  if (xi.n_params() != u.n_params()) {
    fail(ErrorKind::shape, "coefficients " + xi.shape_string() + " do not match " +
                               std::to_string(u.n_params()) + " trajectories");
  }
  DenseMatrix initial(u.n_params(), u.state_dim());
  for (std::size_t p = 0; p < u.n_params(); ++p) {
    auto ic = u.initial_condition(p);
    std::copy(ic.begin(), ic.end(), initial.row(p).begin());
  }
  const DenseMatrix z0 = encoder.forward(initial);
  LatentTensor zhat(u.n_params(), u.n_times(), encoder.output_dim());
  for (std::size_t p = 0; p < u.n_params(); ++p) {
    zhat.set_slab(p, rk4_rollout(xi.field(p), z0.row(p), u.dt, u.n_times() - 1));
  }
  return zhat;
}

/// Decodes every latent snapshot through one network.
inline Tensor3 decode_trajectories(const MlpNetwork& decoder, const LatentTensor& zhat) {
  return Tensor3::from_flattened(zhat.dim0(), zhat.dim1(), decoder.forward(zhat.flattened()));
}

/// U~_k: the stage-k decoder applied to the shared latent trajectories.
inline Tensor3 sindy_reconstruct(const StageStack& stack, std::size_t stage, const LatentTensor& zhat) {
  return decode_trajectories(stack.decoder(stage), zhat);
}

/// U~_1 + eps_1 U~_2 + ... through `cutoff` stages, accumulated in stage order.
inline Tensor3 compose_prediction(const StageStack& stack, const LatentTensor& zhat, std::size_t cutoff) {
  if (cutoff < 1 || cutoff > stack.n_stages()) {
    fail(ErrorKind::argument, "stage cutoff " + std::to_string(cutoff) + " out of range; available stages 1.." +
                                  std::to_string(stack.n_stages()));
  }
  Tensor3 acc = sindy_reconstruct(stack, 1, zhat);
  for (std::size_t k = 2; k <= cutoff; ++k) {
    const Tensor3 term = sindy_reconstruct(stack, k, zhat);
    const double eps = stack.residual_stages[k - 2].epsilon;
    auto a = acc.values();
    auto t = term.values();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += eps * t[i];
  }
  return acc;
}

struct Residual {
  Tensor3 residual;
  double epsilon = 0.0;
};

inline constexpr double kEpsilonFloor = 1e-12;

/// R = U - partial and its population standard deviation over all entries,
/// floored at 1e-12.
inline Residual compute_residual(const Tensor3& u, const Tensor3& partial) {
  if (u.dim0() != partial.dim0() || u.dim1() != partial.dim1() || u.dim2() != partial.dim2()) {
    fail(ErrorKind::shape, "residual: data " + u.shape_string() + " vs prediction " + partial.shape_string());
  }
  Residual r{Tensor3(u.dim0(), u.dim1(), u.dim2()), 0.0};
  auto out = r.residual.values();
  auto a = u.values();
  auto b = partial.values();
  double mean = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a[i] - b[i];
    mean += out[i];
  }
  const double n = static_cast<double>(out.size());
  mean /= n;
  double var = 0.0;
  for (double v : out) var += (v - mean) * (v - mean);
  r.epsilon = std::max(std::sqrt(var / n), kEpsilonFloor);
  return r;
}

struct ResidualLossResult {
  double loss = 0.0;
  MlpGradients grad;
};

/// ||target - dec(zhat)||^2 over flattened snapshots, with decoder gradients.
inline ResidualLossResult residual_loss(const MlpNetwork& decoder, const DenseMatrix& zhat_flat,
                                        const DenseMatrix& target_flat) {
  const ForwardCache cache = decoder.forward_cached(zhat_flat);
  if (cache.output.rows() != target_flat.rows() || cache.output.cols() != target_flat.cols()) {
    fail(ErrorKind::shape, "residual target " + target_flat.shape_string() + " does not match decoder output " +
                               cache.output.shape_string());
  }
  ResidualLossResult r;
  DenseMatrix d(target_flat.rows(), target_flat.cols());
  auto o = cache.output.values();
  auto t = target_flat.values();
  auto dv = d.values();
  for (std::size_t i = 0; i < dv.size(); ++i) {
    const double e = o[i] - t[i];
    r.loss += e * e;
    dv[i] = 2.0 * e;
  }
  if (!std::isfinite(r.loss)) fail(ErrorKind::divergence, "non-finite residual loss");
  r.grad = decoder.backward(cache, d);
  return r;
}

struct StageKResult {
  std::vector<double> trace;  // loss before each update
  double epsilon = 0.0;
};

/// Trains the next residual decoder (stage k = n_stages + 1) against the
/// normalized residual of the current composition; earlier stages stay fixed.
inline StageKResult train_stage_k(StageStack& stack, const SnapshotTensor& u, std::size_t k) {
  if (k < 2) fail(ErrorKind::ordering, "residual stages start at 2, got " + std::to_string(k));
  if (stack.n_stages() != k - 1) {
    fail(ErrorKind::ordering, "cannot train stage " + std::to_string(k) + " with " +
                                  std::to_string(stack.n_stages()) + " stage(s) trained");
  }
  if (k > stack.config.n_stages()) {
    fail(ErrorKind::config, "stage " + std::to_string(k) + " exceeds the " +
                                std::to_string(stack.config.n_stages()) + " configured stages");
  }
  if (u.state_dim() != stack.state_dim || u.n_params() != stack.xi.n_params()) {
    fail(ErrorKind::shape, "training data " + u.values.shape_string() + " does not match the stack");
  }

  const LatentTensor zhat = sindy_trajectories(stack.encoder, stack.xi, u);
  const Tensor3 composed = compose_prediction(stack, zhat, k - 1);
  Residual res = compute_residual(u.values, composed);
  for (double& v : res.residual.values()) v /= res.epsilon;

  const DenseMatrix zflat = zhat.flattened();
  const DenseMatrix target = res.residual.flattened();

  std::mt19937_64 rng(stage_seed(stack.config.seed, k));
  MlpNetwork decoder =
      make_decoder(stack.config.latent_dim, stack.state_dim, stack.config.hidden_for_stage(k), true, rng);

  AdamState adam(AdamOptions{.lr = stack.config.lr});
  const std::string prefix = "decoder" + std::to_string(k) + ".";
  std::vector<ParamBlock> params = decoder.parameter_blocks(prefix);
  StageKResult out;
  out.epsilon = res.epsilon;
  const std::size_t iters = stack.config.iterations[k - 1];
  out.trace.reserve(iters);
  for (std::size_t it = 0; it < iters; ++it) {
    ResidualLossResult loss;
    try {
      loss = residual_loss(decoder, zflat, target);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::divergence) throw;
      fail(ErrorKind::divergence, "stage " + std::to_string(k) + " iteration " + std::to_string(it) + ": " + e.what());
    }
    out.trace.push_back(loss.loss);
    adam_step(params, loss.grad.blocks(prefix), adam);
  }
  stack.residual_stages.push_back({std::move(decoder), res.epsilon});
  return out;
}

struct StageTiming {
  std::size_t stage = 0;
  double seconds = 0.0;
  double final_loss = 0.0;
};

/// Trains stage 1, fits the coefficient GPs, then any residual stages up to
/// `stages` (defaults to all configured stages).
inline StageStack train_stack(const SnapshotTensor& u, const TrainConfig& config,
                              std::optional<std::size_t> stages = std::nullopt,
                              std::vector<StageTiming>* timings = nullptr) {
  const std::size_t target = stages.value_or(config.n_stages());
  if (target < 1 || target > config.n_stages()) {
    fail(ErrorKind::config, "requested " + std::to_string(target) + " stages but " +
                                std::to_string(config.n_stages()) + " are configured");
  }
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  Stage1Result s1 = train_stage1(u, config);

  StageStack stack;
  stack.config = config;
  stack.dt = u.dt;
  stack.state_dim = u.state_dim();
  stack.encoder = std::move(s1.encoder);
  stack.decoder1 = std::move(s1.decoder);
  stack.xi = std::move(s1.xi);
  stack.train_params = u.params;
  stack.gps = GpSurrogate::fit(stack.train_params, stack.xi, GpSearchOptions{.seed = config.seed}, config.threads);
  if (timings != nullptr) {
    timings->push_back({1, std::chrono::duration<double>(clock::now() - t0).count(),
                        s1.trace.empty() ? 0.0 : s1.trace.back().total});
  }
  for (std::size_t k = 2; k <= target; ++k) {
    const auto tk = clock::now();
    StageKResult r = train_stage_k(stack, u, k);
    if (timings != nullptr) {
      timings->push_back({k, std::chrono::duration<double>(clock::now() - tk).count(),
                          r.trace.empty() ? 0.0 : r.trace.back()});
    }
  }
  return stack;
}

/// Trains residual stages after those already present, up to `stages`.
inline void resume_training(StageStack& stack, const SnapshotTensor& u, std::size_t stages,
                            std::vector<StageTiming>* timings = nullptr) {
  if (stages > stack.config.n_stages()) {
    fail(ErrorKind::config, "requested " + std::to_string(stages) + " stages but " +
                                std::to_string(stack.config.n_stages()) + " are configured");
  }
  if (stack.n_stages() >= stages) {
    fail(ErrorKind::ordering, "checkpoint already holds " + std::to_string(stack.n_stages()) +
                                  " stage(s); nothing to resume up to stage " + std::to_string(stages));
  }
  for (std::size_t k = stack.n_stages() + 1; k <= stages; ++k) {
    const auto tk = std::chrono::steady_clock::now();
    StageKResult r = train_stage_k(stack, u, k);
    if (timings != nullptr) {
      timings->push_back({k, std::chrono::duration<double>(std::chrono::steady_clock::now() - tk).count(),
                          r.trace.empty() ? 0.0 : r.trace.back()});
    }
  }
}

/// Full-field trajectory at an unseen parameter: encode u0, roll out the
/// GP-interpolated latent ODE, decode through every stage up to `cutoff`.
inline DenseMatrix predict(const StageStack& stack, std::span<const double> mu, std::span<const double> u0,
                           std::size_t n_steps, std::optional<std::size_t> cutoff = std::nullopt) {
  if (!stack.gps.fitted()) fail(ErrorKind::not_fitted, "stack has no fitted coefficient GPs");
  if (u0.size() != stack.encoder.input_dim()) {
    fail(ErrorKind::shape, "initial condition has " + std::to_string(u0.size()) + " entries, encoder expects " +
                               std::to_string(stack.encoder.input_dim()));
  }
  const DenseMatrix z0 = stack.encoder.forward(DenseMatrix(1, u0.size(), std::vector<double>(u0.begin(), u0.end())));
  const AffineField field = interpolate_coefficients(stack.gps, mu);
  const DenseMatrix traj = rk4_rollout(field, z0.row(0), stack.dt, n_steps);
  const LatentTensor zhat(1, traj.rows(), traj.cols(), traj.storage());
  return compose_prediction(stack, zhat, cutoff.value_or(stack.n_stages())).slab_matrix(0);
}

}  // namespace mlasdi
