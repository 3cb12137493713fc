// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <unistd.h>

#include "mlasdi/checkpoint.hpp"

namespace mlasdi {
namespace {

const StageStack& trained() {
  static const StageStack stack = [] {
    const SnapshotTensor data =
        generate_pulse_dataset(ParamGrid{{{0.8, 1.2, 0.2}, {0.08, 0.12, 0.02}}}, 16, 10, 0.005);
    TrainConfig cfg;
    cfg.iterations = {30, 30, 30};
    cfg.latent_dim = 2;
    cfg.hidden = {{6, 5}, {7}};
    cfg.seed = 9;
    StageStack s = train_stack(data, cfg);
    s.data = {"train.mlsd", {0, 2, 4, 6, 8}};
    return s;
  }();
  return stack;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / (name + "_" + std::to_string(::getpid()))).string();
}

TEST(Checkpoint, RoundTripPreservesEverything) {
  const StageStack& s = trained();
  const StageStack back = decode_checkpoint(encode_checkpoint(s));
  EXPECT_EQ(back.config.iterations, s.config.iterations);
  EXPECT_EQ(back.config.hidden, s.config.hidden);
  EXPECT_EQ(back.config.seed, s.config.seed);
  EXPECT_EQ(back.config.beta1, s.config.beta1);
  EXPECT_EQ(back.dt, s.dt);
  EXPECT_EQ(back.state_dim, s.state_dim);
  EXPECT_EQ(back.encoder, s.encoder);
  EXPECT_EQ(back.decoder1, s.decoder1);
  EXPECT_EQ(back.xi, s.xi);
  EXPECT_EQ(back.train_params, s.train_params);
  EXPECT_EQ(back.gps.hyperparameters(), s.gps.hyperparameters());
  EXPECT_EQ(back.residual_stages, s.residual_stages);
  EXPECT_EQ(back.data, s.data);
}

TEST(Checkpoint, ReloadedStackPredictsIdentically) {
  const StageStack& s = trained();
  const StageStack back = decode_checkpoint(encode_checkpoint(s));
  const std::vector<double> mu{0.93, 0.104};
  const auto u0 = pulse_initial_condition(mu, 16);
  EXPECT_EQ(predict(back, mu, u0, 10), predict(s, mu, u0, 10));
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const std::string a = temp_path("ck_a"), b = temp_path("ck_b");
  save_checkpoint(trained(), a);
  save_checkpoint(load_checkpoint(a), b);
  EXPECT_EQ(io::read_file(a), io::read_file(b));
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

ErrorKind decode_kind(std::vector<std::uint8_t> bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode succeeded";
  return ErrorKind::argument;
}

TEST(Checkpoint, CorruptInputsAreRejectedByKind) {
  const auto good = encode_checkpoint(trained());
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(decode_kind(bad_magic), ErrorKind::bad_magic);
  auto bad_version = good;
  bad_version[4] = 2;
  EXPECT_EQ(decode_kind(bad_version), ErrorKind::unsupported_version);
  EXPECT_EQ(decode_kind({good.begin(), good.begin() + 2}), ErrorKind::truncated);
  for (std::size_t cut : {8ul, 40ul, good.size() / 2, good.size() - 1}) {
    EXPECT_EQ(decode_kind({good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut)}), ErrorKind::truncated)
        << "cut at " << cut;
  }
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(decode_kind(trailing), ErrorKind::format);
}

TEST(Checkpoint, MissingFileIsIoError) {
  try {
    load_checkpoint(temp_path("does_not_exist"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
}

}  // namespace
}  // namespace mlasdi
