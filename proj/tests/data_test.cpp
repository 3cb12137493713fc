// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <random>

#include <unistd.h>

#include "mlasdi/data.hpp"

namespace mlasdi {
namespace {

ParamGrid grid_21x21() { return ParamGrid{{{0.9, 1.1, 0.01}, {1.0, 1.2, 0.01}}}; }

TEST(ParamGrid, CountsAndOrdering) {
  const ParamGrid g = grid_21x21();
  EXPECT_EQ(g.axes[0].count(), 21u);
  EXPECT_EQ(g.size(), 441u);
  const DenseMatrix pts = g.points();
  EXPECT_EQ(pts(0, 0), 0.9);
  EXPECT_EQ(pts(0, 1), 1.0);
  EXPECT_NEAR(pts(1, 1), 1.01, 1e-15);  // last axis fastest
  EXPECT_NEAR(pts(21, 0), 0.91, 1e-15);
}

TEST(ParamGrid, RejectsInvalidAxes) {
  EXPECT_THROW((ParamGrid{{{0.0, 1.0, 0.0}}}).validate(), Error);
  EXPECT_THROW((ParamGrid{{{1.0, 0.0, 0.1}}}).validate(), Error);
  EXPECT_THROW(ParamGrid{}.validate(), Error);
}

TEST(PulseDataset, ZeroSpeedIsStationary) {
  const ParamGrid g{{{0.0, 0.0, 1.0}, {0.1, 0.1, 1.0}}};
  const SnapshotTensor t = generate_pulse_dataset(g, 32, 10, 0.05);
  for (std::size_t j = 1; j < t.n_times(); ++j) {
    for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(t.values(0, j, i), t.values(0, 0, i));
  }
}

TEST(PulseDataset, PeakIsOneUpToGridSpacing) {
  const std::size_t nx = 64;
  const SnapshotTensor t = generate_pulse_dataset(ParamGrid{{{0.8, 1.2, 0.2}, {0.08, 0.12, 0.02}}}, nx, 20, 0.013);
  for (std::size_t p = 0; p < t.n_params(); ++p) {
    for (std::size_t j = 0; j < t.n_times(); ++j) {
      double peak = 0.0;
      for (std::size_t i = 0; i < nx; ++i) peak = std::max(peak, t.values(p, j, i));
      EXPECT_LE(peak, 1.0);
      EXPECT_GE(peak, 1.0 - 1.0 / nx);
    }
  }
}

TEST(PulseDataset, UnitSpeedWrapsAfterUnitTime) {
  const SnapshotTensor t = generate_pulse_dataset(ParamGrid{{{1.0, 1.0, 1.0}, {0.1, 0.1, 1.0}}}, 64, 100, 0.01);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(t.values(0, 100, i), t.values(0, 0, i), 1e-12);
}

TEST(PulseDataset, DeterministicAndValidated) {
  const ParamGrid g{{{0.8, 1.2, 0.1}, {0.08, 0.12, 0.01}}};
  const SnapshotTensor a = generate_pulse_dataset(g, 16, 5, 0.1);
  const SnapshotTensor b = generate_pulse_dataset(g, 16, 5, 0.1);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.params, b.params);
  EXPECT_THROW(generate_pulse_dataset(g, 8, 5, 0.1), Error);
  EXPECT_THROW(generate_pulse_dataset(g, 16, 2, 0.1), Error);
  EXPECT_THROW(generate_pulse_dataset(ParamGrid{{{0.8, 1.2, 0.1}}}, 16, 5, 0.1), Error);
}

TEST(SelectTrainingParams, AllWhenRequestingWholeGrid) {
  const ParamGrid g{{{0.0, 1.0, 0.5}, {0.0, 1.0, 0.5}}};
  const auto idx = select_training_params(g, 9, 0);
  EXPECT_EQ(idx, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8}));
}

TEST(SelectTrainingParams, StratifiedSubgridIncludesCorners) {
  const ParamGrid g = grid_21x21();
  const auto idx = select_training_params(g, 25, 0);
  ASSERT_EQ(idx.size(), 25u);
  std::vector<std::size_t> expected;
  for (std::size_t a : {0, 5, 10, 15, 20}) {
    for (std::size_t b : {0, 5, 10, 15, 20}) expected.push_back(a * 21 + b);
  }
  EXPECT_EQ(idx, expected);
  for (std::size_t corner : {0u, 20u, 420u, 440u}) {
    EXPECT_NE(std::find(idx.begin(), idx.end(), corner), idx.end());
  }
}

TEST(SelectTrainingParams, RandomDrawIsSeededAndUnique) {
  const ParamGrid g = grid_21x21();
  const auto a = select_training_params(g, 10, 42);
  const auto b = select_training_params(g, 10, 42);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::adjacent_find(a.begin(), a.end()), a.end());
  EXPECT_NE(a, select_training_params(g, 10, 43));
}

TEST(SelectTrainingParams, RejectsOversizedRequest) {
  EXPECT_THROW(select_training_params(ParamGrid{{{0.0, 1.0, 0.5}}}, 4, 0), Error);
}

class SnapshotFile : public ::testing::Test {
 protected:
  void SetUp() override {
    path_ = (std::filesystem::temp_directory_path() /
             ("mlasdi_data_" + std::to_string(::getpid()) + "_" +
              ::testing::UnitTest::GetInstance()->current_test_info()->name() + ".mlsd"))
                .string();
  }
  void TearDown() override { std::filesystem::remove(path_); }

  static SnapshotTensor sample() {
    SnapshotTensor t = generate_pulse_dataset(ParamGrid{{{0.8, 1.0, 0.2}, {0.1, 0.1, 1.0}}}, 16, 4, 0.25);
    t.values(0, 1, 2) = -0.0;  // signed zero must survive
    t.values(1, 3, 5) = 5e-324;
    return t;
  }

  std::string path_;
};

TEST_F(SnapshotFile, RoundTripIsBitExact) {
  const SnapshotTensor t = sample();
  save_snapshots(t, path_);
  const SnapshotTensor back = load_snapshots(path_);
  ASSERT_EQ(back.values.size(), t.values.size());
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.values.values()[i]), std::bit_cast<std::uint64_t>(t.values.values()[i]));
  }
  EXPECT_EQ(back.params, t.params);
  EXPECT_EQ(back.dt, t.dt);
  EXPECT_EQ(encode_snapshots(back), encode_snapshots(t));
}

TEST_F(SnapshotFile, HeaderLayout) {
  const SnapshotTensor t = sample();
  const auto bytes = encode_snapshots(t);
  EXPECT_EQ(bytes.size(), kSnapshotHeaderBytes + 8 * (t.params.size() + t.values.size()));
  EXPECT_EQ(bytes[0], 0x4D);
  EXPECT_EQ(bytes[1], 0x4C);
  EXPECT_EQ(bytes[2], 0x53);
  EXPECT_EQ(bytes[3], 0x44);
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[8], 2);  // n_params
  EXPECT_EQ(bytes[16], 5);  // n_times
  EXPECT_EQ(bytes[24], 16);  // state dim
  EXPECT_EQ(bytes[32], 2);  // param dims
}

ErrorKind decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_snapshots(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::argument;
}

TEST_F(SnapshotFile, CorruptMagic) {
  auto bytes = encode_snapshots(sample());
  bytes[0] = 'X';
  EXPECT_EQ(decode_error(bytes), ErrorKind::bad_magic);
}

TEST_F(SnapshotFile, UnsupportedVersion) {
  auto bytes = encode_snapshots(sample());
  bytes[4] = 2;
  EXPECT_EQ(decode_error(bytes), ErrorKind::unsupported_version);
}

TEST_F(SnapshotFile, TruncatedPayload) {
  auto bytes = encode_snapshots(sample());
  bytes.resize(bytes.size() - 8);
  EXPECT_EQ(decode_error(bytes), ErrorKind::truncated);
  bytes.resize(20);
  EXPECT_EQ(decode_error(bytes), ErrorKind::truncated);
}

TEST_F(SnapshotFile, HeaderClaimsMoreThanFile) {
  auto bytes = encode_snapshots(sample());
  bytes[16] = 200;  // n_times
  EXPECT_EQ(decode_error(bytes), ErrorKind::truncated);
}

TEST_F(SnapshotFile, DimensionOverflow) {
  auto bytes = encode_snapshots(sample());
  for (int i = 0; i < 8; ++i) {
    bytes[16 + i] = 0xFF;
    bytes[24 + i] = 0xFF;
  }
  EXPECT_EQ(decode_error(bytes), ErrorKind::dimension_overflow);
}

TEST_F(SnapshotFile, ImportedTensorsAreValidated) {
  SnapshotTensor t = sample();
  auto bytes = encode_snapshots(t);
  // duplicate the first parameter row into the second
  for (int i = 0; i < 16; ++i) bytes[kSnapshotHeaderBytes + 16 + i] = bytes[kSnapshotHeaderBytes + i];
  EXPECT_EQ(decode_error(bytes), ErrorKind::format);
}

TEST_F(SnapshotFile, MissingFileIsIoError) {
  try {
    load_snapshots(path_ + ".missing");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
}

TEST(SnapshotTensor, RoundTripPropertyOverRandomPayloads) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::uint64_t> bits;
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> dim(1, 6);
    const std::size_t np = dim(rng), nt = dim(rng), nu = dim(rng), nd = dim(rng);
    SnapshotTensor t{0.125, DenseMatrix(np, nd), Tensor3(np, nt, nu)};
    for (std::size_t p = 0; p < np; ++p) t.params(p, 0) = static_cast<double>(p);
    auto finite = [&] {
      double v;
      do {
        v = std::bit_cast<double>(bits(rng));
      } while (!std::isfinite(v));
      return v;
    };
    for (double& v : t.values.values()) v = finite();
    for (std::size_t p = 0; p < np; ++p) {
      for (std::size_t c = 1; c < nd; ++c) t.params(p, c) = finite();
    }
    const auto bytes = encode_snapshots(t);
    EXPECT_EQ(encode_snapshots(decode_snapshots(bytes)), bytes);
  }
}

}  // namespace
}  // namespace mlasdi
