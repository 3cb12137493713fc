// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mlasdi/latent_dynamics.hpp"
#include "test_support.hpp"

namespace mlasdi {
namespace {

TEST(SindyLibrary, PrependsConstantColumn) {
  const DenseMatrix theta = sindy_library(DenseMatrix::from_rows({{0.5, -1.0}}));
  EXPECT_EQ(theta, DenseMatrix::from_rows({{1.0, 0.5, -1.0}}));
  const DenseMatrix zero = sindy_library(DenseMatrix(1, 3));
  EXPECT_EQ(zero, DenseMatrix::from_rows({{1.0, 0.0, 0.0, 0.0}}));
  const DenseMatrix stacked = sindy_library(DenseMatrix::from_rows({{2.0}, {3.0}, {5.0}}));
  EXPECT_EQ(stacked, DenseMatrix::from_rows({{1.0, 2.0}, {1.0, 3.0}, {1.0, 5.0}}));
}

TEST(SindyLibrary, RejectsNonFiniteInput) {
  EXPECT_THROW(sindy_library(DenseMatrix::from_rows({{std::nan("")}})), Error);
}

LatentTensor scalar_series(std::initializer_list<double> vals) {
  return LatentTensor(1, vals.size(), 1, std::vector<double>(vals));
}

TEST(EstimateDerivative, ConstantGivesZero) {
  const LatentTensor d = estimate_derivative(LatentTensor(2, 6, 3, 4.25), 0.1);
  for (double v : d.values()) EXPECT_EQ(v, 0.0);
}

TEST(EstimateDerivative, ExactForLinear) {
  // dyadic dt and slope keep every stencil evaluation exact
  const double dt = 0.125, alpha = -1.5;
  LatentTensor z(1, 9, 1);
  for (std::size_t t = 0; t < 9; ++t) z(0, t, 0) = 0.75 + alpha * dt * static_cast<double>(t);
  const LatentTensor d = estimate_derivative(z, dt);
  for (double v : d.values()) EXPECT_EQ(v, alpha);
}

TEST(EstimateDerivative, CentralDifferenceExactForQuadratic) {
  const LatentTensor d = estimate_derivative(scalar_series({0.0, 0.01, 0.04}), 0.1);
  EXPECT_NEAR(d(0, 1, 0), 0.2, 1e-15);
}

TEST(EstimateDerivative, RejectsBadArguments) {
  EXPECT_THROW(estimate_derivative(LatentTensor(1, 5, 1), 0.0), Error);
  EXPECT_THROW(estimate_derivative(LatentTensor(1, 5, 1), -0.1), Error);
  EXPECT_THROW(estimate_derivative(LatentTensor(1, 2, 1), 0.1), Error);
}

TEST(EstimateDerivative, AdjointMatchesTransposeIdentity) {
  // <D z, g> == <z, D^T g>
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  LatentTensor z(2, 7, 3), g(2, 7, 3);
  for (double& v : z.values()) v = u(rng);
  for (double& v : g.values()) v = u(rng);
  const LatentTensor dz = estimate_derivative(z, 0.3);
  const LatentTensor dtg = derivative_adjoint(g, 0.3);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    lhs += dz.values()[i] * g.values()[i];
    rhs += z.values()[i] * dtg.values()[i];
  }
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(DiLoss, ZeroWhenDerivativesComeFromTheModel) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  const std::size_t nz = 3;
  SindyCoefficients xi(2, nz);
  for (double& v : xi.values()) v = u(rng);
  LatentTensor z(2, 5, nz), zdot(2, 5, nz);
  for (double& v : z.values()) v = u(rng);
  for (std::size_t p = 0; p < 2; ++p) {
    const AffineField f = xi.field(p);
    for (std::size_t t = 0; t < 5; ++t) {
      for (std::size_t i = 0; i < nz; ++i) {
        double acc = f.b[i];
        for (std::size_t j = 0; j < nz; ++j) acc += f.A(i, j) * z(p, t, j);
        zdot(p, t, i) = acc;
      }
    }
  }
  EXPECT_NEAR(di_residual_loss(z, zdot, xi).loss, 0.0, 1e-28);
}

TEST(DiLoss, ZeroCoefficientsAndConstantLatentsGiveZero) {
  EXPECT_EQ(di_loss(LatentTensor(3, 4, 2, 0.5), SindyCoefficients(3, 2), 0.1).loss, 0.0);
}

TEST(DiLoss, HandExpandedThreeSnapshotCase) {
  const double a = 0.3, b = -0.2, c = 0.9, dt = 0.25;
  SindyCoefficients xi(1, 1);
  xi(0, 0, 0) = 0.4;   // b
  xi(0, 1, 0) = -1.1;  // A
  const double d0 = (-3 * a + 4 * b - c) / (2 * dt);
  const double d1 = (c - a) / (2 * dt);
  const double d2 = (3 * c - 4 * b + a) / (2 * dt);
  const double e0 = d0 - (0.4 - 1.1 * a);
  const double e1 = d1 - (0.4 - 1.1 * b);
  const double e2 = d2 - (0.4 - 1.1 * c);
  const double expected = e0 * e0 + e1 * e1 + e2 * e2;
  EXPECT_NEAR(di_loss(scalar_series({a, b, c}), xi, dt).loss, expected, 1e-14 * std::max(1.0, expected));
}

TEST(DiLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1, 1);
  LatentTensor z(2, 6, 3);
  SindyCoefficients xi(2, 3);
  for (double& v : z.values()) v = u(rng);
  for (double& v : xi.values()) v = u(rng);
  const double dt = 0.2;
  const DiLossResult r = di_loss(z, xi, dt);
  auto loss = [&] { return di_loss(z, xi, dt).loss; };
  testing::GradientComparison cmp;
  testing::compare(r.grad_z.values(), testing::central_differences(z.values(), loss), cmp);
  testing::compare(r.grad_xi.values(), testing::central_differences(xi.values(), loss), cmp);
  EXPECT_EQ(cmp.failures, 0u) << cmp.worst_relative;
}

TEST(DiLoss, ShapeMismatchRejected) {
  EXPECT_THROW(di_loss(LatentTensor(2, 5, 2), SindyCoefficients(3, 2), 0.1), Error);
  EXPECT_THROW(di_loss(LatentTensor(2, 5, 2), SindyCoefficients(2, 3), 0.1), Error);
}

TEST(SindyCoefficients, FieldRoundTripsThroughStorageLayout) {
  SindyCoefficients xi(1, 2);
  AffineField f{{1.0, 2.0}, DenseMatrix::from_rows({{3.0, 4.0}, {5.0, 6.0}})};
  xi.set_field(0, f);
  EXPECT_EQ(xi(0, 0, 1), 2.0);
  EXPECT_EQ(xi(0, 1, 0), 3.0);  // A_00
  EXPECT_EQ(xi(0, 2, 0), 4.0);  // A_01 multiplies z_1 in dz_0/dt
  EXPECT_EQ(xi(0, 1, 1), 5.0);  // A_10
  const AffineField g = xi.field(0);
  EXPECT_EQ(g.b, f.b);
  EXPECT_EQ(g.A, f.A);
}

TEST(Rk4Rollout, ZeroFieldIsConstant) {
  AffineField f{{0.0, 0.0}, DenseMatrix(2, 2)};
  const std::vector<double> z0{0.3, -0.7};
  const DenseMatrix traj = rk4_rollout(f, z0, 0.1, 5);
  ASSERT_EQ(traj.rows(), 6u);
  for (std::size_t t = 0; t < 6; ++t) {
    EXPECT_EQ(traj(t, 0), 0.3);
    EXPECT_EQ(traj(t, 1), -0.7);
  }
}

TEST(Rk4Rollout, OneStepOfExponentialDecay) {
  AffineField f{{0.0}, DenseMatrix::from_rows({{-1.0}})};
  const std::vector<double> z0{1.0};
  const double h = 0.1;
  const double k1 = -1.0;
  const double k2 = -(1.0 + 0.5 * h * k1);
  const double k3 = -(1.0 + 0.5 * h * k2);
  const double k4 = -(1.0 + h * k3);
  const double expected = 1.0 + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  const DenseMatrix traj = rk4_rollout(f, z0, h, 1);
  EXPECT_EQ(traj(0, 0), 1.0);
  EXPECT_NEAR(traj(1, 0), expected, 1e-15);
  EXPECT_NEAR(traj(1, 0), 0.9048375, 1e-12);
}

double rk4_endpoint_error(double dt) {
  AffineField f{{0.0}, DenseMatrix::from_rows({{-1.0}})};
  const std::vector<double> z0{1.0};
  const auto steps = static_cast<std::size_t>(std::llround(1.0 / dt));
  return std::abs(rk4_rollout(f, z0, dt, steps)(steps, 0) - std::exp(-1.0));
}

TEST(Rk4Rollout, FourthOrderConvergence) {
  const double e1 = rk4_endpoint_error(0.1), e2 = rk4_endpoint_error(0.05), e3 = rk4_endpoint_error(0.025);
  const double ratio = e1 / e2;
  EXPECT_GE(ratio, 12.0);
  EXPECT_LE(ratio, 20.0);
  EXPECT_NEAR(std::log2(e1 / e2), 4.0, 0.2);
  EXPECT_NEAR(std::log2(e2 / e3), 4.0, 0.2);
}

TEST(Rk4Rollout, DivergenceReportsStep) {
  AffineField f{{0.0}, DenseMatrix::from_rows({{1e3}})};
  const std::vector<double> z0{1.0};
  try {
    rk4_rollout(f, z0, 1.0, 1000);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::divergence);
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(Rk4Rollout, RejectsNonPositiveStep) {
  AffineField f{{0.0}, DenseMatrix(1, 1)};
  const std::vector<double> z0{1.0};
  EXPECT_THROW(rk4_rollout(f, z0, 0.0, 3), Error);
}

TEST(SindyRecovery, LinearLatentDataRecoversCoefficients) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1, 1);
  const double dt = 0.01;
  AffineField truth{{u(rng), u(rng)}, DenseMatrix(2, 2)};
  for (double& v : truth.A.values()) v = u(rng);
  const std::vector<double> z0{u(rng), u(rng)};
  const DenseMatrix traj = testing::exact_affine_trajectory(truth, z0, dt, 100);
  LatentTensor z(1, traj.rows(), 2, traj.storage());
  const SindyCoefficients xi = testing::fit_coefficients_cg(z, dt);
  const AffineField got = xi.field(0);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(got.b[i], truth.b[i], 1e-3);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(got.A(i, j), truth.A(i, j), 1e-3);
  }
}

TEST(SindyRecovery, ConstantShiftOnlyChangesIntercept) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1, 1);
  const double dt = 0.01;
  AffineField truth{{u(rng), u(rng)}, DenseMatrix(2, 2)};
  for (double& v : truth.A.values()) v = u(rng);
  const std::vector<double> z0{u(rng), u(rng)};
  const DenseMatrix traj = testing::exact_affine_trajectory(truth, z0, dt, 100);
  LatentTensor z(1, traj.rows(), 2, traj.storage());
  LatentTensor shifted = z;
  for (std::size_t t = 0; t < shifted.dim1(); ++t) {
    shifted(0, t, 0) += 2.0;
    shifted(0, t, 1) -= 0.5;
  }
  const AffineField a = testing::fit_coefficients_cg(z, dt).field(0);
  const AffineField b = testing::fit_coefficients_cg(shifted, dt).field(0);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(a.A(i, j), b.A(i, j), 1e-8);
  }
  // b' = b - A c
  EXPECT_NEAR(b.b[0], a.b[0] - (a.A(0, 0) * 2.0 - a.A(0, 1) * 0.5), 1e-8);
}

}  // namespace
}  // namespace mlasdi
