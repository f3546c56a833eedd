#include <gtest/gtest.h>

#include <Eigen/SVD>
#include <cmath>

#include "ddfire/errors.hpp"
#include "ddfire/operators.hpp"

using namespace ddfire;
using operators::LinearOperator;

namespace {

Matrix random_matrix(Index m, Index d, std::uint64_t seed) {
  RandomStream rng(seed);
  Matrix A(m, d);
  for (Index j = 0; j < d; ++j) A.col(j) = rng.normal(m);
  return A;
}

std::vector<LinearOperator> zoo() {
  RandomStream masks(9);
  const ImageShape sh{4, 6};
  Matrix k(3, 3);
  k << 0.1, 0.2, 0.0, 0.3, 1.0, -0.4, 0.0, 0.2, 0.05;
  return {LinearOperator::dense(random_matrix(5, 7, 1)),
          LinearOperator::mask(sh.size(), {1, 4, 9, 23}),
          LinearOperator::box_inpainting(sh, 1, 1, 2, 3),
          LinearOperator::circular_convolution(sh, k),
          LinearOperator::decimated_convolution(sh, k, 2),
          operators::make_osf(sh),
          operators::make_cdp(sh, masks, 2)};
}

}  // namespace

TEST(Operators, MaskSelectsAndZeroFills) {
  const auto op = LinearOperator::mask(3, {0, 2});
  EXPECT_EQ(op.apply(Vector{{1.0, 2.0, 3.0}}), (Vector{{1.0, 3.0}}));
  EXPECT_EQ(op.adjoint(Vector{{1.0, 3.0}}), (Vector{{1.0, 0.0, 3.0}}));
}

TEST(Operators, ImpulseKernelIsIdentity) {
  Matrix delta = Matrix::Zero(3, 3);
  delta(1, 1) = 1.0;
  const auto op = LinearOperator::circular_convolution({5, 4}, delta);
  RandomStream rng(2);
  const Signal x = rng.normal(20);
  EXPECT_LT((op.apply(x) - x).norm(), 1e-12);
  EXPECT_LT((op.adjoint(x) - x).norm(), 1e-12);
}

TEST(Operators, DenseProduct) {
  Matrix A(2, 2);
  A << 1, 0, 1, 1;
  EXPECT_EQ(LinearOperator::dense(A).apply(Vector{{1.0, 1.0}}), (Vector{{1.0, 2.0}}));
}

TEST(Operators, AdjointIdentityAllKinds) {
  RandomStream rng(3);
  for (const auto& op : zoo()) {
    const Signal x = rng.normal(op.input_size());
    const Measurement y = rng.normal(op.output_size());
    EXPECT_NEAR(op.apply(x).dot(y), x.dot(op.adjoint(y)), 1e-12 * x.norm() * y.norm())
        << operators::to_string(op.kind());
  }
}

TEST(Operators, ConvolutionMatchesDirectSum) {
  Matrix k(2, 3);
  k << 1, 2, 3, 4, 5, 6;
  const ImageShape sh{4, 5};
  const auto op = LinearOperator::circular_convolution(sh, k);
  RandomStream rng(4);
  const Signal x = rng.normal(sh.size());
  const Measurement y = op.apply(x);
  // Reference: correlate with the kernel centred at (rows/2, cols/2), circular wrap.
  const Matrix dense = op.to_dense();
  EXPECT_LT((dense * x - y).norm(), 1e-12);
  // each row of the dense matrix holds the kernel entries once
  for (Index i = 0; i < dense.rows(); ++i) EXPECT_NEAR(dense.row(i).sum(), k.sum(), 1e-12);
  EXPECT_NEAR(op.frobenius_sq(), sh.size() * k.squaredNorm(), 1e-9);
}

TEST(Operators, ClosedFormSpectralQuantities) {
  for (const auto& op : zoo()) {
    const Eigen::JacobiSVD<Matrix> svd(op.to_dense());
    EXPECT_NEAR(op.s_max(), svd.singularValues()[0], 1e-9) << operators::to_string(op.kind());
    EXPECT_NEAR(op.frobenius_sq(), svd.singularValues().squaredNorm(), 1e-8);
  }
}

TEST(Operators, SvdReconstructsOperator) {
  for (const auto& op : zoo()) {
    const auto with = op.with_svd();
    const auto& f = with.svd();
    const Matrix rebuilt = f.U * f.s.asDiagonal() * f.V.transpose();
    EXPECT_LT((rebuilt - op.to_dense()).norm(), 1e-10) << operators::to_string(op.kind());
    EXPECT_EQ(f.V.cols(), op.input_size());
  }
}

TEST(Operators, PowerIteration) {
  EXPECT_NEAR(operators::power_iteration_smax(LinearOperator::dense(Matrix::Identity(4, 4))).value, 1.0,
              1e-12);
  Matrix D = Matrix::Zero(2, 2);
  D(0, 0) = 3.0;
  D(1, 1) = 1.0;
  EXPECT_NEAR(operators::power_iteration_smax(LinearOperator::dense(D)).value, 3.0, 1e-6);
  const Matrix A = random_matrix(8, 8, 5);
  const Eigen::JacobiSVD<Matrix> svd(A);
  const auto res = operators::power_iteration_smax(LinearOperator::dense(A), 5000, 1e-14);
  EXPECT_NEAR(res.value, svd.singularValues()[0], 1e-6);
}

TEST(Operators, FrobeniusProbes) {
  RandomStream rng(6);
  const auto ones = LinearOperator::dense(Matrix::Ones(3, 3));
  const int n = 10000;
  Vector draws(n);
  for (int i = 0; i < n; ++i) draws[i] = operators::estimate_frobenius_sq(ones, 1, rng);
  const double mean = draws.mean();
  const double se = std::sqrt((draws.array() - mean).square().sum() / (n - 1) / n);
  EXPECT_NEAR(mean, 9.0, 3.0 * se);
  EXPECT_EQ(operators::kDefaultFrobeniusProbes, 25);
  const auto id = LinearOperator::dense(Matrix::Identity(10, 10));
  EXPECT_NEAR(operators::estimate_frobenius_sq(id, 20000, rng), 10.0, 0.2);
}

TEST(Operators, FourierOperatorsAreIsometries) {
  RandomStream rng(7);
  RandomStream masks(8);
  const auto cdp2 = operators::make_cdp({2, 2}, masks, 4);
  const Signal e0{{1.0, 0.0, 0.0, 0.0}};
  EXPECT_LT((cdp2.normal(e0) - e0).norm(), 1e-10);
  for (const auto& op : {operators::make_osf({4, 4}), operators::make_cdp({4, 4}, masks, 3)}) {
    const Signal x = rng.normal(16);
    EXPECT_NEAR(op.apply(x).norm(), x.norm(), 1e-10);
    EXPECT_TRUE(op.is_complex());
  }
  // OSF pads 2x per axis: 8x8 complex outputs for a 4x4 image
  EXPECT_EQ(operators::make_osf({4, 4}).output_size(), 2 * 64);
}

TEST(Operators, CdpMasksReproducibleFromSeed) {
  RandomStream a(11), b(11);
  const auto op1 = operators::make_cdp({3, 3}, a, 2);
  const auto op2 = operators::make_cdp({3, 3}, b, 2);
  ASSERT_EQ(op1.cdp_masks().size(), 2u);
  for (size_t i = 0; i < 2; ++i) EXPECT_EQ(op1.cdp_masks()[i], op2.cdp_masks()[i]);
  for (const auto& m : op1.cdp_masks())
    for (Index j = 0; j < m.size(); ++j) EXPECT_NEAR(std::abs(m[j]), 1.0, 1e-15);
}

TEST(Operators, RejectsBadConstruction) {
  EXPECT_THROW(LinearOperator::mask(3, {0, 3}), ContractViolation);
  EXPECT_THROW(LinearOperator::box_inpainting({4, 4}, 3, 3, 2, 2), ContractViolation);
  const auto op = LinearOperator::dense(Matrix::Ones(2, 3));
  EXPECT_THROW(op.apply(Vector::Ones(2)), ContractViolation);
  EXPECT_THROW(op.svd(), ContractViolation);
}
