#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rbe/dense_svd.hpp"
#include "rbe/linalg.hpp"

using namespace rbe;

TEST(Matvec, ColumnSelection) {
  Mat m(2, 2);
  m.at(0, 0) = 1;
  m.at(0, 1) = 2;
  m.at(1, 0) = 3;
  m.at(1, 1) = 4;
  Vec r = matvec(m, {1, 0});
  EXPECT_EQ(r, (Vec{1, 3}));
}

TEST(Matvec, Identity) {
  Vec r = matvec(Mat::identity(3), {5, 6, 7});
  EXPECT_EQ(r, (Vec{5, 6, 7}));
}

TEST(Matvec, DiagonalScaling) {
  Mat m(2, 2);
  m.at(0, 0) = 2;
  m.at(1, 1) = 3;
  EXPECT_EQ(matvec(m, {1, 1}), (Vec{2, 3}));
}

TEST(Matvec, DimensionMismatchThrows) {
  EXPECT_THROW(matvec(Mat::identity(3), {1, 2}), ArgumentError);
}

TEST(GramApply, Diagonal) {
  Mat j(2, 2);
  j.at(0, 0) = 3;
  j.at(1, 1) = 1;
  Vec r = gram_apply(oracle::jvp_of(j), oracle::vjp_of(j), {1, 0});
  EXPECT_NEAR(r[0], 9.0, 1e-15);
  EXPECT_NEAR(r[1], 0.0, 1e-15);
}

TEST(GramApply, NullMap) {
  Mat j(3, 2);
  j.v.assign(j.v.size(), 0.0);
  // zero columns are fine for gram_apply itself
  Vec r = gram_apply(oracle::jvp_of(j), oracle::vjp_of(j), {0.3, -0.7});
  EXPECT_EQ(r, (Vec{0, 0}));
}

TEST(GramApply, WideMatrix) {
  // J = [[1,1]]: J^T J = [[1,1],[1,1]], so e1 maps to [1,1]
  Mat j(1, 2);
  j.at(0, 0) = 1;
  j.at(0, 1) = 1;
  Vec r = gram_apply(oracle::jvp_of(j), oracle::vjp_of(j), {1, 0});
  EXPECT_NEAR(r[0], 1.0, 1e-15);
  EXPECT_NEAR(r[1], 1.0, 1e-15);
}

TEST(GramApply, OutputLengthMismatchThrows) {
  auto bad_vjp = [](const Vec& u) { return Vec{u[0]}; };
  Mat j = Mat::identity(2);
  EXPECT_THROW(gram_apply(oracle::jvp_of(j), bad_vjp, Vec{1, 0}), ArgumentError);
}

TEST(GramApply, Linearity) {
  Rng rng(5);
  Mat j = oracle::matrix_with_spectrum(rng, 12, 6, {4, 3, 2, 1, 0.5, 0.2});
  Vec u = rng.gaussian_vec(6), v = rng.gaussian_vec(6);
  double a = 0.7, b = -1.3;
  Vec lhs = gram_apply(oracle::jvp_of(j), oracle::vjp_of(j), [&] {
    Vec s(6);
    for (int i = 0; i < 6; ++i) s[i] = a * u[i] + b * v[i];
    return s;
  }());
  Vec gu = gram_apply(oracle::jvp_of(j), oracle::vjp_of(j), u);
  Vec gv = gram_apply(oracle::jvp_of(j), oracle::vjp_of(j), v);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(lhs[i], a * gu[i] + b * gv[i], 1e-10);
}

TEST(PowerIteration, Diagonal) {
  Mat j(2, 2);
  j.at(0, 0) = 3;
  j.at(1, 1) = 1;
  Rng rng(1);
  auto r = power_iteration_topk(oracle::gram_of(j), 2, 2, 1e-12, 10000, rng);
  ASSERT_EQ(r.singular_values.size(), 2u);
  EXPECT_NEAR(r.singular_values[0], 3.0, 1e-9);
  EXPECT_NEAR(r.singular_values[1], 1.0, 1e-9);
  EXPECT_NEAR(std::fabs(r.right_vectors[0][0]), 1.0, 1e-7);
  EXPECT_NEAR(std::fabs(r.right_vectors[1][1]), 1.0, 1e-7);
  EXPECT_TRUE(r.all_converged());
}

TEST(PowerIteration, RankOne) {
  Mat j(2, 2);
  j.at(0, 1) = 5;  // [[0,5],[0,0]]
  Rng rng(2);
  auto r = power_iteration_topk(oracle::gram_of(j), 2, 1, 1e-12, 10000, rng);
  EXPECT_NEAR(r.singular_values[0], 5.0, 1e-9);
  // sign convention makes the vector +e2
  EXPECT_NEAR(r.right_vectors[0][1], 1.0, 1e-8);
  EXPECT_NEAR(r.right_vectors[0][0], 0.0, 1e-8);
}

TEST(PowerIteration, RankDeficientTail) {
  // after the rank-1 pair is deflated the operator is exactly zero
  Mat j(2, 2);
  j.at(0, 1) = 5;
  Rng rng(3);
  auto r = power_iteration_topk(oracle::gram_of(j), 2, 2, 1e-12, 10000, rng);
  EXPECT_NEAR(r.singular_values[1], 0.0, 1e-9);
  EXPECT_TRUE(r.all_converged());
  EXPECT_NEAR(dot(r.right_vectors[0], r.right_vectors[1]), 0.0, 1e-10);
}

TEST(PowerIteration, MatchesDenseOracle32x8) {
  Rng rng(11);
  auto sigma = oracle::gapped_spectrum(rng, 8, 5e-3);
  Mat j = oracle::matrix_with_spectrum(rng, 32, 8, sigma);
  Rng start(12);
  auto pi = power_iteration_topk(oracle::gram_of(j), 8, 4, 1e-22, 200000, start);
  auto dense = dense_svd_jacobi(j);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(pi.singular_values[i], dense.singular_values[i],
                1e-8 * dense.singular_values[i]);
    EXPECT_LT(vector_angle(pi.right_vectors[i], dense_svd_right_vector(dense, i)), 1e-6);
  }
}

TEST(PowerIteration, GramMatrixIsIdentity) {
  Rng rng(21);
  auto sigma = oracle::gapped_spectrum(rng, 10, 2e-3);
  Mat j = oracle::matrix_with_spectrum(rng, 64, 10, sigma);
  Rng start(22);
  auto pi = power_iteration_topk(oracle::gram_of(j), 10, 6, 1e-18, 100000, start);
  for (size_t a = 0; a < pi.right_vectors.size(); ++a)
    for (size_t b = 0; b < pi.right_vectors.size(); ++b) {
      double want = a == b ? 1.0 : 0.0;
      EXPECT_NEAR(dot(pi.right_vectors[a], pi.right_vectors[b]), want, 1e-10);
    }
}

TEST(PowerIteration, NonConvergenceIsFlaggedNotThrown) {
  // close top values and a two-iteration budget
  Rng rng(31);
  Mat j = oracle::matrix_with_spectrum(rng, 16, 4, {5.0, 4.99, 1.0, 0.5});
  Rng start(32);
  auto pi = power_iteration_topk(oracle::gram_of(j), 4, 2, 1e-16, 2, start);
  EXPECT_FALSE(pi.all_converged());
  ASSERT_EQ(pi.singular_values.size(), 2u);
}

TEST(PowerIteration, DegenerateSpectrumSubspaceMatches) {
  // repeated top value: individual vectors are not unique, the span is
  Rng rng(41);
  Mat j = oracle::matrix_with_spectrum(rng, 24, 6, {5, 5, 2, 1, 0.5, 0.1});
  Rng start(42);
  auto pi = power_iteration_topk(oracle::gram_of(j), 6, 2, 1e-20, 200000, start);
  auto dense = dense_svd_jacobi(j);
  std::vector<Vec> qa = {pi.right_vectors[0], pi.right_vectors[1]};
  std::vector<Vec> qb = {dense_svd_right_vector(dense, 0), dense_svd_right_vector(dense, 1)};
  for (double angle : principal_angles(qa, qb)) EXPECT_LT(angle, 1e-6);
}

TEST(Orthonormalize, DuplicateDropped) {
  Vec e1 = {1, 0};
  auto out = orthonormalize({e1, e1});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], e1);
}

TEST(Orthonormalize, HandComputedPair) {
  auto out = orthonormalize({{1, 1}, {1, 0}});
  ASSERT_EQ(out.size(), 2u);
  double s = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(out[0][0], s, 1e-15);
  EXPECT_NEAR(out[0][1], s, 1e-15);
  EXPECT_NEAR(out[1][0], s, 1e-15);
  EXPECT_NEAR(out[1][1], -s, 1e-15);
}

TEST(Orthonormalize, Empty) { EXPECT_TRUE(orthonormalize({}).empty()); }

TEST(ProjectComplement, AxisRemoval) {
  Vec r = project_complement({1, 1}, {{1, 0}});
  EXPECT_NEAR(r[0], 0.0, 1e-15);
  EXPECT_NEAR(r[1], 1.0, 1e-15);
}

TEST(ProjectComplement, AlreadyOrthogonal) {
  Vec r = project_complement({0, 1}, {{1, 0}});
  EXPECT_EQ(r, (Vec{0, 1}));
}

TEST(ProjectComplement, TwoAxisRemoval) {
  Vec r = project_complement({1, 1, 1}, {{1, 0, 0}, {0, 1, 0}});
  EXPECT_NEAR(r[0], 0.0, 1e-15);
  EXPECT_NEAR(r[1], 0.0, 1e-15);
  EXPECT_NEAR(r[2], 1.0, 1e-15);
}

TEST(ProjectComplement, Idempotent) {
  Rng rng(51);
  auto basis = oracle::random_orthonormal(rng, 12, 5);
  Vec v = rng.gaussian_vec(12);
  Vec once = project_complement(v, basis);
  Vec twice = project_complement(once, basis);
  for (int i = 0; i < 12; ++i) EXPECT_NEAR(once[i], twice[i], 1e-12);
  for (const auto& q : basis) EXPECT_LE(std::fabs(dot(once, q)), 1e-10 * norm(v));
}

TEST(DenseSvdOracle, KnownValues) {
  // [[3,0],[0,1]] and a hand-checked 2x2 rotation composition
  Mat d(2, 2);
  d.at(0, 0) = 3;
  d.at(1, 1) = 1;
  auto s = dense_svd_jacobi(d);
  EXPECT_NEAR(s.singular_values[0], 3.0, 1e-12);
  EXPECT_NEAR(s.singular_values[1], 1.0, 1e-12);

  Mat a(2, 2);  // [[1,1],[0,1]]: sigma = golden-ratio pair
  a.at(0, 0) = 1;
  a.at(0, 1) = 1;
  a.at(1, 1) = 1;
  auto g = dense_svd_jacobi(a);
  double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  EXPECT_NEAR(g.singular_values[0], phi, 1e-12);
  EXPECT_NEAR(g.singular_values[1], phi - 1.0, 1e-12);
}
