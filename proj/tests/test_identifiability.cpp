#include <gtest/gtest.h>

#include <random>

#include "tomo/identifiability.hpp"
#include "tomo/topology.hpp"

using namespace tomo;

namespace {

const RoutingMatrix& two_leaf() {
  static const RoutingMatrix a = build_tree_routing(two_leaf_tree());
  return a;
}

}  // namespace

TEST(Identifiability, PowerMatrixTwoLeafDisplay) {
  const Matrix m2 = power_matrix(two_leaf_projections(2.0), two_leaf(), 2);
  Matrix expected(3, 3);
  expected << 1, 1, 0, 1, 0, 1, 9, 1, 4;
  EXPECT_EQ(m2, expected);
}

TEST(Identifiability, PowerMatrixOrderOneAndCubes) {
  const ProjectionSet p(Matrix{{0.3, -1.2}, {2.0, 0.5}, {-0.7, 0.9}});
  const Matrix m1 = power_matrix(p, two_leaf(), 1);
  EXPECT_TRUE(m1.isApprox(p.directions() * two_leaf().matrix()));
  const Matrix m3 = power_matrix(p, two_leaf(), 3);
  EXPECT_TRUE(m3.isApprox(m1.cwiseProduct(m1).cwiseProduct(m1), 1e-14));
  EXPECT_THROW(power_matrix(p, build_tree_routing(four_leaf_tree()), 2), PreconditionError);
}

TEST(Identifiability, TwoLeafDeterminantClosedForm) {
  EXPECT_DOUBLE_EQ(two_leaf_determinant(1.0, 2), 2.0);
  EXPECT_DOUBLE_EQ(two_leaf_determinant(-1.0, 3), 0.0);
  for (int n = 2; n <= 12; ++n) EXPECT_DOUBLE_EQ(two_leaf_determinant(0.0, n), 0.0);
}

TEST(Identifiability, DeterminantOracleMatchesNumericalDeterminant) {
  // Sign of det(M_n) from the matrix agrees with the closed form.
  for (double a = -3.0; a <= 3.0 + 1e-12; a += 0.25) {
    if (std::abs(a) < 1e-12 || std::abs(a + 1.0) < 1e-12) continue;
    for (int n = 2; n <= 12; ++n) {
      const Matrix mn = power_matrix(two_leaf_projections(a), two_leaf(), n);
      const double numeric = mn.determinant();
      const double closed = two_leaf_determinant(a, n);
      EXPECT_EQ(std::signbit(numeric), std::signbit(closed)) << "a=" << a << " n=" << n;
      EXPECT_NEAR(numeric, closed, 1e-9 * std::max(1.0, std::abs(closed)));
    }
  }
}

TEST(Identifiability, TwoLeafCases) {
  const auto minus_one = check_identifiability(two_leaf_projections(-1.0), two_leaf(), 20, 1e-9);
  EXPECT_TRUE(minus_one.identifiable_even);
  EXPECT_FALSE(minus_one.identifiable_all);
  ASSERT_TRUE(minus_one.first_failing_order.has_value());
  EXPECT_EQ(*minus_one.first_failing_order, 3);

  const auto zero = check_identifiability(two_leaf_projections(0.0), two_leaf(), 20, 1e-9);
  EXPECT_FALSE(zero.identifiable_even);
  EXPECT_FALSE(zero.identifiable_all);
  EXPECT_EQ(*zero.first_failing_order, 2);
  for (const auto& [n, rank] : zero.rank_by_order) EXPECT_EQ(rank, 2) << n;

  const auto one = check_identifiability(two_leaf_projections(1.0), two_leaf(), 20, 1e-9);
  EXPECT_TRUE(one.identifiable_all);
  EXPECT_TRUE(one.identifiable_even);
  EXPECT_FALSE(one.first_failing_order.has_value());
  EXPECT_EQ(one.rank_by_order.size(), 19u);
}

TEST(Identifiability, FewerProjectionsThanComponents) {
  const ProjectionSet p(Matrix{{1.0, 0.0}, {0.0, 1.0}});
  const auto r = check_identifiability(p, two_leaf(), 6);
  EXPECT_FALSE(r.identifiable_all);
  EXPECT_FALSE(r.identifiable_even);
  EXPECT_EQ(*r.first_failing_order, 2);
  EXPECT_FALSE(r.note.empty());
  EXPECT_THROW(check_identifiability(p, two_leaf(), 1), PreconditionError);
}

TEST(Identifiability, ScaleInvariance) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> scale(-5.0, 5.0);
  for (double a : {-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0}) {
    const auto base = check_identifiability(two_leaf_projections(a), two_leaf(), 12);
    Matrix b = two_leaf_projections(a).directions();
    for (Eigen::Index k = 0; k < b.rows(); ++k) {
      double s = scale(gen);
      if (std::abs(s) < 0.1) s = 0.1;
      b.row(k) *= s;
    }
    const auto scaled = check_identifiability(ProjectionSet(b), two_leaf(), 12);
    EXPECT_EQ(base.identifiable_all, scaled.identifiable_all) << a;
    EXPECT_EQ(base.identifiable_even, scaled.identifiable_even) << a;
    EXPECT_EQ(base.first_failing_order, scaled.first_failing_order) << a;
  }
}

TEST(Identifiability, RemovingProjectionNeverHelps) {
  // Random projection sets on the four-leaf tree; dropping any row of a
  // non-identifiable set keeps it non-identifiable.
  const RoutingMatrix a = build_tree_routing(four_leaf_tree());
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 6 + trial % 4;
    Matrix b(k, 4);
    for (Eigen::Index r = 0; r < b.rows(); ++r)
      for (Eigen::Index c = 0; c < 4; ++c) b(r, c) = nd(gen);
    if (trial % 3 == 0) b.row(1) = b.row(0) * 2.5;  // force a duplicate direction
    const auto full = check_identifiability(ProjectionSet(b), a, 8);
    for (Eigen::Index drop = 0; drop < b.rows(); ++drop) {
      Matrix sub(b.rows() - 1, 4);
      for (Eigen::Index r = 0, s = 0; r < b.rows(); ++r)
        if (r != drop) sub.row(s++) = b.row(r);
      const auto reduced = check_identifiability(ProjectionSet(sub), a, 8);
      if (!full.identifiable_all) EXPECT_FALSE(reduced.identifiable_all);
    }
  }
}

TEST(Identifiability, GenericSquareDesignOnFourLeafTreeIsIdentifiable) {
  const RoutingMatrix a = build_tree_routing(four_leaf_tree());
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  Matrix b(7, 4);
  for (Eigen::Index r = 0; r < 7; ++r)
    for (Eigen::Index c = 0; c < 4; ++c) b(r, c) = nd(gen);
  EXPECT_TRUE(check_identifiability(ProjectionSet(b), a, 20).identifiable_all);
}

TEST(Identifiability, ProjectionSetInvariants) {
  EXPECT_THROW(ProjectionSet(Matrix{{1.0, 0.0}, {0.0, 0.0}}), PreconditionError);
  const ProjectionSet p(Matrix{{1.0, 2.0}, {-2.0, -4.0}, {1.0, 0.0}});
  const auto pairs = p.proportional_pairs();
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0], (std::pair<Eigen::Index, Eigen::Index>{0, 1}));
}

TEST(Identifiability, ReportJson) {
  const auto r = check_identifiability(two_leaf_projections(-1.0), two_leaf(), 4);
  const nlohmann::json j = r;
  EXPECT_EQ(j["first_failing_order"], 3);
  EXPECT_EQ(j["identifiable_all"], false);
  EXPECT_EQ(j["rank_by_order"].size(), 3u);
  EXPECT_EQ(j["rank_by_order"][1]["rank"], 2);
}
