#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "cpa/arborescence.h"
#include "cpa/error.h"
#include "test_support.h"

namespace cpa {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::MatrixXd RandomScores(std::mt19937_64& rng, int nodes) {
  std::uniform_real_distribution<double> w(-5, 10);
  Eigen::MatrixXd c(nodes, nodes);
  for (int j = 0; j < nodes; ++j)
    for (int i = 0; i < nodes; ++i) c(j, i) = (i == j || i == 0) ? kInf : w(rng);
  return c;
}

TEST(MinArborescence, MatchesBruteForce) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const int nodes = 2 + trial % 5;
    const Eigen::MatrixXd c = RandomScores(rng, nodes);
    const std::vector<int> parent = MinArborescence(c, 0);
    ASSERT_EQ(parent[0], -1);
    TreeConfig t;
    t.parent.assign(parent.begin() + 1, parent.end());
    ASSERT_NO_THROW(t.Validate());
    EXPECT_NEAR(test::TreeCost(c, t), test::BruteForceArborescenceCost(c), 1e-12);
  }
}

TEST(MinArborescence, ContractsCycles) {
  // The cheapest incoming edges form the cycle 1 -> 2 -> 1.
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(3, 3, kInf);
  c(1, 2) = 1;
  c(2, 1) = 1;
  c(0, 1) = 10;
  c(0, 2) = 5;
  const std::vector<int> parent = MinArborescence(c, 0);
  EXPECT_EQ(parent, (std::vector<int>{-1, 2, 0}));
}

TEST(MinArborescence, UnreachableThrows) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(3, 3, kInf);
  c(0, 1) = 1;
  EXPECT_THROW(MinArborescence(c, 0), Error);
}

}  // namespace
}  // namespace cpa
