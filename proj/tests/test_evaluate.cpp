#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "flowgem/evaluate.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace flowgem;

TEST(EnergyDistance, IdenticalSamplesGiveZero) {
  std::mt19937_64 g(1);
  Matrix x = testing_support::normal_matrix(g, 50, 3);
  EXPECT_NEAR(energy_distance(x, x), 0.0, 1e-12);
}

TEST(EnergyDistance, TwoPointClosedForm) {
  // x = {0, 0}, y = {1, 1}: cross mean 1, within means 0.
  EXPECT_DOUBLE_EQ(energy_distance(from_rows({{0.0}, {0.0}}), from_rows({{1.0}, {1.0}})), 2.0);
}

TEST(EnergyDistance, MatchesNaiveOracle) {
  std::mt19937_64 g(2);
  for (int rep = 0; rep < 20; ++rep) {
    Matrix x = testing_support::normal_matrix(g, 20 + rep, 1 + rep % 4);
    Matrix y = testing_support::normal_matrix(g, 35, 1 + rep % 4, 0.5, 1.5);
    EXPECT_NEAR(energy_distance(x, y), oracle::naive_energy(x, y), 1e-10);
    EXPECT_NEAR(energy_distance(x, y, 4), oracle::naive_energy(x, y), 1e-10);
  }
}

TEST(EnergyDistance, ExactlySymmetricAndThreadIndependent) {
  std::mt19937_64 g(3);
  Matrix x = testing_support::normal_matrix(g, 200, 3);
  Matrix y = testing_support::normal_matrix(g, 150, 3, 0.2, 1.0);
  EXPECT_EQ(energy_distance(x, y), energy_distance(y, x));
  EXPECT_EQ(energy_distance(x, y, 1), energy_distance(x, y, 7));
  EXPECT_EQ(energy_distance_unbiased(x, y), energy_distance_unbiased(y, x));
}

TEST(EnergyDistance, RowPermutationInvariant) {
  std::mt19937_64 g(4);
  Matrix x = testing_support::normal_matrix(g, 60, 2);
  Matrix y = testing_support::normal_matrix(g, 40, 2, 1.0, 1.0);
  std::vector<std::size_t> perm(x.rows());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), g);
  Matrix xp(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) xp(i, j) = x(perm[i], j);
  EXPECT_NEAR(energy_distance(xp, y), energy_distance(x, y), 1e-12);
}

TEST(EnergyDistance, UnbiasedVariantIsNearZeroForSameDistribution) {
  std::mt19937_64 g(5);
  Matrix x = testing_support::normal_matrix(g, 400, 2);
  Matrix y = testing_support::normal_matrix(g, 400, 2);
  const double u = energy_distance_unbiased(x, y);
  EXPECT_LT(std::abs(u), 0.05);
  EXPECT_LT(u, energy_distance(x, y));
}

TEST(EnergyDistance, Errors) {
  EXPECT_THROW(energy_distance(Matrix(3, 2), Matrix(3, 3)), DataError);
  EXPECT_THROW(energy_distance(Matrix(1, 2), Matrix(3, 2)), DataError);
}

TEST(StandardizedEnergy, InvariantToCommonRescaling) {
  std::mt19937_64 g(6);
  Matrix x = testing_support::normal_matrix(g, 100, 3);
  Matrix y = testing_support::normal_matrix(g, 120, 3, 0.3, 1.2);
  const double base = standardized_energy(x, y).e2;
  Matrix xs = x, ys = y;
  for (double& v : xs.data()) v = 8.0 * v - 3.0;
  for (double& v : ys.data()) v = 8.0 * v - 3.0;
  auto r = standardized_energy(xs, ys);
  EXPECT_NEAR(r.e2, base, 1e-10);
  EXPECT_EQ(r.n_x, 100u);
  EXPECT_EQ(r.n_y, 120u);
  EXPECT_EQ(r.standardizer_source, EnergyReport::Source::heldout);
}

TEST(StandardizedEnergy, ShiftSeparates) {
  std::mt19937_64 g(7);
  Matrix x = testing_support::normal_matrix(g, 100, 2);
  Matrix y = testing_support::normal_matrix(g, 100, 2);
  Matrix shifted = x;
  for (double& v : shifted.data()) v += 2.0;
  EXPECT_GT(standardized_energy(shifted, y).e2, standardized_energy(x, y).e2);
}

TEST(Quantile, SmallExamples) {
  std::vector<double> s{10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0};
  EXPECT_EQ(quantile(s, 0.1), 1.0);
  EXPECT_EQ(quantile(s, 0.0), 0.0);
  EXPECT_EQ(quantile(s, 1.0), 10.0);
  EXPECT_DOUBLE_EQ(quantile({0.0, 1.0}, 0.25), 0.25);
  EXPECT_EQ(quantile(std::vector<double>(7, 3.5), 0.37), 3.5);
}

TEST(Quantile, UniformMonteCarlo) {
  std::mt19937_64 g(8);
  std::uniform_real_distribution<double> u;
  std::vector<double> s(1000000);
  for (double& v : s) v = u(g);
  EXPECT_NEAR(quantile(s, 0.1), 0.1, 0.002);
}

TEST(Quantile, MonotoneInLevel) {
  std::mt19937_64 g(9);
  std::vector<double> s(257);
  std::normal_distribution<double> z;
  for (double& v : s) v = z(g);
  double prev = -INFINITY;
  for (int k = 0; k <= 100; ++k) {
    const double q = quantile(s, k / 100.0);
    EXPECT_GE(q, prev);
    prev = q;
  }
}

TEST(Quantile, Errors) {
  EXPECT_THROW(quantile({}, 0.5), DataError);
  EXPECT_THROW(quantile({1.0}, 1.5), DataError);
  EXPECT_THROW(quantile({1.0}, NAN), DataError);
}
