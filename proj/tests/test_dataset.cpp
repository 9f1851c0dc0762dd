#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "flowgem/dataset.hpp"
#include "test_support.hpp"

using namespace flowgem;

namespace {

MaskedDataset parse(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in);
}

MaskedDataset random_masked(std::mt19937_64& g, std::size_t n, std::size_t d, double p_missing) {
  Matrix v = testing_support::normal_matrix(g, n, d, 0.0, 3.0);
  std::bernoulli_distribution miss(p_missing);
  std::vector<bool> mask(n * d);
  for (std::size_t i = 0; i < n * d; ++i) mask[i] = miss(g);
  // Keep at least two observed entries per column.
  for (std::size_t j = 0; j < d; ++j) {
    mask[j] = false;
    mask[d + j] = false;
  }
  return MaskedDataset(std::move(v), std::move(mask), {});
}

}  // namespace

TEST(LoadCsv, OneMissingCell) {
  auto ds = parse("a,b,c\n1,2,3\n4,NA,6\n7,8,9\n");
  EXPECT_EQ(ds.rows(), 3u);
  EXPECT_EQ(ds.cols(), 3u);
  EXPECT_EQ(ds.missing_count(), 1u);
  EXPECT_TRUE(ds.is_missing(1, 1));
  EXPECT_EQ(ds.value(2, 0), 7.0);
  EXPECT_EQ(ds.column_names()[2], "c");
}

TEST(LoadCsv, EmptyCellsAndScientificNotation) {
  auto ds = parse("x,y\n1e-3,\n,-2.5E2\n+4,5\n");
  EXPECT_TRUE(ds.is_missing(0, 1));
  EXPECT_TRUE(ds.is_missing(1, 0));
  EXPECT_DOUBLE_EQ(ds.value(0, 0), 1e-3);
  EXPECT_DOUBLE_EQ(ds.value(1, 1), -250.0);
  EXPECT_DOUBLE_EQ(ds.value(2, 0), 4.0);
}

TEST(LoadCsv, CustomMissingToken) {
  std::istringstream in("x,y\n1,?\n2,3\n");
  auto ds = read_csv(in, "?");
  EXPECT_TRUE(ds.is_missing(0, 1));
}

TEST(LoadCsv, FullyMissingColumnIsAnError) {
  try {
    parse("a,b\n1,NA\n2,NA\n");
    FAIL() << "expected FullyMissingColumn";
  } catch (const DataError& e) {
    EXPECT_EQ(e.code(), DataErrc::fully_missing_column);
  }
}

TEST(LoadCsv, RaggedAndUnparseable) {
  try {
    parse("a,b\n1,2\n3\n");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.code(), DataErrc::ragged_row);
  }
  try {
    parse("a,b\n1,2\n3,abc\n");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.code(), DataErrc::unparseable_cell);
  }
  EXPECT_THROW(parse(""), DataError);
  EXPECT_THROW(load_csv("/nonexistent/file.csv"), DataError);
}

TEST(MaskedDataset, MaskedReadThrows) {
  auto ds = parse("a\n1\nNA\n");
  try {
    (void)ds.value(1, 0);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.code(), DataErrc::masked_read);
  }
}

TEST(WriteCsv, RoundTripPreservesValuesAndMask) {
  std::mt19937_64 g(11);
  for (int rep = 0; rep < 20; ++rep) {
    auto ds = random_masked(g, 1 + 5 + rep, 1 + rep % 4, 0.3);
    std::ostringstream out;
    write_csv(out, ds);
    std::istringstream in(out.str());
    auto back = read_csv(in);
    ASSERT_EQ(back.rows(), ds.rows());
    ASSERT_EQ(back.cols(), ds.cols());
    EXPECT_EQ(back.mask(), ds.mask());
    EXPECT_EQ(back.column_names(), ds.column_names());
    for (std::size_t i = 0; i < ds.rows(); ++i)
      for (std::size_t j = 0; j < ds.cols(); ++j)
        if (!ds.is_missing(i, j)) EXPECT_EQ(back.value(i, j), ds.value(i, j));
  }
}

TEST(Partition, CompleteDataIsOneGroup) {
  std::mt19937_64 g(1);
  auto ds = MaskedDataset::complete(testing_support::random_matrix(g, 10, 3));
  auto groups = partition_by_pattern(ds);
  ASSERT_EQ(groups.size(), 1u);
  EXPECT_TRUE(groups[0].pattern.all_observed());
  EXPECT_EQ(groups[0].n_m(), 10u);
  EXPECT_EQ(groups[0].rows, ds.raw_values());
}

TEST(Partition, ThreePatternDesign) {
  auto ds = parse("a,b,c\n1,NA,3\n4,5,6\nNA,8,9\n1,2,3\n7,NA,1\n");
  auto groups = partition_by_pattern(ds);
  ASSERT_EQ(groups.size(), 3u);
  EXPECT_EQ(groups[0].pattern.str(), "000");
  EXPECT_EQ(groups[1].pattern.str(), "010");
  EXPECT_EQ(groups[2].pattern.str(), "100");
  EXPECT_EQ(groups[0].pattern.d_m(), 3u);
  EXPECT_EQ(groups[1].pattern.d_m(), 2u);
  EXPECT_EQ(groups[2].pattern.d_m(), 2u);
  EXPECT_EQ(groups[1].n_m(), 2u);
  EXPECT_EQ(groups[1].rows(1, 1), 1.0);
  EXPECT_EQ(groups[2].pattern.observed_idx, (std::vector<std::size_t>{1, 2}));
}

TEST(Partition, AllMissingRowsAreDropped) {
  auto ds = parse("a,b\n1,2\nNA,NA\n3,NA\n");
  auto groups = partition_by_pattern(ds);
  EXPECT_EQ(total_rows(groups), 2u);
}

TEST(Partition, DisjointCoverMatchesBruteForceScan) {
  std::mt19937_64 g(7);
  for (int rep = 0; rep < 30; ++rep) {
    auto ds = random_masked(g, 50, 4, 0.3);
    auto groups = partition_by_pattern(ds);
    std::vector<int> seen(ds.rows(), 0);
    std::size_t expected_rows = 0;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      auto bits = ds.mask_row(i);
      expected_rows += std::find(bits.begin(), bits.end(), false) != bits.end();
    }
    EXPECT_EQ(total_rows(groups), expected_rows);
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const auto& grp = groups[gi];
      if (gi > 0) EXPECT_LT(groups[gi - 1].pattern.bits, grp.pattern.bits);
      EXPECT_EQ(grp.pattern.d_m() + std::count(grp.pattern.bits.begin(), grp.pattern.bits.end(), true),
                static_cast<long>(ds.cols()));
      EXPECT_TRUE(std::is_sorted(grp.pattern.observed_idx.begin(), grp.pattern.observed_idx.end()));
      for (std::size_t r = 0; r < grp.n_m(); ++r) {
        const std::size_t src = grp.row_index[r];
        ++seen[src];
        EXPECT_EQ(ds.mask_row(src), grp.pattern.bits);
        for (std::size_t k = 0; k < grp.pattern.d_m(); ++k)
          EXPECT_EQ(grp.rows(r, k), ds.value(src, grp.pattern.observed_idx[k]));
      }
    }
    for (std::size_t i = 0; i < ds.rows(); ++i) EXPECT_LE(seen[i], 1);
  }
}

TEST(Partition, RowPermutationEquivariance) {
  std::mt19937_64 g(8);
  auto ds = random_masked(g, 40, 3, 0.3);
  std::vector<std::size_t> perm(ds.rows());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), g);
  Matrix v(ds.rows(), ds.cols());
  std::vector<bool> mask(ds.rows() * ds.cols());
  for (std::size_t i = 0; i < ds.rows(); ++i)
    for (std::size_t j = 0; j < ds.cols(); ++j) {
      mask[i * ds.cols() + j] = ds.is_missing(perm[i], j);
      if (!ds.is_missing(perm[i], j)) v(i, j) = ds.value(perm[i], j);
    }
  MaskedDataset shuffled(v, mask, {});

  auto collect = [](const std::vector<PatternGroup>& groups) {
    std::multiset<std::pair<std::string, std::vector<double>>> out;
    for (const auto& grp : groups)
      for (std::size_t r = 0; r < grp.n_m(); ++r) {
        auto row = grp.rows.row(r);
        out.emplace(grp.pattern.str(), std::vector<double>(row.begin(), row.end()));
      }
    return out;
  };
  EXPECT_EQ(collect(partition_by_pattern(ds)), collect(partition_by_pattern(shuffled)));
}

TEST(Standardizer, TwoPointColumn) {
  auto s = fit_standardizer(parse("a\n0\n2\n"));
  EXPECT_DOUBLE_EQ(s.mu[0], 1.0);
  EXPECT_DOUBLE_EQ(s.lambda_sqrt[0], std::sqrt(2.0));
}

TEST(Standardizer, MaskedEntriesExcluded) {
  auto s = fit_standardizer(parse("a\n1\nNA\n3\n"));
  EXPECT_DOUBLE_EQ(s.mu[0], 2.0);
  EXPECT_DOUBLE_EQ(s.lambda_sqrt[0], std::sqrt(2.0));
}

TEST(Standardizer, DegenerateColumnsRejected) {
  try {
    fit_standardizer(parse("a,b\n1,5\n2,5\n"));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.code(), DataErrc::zero_variance);
  }
  try {
    fit_standardizer(parse("a,b\n1,5\n2,NA\n"));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.code(), DataErrc::too_few_observed);
  }
}

TEST(Standardizer, MatchesNaiveAccumulation) {
  std::mt19937_64 g(21);
  for (int rep = 0; rep < 50; ++rep) {
    auto ds = random_masked(g, 30, 3, 0.4);
    auto s = fit_standardizer(ds);
    for (std::size_t j = 0; j < ds.cols(); ++j) {
      double sum = 0.0;
      int n = 0;
      for (std::size_t i = 0; i < ds.rows(); ++i)
        if (!ds.is_missing(i, j)) {
          sum += ds.value(i, j);
          ++n;
        }
      const double mean = sum / n;
      double ss = 0.0;
      for (std::size_t i = 0; i < ds.rows(); ++i)
        if (!ds.is_missing(i, j)) ss += std::pow(ds.value(i, j) - mean, 2);
      EXPECT_NEAR(s.mu[j], mean, 1e-12 * std::max(1.0, std::abs(mean)));
      EXPECT_NEAR(s.lambda_sqrt[j], std::sqrt(ss / (n - 1)), 1e-12 * std::sqrt(ss / (n - 1)));
    }
  }
}

TEST(Standardizer, RoundTripOnThousandMatrices) {
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> scale(0.01, 1000.0), shift(-1e4, 1e4);
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    Matrix m = testing_support::random_matrix(g, 8, 3);
    const double sc = scale(g), sh = shift(g);
    for (double& v : m.data()) v = v * sc + sh;
    auto s = fit_standardizer(m);
    Matrix back = s.apply(s.apply(m, Direction::forward), Direction::inverse);
    for (std::size_t k = 0; k < m.data().size(); ++k)
      worst = std::max(worst, std::abs(back.data()[k] - m.data()[k]) / std::max(1.0, std::abs(m.data()[k])));
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(Standardizer, ForwardGivesZeroMeanUnitSdAndKeepsMask) {
  std::mt19937_64 g(6);
  auto ds = random_masked(g, 60, 4, 0.3);
  auto s = fit_standardizer(ds);
  auto z = s.apply(ds, Direction::forward);
  EXPECT_EQ(z.mask(), ds.mask());
  auto s2 = fit_standardizer(z);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_NEAR(s2.mu[j], 0.0, 1e-10);
    EXPECT_NEAR(s2.lambda_sqrt[j], 1.0, 1e-10);
  }
}

TEST(Standardizer, ShiftMovesMeanOnly) {
  auto a = fit_standardizer(parse("a\n1\n4\n9\n"));
  auto b = fit_standardizer(parse("a\n11\n14\n19\n"));
  EXPECT_NEAR(b.mu[0] - a.mu[0], 10.0, 1e-12);
  EXPECT_NEAR(b.lambda_sqrt[0], a.lambda_sqrt[0], 1e-12);
}

TEST(Standardizer, DimensionMismatch) {
  auto s = fit_standardizer(parse("a\n1\n2\n"));
  EXPECT_THROW(s.apply(Matrix(2, 2), Direction::forward), DataError);
}
