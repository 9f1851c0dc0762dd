#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "flowgem/error.hpp"
#include "flowgem/matrix.hpp"

namespace flowgem {

/// An n x d table of doubles with a missingness mask (true = missing).
///
/// Masked cells hold NaN internally but are never handed out: `value()` on a
/// masked cell throws. Immutable after construction.
class MaskedDataset {
 public:
  MaskedDataset(Matrix values, std::vector<bool> mask, std::vector<std::string> column_names)
      : values_(std::move(values)), mask_(std::move(mask)), names_(std::move(column_names)) {
    const std::size_t n = values_.rows(), d = values_.cols();
    if (n == 0 || d == 0)
      throw DataError(DataErrc::invalid_argument, "dataset must have at least one row and column");
    if (mask_.size() != n * d)
      throw DataError(DataErrc::dimension_mismatch, "mask shape does not match values");
    if (names_.empty()) {
      for (std::size_t j = 0; j < d; ++j) names_.push_back("X" + std::to_string(j + 1));
    } else if (names_.size() != d) {
      throw DataError(DataErrc::dimension_mismatch, "column name count does not match values");
    }
    for (std::size_t j = 0; j < d; ++j) {
      bool any = false;
      for (std::size_t i = 0; i < n; ++i) {
        if (mask_[i * d + j]) {
          values_(i, j) = std::numeric_limits<double>::quiet_NaN();
        } else {
          any = true;
          if (!std::isfinite(values_(i, j)))
            throw DataError(DataErrc::unparseable_cell,
                            "non-finite observed value in column '" + names_[j] + "'");
        }
      }
      if (!any)
        throw DataError(DataErrc::fully_missing_column,
                        "FullyMissingColumn: column '" + names_[j] + "' has no observed entries");
    }
  }

  /// A complete dataset (no missing cells).
  static MaskedDataset complete(Matrix values, std::vector<std::string> names = {}) {
    std::vector<bool> mask(values.rows() * values.cols(), false);
    return MaskedDataset(std::move(values), std::move(mask), std::move(names));
  }

  std::size_t rows() const noexcept { return values_.rows(); }
  std::size_t cols() const noexcept { return values_.cols(); }
  const std::vector<std::string>& column_names() const noexcept { return names_; }

  bool is_missing(std::size_t i, std::size_t j) const { return mask_[i * cols() + j]; }

  double value(std::size_t i, std::size_t j) const {
    if (is_missing(i, j))
      throw DataError(DataErrc::masked_read, "read of masked cell (" + std::to_string(i) + ", " +
                                                 std::to_string(j) + ")");
    return values_(i, j);
  }

  std::size_t missing_count() const {
    std::size_t k = 0;
    for (bool b : mask_) k += b;
    return k;
  }

  std::vector<double> observed_column(std::size_t j) const {
    std::vector<double> out;
    for (std::size_t i = 0; i < rows(); ++i)
      if (!is_missing(i, j)) out.push_back(values_(i, j));
    return out;
  }

  std::vector<bool> mask_row(std::size_t i) const {
    return {mask_.begin() + static_cast<std::ptrdiff_t>(i * cols()),
            mask_.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols())};
  }

  /// Raw matrix with NaN in masked cells. Callers must consult the mask.
  const Matrix& raw_values() const noexcept { return values_; }
  const std::vector<bool>& mask() const noexcept { return mask_; }

 private:
  Matrix values_;
  std::vector<bool> mask_;
  std::vector<std::string> names_;
};

/// A missingness pattern over d columns.
struct Pattern {
  std::vector<bool> bits;  // true = missing
  std::vector<std::size_t> observed_idx;

  Pattern() = default;
  explicit Pattern(std::vector<bool> b) : bits(std::move(b)) {
    for (std::size_t j = 0; j < bits.size(); ++j)
      if (!bits[j]) observed_idx.push_back(j);
  }

  std::size_t d() const noexcept { return bits.size(); }
  std::size_t d_m() const noexcept { return observed_idx.size(); }
  bool all_observed() const noexcept { return d_m() == d(); }

  std::string str() const {
    std::string s;
    for (bool b : bits) s.push_back(b ? '1' : '0');
    return s;
  }

  friend bool operator==(const Pattern& a, const Pattern& b) { return a.bits == b.bits; }
};

/// Rows sharing one missingness pattern, restricted to their observed columns.
struct PatternGroup {
  Pattern pattern;
  Matrix rows;                         // n_m x d_m
  std::vector<std::size_t> row_index;  // source row of each entry in `rows`

  std::size_t n_m() const noexcept { return rows.rows(); }
};

/// Splits rows by missingness pattern. Groups are ordered lexicographically
/// on the pattern bits (observed < missing), so the all-observed pattern, if
/// present, comes first. Rows with no observed column are dropped with a
/// warning on stderr.
inline std::vector<PatternGroup> partition_by_pattern(const MaskedDataset& ds) {
  std::map<std::vector<bool>, std::vector<std::size_t>> by_pattern;
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    auto bits = ds.mask_row(i);
    bool all_missing = true;
    for (bool b : bits) all_missing = all_missing && b;
    if (all_missing) {
      ++dropped;
      continue;
    }
    by_pattern[std::move(bits)].push_back(i);
  }
  if (dropped > 0)
    std::cerr << "warning: " << dropped
              << " row(s) with every column missing excluded from pattern groups\n";

  std::vector<PatternGroup> groups;
  groups.reserve(by_pattern.size());
  for (auto& [bits, idx] : by_pattern) {
    PatternGroup g;
    g.pattern = Pattern(bits);
    g.rows = Matrix(idx.size(), g.pattern.d_m());
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t k = 0; k < g.pattern.d_m(); ++k)
        g.rows(r, k) = ds.value(idx[r], g.pattern.observed_idx[k]);
    g.row_index = std::move(idx);
    groups.push_back(std::move(g));
  }
  return groups;
}

inline std::size_t total_rows(const std::vector<PatternGroup>& groups) {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.n_m();
  return n;
}

enum class Direction { forward, inverse };

/// Column-wise affine standardization x -> (x - mu) / sd.
struct Standardizer {
  std::vector<double> mu;
  std::vector<double> lambda_sqrt;

  std::size_t d() const noexcept { return mu.size(); }

  double forward(std::size_t j, double x) const { return (x - mu[j]) / lambda_sqrt[j]; }
  double inverse(std::size_t j, double y) const { return y * lambda_sqrt[j] + mu[j]; }

  Matrix apply(const Matrix& m, Direction dir) const {
    check(m.cols());
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j)
        out(i, j) = dir == Direction::forward ? forward(j, m(i, j)) : inverse(j, m(i, j));
    return out;
  }

  MaskedDataset apply(const MaskedDataset& ds, Direction dir) const {
    check(ds.cols());
    Matrix out(ds.rows(), ds.cols());
    for (std::size_t i = 0; i < ds.rows(); ++i)
      for (std::size_t j = 0; j < ds.cols(); ++j)
        if (!ds.is_missing(i, j)) {
          const double x = ds.value(i, j);
          out(i, j) = dir == Direction::forward ? forward(j, x) : inverse(j, x);
        }
    return MaskedDataset(std::move(out), ds.mask(), ds.column_names());
  }

 private:
  void check(std::size_t d_in) const {
    if (d_in != d())
      throw DataError(DataErrc::dimension_mismatch,
                      "standardizer fitted on " + std::to_string(d()) + " columns, got " +
                          std::to_string(d_in));
  }
};

/// Mean and sample standard deviation (n - 1 denominator) of a column.
/// Throws when fewer than two values or zero spread.
inline std::pair<double, double> mean_and_sd(const std::vector<double>& v, const std::string& name) {
  if (v.size() < 2)
    throw DataError(DataErrc::too_few_observed,
                    "column '" + name + "' has fewer than 2 observed entries");
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  if (!(sd > 0.0))
    throw DataError(DataErrc::zero_variance, "column '" + name + "' has zero variance");
  return {mean, sd};
}

/// Fits per-column mean and sd over observed entries only.
inline Standardizer fit_standardizer(const MaskedDataset& ds) {
  Standardizer s;
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    auto [m, sd] = mean_and_sd(ds.observed_column(j), ds.column_names()[j]);
    s.mu.push_back(m);
    s.lambda_sqrt.push_back(sd);
  }
  return s;
}

inline Standardizer fit_standardizer(const Matrix& complete) {
  return fit_standardizer(MaskedDataset::complete(complete));
}

// ---------------------------------------------------------------------------
// CSV

namespace csv_detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string format_double(double x) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", x);
  return std::string(buf, static_cast<std::size_t>(len));
}

}  // namespace csv_detail

inline MaskedDataset read_csv(std::istream& in, const std::string& missing_token = "NA",
                              const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line))
    throw DataError(DataErrc::io, source + ": empty file (header required)");
  std::vector<std::string> names;
  for (auto f : csv_detail::split(line)) names.emplace_back(f);
  const std::size_t d = names.size();

  std::vector<double> values;
  std::vector<bool> mask;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (csv_detail::trim(line).empty()) continue;
    auto fields = csv_detail::split(line);
    if (fields.size() != d)
      throw DataError(DataErrc::ragged_row, source + ":" + std::to_string(lineno) + ": expected " +
                                                std::to_string(d) + " fields, got " +
                                                std::to_string(fields.size()));
    for (auto f : fields) {
      if (f.empty() || f == missing_token) {
        values.push_back(std::numeric_limits<double>::quiet_NaN());
        mask.push_back(true);
        continue;
      }
      double x = 0.0;
      if (f.front() == '+') f.remove_prefix(1);
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), x);
      if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(x))
        throw DataError(DataErrc::unparseable_cell,
                        source + ":" + std::to_string(lineno) + ": cannot parse '" +
                            std::string(f) + "'");
      values.push_back(x);
      mask.push_back(false);
    }
  }
  const std::size_t n = d == 0 ? 0 : values.size() / d;
  if (n == 0) throw DataError(DataErrc::invalid_argument, source + ": no data rows");
  Matrix m(n, d);
  std::copy(values.begin(), values.end(), m.data().begin());
  return MaskedDataset(std::move(m), std::move(mask), std::move(names));
}

/// Loads a CSV with a mandatory header. Cells equal to `missing_token` or
/// empty are missing.
inline MaskedDataset load_csv(const std::string& path, const std::string& missing_token = "NA") {
  std::ifstream in(path);
  if (!in) throw DataError(DataErrc::io, "cannot open '" + path + "'");
  return read_csv(in, missing_token, path);
}

inline void write_csv(std::ostream& out, const MaskedDataset& ds,
                      const std::string& missing_token = "NA") {
  const auto& names = ds.column_names();
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (std::size_t j = 0; j < ds.cols(); ++j) {
      if (j) out << ',';
      out << (ds.is_missing(i, j) ? missing_token : csv_detail::format_double(ds.value(i, j)));
    }
    out << '\n';
  }
}

inline void write_csv(std::ostream& out, const Matrix& m, const std::vector<std::string>& names) {
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j)
      out << (j ? "," : "") << csv_detail::format_double(m(i, j));
    out << '\n';
  }
}

template <class Table, class... Rest>
void write_csv_file(const std::string& path, const Table& t, Rest&&... rest) {
  std::ofstream out(path);
  if (!out) throw DataError(DataErrc::io, "cannot write '" + path + "'");
  write_csv(out, t, std::forward<Rest>(rest)...);
  if (!out) throw DataError(DataErrc::io, "write failed for '" + path + "'");
}

/// Matrix of a dataset that must have no missing cells.
inline Matrix require_complete(const MaskedDataset& ds, const std::string& what) {
  if (ds.missing_count() != 0)
    throw DataError(DataErrc::invalid_argument, what + " must not contain missing values");
  return ds.raw_values();
}

}  // namespace flowgem
