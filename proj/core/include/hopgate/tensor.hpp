#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hopgate/errors.hpp"

namespace hopgate {

// FLOP weights. Additions, subtractions and comparisons count as 1,
// multiplications as 1, divisions as 4 and exponentials as 8.
inline constexpr std::uint64_t kFlopsPerAdd = 1;
inline constexpr std::uint64_t kFlopsPerMul = 1;
inline constexpr std::uint64_t kFlopsPerDiv = 4;
inline constexpr std::uint64_t kFlopsPerExp = 8;

/// Accounting buckets for every arithmetic operation the engine performs.
enum class FlopCategory : std::size_t {
  EmbedStory = 0,
  EmbedQuery,
  InnerProduct,
  Softmax,
  WeightedSum,
  KeySum,
  KeyGen,
  Fc,
  Icn,
  Other,
};

inline constexpr std::size_t kFlopCategoryCount = 10;

std::string_view to_string(FlopCategory cat);
std::optional<FlopCategory> flop_category_from_string(std::string_view name);

/// Per-category floating-point-operation counters. One ledger per
/// concurrent inference; merge by summation afterwards. Counters never
/// decrease except through reset().
class FlopLedger {
 public:
  void add(FlopCategory cat, std::uint64_t flops) {
    counts_[static_cast<std::size_t>(cat)] += flops;
  }

  std::uint64_t count(FlopCategory cat) const {
    return counts_[static_cast<std::size_t>(cat)];
  }

  std::uint64_t total() const {
    std::uint64_t sum = 0;
    for (auto c : counts_) sum += c;
    return sum;
  }

  void reset() { counts_.fill(0); }

  /// Independent copy; mutations of either side do not affect the other.
  FlopLedger snapshot() const { return *this; }

  void merge(const FlopLedger& other) {
    for (std::size_t i = 0; i < kFlopCategoryCount; ++i) counts_[i] += other.counts_[i];
  }

  /// Per-category (after - before). Throws if any category decreased.
  static FlopLedger diff(const FlopLedger& after, const FlopLedger& before);

  bool operator==(const FlopLedger&) const = default;

 private:
  std::array<std::uint64_t, kFlopCategoryCount> counts_{};
};

/// Dense vector of 64-bit reals. Length is fixed at construction and >= 1.
class Vec {
 public:
  explicit Vec(std::size_t len, double fill = 0.0);
  Vec(std::initializer_list<double> values);
  static Vec from(std::vector<double> values);

  std::size_t size() const { return data_.size(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const;

  bool operator==(const Vec&) const = default;

 private:
  std::vector<double> data_;
};

/// Dense row-major matrix of 64-bit reals; rows, cols >= 1.
class Mat {
 public:
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Mat from(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const;

  bool operator==(const Mat&) const = default;

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

/// Sum over products of paired entries. Charges 2d-1 to `cat`.
double dot(const Vec& u, const Vec& v, FlopLedger& ledger, FlopCategory cat);

/// Row-by-vector products. Charges rows * (2*cols - 1) to `cat`.
Vec matvec(const Mat& m, const Vec& v, FlopLedger& ledger, FlopCategory cat);

/// Entry-wise sum of two equal-length vectors. Charges their length to `cat`.
Vec add(const Vec& u, const Vec& v, FlopLedger& ledger, FlopCategory cat);

/// Numerically stabilized softmax (max subtraction). The ledger is charged
/// the nominal count 13n-1 regardless of the stabilization actually
/// executed, so measured totals line up with the analytic model.
Vec softmax(const Vec& v, FlopLedger& ledger, FlopCategory cat = FlopCategory::Softmax);

/// o = sum of coeffs[i] * m.row(i) over rows with coeffs[i] >= min_coeff
/// (every row when min_coeff is absent). Rows are accumulated in ascending
/// index order. Charges (2*kept - 1) * cols when kept >= 1, nothing when
/// every row is skipped (result is the zero vector). `kept_out`, when
/// non-null, receives the number of unskipped rows.
Vec weighted_row_sum(const Mat& m, const Vec& coeffs, std::optional<double> min_coeff,
                     FlopLedger& ledger, FlopCategory cat, std::size_t* kept_out = nullptr);

/// Index of the largest entry; ties break toward the lowest index.
std::size_t argmax(const Vec& v);

}  // namespace hopgate
