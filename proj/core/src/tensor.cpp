#include "hopgate/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace hopgate {

namespace {

constexpr std::array<std::string_view, kFlopCategoryCount> kCategoryNames = {
    "embed_story", "embed_query", "inner_product", "softmax", "weighted_sum",
    "key_sum",     "key_gen",     "fc",            "icn",     "other",
};

}  // namespace

std::string_view to_string(FlopCategory cat) {
  return kCategoryNames[static_cast<std::size_t>(cat)];
}

std::optional<FlopCategory> flop_category_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kFlopCategoryCount; ++i) {
    if (kCategoryNames[i] == name) return static_cast<FlopCategory>(i);
  }
  return std::nullopt;
}

FlopLedger FlopLedger::diff(const FlopLedger& after, const FlopLedger& before) {
  FlopLedger out;
  for (std::size_t i = 0; i < kFlopCategoryCount; ++i) {
    if (after.counts_[i] < before.counts_[i]) {
      throw ParameterError("ledger diff would be negative for category '" +
                           std::string(kCategoryNames[i]) + "'");
    }
    out.counts_[i] = after.counts_[i] - before.counts_[i];
  }
  return out;
}

Vec::Vec(std::size_t len, double fill) : data_(len, fill) {
  if (len == 0) throw DimensionError("Vec length must be >= 1");
}

Vec::Vec(std::initializer_list<double> values) : data_(values) {
  if (data_.empty()) throw DimensionError("Vec length must be >= 1");
}

Vec Vec::from(std::vector<double> values) {
  if (values.empty()) throw DimensionError("Vec length must be >= 1");
  Vec v(1);
  v.data_ = std::move(values);
  return v;
}

bool Vec::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Mat::Mat(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (rows == 0 || cols == 0) throw DimensionError("Mat dims must be >= 1");
}

Mat Mat::from(std::size_t rows, std::size_t cols, std::vector<double> values) {
  if (values.size() != rows * cols) {
    throw DimensionError("Mat data length " + std::to_string(values.size()) +
                         " != rows*cols = " + std::to_string(rows * cols));
  }
  Mat m(rows, cols);
  m.data_ = std::move(values);
  return m;
}

bool Mat::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

double dot(const Vec& u, const Vec& v, FlopLedger& ledger, FlopCategory cat) {
  if (u.size() != v.size()) {
    throw DimensionError("dot: length mismatch " + std::to_string(u.size()) + " vs " +
                         std::to_string(v.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) sum += u[i] * v[i];
  ledger.add(cat, 2 * static_cast<std::uint64_t>(u.size()) - 1);
  return sum;
}

Vec matvec(const Mat& m, const Vec& v, FlopLedger& ledger, FlopCategory cat) {
  if (m.cols() != v.size()) {
    throw DimensionError("matvec: cols " + std::to_string(m.cols()) + " != len " +
                         std::to_string(v.size()));
  }
  Vec out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double sum = 0.0;
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) sum += row[c] * v[c];
    out[r] = sum;
  }
  ledger.add(cat, static_cast<std::uint64_t>(m.rows()) * (2 * static_cast<std::uint64_t>(m.cols()) - 1));
  return out;
}

Vec add(const Vec& u, const Vec& v, FlopLedger& ledger, FlopCategory cat) {
  if (u.size() != v.size()) {
    throw DimensionError("add: length mismatch " + std::to_string(u.size()) + " vs " +
                         std::to_string(v.size()));
  }
  Vec out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] + v[i];
  ledger.add(cat, u.size());
  return out;
}

Vec softmax(const Vec& v, FlopLedger& ledger, FlopCategory cat) {
  const double peak = *std::max_element(v.data().begin(), v.data().end());
  Vec out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - peak);
    sum += out[i];
  }
  for (std::size_t i = 0; i < v.size(); ++i) out[i] /= sum;
  // Nominal count: n exponentials, n-1 sum adds, n divisions.
  ledger.add(cat, 13 * static_cast<std::uint64_t>(v.size()) - 1);
  return out;
}

Vec weighted_row_sum(const Mat& m, const Vec& coeffs, std::optional<double> min_coeff,
                     FlopLedger& ledger, FlopCategory cat, std::size_t* kept_out) {
  if (m.rows() != coeffs.size()) {
    throw DimensionError("weighted_row_sum: rows " + std::to_string(m.rows()) + " != coeffs " +
                         std::to_string(coeffs.size()));
  }
  Vec out(m.cols());
  std::uint64_t kept = 0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (min_coeff && coeffs[r] < *min_coeff) continue;
    ++kept;
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += coeffs[r] * row[c];
  }
  if (kept > 0) ledger.add(cat, (2 * kept - 1) * static_cast<std::uint64_t>(m.cols()));
  if (kept_out) *kept_out = static_cast<std::size_t>(kept);
  return out;
}

std::size_t argmax(const Vec& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace hopgate
