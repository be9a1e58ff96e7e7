#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace prefopt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

// Error hierarchy. Everything thrown by the library derives from Error.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidValue : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct InvalidModel : Error {
  using Error::Error;
};
struct InsufficientPreferences : Error {
  using Error::Error;
};
struct ProtocolError : Error {
  using Error::Error;
};

/// Scaled-space distance below which two points are the same point.
inline constexpr double kDuplicateTolerance = 1e-9;

/// Axis-aligned box in natural (decision) units.
class Bounds {
 public:
  Bounds(Vec lower, Vec upper);

  Index dim() const { return lower_.size(); }
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }
  Vec width() const { return upper_ - lower_; }
  Vec midpoint() const { return 0.5 * (lower_ + upper_); }
  bool contains(const Vec& x, double slack = 0.0) const;

 private:
  Vec lower_;
  Vec upper_;
};

/// Maps x into [0,1]^n. Throws DomainError if x is outside the box.
Vec scale_to_unit(const Vec& x, const Bounds& b);
Vec scale_from_unit(const Vec& u, const Bounds& b);

/// Ordered set of sampled decision vectors, kept alongside their unit-cube
/// images. Appending a point within kDuplicateTolerance (scaled) of an
/// existing one is rejected.
class Dataset {
 public:
  explicit Dataset(Bounds bounds);

  const Bounds& bounds() const { return bounds_; }
  Index dim() const { return bounds_.dim(); }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  const Vec& point(std::size_t i) const { return points_.at(i); }
  const Vec& scaled(std::size_t i) const { return scaled_.at(i); }
  /// Scaled points stacked as rows (N x n).
  const Mat& scaled_matrix() const { return scaled_rows_; }

  /// Index of a stored point within kDuplicateTolerance of the scaled point,
  /// or -1.
  long find_scaled(const Vec& u) const;

  /// Appends a natural-unit point; returns its index.
  std::size_t append(const Vec& x);
  std::size_t append_scaled(const Vec& u);

 private:
  Bounds bounds_;
  std::vector<Vec> points_;
  std::vector<Vec> scaled_;
  Mat scaled_rows_;
};

/// One pairwise judgment: label = -1 when point i is preferred to j,
/// +1 when j is preferred to i, 0 when equivalent.
struct Preference {
  std::size_t i = 0;
  std::size_t j = 0;
  int label = 0;

  bool operator==(const Preference&) const = default;
};

class PreferenceSet {
 public:
  PreferenceSet() = default;

  /// Validates against a dataset of size n_points and appends.
  void add(const Preference& p, std::size_t n_points);

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const Preference& operator[](std::size_t h) const { return items_[h]; }
  const std::vector<Preference>& items() const { return items_; }

  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  /// Subset by position (order preserved). No validation beyond what add did.
  PreferenceSet subset(const std::vector<std::size_t>& positions) const;

  bool operator==(const PreferenceSet&) const = default;

 private:
  std::vector<Preference> items_;
};

/// -1 if fa is better (smaller) by more than tol, +1 if fb is, 0 otherwise.
int encode_preference(double fa, double fb, double tol = 0.0);

}  // namespace prefopt
