#include "prefopt/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

namespace prefopt {

Bounds::Bounds(Vec lower, Vec upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() < 1) throw ConfigError("bounds: dimension must be at least 1");
  if (lower_.size() != upper_.size()) throw ConfigError("bounds: lower/upper size mismatch");
  for (Index i = 0; i < lower_.size(); ++i) {
    if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]) || !(lower_[i] < upper_[i]))
      throw ConfigError("bounds: need finite lower < upper in component " + std::to_string(i));
  }
}

bool Bounds::contains(const Vec& x, double slack) const {
  if (x.size() != dim()) return false;
  for (Index i = 0; i < dim(); ++i) {
    const double pad = slack * (upper_[i] - lower_[i]);
    if (!(x[i] >= lower_[i] - pad && x[i] <= upper_[i] + pad)) return false;
  }
  return true;
}

Vec scale_to_unit(const Vec& x, const Bounds& b) {
  if (x.size() != b.dim()) throw DomainError("scale_to_unit: dimension mismatch");
  // A few ulps of slack so that scale_from_unit output always maps back.
  if (!b.contains(x, 1e-12)) throw DomainError("scale_to_unit: point outside bounds");
  Vec u = ((x - b.lower()).array() / b.width().array()).matrix();
  return u.cwiseMax(0.0).cwiseMin(1.0);
}

Vec scale_from_unit(const Vec& u, const Bounds& b) {
  if (u.size() != b.dim()) throw DomainError("scale_from_unit: dimension mismatch");
  Vec x = b.lower() + (u.array() * b.width().array()).matrix();
  return x.cwiseMax(b.lower()).cwiseMin(b.upper());
}

Dataset::Dataset(Bounds bounds) : bounds_(std::move(bounds)), scaled_rows_(0, bounds_.dim()) {}

long Dataset::find_scaled(const Vec& u) const {
  for (std::size_t k = 0; k < scaled_.size(); ++k)
    if ((scaled_[k] - u).norm() <= kDuplicateTolerance) return static_cast<long>(k);
  return -1;
}

std::size_t Dataset::append(const Vec& x) {
  Vec u = scale_to_unit(x, bounds_);
  if (find_scaled(u) >= 0) throw DomainError("dataset: duplicate point rejected");
  points_.push_back(x);
  scaled_.push_back(u);
  scaled_rows_.conservativeResize(static_cast<Index>(scaled_.size()), dim());
  scaled_rows_.row(scaled_rows_.rows() - 1) = u.transpose();
  return points_.size() - 1;
}

std::size_t Dataset::append_scaled(const Vec& u) {
  if (u.size() != dim()) throw DomainError("dataset: dimension mismatch");
  if ((u.array() < 0.0).any() || (u.array() > 1.0).any())
    throw DomainError("dataset: scaled point outside unit cube");
  return append(scale_from_unit(u, bounds_));
}

void PreferenceSet::add(const Preference& p, std::size_t n_points) {
  if (p.i == p.j) throw DomainError("preference: i and j must differ");
  if (p.i >= n_points || p.j >= n_points) throw DomainError("preference: index out of range");
  if (p.label < -1 || p.label > 1) throw InvalidValue("preference: label must be -1, 0 or +1");
  for (const auto& q : items_) {
    if ((q.i == p.i && q.j == p.j) || (q.i == p.j && q.j == p.i))
      throw DomainError("preference: duplicate pair");
  }
  items_.push_back(p);
}

PreferenceSet PreferenceSet::subset(const std::vector<std::size_t>& positions) const {
  PreferenceSet out;
  out.items_.reserve(positions.size());
  for (auto h : positions) out.items_.push_back(items_.at(h));
  return out;
}

int encode_preference(double fa, double fb, double tol) {
  if (!std::isfinite(fa) || !std::isfinite(fb) || !std::isfinite(tol))
    throw InvalidValue("encode_preference: non-finite input");
  if (tol < 0) throw InvalidValue("encode_preference: negative tolerance");
  if (fa < fb - tol) return -1;
  if (fb < fa - tol) return 1;
  return 0;
}

}  // namespace prefopt
