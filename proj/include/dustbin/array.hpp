#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dustbin/errors.hpp"

namespace dustbin {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major array with shape metadata. Rank 0 (empty shape) holds a
/// single scalar.
template <typename Scalar>
class BasicArray {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  BasicArray() : data_(Vector::Zero(1)) {}

  explicit BasicArray(Shape shape) : shape_(std::move(shape)) {
    check_extents();
    data_ = Vector::Zero(static_cast<Eigen::Index>(shape_size(shape_)));
  }

  BasicArray(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (static_cast<std::size_t>(data_.size()) != shape_size(shape_)) {
      throw DimensionError("array data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  BasicArray(Shape shape, std::initializer_list<Scalar> values)
      : BasicArray(std::move(shape), Vector::Map(values.begin(), static_cast<Eigen::Index>(values.size()))) {}

  static BasicArray scalar(Scalar v) {
    BasicArray a;
    a.data_(0) = v;
    return a;
  }

  static BasicArray vector(std::initializer_list<Scalar> values) {
    return BasicArray({values.size()}, values);
  }

  static BasicArray vector(const std::vector<Scalar>& values) {
    return BasicArray({values.size()}, Vector::Map(values.data(), static_cast<Eigen::Index>(values.size())));
  }

  static BasicArray filled(Shape shape, Scalar v) {
    BasicArray a(std::move(shape));
    a.data_.setConstant(v);
    return a;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return static_cast<std::size_t>(data_.size()); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  const Vector& values() const { return data_; }
  Vector& values() { return data_; }

  Scalar operator[](std::size_t i) const { return data_(static_cast<Eigen::Index>(i)); }
  Scalar& operator[](std::size_t i) { return data_(static_cast<Eigen::Index>(i)); }

  Scalar item() const {
    if (size() != 1) throw DimensionError("item() on array of shape " + shape_string(shape_));
    return data_(0);
  }

  /// Row-major matrix view of a rank-2 array.
  Eigen::Map<const RowMajorMatrix> matrix() const {
    require_rank(2);
    return {data_.data(), static_cast<Eigen::Index>(shape_[0]), static_cast<Eigen::Index>(shape_[1])};
  }
  Eigen::Map<RowMajorMatrix> matrix() {
    require_rank(2);
    return {data_.data(), static_cast<Eigen::Index>(shape_[0]), static_cast<Eigen::Index>(shape_[1])};
  }

  BasicArray reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return BasicArray(std::move(shape), data_);
  }

  bool operator==(const BasicArray& other) const {
    return shape_ == other.shape_ && data_.size() == other.data_.size() &&
           std::equal(data_.data(), data_.data() + data_.size(), other.data_.data());
  }

 private:
  void check_extents() const {
    for (auto e : shape_) {
      if (e == 0) throw DimensionError("array extents must be positive, got " + shape_string(shape_));
    }
  }
  void require_rank(std::size_t r) const {
    if (rank() != r) {
      throw DimensionError("expected rank-" + std::to_string(r) + " array, got " + shape_string(shape_));
    }
  }

  Shape shape_;
  Vector data_;
};

using Array = BasicArray<double>;

/// Axis-aligned box every coordinate of a sample lives in.
struct Box {
  double lo = 0.0;
  double hi = 1.0;

  double clamp(double v) const { return std::clamp(v, lo, hi); }
  bool contains(const Array& a) const {
    return (a.values().array() >= lo).all() && (a.values().array() <= hi).all();
  }
};

inline Array clamp(const Array& a, Box box) {
  Array out = a;
  out.values() = a.values().cwiseMax(box.lo).cwiseMin(box.hi);
  return out;
}

inline double linf_distance(const Array& a, const Array& b) {
  return a.size() == 0 ? 0.0 : (a.values() - b.values()).cwiseAbs().maxCoeff();
}

inline double l2_distance(const Array& a, const Array& b) { return (a.values() - b.values()).norm(); }

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(const Array& a) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < a.size(); ++i) {
    if (a[i] > a[best]) best = i;
  }
  return best;
}

/// sign(0) == 0.
inline Array sign(const Array& a) {
  Array out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > 0.0 ? 1.0 : (a[i] < 0.0 ? -1.0 : 0.0);
  return out;
}

}  // namespace dustbin
