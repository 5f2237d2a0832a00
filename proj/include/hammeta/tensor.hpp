// Dense row-major matrices of 64-bit floats with copy-on-write storage,
// plus the numeric kernels the expression tape is built from.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "hammeta/common.hpp"

namespace hammeta::ad {

struct Shape {
  std::size_t rows{1};
  std::size_t cols{1};

  friend bool operator==(const Shape&, const Shape&) = default;
  std::size_t numel() const { return rows * cols; }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  std::string str() const {
    std::ostringstream os;
    os << rows << "x" << cols;
    return os.str();
  }
};

// Values are shared on copy; writers detach first. Tensors recorded on a
// tape are never mutated, so sharing makes tape inputs O(1).
class Tensor {
 public:
  Tensor() : Tensor(Shape{1, 1}) {}
  explicit Tensor(Shape s)
      : shape_(s), data_(std::make_shared<std::vector<double>>(s.numel(), 0.0)) {}
  Tensor(Shape s, std::vector<double> d)
      : shape_(s), data_(std::make_shared<std::vector<double>>(std::move(d))) {
    if (data_->size() != shape_.numel()) {
      throw ShapeError("tensor data length " + std::to_string(data_->size()) +
                       " does not match shape " + shape_.str());
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{1, 1}, {v}); }
  static Tensor zeros(std::size_t r, std::size_t c) { return Tensor(Shape{r, c}); }
  static Tensor full(std::size_t r, std::size_t c, double v) {
    return Tensor(Shape{r, c}, std::vector<double>(r * c, v));
  }
  static Tensor row(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor(Shape{1, n}, std::move(v));
  }
  static Tensor column(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor(Shape{n, 1}, std::move(v));
  }
  static Tensor identity(std::size_t n) {
    Tensor t(Shape{n, n});
    double* d = t.mutable_data();
    for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 1.0;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rows() const { return shape_.rows; }
  std::size_t cols() const { return shape_.cols; }
  std::size_t numel() const { return shape_.numel(); }

  double operator()(std::size_t r, std::size_t c) const {
    return (*data_)[r * shape_.cols + c];
  }
  double flat(std::size_t i) const { return (*data_)[i]; }
  // Value of a one-element tensor.
  double item() const {
    if (numel() != 1) {
      throw ShapeError("item() on tensor of shape " + shape_.str());
    }
    return (*data_)[0];
  }

  std::span<const double> data() const { return {data_->data(), data_->size()}; }
  double* mutable_data() {
    if (data_.use_count() > 1) {
      data_ = std::make_shared<std::vector<double>>(*data_);
    }
    return data_->data();
  }
  void set(std::size_t r, std::size_t c, double v) {
    mutable_data()[r * shape_.cols + c] = v;
  }
  void set_flat(std::size_t i, double v) { mutable_data()[i] = v; }

  bool shares_data(const Tensor& other) const { return data_ == other.data_; }

  bool all_finite() const {
    for (double v : *data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  using EigenMap =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  EigenMap map() const {
    return EigenMap(data_->data(), static_cast<Eigen::Index>(rows()),
                    static_cast<Eigen::Index>(cols()));
  }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
};

// ---------------------------------------------------------------------------
// Stable scalar kernels.

inline double softplus_scalar(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double sigmoid_scalar(double x) { return 0.5 * (1.0 + std::tanh(0.5 * x)); }

inline double mish_scalar(double x) { return x * std::tanh(softplus_scalar(x)); }

// log(cosh(x)) without overflowing cosh; exact rewrite
// |x| + log((1 + exp(-2|x|)) / 2).
inline double logcosh_scalar(double x) {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

// ---------------------------------------------------------------------------
// Elementwise / structural kernels. Shape violations throw ShapeError.

namespace detail {
inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() +
                     " vs " + b.shape().str());
  }
}

template <class F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  double* o = out.mutable_data();
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) o[i] = f(da[i], db[i]);
  return out;
}

template <class F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  double* o = out.mutable_data();
  auto da = a.data();
  for (std::size_t i = 0; i < da.size(); ++i) o[i] = f(da[i]);
  return out;
}
}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::zip(a, b, "add", [](double x, double y) { return x + y; });
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::zip(a, b, "sub", [](double x, double y) { return x - y; });
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::zip(a, b, "mul", [](double x, double y) { return x * y; });
}
inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::zip(a, b, "div", [](double x, double y) {
    if (y == 0.0) throw DomainError("div: zero denominator");
    return x / y;
  });
}
inline Tensor neg(const Tensor& a) {
  return detail::map(a, [](double x) { return -x; });
}

inline Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false,
                     bool trans_b = false) {
  const std::size_t ar = trans_a ? a.cols() : a.rows();
  const std::size_t ac = trans_a ? a.rows() : a.cols();
  const std::size_t br = trans_b ? b.cols() : b.rows();
  const std::size_t bc = trans_b ? b.rows() : b.cols();
  if (ac != br) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(ac) + " vs " +
                     std::to_string(br) + " (operands " + a.shape().str() + ", " +
                     b.shape().str() + ")");
  }
  Tensor out(Shape{ar, bc});
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
      out.mutable_data(), static_cast<Eigen::Index>(ar), static_cast<Eigen::Index>(bc));
  if (!trans_a && !trans_b) {
    m.noalias() = a.map() * b.map();
  } else if (trans_a && !trans_b) {
    m.noalias() = a.map().transpose() * b.map();
  } else if (!trans_a && trans_b) {
    m.noalias() = a.map() * b.map().transpose();
  } else {
    m.noalias() = a.map().transpose() * b.map().transpose();
  }
  return out;
}

inline Tensor reduce_sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::scalar(s);
}
inline Tensor reduce_mean(const Tensor& a) {
  return Tensor::scalar(reduce_sum(a).item() / static_cast<double>(a.numel()));
}

inline Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  std::size_t rows = parts[0].rows(), cols = parts[0].cols();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (axis == 0) {
      if (parts[i].cols() != cols)
        throw ShapeError("concat axis 0: column mismatch");
      rows += parts[i].rows();
    } else {
      if (parts[i].rows() != rows)
        throw ShapeError("concat axis 1: row mismatch");
      cols += parts[i].cols();
    }
  }
  if (axis == 0) cols = parts[0].cols();
  Tensor out(Shape{rows, cols});
  double* o = out.mutable_data();
  if (axis == 0) {
    std::size_t off = 0;
    for (const Tensor& p : parts) {
      std::copy(p.data().begin(), p.data().end(), o + off);
      off += p.numel();
    }
  } else {
    std::size_t col_off = 0;
    for (const Tensor& p : parts) {
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy(p.data().begin() + static_cast<std::ptrdiff_t>(r * p.cols()),
                  p.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * p.cols()),
                  o + r * cols + col_off);
      }
      col_off += p.cols();
    }
  }
  return out;
}

// Rectangle [r0, r1) x [c0, c1).
inline Tensor slice(const Tensor& a, std::size_t r0, std::size_t r1, std::size_t c0,
                    std::size_t c1) {
  if (r1 > a.rows() || c1 > a.cols() || r0 >= r1 || c0 >= c1) {
    throw ShapeError("slice: bounds [" + std::to_string(r0) + "," + std::to_string(r1) +
                     ")x[" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") invalid for " + a.shape().str());
  }
  Tensor out(Shape{r1 - r0, c1 - c0});
  double* o = out.mutable_data();
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) {
      *o++ = a(r, c);
    }
  }
  return out;
}

// Source must be 1x1 (fills everywhere) or 1xC (repeats the row).
inline Tensor broadcast_to(const Tensor& a, Shape target) {
  if (a.shape() == target) return a;
  if (a.shape().is_scalar()) {
    return Tensor::full(target.rows, target.cols, a.item());
  }
  if (a.rows() == 1 && a.cols() == target.cols) {
    Tensor out(target);
    double* o = out.mutable_data();
    for (std::size_t r = 0; r < target.rows; ++r) {
      std::copy(a.data().begin(), a.data().end(), o + r * target.cols);
    }
    return out;
  }
  throw ShapeError("broadcast: cannot broadcast " + a.shape().str() + " to " +
                   target.str());
}

}  // namespace hammeta::ad
