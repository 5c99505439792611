#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>

#include "omnineg/errors.hpp"

namespace omnineg {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXr = Matrix<double>;
using VectorXr = Vector<double>;

inline constexpr double kUnitNormTolerance = 1e-6;
inline constexpr double kZeroNormThreshold = 1e-12;

/// Dot product accumulated in ascending index order. Every similarity in the
/// library goes through this so batched and elementwise routes agree bit for bit.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar dot_ascending(const Eigen::MatrixBase<DerivedA>& a,
                                        const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "dot of sizes " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  Scalar acc = 0;
  for (Eigen::Index d = 0; d < a.size(); ++d) acc += a(d) * b(d);
  return acc;
}

/// Real vector with Euclidean norm 1 (within kUnitNormTolerance), D >= 2.
template <typename Scalar>
class UnitVector {
 public:
  explicit UnitVector(Vector<Scalar> values) : values_(std::move(values)) {
    if (values_.size() < 2) {
      throw Error(ErrorCode::InvalidArgument, "unit vector needs dimension >= 2");
    }
    const double norm = static_cast<double>(values_.norm());
    if (std::abs(norm - 1.0) > kUnitNormTolerance) {
      throw Error(ErrorCode::InvalidArgument, "vector norm " + std::to_string(norm) + " is not 1");
    }
  }

  const Vector<Scalar>& values() const noexcept { return values_; }
  Eigen::Index dim() const noexcept { return values_.size(); }
  Scalar operator[](Eigen::Index i) const { return values_(i); }

 private:
  Vector<Scalar> values_;
};

/// B x D matrix whose rows are unit vectors.
template <typename Scalar>
class EmbeddingBatch {
 public:
  explicit EmbeddingBatch(Matrix<Scalar> rows) : rows_(std::move(rows)) {
    if (rows_.rows() < 1) throw Error(ErrorCode::EmptyBatch, "embedding batch has no rows");
    if (rows_.cols() < 2) throw Error(ErrorCode::InvalidArgument, "embedding dimension must be >= 2");
    for (Eigen::Index i = 0; i < rows_.rows(); ++i) {
      const double norm = static_cast<double>(rows_.row(i).norm());
      if (std::abs(norm - 1.0) > kUnitNormTolerance) {
        throw Error(ErrorCode::InvalidArgument,
                    "row " + std::to_string(i) + " has norm " + std::to_string(norm));
      }
    }
  }

  /// Skips the unit-norm check. Derivative probes perturb coordinates off the
  /// sphere and still need to evaluate the losses.
  static EmbeddingBatch unchecked(Matrix<Scalar> rows) {
    EmbeddingBatch batch;
    batch.rows_ = std::move(rows);
    return batch;
  }

  const Matrix<Scalar>& matrix() const noexcept { return rows_; }
  Eigen::Index size() const noexcept { return rows_.rows(); }
  Eigen::Index dim() const noexcept { return rows_.cols(); }

 private:
  EmbeddingBatch() = default;
  Matrix<Scalar> rows_;
};

/// Learnable temperature stored as its natural log. Initialised to CLIP's 1/0.07.
template <typename Scalar>
struct Temperature {
  Scalar log_value = static_cast<Scalar>(std::log(1.0 / 0.07));
  bool learnable = true;
  Scalar max_value = 100;

  static Temperature fixed(Scalar tau) { return {static_cast<Scalar>(std::log(tau)), false, 100}; }
  static Temperature learned(Scalar tau) { return {static_cast<Scalar>(std::log(tau)), true, 100}; }

  Scalar value() const { return std::exp(log_value); }

  void clamp() {
    const Scalar ceiling = std::log(max_value);
    if (log_value > ceiling) log_value = ceiling;
  }
};

/// Ordered map from parameter identifier to tensor. Used both for parameter
/// sets handed to the derivative oracle and for the gradients that come back.
template <typename Scalar>
class TensorMap {
 public:
  using Storage = std::map<std::string, Matrix<Scalar>>;

  void set(const std::string& name, Matrix<Scalar> value) { entries_[name] = std::move(value); }

  /// Adds into an existing entry or inserts a copy.
  template <typename Derived>
  void accumulate(const std::string& name, const Eigen::MatrixBase<Derived>& value) {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
      entries_.emplace(name, value);
    } else {
      if (it->second.rows() != value.rows() || it->second.cols() != value.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "gradient shape mismatch for " + name);
      }
      it->second += value;
    }
  }

  void accumulate(const TensorMap& other, Scalar scale = 1) {
    for (const auto& [name, value] : other.entries_) accumulate(name, value * scale);
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const Matrix<Scalar>& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error(ErrorCode::InvalidArgument, "no tensor named " + name);
    return it->second;
  }
  Matrix<Scalar>& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error(ErrorCode::InvalidArgument, "no tensor named " + name);
    return it->second;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

 private:
  Storage entries_;
};

template <typename Scalar>
using GradientSet = TensorMap<Scalar>;
template <typename Scalar>
using ParameterSet = TensorMap<Scalar>;

template <typename Derived>
UnitVector<typename Derived::Scalar> normalize(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar norm = v.norm();
  if (!(static_cast<double>(norm) > kZeroNormThreshold)) {
    throw Error(ErrorCode::ZeroVector, "cannot normalize a vector of norm " + std::to_string(norm));
  }
  return UnitVector<Scalar>(Vector<Scalar>(v / norm));
}

template <typename Scalar>
Scalar similarity(const UnitVector<Scalar>& x, const UnitVector<Scalar>& y,
                  const Temperature<Scalar>& tau) {
  return tau.value() * dot_ascending(x.values(), y.values());
}

/// Entry (i, j) is tau * <a_i, c_j>, computed exactly as `similarity` does.
template <typename Scalar>
Matrix<Scalar> similarity_matrix(const Matrix<Scalar>& a, const Matrix<Scalar>& c, Scalar tau) {
  if (a.cols() != c.cols()) {
    throw Error(ErrorCode::DimensionMismatch,
                "similarity between D=" + std::to_string(a.cols()) + " and D=" + std::to_string(c.cols()));
  }
  Matrix<Scalar> out(a.rows(), c.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.rows(); ++j) out(i, j) = tau * dot_ascending(a.row(i), c.row(j));
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> similarity_matrix(const EmbeddingBatch<Scalar>& a, const EmbeddingBatch<Scalar>& c,
                                 const Temperature<Scalar>& tau) {
  return similarity_matrix(a.matrix(), c.matrix(), tau.value());
}

/// Central differences (f(p + h) - f(p - h)) / 2h for every scalar component.
template <typename Scalar, typename Fn>
GradientSet<Scalar> finite_diff_gradient(Fn&& f, const ParameterSet<Scalar>& params, Scalar step) {
  if (!(step > 0)) throw Error(ErrorCode::InvalidArgument, "finite-difference step must be > 0");
  ParameterSet<Scalar> probe = params;
  GradientSet<Scalar> grads;
  auto eval = [&]() {
    const Scalar value = f(static_cast<const ParameterSet<Scalar>&>(probe));
    if (!std::isfinite(static_cast<double>(value))) {
      throw Error(ErrorCode::NonFiniteValue, "function value is not finite during probe");
    }
    return value;
  };
  for (const auto& [name, value] : params) {
    Matrix<Scalar> grad(value.rows(), value.cols());
    Matrix<Scalar>& slot = probe.at(name);
    for (Eigen::Index k = 0; k < value.size(); ++k) {
      const Scalar original = slot.data()[k];
      slot.data()[k] = original + step;
      const Scalar plus = eval();
      slot.data()[k] = original - step;
      const Scalar minus = eval();
      slot.data()[k] = original;
      grad.data()[k] = (plus - minus) / (2 * step);
    }
    grads.set(name, std::move(grad));
  }
  return grads;
}

/// Relative error between two gradient sets, tensor by tensor:
/// max_k |a_k - b_k| / max(max_k |a_k|, max_k |b_k|, floor). Returns the worst tensor.
/// Both sets must hold the same names and shapes.
template <typename Scalar>
double max_relative_error(const GradientSet<Scalar>& a, const GradientSet<Scalar>& b,
                          double floor = 1e-8) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch, "gradient sets hold different tensors");
  }
  double worst = 0;
  for (const auto& [name, ga] : a) {
    const auto& gb = b.at(name);
    if (ga.rows() != gb.rows() || ga.cols() != gb.cols()) {
      throw Error(ErrorCode::DimensionMismatch, "gradient shape mismatch for " + name);
    }
    const double diff = static_cast<double>((ga - gb).cwiseAbs().maxCoeff());
    const double scale = std::max({static_cast<double>(ga.cwiseAbs().maxCoeff()),
                                   static_cast<double>(gb.cwiseAbs().maxCoeff()), floor});
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

}  // namespace omnineg
