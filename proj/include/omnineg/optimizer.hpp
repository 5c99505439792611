#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "omnineg/numerics.hpp"

namespace omnineg {

struct AdamWOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

/// One tensor handed to an optimizer step.
template <typename Scalar>
struct ParamRef {
  std::string name;
  Matrix<Scalar>* value;
  const Matrix<Scalar>* grad;
  bool decay;
};

/// AdamW with decoupled weight decay: p <- p - lr*wd*p, then the bias-corrected
/// moment step. Moments are created lazily, only for tensors that are stepped.
template <typename Scalar>
class AdamW {
 public:
  struct Moments {
    Matrix<Scalar> first;
    Matrix<Scalar> second;
  };

  explicit AdamW(AdamWOptions options = {}) : options_(options) {}

  void step(const std::vector<ParamRef<Scalar>>& params) {
    ++step_;
    const double bias1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
    const double bias2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
    const auto b1 = static_cast<Scalar>(options_.beta1);
    const auto b2 = static_cast<Scalar>(options_.beta2);
    const auto lr = static_cast<Scalar>(options_.learning_rate);
    const auto eps = static_cast<Scalar>(options_.epsilon);
    for (const auto& p : params) {
      auto& value = *p.value;
      const auto& grad = *p.grad;
      if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "gradient shape differs for " + p.name);
      }
      auto [it, inserted] = moments_.try_emplace(p.name);
      if (inserted) {
        it->second.first = Matrix<Scalar>::Zero(value.rows(), value.cols());
        it->second.second = Matrix<Scalar>::Zero(value.rows(), value.cols());
      }
      auto& m = it->second;
      m.first = b1 * m.first + (Scalar(1) - b1) * grad;
      m.second = b2 * m.second + (Scalar(1) - b2) * grad.cwiseProduct(grad);
      if (p.decay && options_.weight_decay != 0.0) {
        value *= Scalar(1) - lr * static_cast<Scalar>(options_.weight_decay);
      }
      const auto m_hat = m.first.array() / static_cast<Scalar>(bias1);
      const auto v_hat = m.second.array() / static_cast<Scalar>(bias2);
      value.array() -= lr * m_hat / (v_hat.sqrt() + eps);
    }
  }

  std::uint64_t step_count() const noexcept { return step_; }
  const AdamWOptions& options() const noexcept { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  const std::map<std::string, Moments>& moments() const noexcept { return moments_; }

 private:
  AdamWOptions options_;
  std::uint64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace omnineg
