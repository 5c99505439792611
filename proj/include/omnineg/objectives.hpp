#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "omnineg/numerics.hpp"

namespace omnineg {

/// Loss value with gradients for every input embedding batch (keyed by the
/// stream name) and for "log_tau" whenever the temperature is learnable.
template <typename Scalar>
struct LossOutput {
  Scalar value = 0;
  GradientSet<Scalar> grads;
};

/// Hinge threshold for the caption contrastive term, 0 <= m <= 1.
class Margin {
 public:
  explicit Margin(double m) : m_(m) {
    if (!(m >= 0.0 && m <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "margin must lie in [0, 1], got " + std::to_string(m));
    }
  }
  double value() const noexcept { return m_; }

 private:
  double m_;
};

template <typename Scalar>
struct TripletBatchEmb {
  EmbeddingBatch<Scalar> images;
  EmbeddingBatch<Scalar> captions;
  EmbeddingBatch<Scalar> negated;

  Eigen::Index size() const noexcept { return images.size(); }

  void validate() const {
    if (images.size() != captions.size() || images.size() != negated.size()) {
      throw Error(ErrorCode::DimensionMismatch, "triplet batch streams differ in size");
    }
    if (images.dim() != captions.dim() || images.dim() != negated.dim()) {
      throw Error(ErrorCode::DimensionMismatch, "triplet batch streams differ in dimension");
    }
    if (images.size() < 1) throw Error(ErrorCode::EmptyBatch, "triplet batch is empty");
  }
};

/// Encoded presence batch: images, captions, presence-negated captions.
template <typename Scalar>
using PresenceBatchEmb = TripletBatchEmb<Scalar>;
/// Encoded absence batch: images, captions, absence-negated captions.
template <typename Scalar>
using AbsenceBatchEmb = TripletBatchEmb<Scalar>;

namespace detail {

template <typename Scalar>
void check_pair(const EmbeddingBatch<Scalar>& a, const EmbeddingBatch<Scalar>& b) {
  if (a.size() < 1 || b.size() < 1) throw Error(ErrorCode::EmptyBatch, "batch is empty");
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "batches differ in size");
  if (a.dim() != b.dim()) throw Error(ErrorCode::DimensionMismatch, "batches differ in dimension");
}

/// Sum over rows of -log softmax(logits_i)[target(i)], scaled by `weight`.
/// Adds weight * (softmax - onehot) into `dlogits`.
template <typename Scalar, typename TargetFn>
Scalar softmax_cross_entropy(const Matrix<Scalar>& logits, TargetFn target, Scalar weight,
                             Matrix<Scalar>& dlogits) {
  Scalar total = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar row_max = logits.row(i).maxCoeff();
    Scalar denom = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) denom += std::exp(logits(i, j) - row_max);
    const Eigen::Index t = target(i);
    total += row_max + std::log(denom) - logits(i, t);
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      dlogits(i, j) += weight * std::exp(logits(i, j) - row_max) / denom;
    }
    dlogits(i, t) -= weight;
  }
  return weight * total;
}

template <typename Scalar>
void add_log_tau(LossOutput<Scalar>& out, const Temperature<Scalar>& tau, Scalar dlog_tau) {
  if (tau.learnable) out.grads.accumulate("log_tau", Matrix<Scalar>::Constant(1, 1, dlog_tau));
}

/// Symmetric InfoNCE between two aligned streams; gradients land under the given names.
template <typename Scalar>
LossOutput<Scalar> symmetric_info_nce(const EmbeddingBatch<Scalar>& a, const EmbeddingBatch<Scalar>& c,
                                      const Temperature<Scalar>& tau, const std::string& a_name,
                                      const std::string& c_name) {
  check_pair(a, c);
  const Eigen::Index n = a.size();
  const Scalar t = tau.value();
  const Matrix<Scalar> logits = similarity_matrix(a.matrix(), c.matrix(), t);
  const Matrix<Scalar> logits_t = similarity_matrix(c.matrix(), a.matrix(), t);
  const Scalar weight = Scalar(1) / Scalar(2 * n);
  Matrix<Scalar> d_rows = Matrix<Scalar>::Zero(n, n);
  Matrix<Scalar> d_cols = Matrix<Scalar>::Zero(n, n);
  const auto diagonal = [](Eigen::Index i) { return i; };
  const Scalar l_img = softmax_cross_entropy(logits, diagonal, weight, d_rows);
  const Scalar l_txt = softmax_cross_entropy(logits_t, diagonal, weight, d_cols);
  const Matrix<Scalar> dlogits = d_rows + d_cols.transpose();

  LossOutput<Scalar> out;
  out.value = l_img + l_txt;
  out.grads.set(a_name, t * dlogits * c.matrix());
  out.grads.set(c_name, t * dlogits.transpose() * a.matrix());
  add_log_tau(out, tau, dlogits.cwiseProduct(logits).sum());
  return out;
}

template <typename Scalar>
LossOutput<Scalar> mean_of(std::initializer_list<const LossOutput<Scalar>*> terms) {
  LossOutput<Scalar> out;
  const Scalar scale = Scalar(1) / Scalar(terms.size());
  for (const auto* term : terms) {
    out.value += term->value;
    out.grads.accumulate(term->grads, scale);
  }
  out.value *= scale;
  return out;
}

}  // namespace detail

/// Symmetric CLIP objective: (image->caption + caption->image) / 2.
template <typename Scalar>
LossOutput<Scalar> info_nce(const EmbeddingBatch<Scalar>& images, const EmbeddingBatch<Scalar>& captions,
                            const Temperature<Scalar>& tau) {
  return detail::symmetric_info_nce(images, captions, tau, "images", "captions");
}

/// Image against the union of all captions and all negated captions (2B candidates).
template <typename Scalar>
LossOutput<Scalar> loss_p1(const PresenceBatchEmb<Scalar>& pb, const Temperature<Scalar>& tau) {
  pb.validate();
  const Eigen::Index n = pb.size();
  const Scalar t = tau.value();
  Matrix<Scalar> candidates(2 * n, pb.images.dim());
  candidates << pb.captions.matrix(), pb.negated.matrix();
  const Matrix<Scalar> logits = similarity_matrix(pb.images.matrix(), candidates, t);
  Matrix<Scalar> dlogits = Matrix<Scalar>::Zero(n, 2 * n);
  LossOutput<Scalar> out;
  out.value = detail::softmax_cross_entropy(
      logits, [](Eigen::Index i) { return i; }, Scalar(1) / Scalar(n), dlogits);
  const Matrix<Scalar> dcand = t * dlogits.transpose() * pb.images.matrix();
  out.grads.set("images", t * dlogits * candidates);
  out.grads.set("captions", dcand.topRows(n));
  out.grads.set("negated", dcand.bottomRows(n));
  detail::add_log_tau(out, tau, dlogits.cwiseProduct(logits).sum());
  return out;
}

/// Caption to image over the B images; negated captions take no part.
template <typename Scalar>
LossOutput<Scalar> loss_p2(const PresenceBatchEmb<Scalar>& pb, const Temperature<Scalar>& tau) {
  pb.validate();
  const Eigen::Index n = pb.size();
  const Scalar t = tau.value();
  const Matrix<Scalar> logits = similarity_matrix(pb.captions.matrix(), pb.images.matrix(), t);
  Matrix<Scalar> dlogits = Matrix<Scalar>::Zero(n, n);
  LossOutput<Scalar> out;
  out.value = detail::softmax_cross_entropy(
      logits, [](Eigen::Index i) { return i; }, Scalar(1) / Scalar(n), dlogits);
  out.grads.set("images", t * dlogits.transpose() * pb.captions.matrix());
  out.grads.set("captions", t * dlogits * pb.images.matrix());
  out.grads.set("negated", Matrix<Scalar>::Zero(n, pb.negated.dim()));
  detail::add_log_tau(out, tau, dlogits.cwiseProduct(logits).sum());
  return out;
}

/// Per-sample two-way choice between the caption and its own negation.
template <typename Scalar>
LossOutput<Scalar> loss_p3(const PresenceBatchEmb<Scalar>& pb, const Temperature<Scalar>& tau) {
  pb.validate();
  const Eigen::Index n = pb.size();
  const Scalar t = tau.value();
  const auto& img = pb.images.matrix();
  const auto& cap = pb.captions.matrix();
  const auto& neg = pb.negated.matrix();
  Matrix<Scalar> logits(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    logits(i, 0) = t * dot_ascending(img.row(i), cap.row(i));
    logits(i, 1) = t * dot_ascending(img.row(i), neg.row(i));
  }
  Matrix<Scalar> dlogits = Matrix<Scalar>::Zero(n, 2);
  LossOutput<Scalar> out;
  out.value = detail::softmax_cross_entropy(
      logits, [](Eigen::Index) { return Eigen::Index{0}; }, Scalar(1) / Scalar(n), dlogits);
  Matrix<Scalar> d_img(n, img.cols()), d_cap(n, img.cols()), d_neg(n, img.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    d_img.row(i) = t * (dlogits(i, 0) * cap.row(i) + dlogits(i, 1) * neg.row(i));
    d_cap.row(i) = t * dlogits(i, 0) * img.row(i);
    d_neg.row(i) = t * dlogits(i, 1) * img.row(i);
  }
  out.grads.set("images", std::move(d_img));
  out.grads.set("captions", std::move(d_cap));
  out.grads.set("negated", std::move(d_neg));
  detail::add_log_tau(out, tau, dlogits.cwiseProduct(logits).sum());
  return out;
}

template <typename Scalar>
LossOutput<Scalar> presence_objective(const PresenceBatchEmb<Scalar>& pb, const Temperature<Scalar>& tau) {
  const auto p1 = loss_p1(pb, tau);
  const auto p2 = loss_p2(pb, tau);
  const auto p3 = loss_p3(pb, tau);
  return detail::mean_of<Scalar>({&p1, &p2, &p3});
}

/// Symmetric InfoNCE between images and their absence-negated captions.
template <typename Scalar>
LossOutput<Scalar> loss_a1(const AbsenceBatchEmb<Scalar>& ab, const Temperature<Scalar>& tau) {
  ab.validate();
  auto out = detail::symmetric_info_nce(ab.images, ab.negated, tau, "images", "negated");
  out.grads.set("captions", Matrix<Scalar>::Zero(ab.size(), ab.captions.dim()));
  return out;
}

/// Symmetric InfoNCE between images and their original captions.
template <typename Scalar>
LossOutput<Scalar> loss_a2(const AbsenceBatchEmb<Scalar>& ab, const Temperature<Scalar>& tau) {
  ab.validate();
  auto out = detail::symmetric_info_nce(ab.images, ab.captions, tau, "images", "captions");
  out.grads.set("negated", Matrix<Scalar>::Zero(ab.size(), ab.negated.dim()));
  return out;
}

/// Hinge on caption / negated-caption similarity: mean_i max(0, <C_i, C'_i> + m).
/// Uses the raw cosine unless `scale` is given, in which case the similarity is
/// temperature scaled and log_tau receives a gradient. Subgradient at the kink is 0.
template <typename Scalar>
LossOutput<Scalar> loss_a3(const AbsenceBatchEmb<Scalar>& ab, const Margin& margin,
                           const std::optional<Temperature<Scalar>>& scale = std::nullopt) {
  ab.validate();
  const Eigen::Index n = ab.size();
  const auto& cap = ab.captions.matrix();
  const auto& neg = ab.negated.matrix();
  const Scalar t = scale ? scale->value() : Scalar(1);
  const Scalar m = static_cast<Scalar>(margin.value());
  const Scalar weight = Scalar(1) / Scalar(n);
  LossOutput<Scalar> out;
  Matrix<Scalar> d_cap = Matrix<Scalar>::Zero(n, cap.cols());
  Matrix<Scalar> d_neg = Matrix<Scalar>::Zero(n, cap.cols());
  Scalar dlog_tau = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar s = t * dot_ascending(cap.row(i), neg.row(i));
    const Scalar hinge = s + m;
    if (hinge > 0) {
      out.value += hinge;
      d_cap.row(i) = weight * t * neg.row(i);
      d_neg.row(i) = weight * t * cap.row(i);
      dlog_tau += weight * s;
    }
  }
  out.value *= weight;
  out.grads.set("images", Matrix<Scalar>::Zero(n, ab.images.dim()));
  out.grads.set("captions", std::move(d_cap));
  out.grads.set("negated", std::move(d_neg));
  if (scale) detail::add_log_tau(out, *scale, dlog_tau);
  return out;
}

template <typename Scalar>
LossOutput<Scalar> absence_objective(const AbsenceBatchEmb<Scalar>& ab, const Temperature<Scalar>& tau,
                                     const Margin& margin, bool a3_use_temperature = false) {
  const auto a1 = loss_a1(ab, tau);
  const auto a2 = loss_a2(ab, tau);
  auto a3 = a3_use_temperature ? loss_a3(ab, margin, std::optional<Temperature<Scalar>>(tau))
                               : loss_a3(ab, margin);
  if (tau.learnable && !a3.grads.contains("log_tau")) a3.grads.set("log_tau", Matrix<Scalar>::Zero(1, 1));
  return detail::mean_of<Scalar>({&a1, &a2, &a3});
}

/// Prefixes every embedding gradient with `prefix` + "." and leaves log_tau as is.
template <typename Scalar>
GradientSet<Scalar> prefixed(const GradientSet<Scalar>& grads, const std::string& prefix) {
  GradientSet<Scalar> out;
  for (const auto& [name, value] : grads) {
    out.set(name == "log_tau" ? name : prefix + "." + name, value);
  }
  return out;
}

/// L_p + L_a. Gradients are keyed "presence.*", "absence.*" and a shared "log_tau".
template <typename Scalar>
LossOutput<Scalar> total_loss(const PresenceBatchEmb<Scalar>& pb, const AbsenceBatchEmb<Scalar>& ab,
                              const Temperature<Scalar>& tau, const Margin& margin,
                              bool a3_use_temperature = false) {
  const auto lp = presence_objective(pb, tau);
  const auto la = absence_objective(ab, tau, margin, a3_use_temperature);
  LossOutput<Scalar> out;
  out.value = lp.value + la.value;
  out.grads.accumulate(prefixed(lp.grads, "presence"));
  out.grads.accumulate(prefixed(la.grads, "absence"));
  return out;
}

}  // namespace omnineg
