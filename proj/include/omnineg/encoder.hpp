#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <unsupported/Eigen/SpecialFunctions>

#include "omnineg/numerics.hpp"

namespace omnineg {

struct EncoderConfig {
  std::size_t n_layers = 12;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ff = 128;
  std::size_t d_embed = 32;
  std::size_t vocab_size = 64;
  std::size_t max_len = 32;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1 || d_embed < 2 || vocab_size < 1 ||
        max_len < 1) {
      throw Error(ErrorCode::InvalidConfig, "encoder counts must be >= 1 (d_embed >= 2)");
    }
    if (d_model % n_heads != 0) {
      throw Error(ErrorCode::InvalidConfig, "d_model " + std::to_string(d_model) +
                                                " is not divisible by n_heads " + std::to_string(n_heads));
    }
  }
};

template <typename Scalar>
struct Tensor {
  std::string name;
  Matrix<Scalar> value;
  bool trainable = true;
  /// Weight matrices take decoupled weight decay; biases, norms and embeddings do not.
  bool decay = false;
};

/// Per-layer tensor slots, in storage order.
enum class LayerSlot : std::size_t {
  Ln1Weight, Ln1Bias, Wq, Bq, Wk, Bk, Wv, Bv, Wo, Bo, Ln2Weight, Ln2Bias, W1, B1, W2, B2, Count
};

inline constexpr std::size_t kTensorsPerLayer = static_cast<std::size_t>(LayerSlot::Count);

/// Text-transformer weights. Storage order: token embedding, positional
/// embedding, layers 1..L (16 tensors each), final norm weight/bias, projection.
template <typename Scalar>
class EncoderParams {
 public:
  EncoderConfig config;
  std::vector<Tensor<Scalar>> tensors;

  static constexpr std::size_t kTokenEmbedding = 0;
  static constexpr std::size_t kPositionalEmbedding = 1;

  std::size_t layer_index(std::size_t layer, LayerSlot slot) const {
    return 2 + (layer - 1) * kTensorsPerLayer + static_cast<std::size_t>(slot);
  }
  std::size_t final_norm_weight_index() const { return 2 + config.n_layers * kTensorsPerLayer; }
  std::size_t final_norm_bias_index() const { return final_norm_weight_index() + 1; }
  std::size_t projection_index() const { return final_norm_weight_index() + 2; }

  const Matrix<Scalar>& at(std::size_t i) const { return tensors[i].value; }
  const Matrix<Scalar>& layer(std::size_t layer, LayerSlot slot) const {
    return tensors[layer_index(layer, slot)].value;
  }
  bool layer_trainable(std::size_t layer) const {
    for (std::size_t s = 0; s < kTensorsPerLayer; ++s) {
      if (tensors[layer_index(layer, static_cast<LayerSlot>(s))].trainable) return true;
    }
    return false;
  }

  std::size_t trainable_scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.trainable ? static_cast<std::size_t>(t.value.size()) : 0;
    return n;
  }

  ParameterSet<Scalar> trainable_set() const {
    ParameterSet<Scalar> out;
    for (const auto& t : tensors) {
      if (t.trainable) out.set(t.name, t.value);
    }
    return out;
  }

  /// Overwrites every tensor named in `values`.
  void assign(const ParameterSet<Scalar>& values) {
    for (auto& t : tensors) {
      if (values.contains(t.name)) t.value = values.at(t.name);
    }
  }
};

template <typename Scalar>
EncoderParams<Scalar> init_encoder(const EncoderConfig& config) {
  config.validate();
  const auto d = static_cast<Eigen::Index>(config.d_model);
  const auto f = static_cast<Eigen::Index>(config.d_ff);
  std::mt19937_64 rng(config.seed);
  auto normal = [&rng](Eigen::Index rows, Eigen::Index cols, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix<Scalar> m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<Scalar>(dist(rng));
    return m;
  };
  const double width_scale = 1.0 / std::sqrt(static_cast<double>(d));
  const double residual_scale = width_scale / std::sqrt(2.0 * static_cast<double>(config.n_layers));

  EncoderParams<Scalar> p;
  p.config = config;
  auto add = [&p](std::string name, Matrix<Scalar> value, bool decay) {
    p.tensors.push_back({std::move(name), std::move(value), true, decay});
  };
  add("token_embedding", normal(static_cast<Eigen::Index>(config.vocab_size), d, 1.0), false);
  add("positional_embedding", normal(static_cast<Eigen::Index>(config.max_len), d, 0.5), false);
  for (std::size_t l = 1; l <= config.n_layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    add(prefix + "ln1.weight", Matrix<Scalar>::Ones(1, d), false);
    add(prefix + "ln1.bias", Matrix<Scalar>::Zero(1, d), false);
    add(prefix + "attn.wq", normal(d, d, width_scale), true);
    add(prefix + "attn.bq", Matrix<Scalar>::Zero(1, d), false);
    add(prefix + "attn.wk", normal(d, d, width_scale), true);
    add(prefix + "attn.bk", Matrix<Scalar>::Zero(1, d), false);
    add(prefix + "attn.wv", normal(d, d, width_scale), true);
    add(prefix + "attn.bv", Matrix<Scalar>::Zero(1, d), false);
    add(prefix + "attn.wo", normal(d, d, residual_scale), true);
    add(prefix + "attn.bo", Matrix<Scalar>::Zero(1, d), false);
    add(prefix + "ln2.weight", Matrix<Scalar>::Ones(1, d), false);
    add(prefix + "ln2.bias", Matrix<Scalar>::Zero(1, d), false);
    add(prefix + "ff.w1", normal(d, f, width_scale), true);
    add(prefix + "ff.b1", Matrix<Scalar>::Zero(1, f), false);
    add(prefix + "ff.w2", normal(f, d, residual_scale * std::sqrt(double(d) / double(f))), true);
    add(prefix + "ff.b2", Matrix<Scalar>::Zero(1, d), false);
  }
  add("final_ln.weight", Matrix<Scalar>::Ones(1, d), false);
  add("final_ln.bias", Matrix<Scalar>::Zero(1, d), false);
  add("projection", normal(d, static_cast<Eigen::Index>(config.d_embed), width_scale), true);
  return p;
}

/// Layers 1..K and the projection trainable; everything else frozen.
template <typename Scalar>
EncoderParams<Scalar> set_freeze_front(EncoderParams<Scalar> params, std::size_t k) {
  if (k > params.config.n_layers) {
    throw Error(ErrorCode::KOutOfRange, "K=" + std::to_string(k) + " exceeds " +
                                            std::to_string(params.config.n_layers) + " layers");
  }
  for (auto& t : params.tensors) t.trainable = false;
  for (std::size_t l = 1; l <= k; ++l) {
    for (std::size_t s = 0; s < kTensorsPerLayer; ++s) {
      params.tensors[params.layer_index(l, static_cast<LayerSlot>(s))].trainable = true;
    }
  }
  params.tensors[params.projection_index()].trainable = true;
  return params;
}

/// Only layer k (1-based) and the projection trainable.
template <typename Scalar>
EncoderParams<Scalar> set_freeze_single(EncoderParams<Scalar> params, std::size_t k) {
  if (k < 1 || k > params.config.n_layers) {
    throw Error(ErrorCode::KOutOfRange, "layer " + std::to_string(k) + " outside 1.." +
                                            std::to_string(params.config.n_layers));
  }
  for (auto& t : params.tensors) t.trainable = false;
  for (std::size_t s = 0; s < kTensorsPerLayer; ++s) {
    params.tensors[params.layer_index(k, static_cast<LayerSlot>(s))].trainable = true;
  }
  params.tensors[params.projection_index()].trainable = true;
  return params;
}

template <typename Scalar>
EncoderParams<Scalar> set_all_trainable(EncoderParams<Scalar> params, bool trainable = true) {
  for (auto& t : params.tensors) t.trainable = trainable;
  return params;
}

namespace detail {

inline constexpr double kNormEpsilon = 1e-5;

template <typename Scalar>
struct NormCache {
  Matrix<Scalar> xhat;
  Vector<Scalar> rstd;
};

/// Row-wise layer norm; returns xhat * weight + bias.
template <typename Scalar>
Matrix<Scalar> layer_norm(const Matrix<Scalar>& x, const Matrix<Scalar>& weight, const Matrix<Scalar>& bias,
                          NormCache<Scalar>& cache) {
  const Eigen::Index n = x.rows();
  const auto d = static_cast<Scalar>(x.cols());
  cache.xhat.resize(n, x.cols());
  cache.rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar mean = x.row(i).sum() / d;
    const Scalar var = (x.row(i).array() - mean).square().sum() / d;
    cache.rstd(i) = Scalar(1) / std::sqrt(var + static_cast<Scalar>(kNormEpsilon));
    cache.xhat.row(i) = (x.row(i).array() - mean) * cache.rstd(i);
  }
  return (cache.xhat.array().rowwise() * weight.row(0).array()).rowwise() + bias.row(0).array();
}

/// Gradient of the input of `layer_norm`; weight/bias gradients are added when requested.
template <typename Scalar>
Matrix<Scalar> layer_norm_backward(const Matrix<Scalar>& dy, const Matrix<Scalar>& weight,
                                   const NormCache<Scalar>& cache, Matrix<Scalar>* dweight,
                                   Matrix<Scalar>* dbias) {
  if (dweight) *dweight += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  if (dbias) *dbias += dy.colwise().sum();
  const Matrix<Scalar> dxhat = (dy.array().rowwise() * weight.row(0).array()).matrix();
  const auto d = static_cast<Scalar>(dy.cols());
  Matrix<Scalar> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const Scalar mean_dxhat = dxhat.row(i).sum() / d;
    const Scalar mean_dxhat_xhat = dxhat.row(i).dot(cache.xhat.row(i)) / d;
    dx.row(i) = cache.rstd(i) *
                (dxhat.row(i).array() - mean_dxhat - cache.xhat.row(i).array() * mean_dxhat_xhat).matrix();
  }
  return dx;
}

/// Elementwise exact GELU, u * Phi(u).
template <typename Scalar>
Matrix<Scalar> gelu(const Matrix<Scalar>& u) {
  const auto x = u.array();
  return (Scalar(0.5) * x * (Scalar(1) + (x * Scalar(M_SQRT1_2)).erf())).matrix();
}

/// Elementwise GELU derivative, Phi(u) + u * phi(u).
template <typename Scalar>
Matrix<Scalar> gelu_grad(const Matrix<Scalar>& u) {
  const auto x = u.array();
  const Scalar inv_sqrt_2pi = Scalar(0.5 * M_2_SQRTPI * M_SQRT1_2);
  return (Scalar(0.5) * (Scalar(1) + (x * Scalar(M_SQRT1_2)).erf()) +
          x * inv_sqrt_2pi * (Scalar(-0.5) * x.square()).exp())
      .matrix();
}

template <typename Scalar>
Scalar gelu(Scalar u) {
  return Scalar(0.5) * u * (Scalar(1) + std::erf(u / std::sqrt(Scalar(2))));
}

template <typename Scalar>
Scalar gelu_grad(Scalar u) {
  const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(u / std::sqrt(Scalar(2))));
  const Scalar pdf = std::exp(Scalar(-0.5) * u * u) / std::sqrt(Scalar(2 * M_PI));
  return cdf + u * pdf;
}

}  // namespace detail


/// Activations of one batched forward pass. Token rows of all sequences are
/// stacked; sequence i owns rows [offsets[i], offsets[i + 1]).
template <typename Scalar>
struct LayerCache {
  Matrix<Scalar> input;
  detail::NormCache<Scalar> norm1;
  Matrix<Scalar> normed1, q, k, v;
  std::vector<Matrix<Scalar>> probs;  // attention map of (sequence, head) at seq * n_heads + head
  Matrix<Scalar> heads;               // concatenated head outputs
  detail::NormCache<Scalar> norm2;
  Matrix<Scalar> normed2, pre_act, act;
};

template <typename Scalar>
struct ForwardCache {
  std::vector<std::vector<int>> ids;
  std::vector<Eigen::Index> offsets;
  std::vector<LayerCache<Scalar>> layers;
  detail::NormCache<Scalar> final_norm;
  Matrix<Scalar> pooled;          // N x d, normed state of each last token
  Matrix<Scalar> projected;       // N x D, before normalization
  Vector<Scalar> projected_norm;  // N
  Matrix<Scalar> output;          // N x D, unit-norm rows

  std::size_t size() const noexcept { return ids.size(); }
};

template <typename Scalar>
void check_tokens(const EncoderParams<Scalar>& params, const std::vector<int>& ids) {
  if (ids.empty()) throw Error(ErrorCode::InvalidArgument, "empty token sequence");
  if (ids.size() > params.config.max_len) {
    throw Error(ErrorCode::SequenceTooLong, std::to_string(ids.size()) + " tokens exceed max_len " +
                                                std::to_string(params.config.max_len));
  }
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= params.config.vocab_size) {
      throw Error(ErrorCode::TokenOutOfRange, "token id " + std::to_string(id));
    }
  }
}

/// Embeds, runs the pre-norm transformer stack with full attention within
/// each sequence, takes the final-norm state of each last token, projects and
/// L2-normalizes. One output row per sequence.
template <typename Scalar>
ForwardCache<Scalar> forward_batch(const EncoderParams<Scalar>& params, const std::vector<std::vector<int>>& seqs) {
  if (seqs.empty()) throw Error(ErrorCode::EmptyBatch, "no sequences to encode");
  for (const auto& ids : seqs) check_tokens(params, ids);
  const auto& cfg = params.config;
  const auto d = static_cast<Eigen::Index>(cfg.d_model);
  const auto heads = static_cast<Eigen::Index>(cfg.n_heads);
  const Eigen::Index dh = d / heads;
  const Scalar attn_scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  const auto n_seq = static_cast<Eigen::Index>(seqs.size());

  ForwardCache<Scalar> cache;
  cache.ids = seqs;
  cache.offsets.assign(1, 0);
  for (const auto& ids : seqs) cache.offsets.push_back(cache.offsets.back() + static_cast<Eigen::Index>(ids.size()));
  const Eigen::Index rows = cache.offsets.back();
  cache.layers.resize(cfg.n_layers);

  Matrix<Scalar> x(rows, d);
  for (Eigen::Index s = 0; s < n_seq; ++s) {
    const auto& ids = seqs[static_cast<std::size_t>(s)];
    for (std::size_t i = 0; i < ids.size(); ++i) {
      x.row(cache.offsets[s] + static_cast<Eigen::Index>(i)) =
          params.at(EncoderParams<Scalar>::kTokenEmbedding).row(ids[i]) +
          params.at(EncoderParams<Scalar>::kPositionalEmbedding).row(static_cast<Eigen::Index>(i));
    }
  }
  for (std::size_t l = 1; l <= cfg.n_layers; ++l) {
    auto& c = cache.layers[l - 1];
    auto w = [&](LayerSlot s) -> const Matrix<Scalar>& { return params.layer(l, s); };
    c.input = x;
    c.normed1 = detail::layer_norm(x, w(LayerSlot::Ln1Weight), w(LayerSlot::Ln1Bias), c.norm1);
    c.q.noalias() = c.normed1 * w(LayerSlot::Wq);
    c.q.rowwise() += w(LayerSlot::Bq).row(0);
    c.k.noalias() = c.normed1 * w(LayerSlot::Wk);
    c.k.rowwise() += w(LayerSlot::Bk).row(0);
    c.v.noalias() = c.normed1 * w(LayerSlot::Wv);
    c.v.rowwise() += w(LayerSlot::Bv).row(0);
    c.probs.resize(static_cast<std::size_t>(n_seq * heads));
    c.heads.resize(rows, d);
    for (Eigen::Index s = 0; s < n_seq; ++s) {
      const Eigen::Index r0 = cache.offsets[s];
      const Eigen::Index n = cache.offsets[s + 1] - r0;
      for (Eigen::Index h = 0; h < heads; ++h) {
        Matrix<Scalar> scores =
            attn_scale * c.q.block(r0, h * dh, n, dh) * c.k.block(r0, h * dh, n, dh).transpose();
        for (Eigen::Index i = 0; i < n; ++i) {
          const Scalar m = scores.row(i).maxCoeff();
          scores.row(i) = (scores.row(i).array() - m).exp();
          scores.row(i) /= scores.row(i).sum();
        }
        c.heads.block(r0, h * dh, n, dh) = scores * c.v.block(r0, h * dh, n, dh);
        c.probs[static_cast<std::size_t>(s * heads + h)] = std::move(scores);
      }
    }
    x.noalias() += c.heads * w(LayerSlot::Wo);
    x.rowwise() += w(LayerSlot::Bo).row(0);
    c.normed2 = detail::layer_norm(x, w(LayerSlot::Ln2Weight), w(LayerSlot::Ln2Bias), c.norm2);
    c.pre_act.noalias() = c.normed2 * w(LayerSlot::W1);
    c.pre_act.rowwise() += w(LayerSlot::B1).row(0);
    c.act = detail::gelu(c.pre_act);
    x.noalias() += c.act * w(LayerSlot::W2);
    x.rowwise() += w(LayerSlot::B2).row(0);
  }
  Matrix<Scalar> last(n_seq, d);
  for (Eigen::Index s = 0; s < n_seq; ++s) last.row(s) = x.row(cache.offsets[s + 1] - 1);
  cache.pooled = detail::layer_norm(last, params.at(params.final_norm_weight_index()),
                                    params.at(params.final_norm_bias_index()), cache.final_norm);
  cache.projected.noalias() = cache.pooled * params.at(params.projection_index());
  cache.projected_norm = cache.projected.rowwise().norm();
  cache.output.resize(n_seq, cache.projected.cols());
  for (Eigen::Index s = 0; s < n_seq; ++s) {
    if (!(static_cast<double>(cache.projected_norm(s)) > kZeroNormThreshold)) {
      throw Error(ErrorCode::ZeroVector, "projected text embedding vanished");
    }
    cache.output.row(s) = cache.projected.row(s) / cache.projected_norm(s);
  }
  return cache;
}

template <typename Scalar>
ForwardCache<Scalar> forward(const EncoderParams<Scalar>& params, const std::vector<int>& ids) {
  return forward_batch(params, std::vector<std::vector<int>>{ids});
}

template <typename Scalar>
UnitVector<Scalar> encode_text(const EncoderParams<Scalar>& params, const std::vector<int>& ids) {
  return UnitVector<Scalar>(forward(params, ids).output.row(0).transpose());
}

/// Gradient buffers aligned with `params.tensors`; only trainable slots are sized.
template <typename Scalar>
std::vector<Matrix<Scalar>> zero_grads(const EncoderParams<Scalar>& params) {
  std::vector<Matrix<Scalar>> grads(params.tensors.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (params.tensors[i].trainable) {
      grads[i] = Matrix<Scalar>::Zero(params.tensors[i].value.rows(), params.tensors[i].value.cols());
    }
  }
  return grads;
}

/// Reverse pass of `forward_batch`. Row i of `upstream` is the gradient on
/// the unit-norm output of sequence i. Adds into the trainable slots of
/// `grads` and stops below the lowest layer that still has trainable tensors.
template <typename Scalar, typename Derived>
void backward_into(const EncoderParams<Scalar>& params, const ForwardCache<Scalar>& cache,
                   const Eigen::MatrixBase<Derived>& upstream, std::vector<Matrix<Scalar>>& grads) {
  const auto& cfg = params.config;
  const auto& t = params.tensors;
  const auto n_seq = static_cast<Eigen::Index>(cache.size());
  if (upstream.rows() != n_seq || upstream.cols() != cache.output.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "upstream gradient shape differs from the encoder output");
  }
  auto slot = [&](std::size_t index) -> Matrix<Scalar>* { return t[index].trainable ? &grads[index] : nullptr; };

  std::size_t lowest = cfg.n_layers + 1;
  const bool embeddings = t[EncoderParams<Scalar>::kTokenEmbedding].trainable ||
                          t[EncoderParams<Scalar>::kPositionalEmbedding].trainable;
  if (embeddings) lowest = 1;
  for (std::size_t l = 1; l <= cfg.n_layers && lowest > cfg.n_layers; ++l) {
    if (params.layer_trainable(l)) lowest = l;
  }

  // d(e / |e|) = (I - u u^T) / |e|
  const Matrix<Scalar> up = upstream;
  Matrix<Scalar> de(n_seq, up.cols());
  for (Eigen::Index s = 0; s < n_seq; ++s) {
    de.row(s) = (up.row(s) - cache.output.row(s) * cache.output.row(s).dot(up.row(s))) / cache.projected_norm(s);
  }
  if (auto* g = slot(params.projection_index())) g->noalias() += cache.pooled.transpose() * de;
  if (lowest > cfg.n_layers && !t[params.final_norm_weight_index()].trainable &&
      !t[params.final_norm_bias_index()].trainable) {
    return;
  }
  const Matrix<Scalar> dpooled = de * params.at(params.projection_index()).transpose();
  const Matrix<Scalar> dlast =
      detail::layer_norm_backward(dpooled, params.at(params.final_norm_weight_index()), cache.final_norm,
                                  slot(params.final_norm_weight_index()), slot(params.final_norm_bias_index()));
  if (lowest > cfg.n_layers) return;

  const auto d = static_cast<Eigen::Index>(cfg.d_model);
  const auto heads = static_cast<Eigen::Index>(cfg.n_heads);
  const Eigen::Index dh = d / heads;
  const Scalar attn_scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  const Eigen::Index rows = cache.offsets.back();

  Matrix<Scalar> dx = Matrix<Scalar>::Zero(rows, d);
  for (Eigen::Index s = 0; s < n_seq; ++s) dx.row(cache.offsets[s + 1] - 1) = dlast.row(s);
  for (std::size_t l = cfg.n_layers; l >= lowest; --l) {
    const auto& c = cache.layers[l - 1];
    auto w = [&](LayerSlot s) -> const Matrix<Scalar>& { return params.layer(l, s); };
    auto g = [&](LayerSlot s) { return slot(params.layer_index(l, s)); };

    // feed-forward block
    if (auto* gw = g(LayerSlot::W2)) gw->noalias() += c.act.transpose() * dx;
    if (auto* gb = g(LayerSlot::B2)) *gb += dx.colwise().sum();
    Matrix<Scalar> dpre = dx * w(LayerSlot::W2).transpose();
    dpre.array() *= detail::gelu_grad(c.pre_act).array();
    if (auto* gw = g(LayerSlot::W1)) gw->noalias() += c.normed2.transpose() * dpre;
    if (auto* gb = g(LayerSlot::B1)) *gb += dpre.colwise().sum();
    const Matrix<Scalar> dnormed2 = dpre * w(LayerSlot::W1).transpose();
    dx += detail::layer_norm_backward(dnormed2, w(LayerSlot::Ln2Weight), c.norm2, g(LayerSlot::Ln2Weight),
                                      g(LayerSlot::Ln2Bias));

    // attention block
    if (auto* gw = g(LayerSlot::Wo)) gw->noalias() += c.heads.transpose() * dx;
    if (auto* gb = g(LayerSlot::Bo)) *gb += dx.colwise().sum();
    const Matrix<Scalar> dheads = dx * w(LayerSlot::Wo).transpose();
    Matrix<Scalar> dq(rows, d), dk(rows, d), dv(rows, d);
    for (Eigen::Index s = 0; s < n_seq; ++s) {
      const Eigen::Index r0 = cache.offsets[s];
      const Eigen::Index n = cache.offsets[s + 1] - r0;
      for (Eigen::Index h = 0; h < heads; ++h) {
        const auto& p = c.probs[static_cast<std::size_t>(s * heads + h)];
        const auto dout = dheads.block(r0, h * dh, n, dh);
        dv.block(r0, h * dh, n, dh).noalias() = p.transpose() * dout;
        const Matrix<Scalar> dp = dout * c.v.block(r0, h * dh, n, dh).transpose();
        Matrix<Scalar> ds = p.cwiseProduct(dp);
        const Vector<Scalar> row_dot = ds.rowwise().sum();
        ds -= p.cwiseProduct(row_dot.replicate(1, n));
        ds *= attn_scale;
        dq.block(r0, h * dh, n, dh).noalias() = ds * c.k.block(r0, h * dh, n, dh);
        dk.block(r0, h * dh, n, dh).noalias() = ds.transpose() * c.q.block(r0, h * dh, n, dh);
      }
    }
    if (auto* gw = g(LayerSlot::Wq)) gw->noalias() += c.normed1.transpose() * dq;
    if (auto* gb = g(LayerSlot::Bq)) *gb += dq.colwise().sum();
    if (auto* gw = g(LayerSlot::Wk)) gw->noalias() += c.normed1.transpose() * dk;
    if (auto* gb = g(LayerSlot::Bk)) *gb += dk.colwise().sum();
    if (auto* gw = g(LayerSlot::Wv)) gw->noalias() += c.normed1.transpose() * dv;
    if (auto* gb = g(LayerSlot::Bv)) *gb += dv.colwise().sum();
    Matrix<Scalar> dnormed1 = dq * w(LayerSlot::Wq).transpose();
    dnormed1.noalias() += dk * w(LayerSlot::Wk).transpose();
    dnormed1.noalias() += dv * w(LayerSlot::Wv).transpose();
    dx += detail::layer_norm_backward(dnormed1, w(LayerSlot::Ln1Weight), c.norm1, g(LayerSlot::Ln1Weight),
                                      g(LayerSlot::Ln1Bias));
    if (l == lowest) break;
  }
  if (!embeddings) return;
  if (auto* g = slot(EncoderParams<Scalar>::kTokenEmbedding)) {
    for (Eigen::Index s = 0; s < n_seq; ++s) {
      const auto& ids = cache.ids[static_cast<std::size_t>(s)];
      for (std::size_t i = 0; i < ids.size(); ++i) {
        g->row(ids[i]) += dx.row(cache.offsets[s] + static_cast<Eigen::Index>(i));
      }
    }
  }
  if (auto* g = slot(EncoderParams<Scalar>::kPositionalEmbedding)) {
    for (Eigen::Index s = 0; s < n_seq; ++s) {
      const Eigen::Index n = cache.offsets[s + 1] - cache.offsets[s];
      g->topRows(n) += dx.middleRows(cache.offsets[s], n);
    }
  }
}

/// Gradients of <upstream, encode_text(ids)> for every trainable tensor.
template <typename Scalar, typename Derived>
GradientSet<Scalar> backward(const EncoderParams<Scalar>& params, const std::vector<int>& ids,
                             const Eigen::MatrixBase<Derived>& upstream) {
  const auto cache = forward(params, ids);
  auto grads = zero_grads(params);
  const Matrix<Scalar> row = upstream.transpose();
  backward_into(params, cache, row, grads);
  GradientSet<Scalar> out;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (params.tensors[i].trainable) out.set(params.tensors[i].name, std::move(grads[i]));
  }
  return out;
}

}  // namespace omnineg
