#include "omnineg/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace omnineg {

namespace {

// Fixed chunking keeps every embedding independent of the thread count.
constexpr std::size_t kEncodeChunk = 256;

const std::vector<std::string> kTermNames = {"p1", "p2", "p3", "a1", "a2", "a3"};

bool* term_flag(ObjectiveTerms& t, const std::string& name) {
  if (name == "p1") return &t.p1;
  if (name == "p2") return &t.p2;
  if (name == "p3") return &t.p3;
  if (name == "a1") return &t.a1;
  if (name == "a2") return &t.a2;
  if (name == "a3") return &t.a3;
  throw Error(ErrorCode::InvalidConfig, "unknown loss term '" + name + "'");
}

LossOutput<Real> mean_of(const std::vector<LossOutput<Real>>& terms) {
  LossOutput<Real> out;
  const Real scale = Real(1) / static_cast<Real>(terms.size());
  for (const auto& term : terms) {
    out.value += term.value;
    out.grads.accumulate(term.grads, scale);
  }
  out.value *= scale;
  return out;
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, std::size_t epoch, std::uint64_t stream) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(stream)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

MatrixXr to_real(const Matrix<TextScalar>& rows) {
  MatrixXr out = rows.cast<Real>();
  out.rowwise().normalize();
  return out;
}

struct EncodedStream {
  std::optional<ForwardCache<TextScalar>> cache;
  MatrixXr embeddings;
};

EncodedStream encode_stream(const Model& model, const std::vector<std::vector<int>>& seqs) {
  EncodedStream s{forward_batch(model.encoder, seqs), {}};
  s.embeddings = to_real(s.cache->output);
  return s;
}

void backprop_stream(const Model& model, const EncodedStream& stream, const GradientSet<Real>& grads,
                     const std::string& key, std::vector<Matrix<TextScalar>>& buffers) {
  if (!stream.cache || !grads.contains(key)) return;
  backward_into(model.encoder, *stream.cache, grads.at(key).cast<TextScalar>(), buffers);
}

template <typename Fn>
void parallel_rows(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t * chunk; i < std::min(n, (t + 1) * chunk); ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string margin_name(double m) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "margin_%.1f", m);
  return buf;
}

}  // namespace

ObjectiveTerms ObjectiveTerms::without(const std::string& term) {
  ObjectiveTerms t;
  *term_flag(t, term) = false;
  return t;
}

ObjectiveTerms ObjectiveTerms::parse(const std::string& text) {
  if (text == "info_nce") return info_nce_only();
  if (text == "full") return full();
  ObjectiveTerms t{false, false, false, false, false, false, false};
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item.erase(std::remove(item.begin(), item.end(), ' '), item.end());
    if (!item.empty()) *term_flag(t, item) = true;
  }
  if (!t.uses_presence() && !t.uses_absence()) {
    throw Error(ErrorCode::InvalidConfig, "no loss term enabled in '" + text + "'");
  }
  return t;
}

std::string ObjectiveTerms::describe() const {
  if (info_nce_control) return "info_nce";
  ObjectiveTerms copy = *this;
  std::string out;
  for (const auto& name : kTermNames) {
    if (*term_flag(copy, name)) out += (out.empty() ? "" : ",") + name;
  }
  return out;
}

TrainConfig TrainConfig::full_scale() {
  TrainConfig c;
  c.learning_rate = 1e-6;
  c.front_layers = 6;
  return c;
}

void TrainConfig::validate(std::size_t n_layers) const {
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  if (!(margin >= 0.0 && margin <= 1.0)) throw Error(ErrorCode::InvalidConfig, "margin must lie in [0, 1]");
  if (!(learning_rate >= 0.0)) throw Error(ErrorCode::InvalidConfig, "learning_rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "optimizer betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0) || !(weight_decay >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "optimizer eps must be > 0 and weight_decay >= 0");
  }
  if (front_layers > n_layers) {
    throw Error(ErrorCode::KOutOfRange, "K=" + std::to_string(front_layers) + " exceeds " +
                                            std::to_string(n_layers) + " layers");
  }
  if (single_layer && (*single_layer < 1 || *single_layer > n_layers)) {
    throw Error(ErrorCode::KOutOfRange, "layer " + std::to_string(*single_layer) + " outside 1.." +
                                            std::to_string(n_layers));
  }
  if (!terms.uses_presence() && !terms.uses_absence()) {
    throw Error(ErrorCode::InvalidConfig, "no loss term enabled");
  }
}

Model init_model(const ExperimentConfig& cfg, const Tokenizer& tokenizer) {
  EncoderConfig ec = cfg.encoder;
  ec.vocab_size = tokenizer.vocab_size();
  cfg.train.validate(ec.n_layers);
  auto params = init_encoder<TextScalar>(ec);
  params = cfg.train.single_layer ? set_freeze_single(std::move(params), *cfg.train.single_layer)
                                  : set_freeze_front(std::move(params), cfg.train.front_layers);
  Temperature<Real> tau;
  tau.learnable = cfg.train.learnable_temperature;
  return {std::move(params), tau, tokenizer.words()};
}

ImageBank::ImageBank(const ImageFeatureTable& table, const std::map<std::string, ImageRecord>& images) {
  for (const auto& [id, record] : images) {
    embeddings_.emplace(id, table.encode(record.objects, table.image_seed(id)).values());
  }
}

const VectorXr& ImageBank::at(const std::string& image_id) const {
  auto it = embeddings_.find(image_id);
  if (it == embeddings_.end()) throw Error(ErrorCode::UnknownImage, "unknown image '" + image_id + "'");
  return it->second;
}

PreparedBatch PreparedSplit::gather(const std::vector<std::size_t>& indices) const {
  PreparedBatch b;
  b.images.resize(static_cast<Eigen::Index>(indices.size()), images.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    b.images.row(static_cast<Eigen::Index>(r)) = images.row(static_cast<Eigen::Index>(indices[r]));
    b.captions.push_back(captions[indices[r]]);
    b.negated.push_back(negated[indices[r]]);
  }
  return b;
}

namespace {

template <typename Triplet>
PreparedSplit prepare_split(const std::vector<Triplet>& triplets, const Tokenizer& tokenizer, const ImageBank& bank) {
  PreparedSplit s;
  if (triplets.empty()) return s;
  const auto dim = bank.at(triplets.front().image_id).size();
  s.images.resize(static_cast<Eigen::Index>(triplets.size()), dim);
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    s.images.row(static_cast<Eigen::Index>(i)) = bank.at(triplets[i].image_id).transpose();
    s.captions.push_back(tokenizer.encode(triplets[i].caption));
    s.negated.push_back(tokenizer.encode(triplets[i].negated_caption));
  }
  return s;
}

}  // namespace

PreparedSplit prepare(const std::vector<PresenceTriplet>& triplets, const Tokenizer& tokenizer,
                      const ImageBank& bank) {
  return prepare_split(triplets, tokenizer, bank);
}

PreparedSplit prepare(const std::vector<AbsenceTriplet>& triplets, const Tokenizer& tokenizer,
                      const ImageBank& bank) {
  return prepare_split(triplets, tokenizer, bank);
}

Workspace::Workspace(WorldSpec world_in, Corpus corpus_in, const ExperimentConfig& cfg)
    : world(std::move(world_in)),
      corpus(std::move(corpus_in)),
      tokenizer(Tokenizer::for_world(world)),
      table(world.object_vocab, cfg.encoder.d_embed, cfg.image.seed, cfg.image.noise_scale),
      bank(table, corpus.images),
      presence(prepare(corpus.presence, tokenizer, bank)),
      absence(prepare(corpus.absence, tokenizer, bank)) {}

LossOutput<Real> objective(const std::optional<PresenceBatchEmb<Real>>& pb,
                           const std::optional<AbsenceBatchEmb<Real>>& ab, const Temperature<Real>& tau,
                           const TrainConfig& cfg, StepLosses* parts) {
  const auto& t = cfg.terms;
  LossOutput<Real> lp, la;
  bool has_p = false, has_a = false;
  if (t.info_nce_control) {
    if (pb) lp = info_nce(pb->images, pb->captions, tau), has_p = true;
    if (ab) la = info_nce(ab->images, ab->captions, tau), has_a = true;
  } else {
    if (pb && t.uses_presence()) {
      std::vector<LossOutput<Real>> terms;
      if (t.p1) terms.push_back(loss_p1(*pb, tau));
      if (t.p2) terms.push_back(loss_p2(*pb, tau));
      if (t.p3) terms.push_back(loss_p3(*pb, tau));
      lp = mean_of(terms);
      has_p = true;
    }
    if (ab && t.uses_absence()) {
      const Margin margin(cfg.margin);
      std::vector<LossOutput<Real>> terms;
      if (t.a1) terms.push_back(loss_a1(*ab, tau));
      if (t.a2) terms.push_back(loss_a2(*ab, tau));
      if (t.a3) {
        terms.push_back(cfg.a3_use_temperature ? loss_a3(*ab, margin, std::optional<Temperature<Real>>(tau))
                                               : loss_a3(*ab, margin));
      }
      la = mean_of(terms);
      has_a = true;
    }
  }
  if (!has_p && !has_a) throw Error(ErrorCode::EmptyBatch, "objective has no batch for its enabled terms");
  LossOutput<Real> out;
  out.value = lp.value + la.value;
  if (has_p) out.grads.accumulate(prefixed(lp.grads, "presence"));
  if (has_a) out.grads.accumulate(prefixed(la.grads, "absence"));
  if (tau.learnable && !out.grads.contains("log_tau")) out.grads.set("log_tau", MatrixXr::Zero(1, 1));
  if (parts) *parts = {lp.value, la.value, out.value};
  return out;
}

StepLosses train_step(Model& model, OptimizerState& opt, const PreparedBatch& presence, const PreparedBatch& absence,
                      const TrainConfig& cfg) {
  const auto& t = cfg.terms;
  const bool use_p = t.uses_presence();
  const bool use_a = t.uses_absence();
  if ((use_p && presence.size() == 0) || (use_a && absence.size() == 0)) {
    throw Error(ErrorCode::EmptyBatch, "training batch is empty");
  }
  // The control objective never reads negated captions; the caption stream stands in for them.
  const bool need_negated = !t.info_nce_control;

  EncodedStream p_cap, p_neg, a_cap, a_neg;
  std::optional<PresenceBatchEmb<Real>> pb;
  std::optional<AbsenceBatchEmb<Real>> ab;
  if (use_p) {
    p_cap = encode_stream(model, presence.captions);
    if (need_negated) p_neg = encode_stream(model, presence.negated);
    pb = PresenceBatchEmb<Real>{EmbeddingBatch<Real>(presence.images), EmbeddingBatch<Real>(p_cap.embeddings),
                                EmbeddingBatch<Real>(need_negated ? p_neg.embeddings : p_cap.embeddings)};
  }
  if (use_a) {
    a_cap = encode_stream(model, absence.captions);
    if (need_negated) a_neg = encode_stream(model, absence.negated);
    ab = AbsenceBatchEmb<Real>{EmbeddingBatch<Real>(absence.images), EmbeddingBatch<Real>(a_cap.embeddings),
                               EmbeddingBatch<Real>(need_negated ? a_neg.embeddings : a_cap.embeddings)};
  }

  StepLosses losses;
  const auto loss = objective(pb, ab, model.temperature, cfg, &losses);
  if (!std::isfinite(loss.value)) throw Error(ErrorCode::NonFiniteValue, "training loss is not finite");

  auto buffers = zero_grads(model.encoder);
  backprop_stream(model, p_cap, loss.grads, "presence.captions", buffers);
  if (need_negated) backprop_stream(model, p_neg, loss.grads, "presence.negated", buffers);
  backprop_stream(model, a_cap, loss.grads, "absence.captions", buffers);
  if (need_negated) backprop_stream(model, a_neg, loss.grads, "absence.negated", buffers);

  std::vector<ParamRef<TextScalar>> refs;
  for (std::size_t i = 0; i < model.encoder.tensors.size(); ++i) {
    auto& tensor = model.encoder.tensors[i];
    if (tensor.trainable) refs.push_back({tensor.name, &tensor.value, &buffers[i], tensor.decay});
  }
  opt.encoder.step(refs);
  if (model.temperature.learnable) {
    MatrixXr log_tau = MatrixXr::Constant(1, 1, model.temperature.log_value);
    opt.temperature.step({{"log_tau", &log_tau, &loss.grads.at("log_tau"), false}});
    model.temperature.log_value = log_tau(0, 0);
    model.temperature.clamp();
  }
  return losses;
}

std::size_t steps_per_epoch(std::size_t n_presence, std::size_t n_absence, const TrainConfig& cfg) {
  const bool use_p = cfg.terms.uses_presence();
  const bool use_a = cfg.terms.uses_absence();
  const std::size_t n = use_p && use_a ? std::min(n_presence, n_absence) : (use_p ? n_presence : n_absence);
  return n / cfg.batch_size;
}

TrainResult train(const Workspace& ws, const ExperimentConfig& cfg,
                  const std::function<void(std::size_t epoch, const Model&)>& on_epoch) {
  const auto& tc = cfg.train;
  if (ws.presence.size() == 0 || ws.absence.size() == 0) {
    throw Error(ErrorCode::EmptyCorpus, "training needs at least one presence and one absence triplet");
  }
  TrainResult result{init_model(cfg, ws.tokenizer), {}};
  OptimizerState opt(tc.optimizer());
  const std::size_t steps = steps_per_epoch(ws.presence.size(), ws.absence.size(), tc);
  const bool use_p = tc.terms.uses_presence();
  const bool use_a = tc.terms.uses_absence();
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto order_p = shuffled(ws.presence.size(), tc.seed, epoch, 1);
    const auto order_a = shuffled(ws.absence.size(), tc.seed, epoch, 2);
    for (std::size_t s = 0; s < steps; ++s) {
      auto slice = [&](const std::vector<std::size_t>& order) {
        return std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(s * tc.batch_size),
                                        order.begin() + static_cast<std::ptrdiff_t>((s + 1) * tc.batch_size));
      };
      const PreparedBatch pb = use_p ? ws.presence.gather(slice(order_p)) : PreparedBatch{};
      const PreparedBatch ab = use_a ? ws.absence.gather(slice(order_a)) : PreparedBatch{};
      result.log.push_back({++step, train_step(result.model, opt, pb, ab, tc)});
    }
    if (on_epoch) on_epoch(epoch + 1, result.model);
  }
  return result;
}

MatrixXr encode_texts(const Model& model, const std::vector<std::vector<int>>& sequences, std::size_t threads) {
  MatrixXr out(static_cast<Eigen::Index>(sequences.size()), static_cast<Eigen::Index>(model.encoder.config.d_embed));
  const std::size_t chunks = (sequences.size() + kEncodeChunk - 1) / kEncodeChunk;
  parallel_rows(chunks, threads, [&](std::size_t c) {
    const std::size_t begin = c * kEncodeChunk;
    const std::size_t end = std::min(sequences.size(), begin + kEncodeChunk);
    const std::vector<std::vector<int>> chunk(sequences.begin() + static_cast<std::ptrdiff_t>(begin),
                                              sequences.begin() + static_cast<std::ptrdiff_t>(end));
    out.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) =
        to_real(forward_batch(model.encoder, chunk).output);
  });
  return out;
}

double eval_presence(const Model& model, const Tokenizer& tokenizer, const ImageBank& bank,
                     const std::vector<PresenceTriplet>& triplets, std::size_t threads) {
  if (triplets.empty()) throw Error(ErrorCode::EmptyEvalSet, "presence eval set is empty");
  std::vector<std::vector<int>> seqs;
  for (const auto& t : triplets) {
    seqs.push_back(tokenizer.encode(t.caption));
    seqs.push_back(tokenizer.encode(t.negated_caption));
  }
  const MatrixXr text = encode_texts(model, seqs, threads);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& image = bank.at(triplets[i].image_id);
    const auto e = static_cast<Eigen::Index>(2 * i);
    if (dot_ascending(image, text.row(e)) > dot_ascending(image, text.row(e + 1))) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(triplets.size());
}

double eval_absence(const Model& model, const Tokenizer& tokenizer, const ImageBank& bank,
                    const std::vector<AbsenceTriplet>& triplets, std::size_t threads) {
  if (triplets.empty()) throw Error(ErrorCode::EmptyEvalSet, "absence eval set is empty");
  std::vector<std::vector<int>> seqs;
  for (const auto& t : triplets) seqs.push_back(tokenizer.encode(t.negated_caption));
  const MatrixXr text = encode_texts(model, seqs, threads);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& pos = bank.at(triplets[i].image_id);
    const auto& neg = bank.at(triplets[i].negative_image_id);
    const auto row = text.row(static_cast<Eigen::Index>(i));
    if (dot_ascending(row, pos) > dot_ascending(row, neg)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(triplets.size());
}

std::map<std::size_t, double> eval_retrieval(const Model& model, const Tokenizer& tokenizer, const ImageBank& bank,
                                             const std::vector<PairRecord>& pairs, const std::vector<std::size_t>& ks,
                                             std::size_t threads) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyEvalSet, "retrieval pair set is empty");
  for (auto k : ks) {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "recall k must be >= 1");
    if (k > pairs.size()) {
      throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " exceeds " + std::to_string(pairs.size()) +
                                            " images");
    }
  }
  const auto n = static_cast<Eigen::Index>(pairs.size());
  MatrixXr images(n, static_cast<Eigen::Index>(model.encoder.config.d_embed));
  std::vector<std::vector<int>> seqs;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& image = bank.at(pairs[static_cast<std::size_t>(i)].image_id);
    if (image.size() != images.cols()) throw Error(ErrorCode::DimensionMismatch, "image and text dimensions differ");
    images.row(i) = image.transpose();
    seqs.push_back(tokenizer.encode(pairs[static_cast<std::size_t>(i)].caption));
  }
  const MatrixXr text = encode_texts(model, seqs, threads);
  std::vector<std::size_t> rank(pairs.size());
  parallel_rows(pairs.size(), threads, [&](std::size_t q) {
    const auto qi = static_cast<Eigen::Index>(q);
    const Real target = dot_ascending(text.row(qi), images.row(qi));
    std::size_t better = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const Real s = dot_ascending(text.row(qi), images.row(j));
      if (s > target || (s == target && j < qi)) ++better;
    }
    rank[q] = better + 1;
  });
  std::map<std::size_t, double> recall;
  for (auto k : ks) {
    const auto hits = std::count_if(rank.begin(), rank.end(), [k](std::size_t r) { return r <= k; });
    recall[k] = static_cast<double>(hits) / static_cast<double>(pairs.size());
  }
  return recall;
}

EvalReport evaluate(const Model& model, const Workspace& ws, const std::vector<std::size_t>& ks,
                    std::size_t threads) {
  EvalReport r;
  r.presence_accuracy = eval_presence(model, ws.tokenizer, ws.bank, ws.corpus.presence_eval, threads);
  r.absence_accuracy = eval_absence(model, ws.tokenizer, ws.bank, ws.corpus.absence_eval, threads);
  r.retrieval_recall = eval_retrieval(model, ws.tokenizer, ws.bank, ws.corpus.pairs, ks, threads);
  r.presence_count = ws.corpus.presence_eval.size();
  r.absence_count = ws.corpus.absence_eval.size();
  r.retrieval_count = ws.corpus.pairs.size();
  return r;
}

std::vector<VariantRow> layer_sweep(const Workspace& ws, const ExperimentConfig& base, std::size_t threads) {
  std::vector<VariantRow> rows;
  for (std::size_t k = 1; k <= base.encoder.n_layers; ++k) {
    ExperimentConfig cfg = base;
    cfg.train.single_layer = k;
    cfg.train.terms = ObjectiveTerms::presence_only();
    const auto p = train(ws, cfg);
    cfg.train.terms = ObjectiveTerms::absence_only();
    const auto a = train(ws, cfg);
    rows.push_back({"layer_" + std::to_string(k),
                    eval_presence(p.model, ws.tokenizer, ws.bank, ws.corpus.presence_eval, threads),
                    eval_absence(a.model, ws.tokenizer, ws.bank, ws.corpus.absence_eval, threads)});
  }
  return rows;
}

std::vector<AblationVariant> ablation_variants(const ExperimentConfig& base) {
  std::vector<AblationVariant> out;
  auto with_terms = [&](const std::string& name, ObjectiveTerms terms) {
    ExperimentConfig cfg = base;
    cfg.train.terms = terms;
    out.push_back({name, cfg});
  };
  with_terms("without_p3", ObjectiveTerms::without("p3"));
  with_terms("without_a1", ObjectiveTerms::without("a1"));
  with_terms("without_a3", ObjectiveTerms::without("a3"));
  with_terms("full", ObjectiveTerms::full());
  for (std::size_t k : {4, 5, 6, 12}) {
    ExperimentConfig cfg = base;
    cfg.train.terms = ObjectiveTerms::full();
    cfg.train.single_layer.reset();
    cfg.train.front_layers = std::min(k, base.encoder.n_layers);
    out.push_back({"front_" + std::to_string(k), cfg});
  }
  for (int i = 0; i <= 9; ++i) {
    ExperimentConfig cfg = base;
    cfg.train.terms = ObjectiveTerms::full();
    cfg.train.margin = i / 10.0;
    out.push_back({margin_name(cfg.train.margin), cfg});
  }
  return out;
}

std::vector<VariantRow> ablation_grid(const Workspace& ws, const ExperimentConfig& base, std::size_t threads) {
  std::vector<VariantRow> rows;
  for (const auto& v : ablation_variants(base)) {
    const auto result = train(ws, v.config);
    rows.push_back({v.name, eval_presence(result.model, ws.tokenizer, ws.bank, ws.corpus.presence_eval, threads),
                    eval_absence(result.model, ws.tokenizer, ws.bank, ws.corpus.absence_eval, threads)});
  }
  return rows;
}

}  // namespace omnineg
