#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "omnineg/encoder.hpp"
#include "omnineg/image_features.hpp"
#include "omnineg/negation_data.hpp"
#include "omnineg/objectives.hpp"
#include "omnineg/optimizer.hpp"
#include "omnineg/tokenizer.hpp"

namespace omnineg {

/// Scalar of the losses, image embeddings and evaluator similarities.
using Real = double;
/// Scalar of the text encoder weights and activations in training and evaluation.
using TextScalar = float;

/// Which loss terms a run optimizes. Disabled terms are dropped and each
/// objective is the mean of its remaining terms. `info_nce_control` replaces
/// both objectives by plain symmetric InfoNCE on (image, caption).
struct ObjectiveTerms {
  bool p1 = true, p2 = true, p3 = true;
  bool a1 = true, a2 = true, a3 = true;
  bool info_nce_control = false;

  static ObjectiveTerms full() { return {}; }
  static ObjectiveTerms presence_only() { return {true, true, true, false, false, false, false}; }
  static ObjectiveTerms absence_only() { return {false, false, false, true, true, true, false}; }
  static ObjectiveTerms info_nce_only() { return {false, false, false, false, false, false, true}; }
  /// Full objective minus one term, named "p1".."a3".
  static ObjectiveTerms without(const std::string& term);
  /// Parses "info_nce" or a comma list of enabled terms ("p1,p2,p3,a1,a2,a3").
  static ObjectiveTerms parse(const std::string& text);

  bool uses_presence() const { return info_nce_control || p1 || p2 || p3; }
  bool uses_absence() const { return info_nce_control || a1 || a2 || a3; }
  std::string describe() const;

  bool operator==(const ObjectiveTerms&) const = default;
};

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  /// Front layers 1..K plus the projection are trained.
  std::size_t front_layers = 6;
  /// When set, only this layer and the projection are trained (layer sweep).
  std::optional<std::size_t> single_layer;
  double margin = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  bool a3_use_temperature = false;
  bool learnable_temperature = true;
  ObjectiveTerms terms;

  /// Settings for fine-tuning a pretrained 12-layer encoder (lr 1e-6, K = 6).
  static TrainConfig full_scale();
  void validate(std::size_t n_layers) const;
  AdamWOptions optimizer() const { return {learning_rate, beta1, beta2, epsilon, weight_decay}; }
};

struct ImageConfig {
  std::uint64_t seed = 0;
  double noise_scale = 0.5;
};

struct ExperimentConfig {
  EncoderConfig encoder;
  TrainConfig train;
  ImageConfig image;
};

struct Model {
  EncoderParams<TextScalar> encoder;
  Temperature<Real> temperature;
  std::vector<std::string> vocab;
};

/// Deterministic initialization with the freeze mask implied by `cfg.train`.
Model init_model(const ExperimentConfig& cfg, const Tokenizer& tokenizer);

/// Frozen image embeddings keyed by image id.
class ImageBank {
 public:
  ImageBank(const ImageFeatureTable& table, const std::map<std::string, ImageRecord>& images);
  const VectorXr& at(const std::string& image_id) const;
  std::size_t size() const noexcept { return embeddings_.size(); }

 private:
  std::map<std::string, VectorXr> embeddings_;
};

/// Tokenized, image-resolved triplet batch ready for a training step.
struct PreparedBatch {
  MatrixXr images;
  std::vector<std::vector<int>> captions;
  std::vector<std::vector<int>> negated;

  std::size_t size() const noexcept { return captions.size(); }
};

/// Tokenized triplet split with image embeddings, sliceable into batches.
struct PreparedSplit {
  MatrixXr images;
  std::vector<std::vector<int>> captions;
  std::vector<std::vector<int>> negated;

  std::size_t size() const noexcept { return captions.size(); }
  PreparedBatch gather(const std::vector<std::size_t>& indices) const;
};

PreparedSplit prepare(const std::vector<PresenceTriplet>& triplets, const Tokenizer& tokenizer,
                      const ImageBank& bank);
PreparedSplit prepare(const std::vector<AbsenceTriplet>& triplets, const Tokenizer& tokenizer,
                      const ImageBank& bank);

/// Corpus, vocabulary and frozen image tower shared by training and evaluation.
struct Workspace {
  WorldSpec world;
  Corpus corpus;
  Tokenizer tokenizer;
  ImageFeatureTable table;
  ImageBank bank;
  PreparedSplit presence;
  PreparedSplit absence;

  Workspace(WorldSpec world, Corpus corpus, const ExperimentConfig& cfg);
};

struct StepLosses {
  double presence = 0;
  double absence = 0;
  double total = 0;
};

/// Loss over encoded batches for the configured terms. Gradients use the
/// "presence.*" / "absence.*" / "log_tau" keys of `total_loss`.
LossOutput<Real> objective(const std::optional<PresenceBatchEmb<Real>>& pb,
                           const std::optional<AbsenceBatchEmb<Real>>& ab, const Temperature<Real>& tau,
                           const TrainConfig& cfg, StepLosses* parts = nullptr);

/// AdamW moments for the encoder tensors and for log tau.
struct OptimizerState {
  AdamW<TextScalar> encoder;
  AdamW<Real> temperature;

  explicit OptimizerState(const AdamWOptions& options) : encoder(options), temperature(options) {}
};

/// Encodes both batches, evaluates the objective, backpropagates into the
/// trainable encoder tensors and applies one AdamW step.
StepLosses train_step(Model& model, OptimizerState& opt, const PreparedBatch& presence, const PreparedBatch& absence,
                      const TrainConfig& cfg);

struct LogRow {
  std::size_t step = 0;
  StepLosses losses;
};

struct TrainResult {
  Model model;
  std::vector<LogRow> log;
};

std::size_t steps_per_epoch(std::size_t n_presence, std::size_t n_absence, const TrainConfig& cfg);

/// epochs x floor(n / B) steps (n = smaller of the used splits), reshuffled
/// every epoch from cfg.train.seed. `on_epoch` runs after each epoch.
TrainResult train(const Workspace& ws, const ExperimentConfig& cfg,
                  const std::function<void(std::size_t epoch, const Model&)>& on_epoch = {});

/// Unit-norm text embeddings, one row per sequence. Rows are computed
/// independently, so the result does not depend on `threads`.
MatrixXr encode_texts(const Model& model, const std::vector<std::vector<int>>& sequences, std::size_t threads = 1);

/// Fraction of triplets with s(I, C) > s(I, C'); ties are wrong.
double eval_presence(const Model& model, const Tokenizer& tokenizer, const ImageBank& bank,
                     const std::vector<PresenceTriplet>& triplets, std::size_t threads = 1);

/// Fraction of triplets with s(C', I_pos) > s(C', I_neg); ties are wrong.
double eval_absence(const Model& model, const Tokenizer& tokenizer, const ImageBank& bank,
                    const std::vector<AbsenceTriplet>& triplets, std::size_t threads = 1);

/// Text-to-image recall@k over the images of `pairs`. Ties rank the lower image index first.
std::map<std::size_t, double> eval_retrieval(const Model& model, const Tokenizer& tokenizer, const ImageBank& bank,
                                             const std::vector<PairRecord>& pairs, const std::vector<std::size_t>& ks,
                                             std::size_t threads = 1);

struct EvalReport {
  double presence_accuracy = 0;
  double absence_accuracy = 0;
  std::map<std::size_t, double> retrieval_recall;
  std::size_t presence_count = 0;
  std::size_t absence_count = 0;
  std::size_t retrieval_count = 0;
};

EvalReport evaluate(const Model& model, const Workspace& ws, const std::vector<std::size_t>& ks,
                    std::size_t threads = 1);

struct VariantRow {
  std::string variant;
  double presence_acc = 0;
  double absence_acc = 0;
};

/// For every layer k: one run training only layer k + projection on the
/// presence objective (scored by eval_presence) and one on the absence
/// objective (scored by eval_absence), all from the same initialization.
std::vector<VariantRow> layer_sweep(const Workspace& ws, const ExperimentConfig& base, std::size_t threads = 1);

/// Loss-term removals, front-layer counts and margins, each a full train + eval.
std::vector<VariantRow> ablation_grid(const Workspace& ws, const ExperimentConfig& base, std::size_t threads = 1);

struct AblationVariant {
  std::string name;
  ExperimentConfig config;
};

/// The 18 grid cells: w/o p3, w/o a1, w/o a3, full; K in {4,5,6,12} (clamped
/// to the layer count); m in {0.0, 0.1, ..., 0.9}.
std::vector<AblationVariant> ablation_variants(const ExperimentConfig& base);

}  // namespace omnineg
