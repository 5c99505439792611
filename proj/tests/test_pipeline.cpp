#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "omnineg/config.hpp"
#include "omnineg/pipeline.hpp"
#include "oracles.hpp"

using namespace omnineg;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.encoder.n_layers = 2;
  c.encoder.d_model = 16;
  c.encoder.n_heads = 2;
  c.encoder.d_ff = 32;
  c.encoder.d_embed = 8;
  c.encoder.max_len = 32;
  c.encoder.seed = 4;
  c.train.batch_size = 16;
  c.train.epochs = 2;
  c.train.front_layers = 1;
  c.train.seed = 5;
  c.image.seed = 6;
  c.image.noise_scale = 0.1;
  return c;
}

const Workspace& workspace() {
  static const Workspace ws = [] {
    auto world = make_world(20, 3, 4, 1);
    auto corpus = generate_corpus(world, {64, 48, 40, 30, 30}, 2);
    return Workspace(std::move(world), std::move(corpus), small_config());
  }();
  return ws;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

bool same_weights(const Model& a, const Model& b) {
  for (std::size_t i = 0; i < a.encoder.tensors.size(); ++i) {
    if (a.encoder.tensors[i].value != b.encoder.tensors[i].value) return false;
  }
  return a.temperature.log_value == b.temperature.log_value;
}

std::vector<std::vector<int>> tokens(const Workspace& ws, const std::vector<Tokens>& texts) {
  std::vector<std::vector<int>> out;
  for (const auto& t : texts) out.push_back(ws.tokenizer.encode(t));
  return out;
}

}  // namespace

TEST_CASE("objective terms parse and describe") {
  CHECK(ObjectiveTerms::parse("full") == ObjectiveTerms::full());
  CHECK(ObjectiveTerms::parse("info_nce") == ObjectiveTerms::info_nce_only());
  CHECK(ObjectiveTerms::parse("p1,p2,p3") == ObjectiveTerms::presence_only());
  CHECK(ObjectiveTerms::parse(" a1, a2 ,a3") == ObjectiveTerms::absence_only());
  CHECK(ObjectiveTerms::full().describe() == "p1,p2,p3,a1,a2,a3");
  CHECK(ObjectiveTerms::without("a1").describe() == "p1,p2,p3,a2,a3");
  CHECK(ObjectiveTerms::parse(ObjectiveTerms::without("p3").describe()) == ObjectiveTerms::without("p3"));
  CHECK(code_of([] { ObjectiveTerms::parse("p4"); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { ObjectiveTerms::parse(""); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { ObjectiveTerms::without("q"); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate(12));
  CHECK(code_of([&] { c.validate(4); }) == ErrorCode::KOutOfRange);
  auto bad = c;
  bad.batch_size = 0;
  CHECK(code_of([&] { bad.validate(12); }) == ErrorCode::InvalidConfig);
  bad = c;
  bad.margin = 1.2;
  CHECK(code_of([&] { bad.validate(12); }) == ErrorCode::InvalidConfig);
  bad = c;
  bad.beta2 = 1.0;
  CHECK(code_of([&] { bad.validate(12); }) == ErrorCode::InvalidConfig);
  bad = c;
  bad.single_layer = 13;
  CHECK(code_of([&] { bad.validate(12); }) == ErrorCode::KOutOfRange);
  CHECK(TrainConfig::full_scale().front_layers == 6);
  CHECK(TrainConfig::full_scale().batch_size == 128);
  CHECK(TrainConfig::full_scale().margin == 0.9);
}

TEST_CASE("objective composes the enabled terms") {
  std::mt19937_64 rng(41);
  const auto mk = [&](std::size_t b) {
    return TripletBatchEmb<Real>{EmbeddingBatch<Real>(oracle::unit_rows(b, 8, rng)),
                                 EmbeddingBatch<Real>(oracle::unit_rows(b, 8, rng)),
                                 EmbeddingBatch<Real>(oracle::unit_rows(b, 8, rng))};
  };
  const auto pb = mk(6), ab = mk(6);
  const Temperature<Real> tau;
  TrainConfig cfg;
  StepLosses parts;
  const auto full = objective(pb, ab, tau, cfg, &parts);
  CHECK(full.value == total_loss(pb, ab, tau, Margin(cfg.margin)).value);
  CHECK(parts.total == parts.presence + parts.absence);

  cfg.terms = ObjectiveTerms::without("p3");
  objective(pb, ab, tau, cfg, &parts);
  CHECK(parts.presence == doctest::Approx((loss_p1(pb, tau).value + loss_p2(pb, tau).value) / 2).epsilon(1e-14));

  cfg.terms = ObjectiveTerms::without("a1");
  objective(pb, ab, tau, cfg, &parts);
  CHECK(parts.absence ==
        doctest::Approx((loss_a2(ab, tau).value + loss_a3(ab, Margin(0.9)).value) / 2).epsilon(1e-14));

  cfg.terms = ObjectiveTerms::info_nce_only();
  const auto control = objective(pb, ab, tau, cfg, &parts);
  CHECK(parts.presence == info_nce(pb.images, pb.captions, tau).value);
  CHECK(parts.absence == info_nce(ab.images, ab.captions, tau).value);
  // the control never reads the negated captions
  CHECK_FALSE(control.grads.contains("presence.negated"));
  CHECK_FALSE(control.grads.contains("absence.negated"));
  CHECK(control.grads.contains("absence.captions"));
  CHECK(code_of([&] { objective(std::nullopt, std::nullopt, tau, cfg); }) == ErrorCode::EmptyBatch);
}

TEST_CASE("training log, determinism and epochs=0") {
  const auto& ws = workspace();
  auto cfg = small_config();
  const auto a = train(ws, cfg);
  const auto b = train(ws, cfg);
  const std::size_t steps = steps_per_epoch(ws.presence.size(), ws.absence.size(), cfg.train);
  CHECK(steps == 3);  // floor(min(64, 48) / 16)
  REQUIRE(a.log.size() == cfg.train.epochs * steps);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].step == i + 1);
    CHECK(a.log[i].losses.total == b.log[i].losses.total);
    CHECK(a.log[i].losses.total == doctest::Approx(a.log[i].losses.presence + a.log[i].losses.absence));
  }
  CHECK(same_weights(a.model, b.model));

  cfg.train.epochs = 0;
  const auto zero = train(ws, cfg);
  CHECK(zero.log.empty());
  CHECK(same_weights(zero.model, init_model(cfg, ws.tokenizer)));
}

TEST_CASE("frozen tensors never move") {
  const auto& ws = workspace();
  auto cfg = small_config();
  cfg.train.front_layers = 1;
  const auto init = init_model(cfg, ws.tokenizer);
  const auto trained = train(ws, cfg).model;
  for (std::size_t i = 0; i < init.encoder.tensors.size(); ++i) {
    const auto& t = init.encoder.tensors[i];
    INFO(t.name);
    if (t.trainable) continue;
    CHECK(trained.encoder.tensors[i].value == t.value);
  }
  CHECK_FALSE(trained.encoder.layer(1, LayerSlot::Wq) == init.encoder.layer(1, LayerSlot::Wq));
  CHECK_FALSE(trained.temperature.log_value == init.temperature.log_value);

  cfg.train.learnable_temperature = false;
  CHECK(train(ws, cfg).model.temperature.log_value == init.temperature.log_value);
}

TEST_CASE("a small step lowers the batch loss") {
  const auto& ws = workspace();
  auto cfg = small_config();
  cfg.train.learning_rate = 1e-4;
  cfg.train.front_layers = 2;
  Model model = init_model(cfg, ws.tokenizer);
  OptimizerState opt(cfg.train.optimizer());
  std::vector<std::size_t> idx(16);
  std::iota(idx.begin(), idx.end(), 0);
  const auto pb = ws.presence.gather(idx), ab = ws.absence.gather(idx);
  auto loss_of = [&](const Model& m) {
    const TripletBatchEmb<Real> p{EmbeddingBatch<Real>(pb.images), EmbeddingBatch<Real>(encode_texts(m, pb.captions)),
                                  EmbeddingBatch<Real>(encode_texts(m, pb.negated))};
    const TripletBatchEmb<Real> a{EmbeddingBatch<Real>(ab.images), EmbeddingBatch<Real>(encode_texts(m, ab.captions)),
                                  EmbeddingBatch<Real>(encode_texts(m, ab.negated))};
    return objective(p, a, m.temperature, cfg.train).value;
  };
  const double before = loss_of(model);
  const auto step = train_step(model, opt, pb, ab, cfg.train);
  CHECK(step.total == doctest::Approx(before).epsilon(1e-5));
  CHECK(loss_of(model) < before);
}

TEST_CASE("evaluators equal brute-force loops") {
  const auto& ws = workspace();
  const auto cfg = small_config();
  const auto model = train(ws, cfg).model;

  const auto& pe = ws.corpus.presence_eval;
  std::vector<Tokens> caps, negs;
  for (const auto& t : pe) caps.push_back(t.caption), negs.push_back(t.negated_caption);
  const auto ec = encode_texts(model, tokens(ws, caps)), en = encode_texts(model, tokens(ws, negs));
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < pe.size(); ++i) {
    const auto img = oracle::rows_of(MatrixXr(ws.bank.at(pe[i].image_id).transpose()))[0];
    pos.push_back(oracle::dot(img, oracle::rows_of(MatrixXr(ec.row(i)))[0]));
    neg.push_back(oracle::dot(img, oracle::rows_of(MatrixXr(en.row(i)))[0]));
  }
  CHECK(eval_presence(model, ws.tokenizer, ws.bank, pe) == oracle::pairwise_accuracy(pos, neg));

  const auto& ae = ws.corpus.absence_eval;
  std::vector<Tokens> an;
  for (const auto& t : ae) an.push_back(t.negated_caption);
  const auto ea = encode_texts(model, tokens(ws, an));
  pos.clear(), neg.clear();
  for (std::size_t i = 0; i < ae.size(); ++i) {
    const auto txt = oracle::rows_of(MatrixXr(ea.row(i)))[0];
    pos.push_back(oracle::dot(txt, oracle::rows_of(MatrixXr(ws.bank.at(ae[i].image_id).transpose()))[0]));
    neg.push_back(oracle::dot(txt, oracle::rows_of(MatrixXr(ws.bank.at(ae[i].negative_image_id).transpose()))[0]));
  }
  CHECK(eval_absence(model, ws.tokenizer, ws.bank, ae) == oracle::pairwise_accuracy(pos, neg));

  const auto& pairs = ws.corpus.pairs;
  std::vector<Tokens> pc;
  for (const auto& p : pairs) pc.push_back(p.caption);
  const auto et = encode_texts(model, tokens(ws, pc));
  oracle::Rows sims(pairs.size(), std::vector<double>(pairs.size()));
  std::vector<std::size_t> target(pairs.size());
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    target[q] = q;
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      sims[q][j] = oracle::dot(oracle::rows_of(MatrixXr(et.row(q)))[0],
                               oracle::rows_of(MatrixXr(ws.bank.at(pairs[j].image_id).transpose()))[0]);
    }
  }
  const auto recall = eval_retrieval(model, ws.tokenizer, ws.bank, pairs, {1, 5, 10, 40});
  for (std::size_t k : {1, 5, 10, 40}) CHECK(recall.at(k) == oracle::recall_at(sims, target, k));
  CHECK(recall.at(40) == 1.0);
}

TEST_CASE("evaluation does not depend on the thread count") {
  const auto& ws = workspace();
  const auto model = init_model(small_config(), ws.tokenizer);
  std::vector<std::vector<int>> seqs;
  for (int rep = 0; rep < 6; ++rep)
    for (const auto& t : ws.corpus.presence) seqs.push_back(ws.tokenizer.encode(t.negated_caption));
  REQUIRE(seqs.size() > 256);
  CHECK(encode_texts(model, seqs, 1) == encode_texts(model, seqs, 3));
  const auto one = evaluate(model, ws, {1, 5}, 1), four = evaluate(model, ws, {1, 5}, 4);
  CHECK(one.presence_accuracy == four.presence_accuracy);
  CHECK(one.absence_accuracy == four.absence_accuracy);
  CHECK(one.retrieval_recall == four.retrieval_recall);
  CHECK(one.presence_count == 30);
}

TEST_CASE("ties count against the model") {
  const auto& ws = workspace();
  const auto model = init_model(small_config(), ws.tokenizer);
  auto pe = ws.corpus.presence_eval;
  for (auto& t : pe) t.negated_caption = t.caption;
  CHECK(eval_presence(model, ws.tokenizer, ws.bank, pe) == 0.0);
  auto ae = ws.corpus.absence_eval;
  for (auto& t : ae) t.negative_image_id = t.image_id;
  CHECK(eval_absence(model, ws.tokenizer, ws.bank, ae) == 0.0);
  // identical candidates: the lower index wins the tie
  std::vector<PairRecord> pairs{ws.corpus.pairs[0], ws.corpus.pairs[0]};
  const auto r = eval_retrieval(model, ws.tokenizer, ws.bank, pairs, {1});
  CHECK(r.at(1) == 0.5);
}

TEST_CASE("evaluator and training errors") {
  const auto& ws = workspace();
  const auto model = init_model(small_config(), ws.tokenizer);
  CHECK(code_of([&] { eval_presence(model, ws.tokenizer, ws.bank, {}); }) == ErrorCode::EmptyEvalSet);
  CHECK(code_of([&] { eval_absence(model, ws.tokenizer, ws.bank, {}); }) == ErrorCode::EmptyEvalSet);
  CHECK(code_of([&] { eval_retrieval(model, ws.tokenizer, ws.bank, {}, {1}); }) == ErrorCode::EmptyEvalSet);
  CHECK(code_of([&] { eval_retrieval(model, ws.tokenizer, ws.bank, ws.corpus.pairs, {41}); }) ==
        ErrorCode::KTooLarge);
  CHECK(code_of([&] { eval_retrieval(model, ws.tokenizer, ws.bank, ws.corpus.pairs, {0}); }) ==
        ErrorCode::InvalidArgument);
  CHECK(code_of([&] { ws.bank.at("nope"); }) == ErrorCode::UnknownImage);

  auto world = make_world(20, 3, 4, 1);
  auto corpus = generate_corpus(world, {10, 10, 10, 0, 0}, 3);
  corpus.absence.clear();
  const Workspace empty(world, corpus, small_config());
  CHECK(code_of([&] { train(empty, small_config()); }) == ErrorCode::EmptyCorpus);
}

TEST_CASE("ablation grid layout") {
  auto base = small_config();
  const auto v = ablation_variants(base);
  REQUIRE(v.size() == 18);
  std::vector<std::string> names;
  for (const auto& x : v) names.push_back(x.name);
  CHECK(names[0] == "without_p3");
  CHECK(names[1] == "without_a1");
  CHECK(names[2] == "without_a3");
  CHECK(names[3] == "full");
  CHECK(names[4] == "front_4");
  CHECK(names[7] == "front_12");
  CHECK(names[8] == "margin_0.0");
  CHECK(names[17] == "margin_0.9");
  CHECK(v[7].config.train.front_layers == 2);  // clamped to the layer count
  CHECK(v[1].config.train.terms == ObjectiveTerms::without("a1"));
  CHECK(v[12].config.train.margin == doctest::Approx(0.4));
}

TEST_CASE("layer sweep trains one layer at a time") {
  const auto& ws = workspace();
  auto cfg = small_config();
  cfg.train.epochs = 1;
  const auto rows = layer_sweep(ws, cfg);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].variant == "layer_1");
  CHECK(rows[1].variant == "layer_2");
  for (const auto& r : rows) {
    CHECK(r.presence_acc >= 0.0);
    CHECK(r.presence_acc <= 1.0);
    CHECK(r.absence_acc >= 0.0);
    CHECK(r.absence_acc <= 1.0);
  }
  CHECK(layer_sweep(ws, cfg)[1].absence_acc == rows[1].absence_acc);
}

TEST_CASE("run config") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(RunConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK(c.to_json().count("data_dir") == 0);
  CHECK(derive_seed(0, "world") != derive_seed(0, "corpus"));
  CHECK(derive_seed(1, "world") != derive_seed(0, "world"));
  CHECK(c.experiment().encoder.seed == derive_seed(0, "encoder"));
  c.format_version = 2;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { RunConfig::from_json(nlohmann::json::object()); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { data_hash("/nonexistent/dir"); }) == ErrorCode::Io);
}
