#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "omnineg/checkpoint.hpp"
#include "omnineg/config.hpp"

namespace fs = std::filesystem;
using namespace omnineg;

namespace {

constexpr int kExitDomain = 1;
constexpr int kExitIo = 2;

struct Paths {
  std::string data_dir;
  std::string out;
  std::string checkpoint;
};

std::size_t thread_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("OMNINEG_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidConfig, std::string("OMNINEG_THREADS='") + env + "' is not a number");
    }
  }
  return n;
}

/// Every RunConfig key is also a flag, so a key=value config file and the
/// command line share one namespace and flags win over file values.
void bind_config(CLI::App& app, RunConfig& c, std::string& terms) {
  app.add_option("--format_version", c.format_version);
  app.add_option("--seed", c.seed, "master seed");
  app.add_option("--n_objects", c.world.n_objects);
  app.add_option("--n_scenes", c.world.n_scenes);
  app.add_option("--objects_per_scene", c.world.objects_per_scene);
  app.add_option("--presence_count", c.counts.presence);
  app.add_option("--absence_count", c.counts.absence);
  app.add_option("--pair_count", c.counts.pairs);
  app.add_option("--presence_eval_count", c.counts.presence_eval);
  app.add_option("--absence_eval_count", c.counts.absence_eval);
  app.add_option("--n_layers", c.encoder.n_layers);
  app.add_option("--d_model", c.encoder.d_model);
  app.add_option("--n_heads", c.encoder.n_heads);
  app.add_option("--d_ff", c.encoder.d_ff);
  app.add_option("--d_embed", c.encoder.d_embed);
  app.add_option("--max_len", c.encoder.max_len);
  app.add_option("--batch_size", c.train.batch_size);
  app.add_option("--epochs", c.train.epochs);
  app.add_option("--learning_rate", c.train.learning_rate);
  app.add_option("--front_layers", c.train.front_layers);
  app.add_option("--margin", c.train.margin);
  app.add_option("--beta1", c.train.beta1);
  app.add_option("--beta2", c.train.beta2);
  app.add_option("--epsilon", c.train.epsilon);
  app.add_option("--weight_decay", c.train.weight_decay);
  app.add_option("--a3_use_temperature", c.train.a3_use_temperature);
  app.add_option("--learnable_temperature", c.train.learnable_temperature);
  app.add_option("--terms", terms, "info_nce, full, or a comma list of p1..a3");
  app.add_option("--image_noise", c.image_noise);
  app.add_option("--retrieval_ks", c.retrieval_ks)->delimiter(',');
  app.add_option("--checkpoint_every_epoch", c.checkpoint_every_epoch);
  // informational key carried by every echo
  app.add_option("--ablation_semantics")->group("");
}

/// Out-of-range settings are configuration errors whatever module noticed them.
void validate_config(const RunConfig& cfg) {
  try {
    cfg.validate();
  } catch (const Error& e) {
    if (e.is_io_error()) throw;
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path require_dir(const std::string& dir, const char* flag) {
  if (dir.empty()) throw Error(ErrorCode::InvalidConfig, std::string(flag) + " is required");
  return dir;
}

fs::path make_out_dir(const std::string& out) {
  const fs::path dir = require_dir(out, "--out");
  fs::create_directories(dir);
  return dir;
}

struct Loaded {
  WorldSpec world;
  Corpus corpus;
  std::string hash;
};

Loaded load_data(const std::string& data_dir) {
  const fs::path dir = require_dir(data_dir, "--data-dir");
  for (const auto& name : CorpusFiles::all()) {
    if (!fs::exists(dir / name)) throw Error(ErrorCode::Io, "missing data file " + (dir / name).string());
  }
  Loaded d{read_world(dir / CorpusFiles::kWorld), read_corpus(dir), data_hash(dir)};
  check_corpus(d.corpus);
  return d;
}

std::string csv(const std::vector<VariantRow>& rows) {
  std::ostringstream out;
  out << "variant,presence_acc,absence_acc\n";
  for (const auto& r : rows) out << r.variant << ',' << fixed(r.presence_acc) << ',' << fixed(r.absence_acc) << '\n';
  return out.str();
}

Checkpoint<float> to_checkpoint(const Model& m, const RunConfig& cfg) {
  Checkpoint<float> ck;
  ck.encoder = m.encoder;
  ck.temperature = {static_cast<float>(m.temperature.log_value), m.temperature.learnable,
                    static_cast<float>(m.temperature.max_value)};
  ck.vocab = m.vocab;
  ck.config = cfg.to_json();
  return ck;
}

Model from_checkpoint(const Checkpoint<float>& ck) {
  Model m;
  m.encoder = ck.encoder;
  m.temperature = {ck.temperature.log_value, ck.temperature.learnable, ck.temperature.max_value};
  m.vocab = ck.vocab;
  return m;
}

int gen_data(const RunConfig& cfg, const Paths& p) {
  const fs::path dir = make_out_dir(p.out);
  const WorldSpec world = cfg.make_world();
  const Corpus corpus = cfg.make_corpus(world);
  write_corpus(corpus, dir);
  write_world(world, dir / CorpusFiles::kWorld);
  auto manifest = report_header(cfg, data_hash(dir));
  manifest["counts"] = {{"presence", corpus.presence.size()},
                        {"absence", corpus.absence.size()},
                        {"presence_eval", corpus.presence_eval.size()},
                        {"absence_eval", corpus.absence_eval.size()},
                        {"pairs", corpus.pairs.size()},
                        {"images", corpus.images.size()}};
  write_json(dir / "manifest.json", manifest);
  std::cout << "wrote " << corpus.images.size() << " images, " << corpus.presence.size() << "+"
            << corpus.presence_eval.size() << " presence, " << corpus.absence.size() << "+"
            << corpus.absence_eval.size() << " absence, " << corpus.pairs.size() << " pairs to " << dir.string()
            << "\n";
  return 0;
}

int train_cmd(const RunConfig& cfg, const Paths& p) {
  Loaded data = load_data(p.data_dir);
  const fs::path dir = make_out_dir(p.out);
  const ExperimentConfig ec = cfg.experiment();
  const Workspace ws(std::move(data.world), std::move(data.corpus), ec);

  auto on_epoch = [&](std::size_t epoch, const Model& m) {
    if (cfg.checkpoint_every_epoch) {
      write_checkpoint(to_checkpoint(m, cfg), dir / ("checkpoint_epoch_" + std::to_string(epoch) + ".bin"));
    }
  };
  const TrainResult result = train(ws, ec, on_epoch);

  std::ostringstream log;
  log << "step,loss_p,loss_a,loss_total\n";
  log.precision(10);
  for (const auto& row : result.log) {
    log << row.step << ',' << row.losses.presence << ',' << row.losses.absence << ',' << row.losses.total << '\n';
  }
  write_text(dir / "train_log.csv", log.str());
  write_checkpoint(to_checkpoint(result.model, cfg), dir / "checkpoint.bin");
  auto meta = report_header(cfg, data.hash);
  meta["steps"] = result.log.size();
  write_json(dir / "train_meta.json", meta);

  if (result.log.empty()) {
    std::cout << "no training steps; checkpoint holds the initialization\n";
  } else {
    const auto& last = result.log.back().losses;
    std::cout << "final loss_p=" << fixed(last.presence) << " loss_a=" << fixed(last.absence)
              << " loss_total=" << fixed(last.total) << "\n";
  }
  return 0;
}

int eval_cmd(const RunConfig& flags, bool ks_given, const Paths& p) {
  if (p.checkpoint.empty()) throw Error(ErrorCode::InvalidConfig, "--checkpoint is required");
  const auto ck = read_checkpoint<float>(p.checkpoint);
  // the model only makes sense with the configuration that trained it
  RunConfig cfg = RunConfig::from_json(ck.config);
  if (ks_given) cfg.retrieval_ks = flags.retrieval_ks;
  validate_config(cfg);

  Loaded data = load_data(p.data_dir);
  const fs::path dir = make_out_dir(p.out);
  const Workspace ws(std::move(data.world), std::move(data.corpus), cfg.experiment());
  if (ws.tokenizer.words() != ck.vocab) {
    throw Error(ErrorCode::InvalidConfig, "checkpoint vocabulary does not match the data in " + p.data_dir);
  }
  const EvalReport r = evaluate(from_checkpoint(ck), ws, cfg.retrieval_ks, thread_count());

  auto report = report_header(cfg, data.hash);
  report["presence_accuracy"] = r.presence_accuracy;
  report["absence_accuracy"] = r.absence_accuracy;
  nlohmann::ordered_json recall = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.retrieval_recall) recall[std::to_string(k)] = v;
  report["retrieval_recall"] = recall;
  report["presence_count"] = r.presence_count;
  report["absence_count"] = r.absence_count;
  report["retrieval_count"] = r.retrieval_count;
  write_json(dir / "eval_report.json", report);
  std::cout << "presence " << fixed(r.presence_accuracy) << " absence " << fixed(r.absence_accuracy);
  for (const auto& [k, v] : r.retrieval_recall) std::cout << " R@" << k << " " << fixed(v);
  std::cout << "\n";
  return 0;
}

int grid_cmd(const RunConfig& cfg, const Paths& p, bool sweep) {
  Loaded data = load_data(p.data_dir);
  const fs::path dir = make_out_dir(p.out);
  const ExperimentConfig ec = cfg.experiment();
  const Workspace ws(std::move(data.world), std::move(data.corpus), ec);
  const auto rows = sweep ? layer_sweep(ws, ec, thread_count()) : ablation_grid(ws, ec, thread_count());
  const std::string name = sweep ? "layer_sweep" : "ablation";
  write_text(dir / (name + ".csv"), csv(rows));
  auto meta = report_header(cfg, data.hash);
  meta["rows"] = rows.size();
  write_json(dir / (name + "_meta.json"), meta);
  std::cout << csv(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"negation-aware contrastive fine-tuning at desk scale"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value config file; flags override it");
  app.allow_config_extras(false);

  RunConfig cfg;
  std::string terms = cfg.train.terms.describe();
  bind_config(app, cfg, terms);
  Paths paths;
  app.add_option("--data-dir", paths.data_dir, "corpus directory");
  app.add_option("--out,--out-dir", paths.out, "output directory");
  app.add_option("--checkpoint", paths.checkpoint, "checkpoint file (eval)");

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  auto* trn = app.add_subcommand("train", "train and write checkpoint + log");
  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* swp = app.add_subcommand("sweep-layers", "train one layer at a time");
  auto* abl = app.add_subcommand("ablate", "loss-term, layer-count and margin grid");
  for (auto* sub : {gen, trn, evl, swp, abl}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitIo;
  }

  try {
    cfg.train.terms = ObjectiveTerms::parse(terms);
    cfg.data_dir = paths.data_dir;
    cfg.out = paths.out;
    cfg.checkpoint = paths.checkpoint;
    if (!evl->parsed()) validate_config(cfg);
    if (gen->parsed()) return gen_data(cfg, paths);
    if (trn->parsed()) return train_cmd(cfg, paths);
    if (evl->parsed()) return eval_cmd(cfg, app.count("--retrieval_ks") > 0, paths);
    if (swp->parsed()) return grid_cmd(cfg, paths, true);
    return grid_cmd(cfg, paths, false);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_io_error() ? kExitIo : kExitDomain;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  }
}
