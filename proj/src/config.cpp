#include "omnineg/config.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

#include "omnineg/image_features.hpp"

namespace omnineg {

EncoderConfig RunConfig::desk_encoder() {
  EncoderConfig c;
  c.n_layers = 2;
  c.d_model = 64;
  c.n_heads = 4;
  c.d_ff = 128;
  c.d_embed = 32;
  c.max_len = 32;
  return c;
}

TrainConfig RunConfig::desk_train() {
  TrainConfig c;
  c.front_layers = 2;
  c.learning_rate = 1e-3;
  return c;
}

void RunConfig::validate() const {
  if (format_version != kFormatVersion) {
    throw Error(ErrorCode::InvalidConfig, "format_version " + std::to_string(format_version) + " is not supported");
  }
  if (world.n_objects < 2 || world.n_scenes < 1 || world.objects_per_scene < 2) {
    throw Error(ErrorCode::InvalidConfig, "world needs >= 2 objects, >= 1 scene and >= 2 objects per scene");
  }
  if (image_noise < 0) throw Error(ErrorCode::InvalidConfig, "image_noise must be >= 0");
  if (retrieval_ks.empty()) throw Error(ErrorCode::InvalidConfig, "retrieval_ks is empty");
  encoder.validate();
  train.validate(encoder.n_layers);
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& stream) {
  return fnv1a64(stream, fnv1a64(&seed, sizeof seed));
}

ExperimentConfig RunConfig::experiment() const {
  ExperimentConfig e;
  e.encoder = encoder;
  e.encoder.seed = derive_seed(seed, "encoder");
  e.train = train;
  e.train.seed = derive_seed(seed, "batches");
  e.image.seed = derive_seed(seed, "images");
  e.image.noise_scale = image_noise;
  return e;
}

WorldSpec RunConfig::make_world() const {
  return omnineg::make_world(world.n_objects, world.n_scenes, world.objects_per_scene, derive_seed(seed, "world"));
}

Corpus RunConfig::make_corpus(const WorldSpec& spec) const {
  return generate_corpus(spec, counts, derive_seed(seed, "corpus"));
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["format_version"] = format_version;
  j["seed"] = seed;
  j["n_objects"] = world.n_objects;
  j["n_scenes"] = world.n_scenes;
  j["objects_per_scene"] = world.objects_per_scene;
  j["presence_count"] = counts.presence;
  j["absence_count"] = counts.absence;
  j["pair_count"] = counts.pairs;
  j["presence_eval_count"] = counts.presence_eval;
  j["absence_eval_count"] = counts.absence_eval;
  j["n_layers"] = encoder.n_layers;
  j["d_model"] = encoder.d_model;
  j["n_heads"] = encoder.n_heads;
  j["d_ff"] = encoder.d_ff;
  j["d_embed"] = encoder.d_embed;
  j["max_len"] = encoder.max_len;
  j["batch_size"] = train.batch_size;
  j["epochs"] = train.epochs;
  j["learning_rate"] = train.learning_rate;
  j["front_layers"] = train.front_layers;
  j["margin"] = train.margin;
  j["beta1"] = train.beta1;
  j["beta2"] = train.beta2;
  j["epsilon"] = train.epsilon;
  j["weight_decay"] = train.weight_decay;
  j["a3_use_temperature"] = train.a3_use_temperature;
  j["learnable_temperature"] = train.learnable_temperature;
  j["terms"] = train.terms.describe();
  j["ablation_semantics"] = "mean over remaining terms";
  j["image_noise"] = image_noise;
  j["retrieval_ks"] = retrieval_ks;
  j["checkpoint_every_epoch"] = checkpoint_every_epoch;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.format_version = j.at("format_version").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.world.n_objects = j.at("n_objects").get<std::size_t>();
    c.world.n_scenes = j.at("n_scenes").get<std::size_t>();
    c.world.objects_per_scene = j.at("objects_per_scene").get<std::size_t>();
    c.counts.presence = j.at("presence_count").get<std::size_t>();
    c.counts.absence = j.at("absence_count").get<std::size_t>();
    c.counts.pairs = j.at("pair_count").get<std::size_t>();
    c.counts.presence_eval = j.at("presence_eval_count").get<std::size_t>();
    c.counts.absence_eval = j.at("absence_eval_count").get<std::size_t>();
    c.encoder.n_layers = j.at("n_layers").get<std::size_t>();
    c.encoder.d_model = j.at("d_model").get<std::size_t>();
    c.encoder.n_heads = j.at("n_heads").get<std::size_t>();
    c.encoder.d_ff = j.at("d_ff").get<std::size_t>();
    c.encoder.d_embed = j.at("d_embed").get<std::size_t>();
    c.encoder.max_len = j.at("max_len").get<std::size_t>();
    c.train.batch_size = j.at("batch_size").get<std::size_t>();
    c.train.epochs = j.at("epochs").get<std::size_t>();
    c.train.learning_rate = j.at("learning_rate").get<double>();
    c.train.front_layers = j.at("front_layers").get<std::size_t>();
    c.train.margin = j.at("margin").get<double>();
    c.train.beta1 = j.at("beta1").get<double>();
    c.train.beta2 = j.at("beta2").get<double>();
    c.train.epsilon = j.at("epsilon").get<double>();
    c.train.weight_decay = j.at("weight_decay").get<double>();
    c.train.a3_use_temperature = j.at("a3_use_temperature").get<bool>();
    c.train.learnable_temperature = j.at("learnable_temperature").get<bool>();
    c.train.terms = ObjectiveTerms::parse(j.at("terms").get<std::string>());
    c.image_noise = j.at("image_noise").get<double>();
    c.retrieval_ks = j.at("retrieval_ks").get<std::vector<std::size_t>>();
    c.checkpoint_every_epoch = j.at("checkpoint_every_epoch").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config echo: ") + e.what());
  }
  return c;
}

std::string data_hash(const std::filesystem::path& dir) {
  std::uint64_t hash = fnv1a64(std::string{});
  for (const auto& name : CorpusFiles::all()) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + (dir / name).string());
    const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    hash = fnv1a64(name, hash);
    hash = fnv1a64(bytes, hash);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

nlohmann::ordered_json report_header(const RunConfig& cfg, const std::string& hash) {
  nlohmann::ordered_json j;
  j["format_version"] = kFormatVersion;
  j["seed"] = cfg.seed;
  j["data_hash"] = hash;
  j["config"] = cfg.to_json();
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace omnineg
