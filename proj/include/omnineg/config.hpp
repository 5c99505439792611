#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "omnineg/negation_data.hpp"
#include "omnineg/pipeline.hpp"

namespace omnineg {

inline constexpr int kFormatVersion = 1;

struct WorldConfig {
  std::size_t n_objects = 50;
  std::size_t n_scenes = 10;
  std::size_t objects_per_scene = 4;
};

/// Every knob of a run in one document. Sub-seeds for the world, corpus,
/// encoder, image table and batch order are derived from `seed`. The echo
/// leaves out the path fields so relocated reruns produce identical reports.
struct RunConfig {
  int format_version = kFormatVersion;
  std::uint64_t seed = 0;
  WorldConfig world;
  CorpusCounts counts{2000, 2000, 1000, 500, 500};
  EncoderConfig encoder = desk_encoder();
  TrainConfig train = desk_train();
  double image_noise = 0.1;
  std::vector<std::size_t> retrieval_ks{1, 5, 10};
  bool checkpoint_every_epoch = false;
  std::string data_dir;
  std::string out;
  std::string checkpoint;

  static EncoderConfig desk_encoder();
  static TrainConfig desk_train();

  void validate() const;
  ExperimentConfig experiment() const;
  WorldSpec make_world() const;
  Corpus make_corpus(const WorldSpec& world) const;

  nlohmann::ordered_json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

std::uint64_t derive_seed(std::uint64_t seed, const std::string& stream);

/// FNV-1a over the corpus files of `dir`, in CorpusFiles::all() order, as 16 hex digits.
std::string data_hash(const std::filesystem::path& dir);

/// format_version, config echo, seed and data hash shared by every output.
nlohmann::ordered_json report_header(const RunConfig& cfg, const std::string& data_hash);

/// Writes text to `path`, throwing Io on failure.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace omnineg
