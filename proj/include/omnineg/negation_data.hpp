#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "omnineg/errors.hpp"

namespace omnineg {

using Tokens = std::vector<std::string>;

Tokens split_words(const std::string& text);
std::string join_words(const Tokens& tokens);

enum class NegationWord { No, Not, Without };

inline constexpr NegationWord kNegationWords[] = {NegationWord::No, NegationWord::Not,
                                                  NegationWord::Without};

std::string to_string(NegationWord nu);
NegationWord parse_negation_word(const std::string& text);

/// Caption split into a remainder template with numbered object slots ("<0>",
/// "<1>", ...) and the object words that fill them, in order of occurrence.
struct CaptionDecomposition {
  Tokens remainder;
  std::vector<std::string> objects;

  static std::string slot_marker(std::size_t index);
  /// Fills every slot with its object; inverse of `decompose_caption`.
  Tokens recompose() const;

  bool operator==(const CaptionDecomposition&) const = default;
};

CaptionDecomposition decompose_caption(const Tokens& caption, const std::set<std::string>& object_vocab);

/// "no X", "not a X" or "without a X".
Tokens apply_negation(const std::string& object, NegationWord nu);

/// Replaces slot `slot` (1-based) with its negated expression.
Tokens make_presence_negated(const CaptionDecomposition& decomp, std::size_t slot, NegationWord nu);

/// Appends the negated expression of an object the caption does not mention.
Tokens make_absence_negated(const CaptionDecomposition& decomp, const std::string& absent, NegationWord nu);

struct PresenceTriplet {
  std::string image_id;
  Tokens caption;
  Tokens negated_caption;
  std::string negated_object;
  NegationWord negation_word = NegationWord::No;

  bool operator==(const PresenceTriplet&) const = default;
};

struct AbsenceTriplet {
  std::string image_id;
  Tokens caption;
  Tokens negated_caption;
  std::string absent_object;
  NegationWord negation_word = NegationWord::No;
  std::string negative_image_id;

  bool operator==(const AbsenceTriplet&) const = default;
};

struct ImageRecord {
  std::string image_id;
  std::string scene;
  std::vector<std::string> objects;

  bool operator==(const ImageRecord&) const = default;
};

struct PairRecord {
  std::string image_id;
  Tokens caption;

  bool operator==(const PairRecord&) const = default;
};

/// Symbolic world the corpora are drawn from. Each scene carries a
/// co-occurrence distribution over a subset of the object vocabulary.
struct WorldSpec {
  std::vector<std::string> object_vocab;
  std::vector<std::string> scene_vocab;
  std::map<std::string, std::vector<std::pair<std::string, double>>> cooccurrence;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig if a distribution does not sum to 1 or names an unknown object.
  void validate() const;
  std::set<std::string> object_set() const;

  bool operator==(const WorldSpec&) const = default;
};

/// Seeded world with `n_objects` object nouns and `n_scenes` scenes, each scene
/// spreading random mass over `objects_per_scene` distinct objects.
WorldSpec make_world(std::size_t n_objects, std::size_t n_scenes, std::size_t objects_per_scene,
                     std::uint64_t seed);

/// Draws an object with positive co-occurrence mass for `scene` that is not in
/// `image_objects`, proportionally to that mass.
std::string sample_absent_object(const WorldSpec& world, const std::string& scene,
                                 const std::set<std::string>& image_objects, std::mt19937_64& rng);

struct CorpusCounts {
  std::size_t presence = 1;
  std::size_t absence = 1;
  std::size_t pairs = 1;
  std::size_t presence_eval = 0;
  std::size_t absence_eval = 0;
};

struct Corpus {
  std::vector<PresenceTriplet> presence;
  std::vector<AbsenceTriplet> absence;
  std::vector<PresenceTriplet> presence_eval;
  std::vector<AbsenceTriplet> absence_eval;
  std::vector<PairRecord> pairs;
  std::map<std::string, ImageRecord> images;

  bool operator==(const Corpus&) const = default;
};

Corpus generate_corpus(const WorldSpec& world, const CorpusCounts& counts, std::uint64_t seed);

/// Structural checks for a single record; throw InvariantViolation.
void check_presence(const PresenceTriplet& t);
void check_absence(const AbsenceTriplet& t);
/// Cross-record checks: every referenced image exists and absence negatives contain the object.
void check_corpus(const Corpus& corpus);

// Line-delimited JSON records. Writers emit one record per line; readers
// report MalformedRecord / MissingField with the 1-based line number.
std::string to_json_line(const PresenceTriplet& t);
std::string to_json_line(const AbsenceTriplet& t);
std::string to_json_line(const ImageRecord& r);
std::string to_json_line(const PairRecord& r);

std::vector<PresenceTriplet> read_presence(const std::filesystem::path& path);
std::vector<AbsenceTriplet> read_absence(const std::filesystem::path& path);
std::vector<ImageRecord> read_images(const std::filesystem::path& path);
std::vector<PairRecord> read_pairs(const std::filesystem::path& path);

struct CorpusFiles {
  static constexpr const char* kPresence = "presence.jsonl";
  static constexpr const char* kAbsence = "absence.jsonl";
  static constexpr const char* kPresenceEval = "presence_eval.jsonl";
  static constexpr const char* kAbsenceEval = "absence_eval.jsonl";
  static constexpr const char* kPairs = "pairs.jsonl";
  static constexpr const char* kImages = "images.jsonl";
  static constexpr const char* kWorld = "world.json";

  static std::vector<std::string> all();
};

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus read_corpus(const std::filesystem::path& dir);

void write_world(const WorldSpec& world, const std::filesystem::path& path);
WorldSpec read_world(const std::filesystem::path& path);

}  // namespace omnineg
