#include "omnineg/negation_data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace omnineg {

namespace {

using ordered_json = nlohmann::ordered_json;

const std::vector<std::string>& object_nouns() {
  static const std::vector<std::string> nouns = {
      "dog",      "cat",     "bench",    "table",    "chair",   "car",      "bicycle", "bird",
      "horse",    "cup",     "bottle",   "laptop",   "phone",   "book",     "clock",   "vase",
      "lamp",     "sofa",    "bed",      "pillow",   "umbrella", "kite",    "boat",    "truck",
      "bus",      "train",   "tree",     "flower",   "plate",   "fork",     "knife",   "spoon",
      "bowl",     "banana",  "orange",   "pizza",    "cake",    "sandwich", "ball",    "racket",
      "skateboard", "surfboard", "backpack", "suitcase", "tie", "hat",     "fence",   "sign",
      "hydrant",  "cow",     "sheep",    "elephant", "giraffe", "zebra",   "bear",    "mirror",
      "towel",    "sink",    "oven",     "fridge",   "toaster", "microwave", "rug",   "candle",
      "basket",   "bucket",  "ladder",   "shovel",   "tent",    "blanket", "guitar",  "drum",
      "camera",   "remote",  "keyboard", "mouse",    "monitor", "printer", "scissors", "broom"};
  return nouns;
}

const std::vector<std::string>& scene_nouns() {
  static const std::vector<std::string> scenes = {
      "park",   "kitchen", "street", "beach",   "office", "bedroom", "garden",
      "market", "station", "farm",   "library", "garage", "harbor",  "classroom",
      "forest", "cafe",    "yard",   "studio",  "mall",   "airport"};
  return scenes;
}

const std::vector<std::string>& connectors() {
  static const std::vector<std::string> words = {"and", "near", "beside", "on"};
  return words;
}

const std::vector<std::string>& modifiers() {
  static const std::vector<std::string> words = {"small", "large", "red", "white", "old", "wooden"};
  return words;
}

Error record_error(ErrorCode code, const std::filesystem::path& path, std::size_t line,
                   const std::string& what) {
  return Error(code, path.filename().string() + ":" + std::to_string(line) + ": " + what);
}

template <typename T>
T field(const nlohmann::json& j, const char* name, const std::filesystem::path& path, std::size_t line) {
  auto it = j.find(name);
  if (it == j.end()) throw record_error(ErrorCode::MissingField, path, line, name);
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw record_error(ErrorCode::MalformedRecord, path, line, std::string("bad type for ") + name);
  }
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

/// Calls `fn(json, line_number)` for each non-empty line.
template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  auto in = open_input(path);
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw record_error(ErrorCode::MalformedRecord, path, line, e.what());
    }
    if (!j.is_object()) throw record_error(ErrorCode::MalformedRecord, path, line, "not an object");
    fn(j, line);
  }
}

void check_type(const nlohmann::json& j, const char* expected, const std::filesystem::path& path,
                std::size_t line) {
  const auto type = field<std::string>(j, "type", path, line);
  if (type != expected) {
    throw record_error(ErrorCode::MalformedRecord, path, line, "expected type " + std::string(expected));
  }
}

NegationWord negation_field(const nlohmann::json& j, const std::filesystem::path& path, std::size_t line) {
  const auto text = field<std::string>(j, "negation_word", path, line);
  try {
    return parse_negation_word(text);
  } catch (const Error&) {
    throw record_error(ErrorCode::MalformedRecord, path, line, "unknown negation word " + text);
  }
}

template <typename T>
void write_lines(const std::vector<T>& records, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const auto& r : records) out << to_json_line(r) << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

/// Draws `count` distinct objects from a scene distribution, proportionally to mass.
std::vector<std::string> draw_objects(const std::vector<std::pair<std::string, double>>& dist,
                                      std::size_t count, std::mt19937_64& rng) {
  std::vector<double> weights;
  for (const auto& [_, w] : dist) weights.push_back(w);
  std::vector<std::string> picked;
  count = std::min(count, dist.size());
  while (picked.size() < count) {
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    const std::size_t k = pick(rng);
    picked.push_back(dist[k].first);
    weights[k] = 0.0;
  }
  return picked;
}

Tokens realize_caption(const std::vector<std::string>& objects, const std::string& scene,
                       std::mt19937_64& rng) {
  Tokens phrase;
  std::uniform_int_distribution<std::size_t> connector(0, connectors().size() - 1);
  std::uniform_int_distribution<std::size_t> modifier(0, 2 * modifiers().size() - 1);
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (i > 0) phrase.push_back(connectors()[connector(rng)]);
    phrase.push_back("a");
    // half of the objects carry a modifier the image does not encode
    if (const std::size_t m = modifier(rng); m < modifiers().size()) phrase.push_back(modifiers()[m]);
    phrase.push_back(objects[i]);
  }
  std::uniform_int_distribution<int> form(0, 3);
  Tokens out;
  auto append = [&out](std::initializer_list<std::string> words) { out.insert(out.end(), words); };
  switch (form(rng)) {
    case 0:
      append({"a", "photo", "of"});
      out.insert(out.end(), phrase.begin(), phrase.end());
      append({"in", "the", scene});
      break;
    case 1:
      out.insert(out.end(), phrase.begin(), phrase.end());
      append({"at", "the", scene});
      break;
    case 2:
      append({"there", "is"});
      out.insert(out.end(), phrase.begin(), phrase.end());
      append({"in", "this", scene});
      break;
    default:
      append({"a", scene, "with"});
      out.insert(out.end(), phrase.begin(), phrase.end());
      break;
  }
  return out;
}

NegationWord draw_negation(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 2);
  return kNegationWords[pick(rng)];
}

}  // namespace

Tokens split_words(const std::string& text) {
  Tokens out;
  std::istringstream in(text);
  std::string word;
  while (in >> word) out.push_back(word);
  return out;
}

std::string join_words(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::string to_string(NegationWord nu) {
  switch (nu) {
    case NegationWord::No: return "no";
    case NegationWord::Not: return "not";
    case NegationWord::Without: return "without";
  }
  return "no";
}

NegationWord parse_negation_word(const std::string& text) {
  if (text == "no") return NegationWord::No;
  if (text == "not") return NegationWord::Not;
  if (text == "without") return NegationWord::Without;
  throw Error(ErrorCode::InvalidArgument, "unknown negation word '" + text + "'");
}

std::string CaptionDecomposition::slot_marker(std::size_t index) {
  return "<" + std::to_string(index) + ">";
}

Tokens CaptionDecomposition::recompose() const {
  Tokens out;
  std::size_t next = 0;
  for (const auto& token : remainder) {
    if (next < objects.size() && token == slot_marker(next)) {
      out.push_back(objects[next++]);
    } else {
      out.push_back(token);
    }
  }
  return out;
}

CaptionDecomposition decompose_caption(const Tokens& caption, const std::set<std::string>& object_vocab) {
  CaptionDecomposition d;
  for (const auto& token : caption) {
    if (object_vocab.count(token)) {
      d.remainder.push_back(CaptionDecomposition::slot_marker(d.objects.size()));
      d.objects.push_back(token);
    } else {
      d.remainder.push_back(token);
    }
  }
  return d;
}

Tokens apply_negation(const std::string& object, NegationWord nu) {
  switch (nu) {
    case NegationWord::No: return {"no", object};
    case NegationWord::Not: return {"not", "a", object};
    case NegationWord::Without: return {"without", "a", object};
  }
  return {};
}

Tokens make_presence_negated(const CaptionDecomposition& decomp, std::size_t slot, NegationWord nu) {
  if (decomp.objects.empty()) throw Error(ErrorCode::EmptyObjectSet, "caption has no object to negate");
  if (slot < 1 || slot > decomp.objects.size()) {
    throw Error(ErrorCode::SlotOutOfRange,
                "slot " + std::to_string(slot) + " of " + std::to_string(decomp.objects.size()));
  }
  const std::string target = CaptionDecomposition::slot_marker(slot - 1);
  Tokens out;
  std::size_t next = 0;
  for (const auto& token : decomp.remainder) {
    if (next < decomp.objects.size() && token == CaptionDecomposition::slot_marker(next)) {
      if (token == target) {
        const auto negated = apply_negation(decomp.objects[next], nu);
        out.insert(out.end(), negated.begin(), negated.end());
      } else {
        out.push_back(decomp.objects[next]);
      }
      ++next;
    } else {
      out.push_back(token);
    }
  }
  return out;
}

Tokens make_absence_negated(const CaptionDecomposition& decomp, const std::string& absent, NegationWord nu) {
  if (std::find(decomp.objects.begin(), decomp.objects.end(), absent) != decomp.objects.end()) {
    throw Error(ErrorCode::ObjectPresent, "'" + absent + "' already appears in the caption");
  }
  Tokens out = decomp.recompose();
  const auto negated = apply_negation(absent, nu);
  out.insert(out.end(), negated.begin(), negated.end());
  return out;
}

void WorldSpec::validate() const {
  const auto objects = object_set();
  if (objects.size() != object_vocab.size()) throw Error(ErrorCode::InvalidConfig, "duplicate object words");
  for (const auto& scene : scene_vocab) {
    auto it = cooccurrence.find(scene);
    if (it == cooccurrence.end()) throw Error(ErrorCode::InvalidConfig, "scene '" + scene + "' has no distribution");
    double total = 0;
    for (const auto& [object, p] : it->second) {
      if (!objects.count(object)) {
        throw Error(ErrorCode::InvalidConfig, "scene '" + scene + "' names unknown object '" + object + "'");
      }
      if (p < 0) throw Error(ErrorCode::InvalidConfig, "negative co-occurrence mass in '" + scene + "'");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw Error(ErrorCode::InvalidConfig, "distribution of '" + scene + "' sums to " + std::to_string(total));
    }
  }
  if (cooccurrence.size() != scene_vocab.size()) {
    throw Error(ErrorCode::InvalidConfig, "distribution for a scene outside scene_vocab");
  }
}

std::set<std::string> WorldSpec::object_set() const {
  return {object_vocab.begin(), object_vocab.end()};
}

WorldSpec make_world(std::size_t n_objects, std::size_t n_scenes, std::size_t objects_per_scene,
                     std::uint64_t seed) {
  if (n_objects < 2 || n_scenes < 1 || objects_per_scene < 2 || objects_per_scene > n_objects) {
    throw Error(ErrorCode::InvalidConfig, "world needs >= 2 objects, >= 1 scene, 2 <= objects_per_scene <= objects");
  }
  WorldSpec world;
  world.seed = seed;
  for (std::size_t i = 0; i < n_objects; ++i) {
    world.object_vocab.push_back(i < object_nouns().size() ? object_nouns()[i]
                                                           : "object" + std::to_string(i));
  }
  for (std::size_t i = 0; i < n_scenes; ++i) {
    world.scene_vocab.push_back(i < scene_nouns().size() ? scene_nouns()[i] : "scene" + std::to_string(i));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mass(0.2, 1.0);
  std::vector<std::size_t> order(n_objects);
  for (const auto& scene : world.scene_vocab) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::pair<std::string, double>> dist;
    double total = 0;
    for (std::size_t k = 0; k < objects_per_scene; ++k) {
      const double w = mass(rng);
      dist.emplace_back(world.object_vocab[order[k]], w);
      total += w;
    }
    for (auto& entry : dist) entry.second /= total;
    world.cooccurrence[scene] = std::move(dist);
  }
  return world;
}

std::string sample_absent_object(const WorldSpec& world, const std::string& scene,
                                 const std::set<std::string>& image_objects, std::mt19937_64& rng) {
  auto it = world.cooccurrence.find(scene);
  if (it == world.cooccurrence.end()) throw Error(ErrorCode::InvalidArgument, "unknown scene '" + scene + "'");
  std::vector<std::string> candidates;
  std::vector<double> weights;
  for (const auto& [object, p] : it->second) {
    if (p > 0 && !image_objects.count(object)) {
      candidates.push_back(object);
      weights.push_back(p);
    }
  }
  if (candidates.empty()) {
    throw Error(ErrorCode::NoPlausibleObject, "every plausible object of '" + scene + "' is present");
  }
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  return candidates[pick(rng)];
}

Corpus generate_corpus(const WorldSpec& world, const CorpusCounts& counts, std::uint64_t seed) {
  world.validate();
  if (world.object_vocab.size() < 10 || world.scene_vocab.size() < 2) {
    throw Error(ErrorCode::InvalidConfig, "corpus generation needs >= 10 objects and >= 2 scenes");
  }
  if (counts.presence < 1 || counts.absence < 1 || counts.pairs < 1) {
    throw Error(ErrorCode::InvalidConfig, "presence, absence and pair counts must be >= 1");
  }
  const auto vocab = world.object_set();
  std::mt19937_64 rng(seed);
  Corpus corpus;
  std::size_t next_id = 0;
  std::uniform_int_distribution<std::size_t> scene_pick(0, world.scene_vocab.size() - 1);
  std::uniform_int_distribution<std::size_t> object_count(1, 4);

  auto new_image = [&](const std::string& scene, std::vector<std::string> objects) -> const ImageRecord& {
    char id[32];
    std::snprintf(id, sizeof id, "img%07zu", next_id++);
    ImageRecord record{id, scene, std::move(objects)};
    return corpus.images.emplace(record.image_id, std::move(record)).first->second;
  };
  auto draw_image = [&](std::size_t reserve_absent) -> const ImageRecord& {
    const auto& scene = world.scene_vocab[scene_pick(rng)];
    const auto& dist = world.cooccurrence.at(scene);
    const std::size_t limit = dist.size() > reserve_absent ? dist.size() - reserve_absent : 1;
    return new_image(scene, draw_objects(dist, std::min(object_count(rng), limit), rng));
  };

  auto make_presence = [&]() {
    const ImageRecord& image = draw_image(0);
    const Tokens caption = realize_caption(image.objects, image.scene, rng);
    const auto decomp = decompose_caption(caption, vocab);
    std::uniform_int_distribution<std::size_t> slot_pick(1, decomp.objects.size());
    const std::size_t slot = slot_pick(rng);
    const NegationWord nu = draw_negation(rng);
    PresenceTriplet t{image.image_id, caption, make_presence_negated(decomp, slot, nu),
                      decomp.objects[slot - 1], nu};
    check_presence(t);
    return t;
  };

  auto make_absence = [&]() {
    const ImageRecord& image = draw_image(1);
    const Tokens caption = realize_caption(image.objects, image.scene, rng);
    const auto decomp = decompose_caption(caption, vocab);
    const std::set<std::string> present(image.objects.begin(), image.objects.end());
    const std::string absent = sample_absent_object(world, image.scene, present, rng);
    const NegationWord nu = draw_negation(rng);
    const std::string positive_id = image.image_id;
    const std::string scene = image.scene;
    std::vector<std::string> with_absent = image.objects;
    with_absent.push_back(absent);
    const ImageRecord& negative = new_image(scene, std::move(with_absent));
    AbsenceTriplet t{positive_id, caption, make_absence_negated(decomp, absent, nu), absent, nu,
                     negative.image_id};
    check_absence(t);
    return t;
  };

  for (std::size_t i = 0; i < counts.presence; ++i) corpus.presence.push_back(make_presence());
  for (std::size_t i = 0; i < counts.absence; ++i) corpus.absence.push_back(make_absence());
  for (std::size_t i = 0; i < counts.presence_eval; ++i) corpus.presence_eval.push_back(make_presence());
  for (std::size_t i = 0; i < counts.absence_eval; ++i) corpus.absence_eval.push_back(make_absence());
  for (std::size_t i = 0; i < counts.pairs; ++i) {
    const ImageRecord& image = draw_image(0);
    corpus.pairs.push_back({image.image_id, realize_caption(image.objects, image.scene, rng)});
  }
  check_corpus(corpus);
  return corpus;
}

void check_presence(const PresenceTriplet& t) {
  if (t.caption == t.negated_caption) {
    throw Error(ErrorCode::InvariantViolation, t.image_id + ": negated caption equals caption");
  }
  if (std::find(t.caption.begin(), t.caption.end(), t.negated_object) == t.caption.end()) {
    throw Error(ErrorCode::InvariantViolation, t.image_id + ": negated object not in caption");
  }
  const auto negated = apply_negation(t.negated_object, t.negation_word);
  if (std::search(t.negated_caption.begin(), t.negated_caption.end(), negated.begin(), negated.end()) ==
      t.negated_caption.end()) {
    throw Error(ErrorCode::InvariantViolation, t.image_id + ": negated expression missing");
  }
}

void check_absence(const AbsenceTriplet& t) {
  if (std::find(t.caption.begin(), t.caption.end(), t.absent_object) != t.caption.end()) {
    throw Error(ErrorCode::InvariantViolation, t.image_id + ": absent object occurs in caption");
  }
  Tokens expected = t.caption;
  const auto negated = apply_negation(t.absent_object, t.negation_word);
  expected.insert(expected.end(), negated.begin(), negated.end());
  if (expected != t.negated_caption) {
    throw Error(ErrorCode::InvariantViolation, t.image_id + ": negated caption is not caption + negation");
  }
}

void check_corpus(const Corpus& corpus) {
  auto image_of = [&](const std::string& id) -> const ImageRecord& {
    auto it = corpus.images.find(id);
    if (it == corpus.images.end()) throw Error(ErrorCode::UnknownImage, "unknown image '" + id + "'");
    return it->second;
  };
  auto has = [](const ImageRecord& image, const std::string& object) {
    return std::find(image.objects.begin(), image.objects.end(), object) != image.objects.end();
  };
  for (const auto* split : {&corpus.presence, &corpus.presence_eval}) {
    for (const auto& t : *split) {
      check_presence(t);
      if (!has(image_of(t.image_id), t.negated_object)) {
        throw Error(ErrorCode::InvariantViolation, t.image_id + ": negated object not in image");
      }
    }
  }
  for (const auto* split : {&corpus.absence, &corpus.absence_eval}) {
    for (const auto& t : *split) {
      check_absence(t);
      if (has(image_of(t.image_id), t.absent_object)) {
        throw Error(ErrorCode::InvariantViolation, t.image_id + ": absent object is in the image");
      }
      if (!has(image_of(t.negative_image_id), t.absent_object)) {
        throw Error(ErrorCode::InvariantViolation,
                    t.negative_image_id + ": negative image lacks the absent object");
      }
    }
  }
  for (const auto& p : corpus.pairs) image_of(p.image_id);
}

std::string to_json_line(const PresenceTriplet& t) {
  ordered_json j;
  j["type"] = "presence";
  j["image_id"] = t.image_id;
  j["caption"] = join_words(t.caption);
  j["negated_caption"] = join_words(t.negated_caption);
  j["negated_object"] = t.negated_object;
  j["negation_word"] = to_string(t.negation_word);
  return j.dump();
}

std::string to_json_line(const AbsenceTriplet& t) {
  ordered_json j;
  j["type"] = "absence";
  j["image_id"] = t.image_id;
  j["caption"] = join_words(t.caption);
  j["negated_caption"] = join_words(t.negated_caption);
  j["absent_object"] = t.absent_object;
  j["negation_word"] = to_string(t.negation_word);
  j["negative_image_id"] = t.negative_image_id;
  return j.dump();
}

std::string to_json_line(const ImageRecord& r) {
  ordered_json j;
  j["image_id"] = r.image_id;
  j["scene"] = r.scene;
  j["objects"] = r.objects;
  return j.dump();
}

std::string to_json_line(const PairRecord& r) {
  ordered_json j;
  j["image_id"] = r.image_id;
  j["caption"] = join_words(r.caption);
  return j.dump();
}

std::vector<PresenceTriplet> read_presence(const std::filesystem::path& path) {
  std::vector<PresenceTriplet> out;
  for_each_record(path, [&](const nlohmann::json& j, std::size_t line) {
    check_type(j, "presence", path, line);
    PresenceTriplet t;
    t.image_id = field<std::string>(j, "image_id", path, line);
    t.caption = split_words(field<std::string>(j, "caption", path, line));
    t.negated_caption = split_words(field<std::string>(j, "negated_caption", path, line));
    t.negated_object = field<std::string>(j, "negated_object", path, line);
    t.negation_word = negation_field(j, path, line);
    try {
      check_presence(t);
    } catch (const Error& e) {
      throw record_error(ErrorCode::InvariantViolation, path, line, e.what());
    }
    out.push_back(std::move(t));
  });
  return out;
}

std::vector<AbsenceTriplet> read_absence(const std::filesystem::path& path) {
  std::vector<AbsenceTriplet> out;
  for_each_record(path, [&](const nlohmann::json& j, std::size_t line) {
    check_type(j, "absence", path, line);
    AbsenceTriplet t;
    t.image_id = field<std::string>(j, "image_id", path, line);
    t.caption = split_words(field<std::string>(j, "caption", path, line));
    t.negated_caption = split_words(field<std::string>(j, "negated_caption", path, line));
    t.absent_object = field<std::string>(j, "absent_object", path, line);
    t.negation_word = negation_field(j, path, line);
    t.negative_image_id = field<std::string>(j, "negative_image_id", path, line);
    try {
      check_absence(t);
    } catch (const Error& e) {
      throw record_error(ErrorCode::InvariantViolation, path, line, e.what());
    }
    out.push_back(std::move(t));
  });
  return out;
}

std::vector<ImageRecord> read_images(const std::filesystem::path& path) {
  std::vector<ImageRecord> out;
  for_each_record(path, [&](const nlohmann::json& j, std::size_t line) {
    out.push_back({field<std::string>(j, "image_id", path, line), field<std::string>(j, "scene", path, line),
                   field<std::vector<std::string>>(j, "objects", path, line)});
  });
  return out;
}

std::vector<PairRecord> read_pairs(const std::filesystem::path& path) {
  std::vector<PairRecord> out;
  for_each_record(path, [&](const nlohmann::json& j, std::size_t line) {
    out.push_back({field<std::string>(j, "image_id", path, line),
                   split_words(field<std::string>(j, "caption", path, line))});
  });
  return out;
}

std::vector<std::string> CorpusFiles::all() {
  return {kWorld, kImages, kPresence, kAbsence, kPresenceEval, kAbsenceEval, kPairs};
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::vector<ImageRecord> images;
  images.reserve(corpus.images.size());
  for (const auto& [_, record] : corpus.images) images.push_back(record);
  write_lines(images, dir / CorpusFiles::kImages);
  write_lines(corpus.presence, dir / CorpusFiles::kPresence);
  write_lines(corpus.absence, dir / CorpusFiles::kAbsence);
  write_lines(corpus.presence_eval, dir / CorpusFiles::kPresenceEval);
  write_lines(corpus.absence_eval, dir / CorpusFiles::kAbsenceEval);
  write_lines(corpus.pairs, dir / CorpusFiles::kPairs);
}

Corpus read_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  for (auto& record : read_images(dir / CorpusFiles::kImages)) {
    const std::string id = record.image_id;
    if (!corpus.images.emplace(id, std::move(record)).second) {
      throw Error(ErrorCode::InvariantViolation, "duplicate image id '" + id + "'");
    }
  }
  corpus.presence = read_presence(dir / CorpusFiles::kPresence);
  corpus.absence = read_absence(dir / CorpusFiles::kAbsence);
  corpus.presence_eval = read_presence(dir / CorpusFiles::kPresenceEval);
  corpus.absence_eval = read_absence(dir / CorpusFiles::kAbsenceEval);
  corpus.pairs = read_pairs(dir / CorpusFiles::kPairs);
  check_corpus(corpus);
  return corpus;
}

void write_world(const WorldSpec& world, const std::filesystem::path& path) {
  ordered_json j;
  j["seed"] = world.seed;
  j["objects"] = world.object_vocab;
  j["scenes"] = world.scene_vocab;
  ordered_json co = ordered_json::object();
  for (const auto& scene : world.scene_vocab) {
    ordered_json dist = ordered_json::array();
    for (const auto& [object, p] : world.cooccurrence.at(scene)) dist.push_back({object, p});
    co[scene] = std::move(dist);
  }
  j["cooccurrence"] = std::move(co);
  auto out = open_output(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

WorldSpec read_world(const std::filesystem::path& path) {
  auto in = open_input(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MalformedRecord, path.filename().string() + ": " + e.what());
  }
  WorldSpec world;
  world.seed = field<std::uint64_t>(j, "seed", path, 1);
  world.object_vocab = field<std::vector<std::string>>(j, "objects", path, 1);
  world.scene_vocab = field<std::vector<std::string>>(j, "scenes", path, 1);
  const auto co = field<nlohmann::json>(j, "cooccurrence", path, 1);
  for (const auto& [scene, dist] : co.items()) {
    auto& entries = world.cooccurrence[scene];
    for (const auto& pair : dist) entries.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<double>());
  }
  world.validate();
  return world;
}

}  // namespace omnineg
