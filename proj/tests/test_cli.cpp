#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "omnineg/checkpoint.hpp"
#include "omnineg/config.hpp"

using namespace omnineg;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "omnineg_cli_test";

const char* kConfig = R"(seed = 3
n_objects = 20
n_scenes = 3
objects_per_scene = 4
presence_count = 48
absence_count = 48
pair_count = 40
presence_eval_count = 30
absence_eval_count = 30
n_layers = 2
d_model = 16
n_heads = 2
d_ff = 32
d_embed = 8
batch_size = 8
epochs = 1
front_layers = 1
retrieval_ks = [1, 5]
)";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t lines(const fs::path& p) {
  const auto text = slurp(p);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

/// Runs the CLI with `args`, returning its exit status; stderr lands in kRoot/stderr.txt.
int run(const std::string& args) {
  const std::string cmd = std::string("OMNINEG_THREADS=1 ") + OMNINEG_CLI + " " + args + " > " +
                          (kRoot / "stdout.txt").string() + " 2> " + (kRoot / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string stderr_text() { return slurp(kRoot / "stderr.txt"); }

/// Fresh scratch area holding the shared config file.
fs::path setup() {
  fs::remove_all(kRoot);
  fs::create_directories(kRoot);
  std::ofstream(kRoot / "run.toml") << kConfig;
  return kRoot;
}

std::string cfg() { return "--config " + (kRoot / "run.toml").string(); }

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

}  // namespace

TEST_CASE("gen-data writes a corpus matching its manifest") {
  const auto root = setup();
  REQUIRE(run("gen-data " + cfg() + " --out-dir " + (root / "d1").string()) == 0);
  REQUIRE(run("gen-data " + cfg() + " --out-dir " + (root / "d2").string()) == 0);
  const auto manifest = read_json(root / "d1/manifest.json");
  CHECK(manifest["counts"]["presence"] == lines(root / "d1" / CorpusFiles::kPresence));
  CHECK(manifest["counts"]["absence"] == lines(root / "d1" / CorpusFiles::kAbsence));
  CHECK(manifest["counts"]["pairs"] == lines(root / "d1" / CorpusFiles::kPairs));
  CHECK(manifest["counts"]["presence_eval"] == lines(root / "d1" / CorpusFiles::kPresenceEval));
  CHECK(manifest["counts"]["absence_eval"] == lines(root / "d1" / CorpusFiles::kAbsenceEval));
  CHECK(manifest["counts"]["images"] == lines(root / "d1" / CorpusFiles::kImages));
  CHECK(manifest["counts"]["presence"] == 48);
  CHECK(manifest["seed"] == 3);
  CHECK(manifest["data_hash"] == data_hash(root / "d1"));
  for (const auto& name : CorpusFiles::all()) CHECK(slurp(root / "d1" / name) == slurp(root / "d2" / name));
  CHECK(slurp(root / "d1/manifest.json") == slurp(root / "d2/manifest.json"));

  // a different seed gives a different corpus
  REQUIRE(run("gen-data " + cfg() + " --seed 4 --out-dir " + (root / "d3").string()) == 0);
  CHECK(slurp(root / "d1" / CorpusFiles::kPresence) != slurp(root / "d3" / CorpusFiles::kPresence));
}

TEST_CASE("configuration and i/o errors exit with 2") {
  const auto root = setup();
  std::ofstream(root / "file") << "x";
  CHECK(run("gen-data " + cfg() + " --out-dir " + (root / "file/sub").string()) == 2);
  CHECK(run("gen-data " + cfg() + " --bogus 1 --out-dir " + (root / "d").string()) == 2);
  std::ofstream(root / "extra.toml") << kConfig << "unknown_key = 1\n";
  CHECK(run("gen-data --config " + (root / "extra.toml").string() + " --out-dir " + (root / "d").string()) == 2);
  CHECK(run("gen-data " + cfg() + " --front_layers 3 --out-dir " + (root / "d").string()) == 2);
  CHECK(run("gen-data " + cfg() + " --terms p1,p9 --out-dir " + (root / "d").string()) == 2);
  CHECK(run("gen-data " + cfg()) == 2);
  CHECK(run("") == 2);

  REQUIRE(run("gen-data " + cfg() + " --out-dir " + (root / "d").string()) == 0);
  fs::remove(root / "d" / CorpusFiles::kAbsence);
  CHECK(run("train " + cfg() + " --data-dir " + (root / "d").string() + " --out " + (root / "t").string()) == 2);
  CHECK(stderr_text().find(CorpusFiles::kAbsence) != std::string::npos);
  CHECK(run("eval --checkpoint " + (root / "none.bin").string() + " --data-dir " + (root / "d").string() +
            " --out " + (root / "e").string()) == 2);
}

TEST_CASE("data invariant violations exit with 1") {
  const auto root = setup();
  REQUIRE(run("gen-data " + cfg() + " --out-dir " + (root / "d").string()) == 0);
  const auto path = root / "d" / CorpusFiles::kPresence;
  std::istringstream in(slurp(path));
  std::ostringstream out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    auto j = nlohmann::ordered_json::parse(line);
    if (first) j["negated_caption"] = j["caption"];
    first = false;
    out << j.dump() << "\n";
  }
  std::ofstream(path, std::ios::binary | std::ios::trunc) << out.str();
  CHECK(run("train " + cfg() + " --data-dir " + (root / "d").string() + " --out " + (root / "t").string()) == 1);
}

TEST_CASE("train, eval and the grids") {
  const auto root = setup();
  const std::string data = " --data-dir " + (root / "d").string();
  REQUIRE(run("gen-data " + cfg() + " --out-dir " + (root / "d").string()) == 0);
  REQUIRE(run("train " + cfg() + data + " --out " + (root / "t").string()) == 0);
  CHECK(slurp(root / "stdout.txt").find("final loss_p=") != std::string::npos);
  CHECK(lines(root / "t/train_log.csv") == 1 + 6);  // header + 48 / 8 steps
  const auto meta = read_json(root / "t/train_meta.json");
  CHECK(meta["steps"] == 6);

  SUBCASE("the report echoes the effective config") {
    REQUIRE(run("eval --checkpoint " + (root / "t/checkpoint.bin").string() + data + " --out " +
                (root / "e").string()) == 0);
    const auto report = read_json(root / "e/eval_report.json");
    for (const char* key : {"presence_accuracy", "absence_accuracy"}) {
      CHECK(report[key].get<double>() >= 0.0);
      CHECK(report[key].get<double>() <= 1.0);
    }
    for (const auto& [k, v] : report["retrieval_recall"].items()) {
      CHECK(v.get<double>() >= 0.0);
      CHECK(v.get<double>() <= 1.0);
    }
    CHECK(report["retrieval_recall"].size() == 2);
    CHECK(report["presence_count"] == 30);
    CHECK(report["config"] == meta["config"]);
    CHECK(report["data_hash"] == meta["data_hash"]);
    CHECK(report["format_version"] == kFormatVersion);

    // the echo is the file merged with flags
    const auto& echo = meta["config"];
    CHECK(echo["d_model"] == 16);
    CHECK(echo["terms"] == "p1,p2,p3,a1,a2,a3");
    CHECK(nlohmann::json::parse(RunConfig::from_json(echo).to_json().dump()) == echo);
    REQUIRE(run("train " + cfg() + " --margin 0.5" + data + " --out " + (root / "t2").string()) == 0);
    CHECK(read_json(root / "t2/train_meta.json")["config"]["margin"] == 0.5);

    // k beyond the retrieval set is a domain error
    CHECK(run("eval --checkpoint " + (root / "t/checkpoint.bin").string() + " --retrieval_ks 41" + data +
              " --out " + (root / "e2").string()) == 1);
  }

  SUBCASE("epochs 0 leaves the initialization") {
    REQUIRE(run("train " + cfg() + " --epochs 0" + data + " --out " + (root / "t0").string()) == 0);
    CHECK(slurp(root / "stdout.txt").find("no training steps") != std::string::npos);
    const auto ck = read_checkpoint<float>(root / "t0/checkpoint.bin");
    const auto rc = RunConfig::from_json(ck.config);
    const auto world = read_world(root / "d" / CorpusFiles::kWorld);
    const Workspace ws(world, read_corpus(root / "d"), rc.experiment());
    const auto init = init_model(rc.experiment(), ws.tokenizer);
    REQUIRE(ck.encoder.tensors.size() == init.encoder.tensors.size());
    for (std::size_t i = 0; i < init.encoder.tensors.size(); ++i)
      CHECK(ck.encoder.tensors[i].value == init.encoder.tensors[i].value);
    CHECK(ck.temperature.log_value == static_cast<float>(init.temperature.log_value));
    CHECK(lines(root / "t0/train_log.csv") == 1);
  }

  SUBCASE("per-epoch checkpoints") {
    REQUIRE(run("train " + cfg() + " --epochs 2 --checkpoint_every_epoch true" + data + " --out " +
                (root / "tc").string()) == 0);
    CHECK(fs::exists(root / "tc/checkpoint_epoch_1.bin"));
    CHECK(slurp(root / "tc/checkpoint_epoch_2.bin") == slurp(root / "tc/checkpoint.bin"));
  }

  SUBCASE("ablate and sweep") {
    REQUIRE(run("ablate " + cfg() + data + " --out " + (root / "a1").string()) == 0);
    REQUIRE(run("ablate " + cfg() + data + " --out " + (root / "a2").string()) == 0);
    CHECK(lines(root / "a1/ablation.csv") == 1 + 18);
    CHECK(slurp(root / "a1/ablation.csv") == slurp(root / "a2/ablation.csv"));
    CHECK(read_json(root / "a1/ablation_meta.json")["rows"] == 18);
    REQUIRE(run("sweep-layers " + cfg() + data + " --out " + (root / "s").string()) == 0);
    CHECK(lines(root / "s/layer_sweep.csv") == 1 + 2);
    CHECK(slurp(root / "s/layer_sweep.csv").find("layer_2,") != std::string::npos);
  }
}
